"""Per-device parameters and node-role classification.

Device blocks live in the network document under ``devices`` keyed by node
id.  Machines carry inertia/damping and an optional turbine; dc buses carry
capacitance/conductance and an optional dc source; converters additionally
carry the two dual-port droop gains (active-power/frequency gain ``m_p`` and
dc-voltage/frequency gain ``k_theta``).

"Significant losses" is made exact: a node counts as lossy iff its stored
``D`` or ``G`` is strictly positive.  Negligible parasitic losses are modeled
as exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import KindMismatch, MissingDeviceBlock, NonPositiveParameter
from .network import NetworkGraph, SubgridPartition, natural_sorted


@dataclass(frozen=True)
class TurbineParams:
    T_g: float  # time constant, s
    k_g: float  # frequency sensitivity, per-unit (0 = operated at maximum power point)


@dataclass(frozen=True)
class DcSourceParams:
    T_g: float
    k_g: float  # dc-voltage sensitivity, per-unit


@dataclass(frozen=True)
class MachineParams:
    M: float
    D: float = 0.0
    turbine: TurbineParams | None = None


@dataclass(frozen=True)
class DcBusParams:
    C: float
    G: float = 0.0
    source: DcSourceParams | None = None


@dataclass(frozen=True)
class ConverterParams:
    C: float
    m_p: float
    k_theta: float
    G: float = 0.0
    source: DcSourceParams | None = None


def _require(block, node_id, field, *, positive, default=None):
    if field not in block:
        if default is not None:
            return default
        raise MissingDeviceBlock(f"node {node_id!r}: missing required parameter {field!r}")
    value = float(block[field])
    if positive and not value > 0.0:
        raise NonPositiveParameter(node_id, field, value)
    if not positive and value < 0.0:
        raise NonPositiveParameter(node_id, field, value, constraint=">= 0")
    return value


_ALLOWED_FIELDS = {
    "ac-machine": {"M", "D", "turbine"},
    "dc-bus": {"C", "G", "source"},
    "converter": {"C", "G", "m_p", "k_theta", "source"},
}


def _parse_source(block, node_id, key, cls):
    sub = block.get(key)
    if sub is None:
        return None
    return cls(
        T_g=_require(sub, node_id, "T_g", positive=True),
        k_g=_require(sub, node_id, "k_g", positive=False, default=0.0),
    )


def validate_devices(graph: NetworkGraph) -> dict:
    """Check every node's parameter block against its kind.

    Returns ``{node_id: MachineParams | DcBusParams | ConverterParams}``.
    """
    table = {}
    for nid in graph.node_ids:
        kind = graph.node_kinds[nid]
        block = graph.devices.get(nid)
        if block is None:
            raise MissingDeviceBlock(f"node {nid!r} ({kind}) has no device parameter block")
        stray = {k for k in block if not k.startswith("_")} - _ALLOWED_FIELDS[kind]
        if stray:
            raise KindMismatch(
                f"node {nid!r} of kind {kind!r}: fields {natural_sorted(stray)} do not "
                f"belong to this device kind"
            )
        if kind == "ac-machine":
            table[nid] = MachineParams(
                M=_require(block, nid, "M", positive=True),
                D=_require(block, nid, "D", positive=False, default=0.0),
                turbine=_parse_source(block, nid, "turbine", TurbineParams),
            )
        elif kind == "dc-bus":
            table[nid] = DcBusParams(
                C=_require(block, nid, "C", positive=True),
                G=_require(block, nid, "G", positive=False, default=0.0),
                source=_parse_source(block, nid, "source", DcSourceParams),
            )
        else:
            table[nid] = ConverterParams(
                C=_require(block, nid, "C", positive=True),
                G=_require(block, nid, "G", positive=False, default=0.0),
                m_p=_require(block, nid, "m_p", positive=True),
                k_theta=_require(block, nid, "k_theta", positive=True),
                source=_parse_source(block, nid, "source", DcSourceParams),
            )
    return table


def source_of(params):
    """The attached power source (turbine or dc source), or None."""
    return getattr(params, "turbine", None) or getattr(params, "source", None)


def has_losses(params) -> bool:
    return getattr(params, "D", 0.0) > 0.0 or getattr(params, "G", 0.0) > 0.0


def has_responsive_source(params) -> bool:
    src = source_of(params)
    return src is not None and src.k_g > 0.0


@dataclass(frozen=True)
class RoleTriple:
    """Disjoint split of one device class: lossy / source-backed / other.

    A node lands in ``loss`` iff D or G is strictly positive; a non-lossy node
    lands in ``gen`` iff its attached source has k_g > 0; everything else is
    ``other`` (lossless nodes at the maximum power point, synchronous
    condensers, plain HVDC terminals, ...).
    """

    loss: tuple
    gen: tuple
    other: tuple

    @property
    def damped(self):
        """Nodes contributing damping: loss or responsive source."""
        return tuple(natural_sorted(self.loss + self.gen))


@dataclass(frozen=True)
class NodeRoleSets:
    ac_machines: dict    # ac subgrid index -> RoleTriple
    ac_converters: dict  # ac subgrid index -> RoleTriple
    dc_buses: dict       # dc subgrid index -> RoleTriple
    dc_converters: dict  # dc subgrid index -> RoleTriple


def _triple(node_ids, devices) -> RoleTriple:
    loss, gen, other = [], [], []
    for n in node_ids:
        p = devices[n]
        if has_losses(p):
            loss.append(n)
        elif has_responsive_source(p):
            gen.append(n)
        else:
            other.append(n)
    return RoleTriple(tuple(loss), tuple(gen), tuple(other))


def classify_nodes(partition: SubgridPartition, devices: dict) -> NodeRoleSets:
    """Split every subgrid's machines/converters/dc buses into role sets."""
    return NodeRoleSets(
        ac_machines={sg.index: _triple(sg.machine_ids, devices) for sg in partition.ac_subgrids},
        ac_converters={sg.index: _triple(sg.converter_ids, devices) for sg in partition.ac_subgrids},
        dc_buses={sg.index: _triple(sg.dc_bus_ids, devices) for sg in partition.dc_subgrids},
        dc_converters={sg.index: _triple(sg.converter_ids, devices) for sg in partition.dc_subgrids},
    )
