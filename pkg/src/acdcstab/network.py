"""Hybrid ac/dc network graph: parsing, subgrid partition, incidence/Laplacian matrices.

The network is an undirected graph over three node kinds: ``ac-machine``,
``converter``, and ``dc-bus``.  AC edges (per-unit susceptances) may only join
machines and converters; dc edges (per-unit conductances) may only join dc
buses and converters.  The union graph must be connected, while the ac-only
and dc-only graphs split into connected components ("subgrids").  Converters
belong to exactly one ac subgrid and one dc subgrid; a converter with no dc
edges forms a singleton dc subgrid of its own (it still owns a dc-link
voltage state).

All orderings (nodes, edges, subgrids) are deterministic: natural sort by id,
subgrids by their smallest node id.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import networkx as nx
import numpy as np

from .errors import (
    DeviceOnInteriorNode,
    DisconnectedUnionGraph,
    DuplicateId,
    EdgeKindViolation,
    NetworkError,
    NonPositiveEdgeWeight,
    SingularInterior,
)

NODE_KINDS = ("ac-machine", "converter", "dc-bus")

#: Kron reduction drops reconstructed edges with |weight| below this.
TOL_KRON = 1e-10


def natural_key(s):
    """Sort key that orders embedded integers numerically ('2' < '10')."""
    return tuple(int(tok) if tok.isdigit() else tok for tok in re.split(r"(\d+)", str(s)))


def natural_sorted(ids):
    return sorted(ids, key=natural_key)


@dataclass(frozen=True)
class Edge:
    """Undirected weighted edge; endpoints stored in natural order."""

    id: str
    u: str
    v: str
    weight: float


@dataclass(frozen=True)
class NetworkGraph:
    """Validated hybrid graph with stable node/edge orderings."""

    node_kinds: dict  # id -> kind
    ac_edges: tuple   # Edge, ordered by natural id
    dc_edges: tuple
    devices: dict     # id -> raw device block (validated by the devices module)

    @property
    def node_ids(self):
        return natural_sorted(self.node_kinds)

    def nodes_of_kind(self, kind):
        return [n for n in self.node_ids if self.node_kinds[n] == kind]

    @property
    def machine_ids(self):
        return self.nodes_of_kind("ac-machine")

    @property
    def converter_ids(self):
        return self.nodes_of_kind("converter")

    @property
    def dc_bus_ids(self):
        return self.nodes_of_kind("dc-bus")


def _parse_edges(raw_edges, *, weight_key, prefix, node_kinds, allowed_kinds):
    edges = []
    seen_ids = set()
    seen_pairs = set()
    for k, item in enumerate(raw_edges):
        u, v = str(item["from"]), str(item["to"])
        eid = str(item.get("id") or f"{prefix}{k + 1}")
        if eid in seen_ids:
            raise DuplicateId(f"duplicate edge id {eid!r}")
        seen_ids.add(eid)
        if u == v:
            raise NetworkError(f"edge {eid!r}: self-loop on node {u!r}")
        for n in (u, v):
            if n not in node_kinds:
                raise NetworkError(f"edge {eid!r}: unknown node id {n!r}")
            if node_kinds[n] not in allowed_kinds:
                raise EdgeKindViolation(
                    f"edge {eid!r}: node {n!r} of kind {node_kinds[n]!r} cannot carry a "
                    f"{'susceptance' if weight_key == 'b' else 'conductance'} edge"
                )
        pair = tuple(sorted((u, v), key=natural_key))
        if pair in seen_pairs:
            raise DuplicateId(f"duplicate edge between {pair[0]!r} and {pair[1]!r}")
        seen_pairs.add(pair)
        w = float(item[weight_key])
        if not w > 0.0:
            raise NonPositiveEdgeWeight(f"edge {eid!r}: weight {weight_key}={w} must be > 0")
        edges.append(Edge(eid, pair[0], pair[1], w))
    return tuple(sorted(edges, key=lambda e: natural_key(e.id)))


def build_network(spec: dict) -> NetworkGraph:
    """Validate a parsed network document and return an ordered graph.

    ``spec`` follows the JSON schema documented in the README: top-level keys
    ``nodes``, ``ac_edges``, ``dc_edges``, ``devices``.  Keys starting with an
    underscore are treated as comments and ignored.
    """
    node_kinds = {}
    for item in spec.get("nodes", []):
        nid, kind = str(item["id"]), str(item["kind"])
        if nid in node_kinds:
            raise DuplicateId(f"duplicate node id {nid!r}")
        if kind not in NODE_KINDS:
            raise NetworkError(f"node {nid!r}: unknown kind {kind!r} (expected one of {NODE_KINDS})")
        node_kinds[nid] = kind
    if not node_kinds:
        raise NetworkError("network has no nodes")

    ac_edges = _parse_edges(
        spec.get("ac_edges", []), weight_key="b", prefix="e",
        node_kinds=node_kinds, allowed_kinds=("ac-machine", "converter"),
    )
    dc_edges = _parse_edges(
        spec.get("dc_edges", []), weight_key="g", prefix="d",
        node_kinds=node_kinds, allowed_kinds=("dc-bus", "converter"),
    )
    ids = set(e.id for e in ac_edges) & set(e.id for e in dc_edges)
    if ids:
        raise DuplicateId(f"edge ids reused across ac and dc edge lists: {natural_sorted(ids)}")

    union = nx.Graph()
    union.add_nodes_from(node_kinds)
    union.add_edges_from((e.u, e.v) for e in ac_edges + dc_edges)
    if len(node_kinds) > 1 and not nx.is_connected(union):
        comps = [natural_sorted(c) for c in nx.connected_components(union)]
        comps.sort(key=lambda c: natural_key(c[0]))
        raise DisconnectedUnionGraph(f"union graph has {len(comps)} components: {comps}")

    devices = {str(k): v for k, v in spec.get("devices", {}).items() if not str(k).startswith("_")}
    return NetworkGraph(node_kinds=node_kinds, ac_edges=ac_edges, dc_edges=dc_edges, devices=devices)


@dataclass(frozen=True)
class AcSubgrid:
    """Connected component of the ac graph (machines + converters)."""

    index: int
    machine_ids: tuple
    converter_ids: tuple
    edges: tuple  # Edge

    @property
    def node_ids(self):
        return tuple(natural_sorted(self.machine_ids + self.converter_ids))


@dataclass(frozen=True)
class DcSubgrid:
    """Connected component of the dc graph (dc buses + converters)."""

    index: int
    dc_bus_ids: tuple
    converter_ids: tuple
    edges: tuple

    @property
    def node_ids(self):
        return tuple(natural_sorted(self.dc_bus_ids + self.converter_ids))


@dataclass(frozen=True)
class SubgridPartition:
    graph: NetworkGraph
    ac_subgrids: tuple
    dc_subgrids: tuple

    def ac_subgrid_of(self, node_id):
        for sg in self.ac_subgrids:
            if node_id in sg.node_ids:
                return sg.index
        raise KeyError(node_id)

    def dc_subgrid_of(self, node_id):
        for sg in self.dc_subgrids:
            if node_id in sg.node_ids:
                return sg.index
        raise KeyError(node_id)


def _components(node_ids, edges):
    g = nx.Graph()
    g.add_nodes_from(node_ids)
    g.add_edges_from((e.u, e.v) for e in edges)
    comps = [natural_sorted(c) for c in nx.connected_components(g)]
    comps.sort(key=lambda c: natural_key(c[0]))
    return comps


def partition_subgrids(graph: NetworkGraph) -> SubgridPartition:
    """Split the ac and dc graphs into connected components.

    Converters appear in both partitions; a converter that carries no dc edge
    becomes a singleton dc subgrid.
    """
    ac_nodes = graph.machine_ids + graph.converter_ids
    dc_nodes = graph.dc_bus_ids + graph.converter_ids

    ac_subgrids = []
    for i, comp in enumerate(_components(ac_nodes, graph.ac_edges), start=1):
        comp_set = set(comp)
        ac_subgrids.append(AcSubgrid(
            index=i,
            machine_ids=tuple(n for n in comp if graph.node_kinds[n] == "ac-machine"),
            converter_ids=tuple(n for n in comp if graph.node_kinds[n] == "converter"),
            edges=tuple(e for e in graph.ac_edges if e.u in comp_set),
        ))

    dc_subgrids = []
    for j, comp in enumerate(_components(dc_nodes, graph.dc_edges), start=1):
        comp_set = set(comp)
        dc_subgrids.append(DcSubgrid(
            index=j,
            dc_bus_ids=tuple(n for n in comp if graph.node_kinds[n] == "dc-bus"),
            converter_ids=tuple(n for n in comp if graph.node_kinds[n] == "converter"),
            edges=tuple(e for e in graph.dc_edges if e.u in comp_set),
        ))

    return SubgridPartition(graph=graph, ac_subgrids=tuple(ac_subgrids), dc_subgrids=tuple(dc_subgrids))


@dataclass(frozen=True)
class GraphMatrices:
    """Incidence/weight/Laplacian bundle bound to explicit orderings.

    The incidence matrix carries +1 at the naturally-smaller endpoint of each
    edge and -1 at the larger, one column per edge.
    """

    node_order: tuple
    edge_order: tuple  # edge ids
    incidence: np.ndarray     # |nodes| x |edges|
    weights: np.ndarray       # |edges|
    laplacian: np.ndarray     # |nodes| x |nodes|


def matrices_for(node_ids, edges) -> GraphMatrices:
    """Build B, W, L = B W B^T for an explicit node set and edge list."""
    node_order = tuple(natural_sorted(node_ids))
    pos = {n: k for k, n in enumerate(node_order)}
    edges = sorted(edges, key=lambda e: natural_key(e.id))
    B = np.zeros((len(node_order), len(edges)))
    w = np.zeros(len(edges))
    for k, e in enumerate(edges):
        B[pos[e.u], k] = 1.0
        B[pos[e.v], k] = -1.0
        w[k] = e.weight
    L = B @ np.diag(w) @ B.T if edges else np.zeros((len(node_order), len(node_order)))
    return GraphMatrices(
        node_order=node_order,
        edge_order=tuple(e.id for e in edges),
        incidence=B,
        weights=w,
        laplacian=L,
    )


def graph_matrices(subgrid) -> GraphMatrices:
    """Matrices of one ac or dc subgrid in its natural node order."""
    return matrices_for(subgrid.node_ids, subgrid.edges)


def kron_reduce(node_ids, edges, boundary_ids, device_node_ids=(), *, tol=TOL_KRON):
    """Schur-complement elimination of interior (device-free) nodes.

    Returns ``(boundary_order, reduced_edges)`` where the reduced edges carry
    the off-diagonal entries of the Schur complement of the Laplacian onto the
    boundary.  Edges with weight below ``tol`` (round-off residue) are
    dropped.  Raises if an eliminated node carries a device or the interior
    block is singular.
    """
    boundary = set(map(str, boundary_ids))
    unknown = boundary - set(map(str, node_ids))
    if unknown:
        raise NetworkError(f"boundary nodes not in graph: {natural_sorted(unknown)}")
    interior = [n for n in node_ids if n not in boundary]
    bad = sorted(set(interior) & set(map(str, device_node_ids)), key=natural_key)
    if bad:
        raise DeviceOnInteriorNode(f"interior nodes carry devices or loads: {bad}")

    gm = matrices_for(node_ids, edges)
    if not interior:
        return gm.node_order, tuple(edges)

    idx = {n: k for k, n in enumerate(gm.node_order)}
    b_idx = [idx[n] for n in gm.node_order if n in boundary]
    i_idx = [idx[n] for n in gm.node_order if n not in boundary]
    L = gm.laplacian
    L_bb = L[np.ix_(b_idx, b_idx)]
    L_bi = L[np.ix_(b_idx, i_idx)]
    L_ii = L[np.ix_(i_idx, i_idx)]
    # The interior block of a connected graph's Laplacian is positive definite
    # whenever every interior node reaches the boundary; guard anyway.
    if np.linalg.matrix_rank(L_ii, tol=1e-12 * max(1.0, np.abs(L_ii).max())) < len(i_idx):
        raise SingularInterior("interior Laplacian block is singular")
    L_red = L_bb - L_bi @ np.linalg.solve(L_ii, L_bi.T)

    boundary_order = tuple(n for n in gm.node_order if n in boundary)
    reduced_edges = []
    k = 0
    for a in range(len(boundary_order)):
        for b in range(a + 1, len(boundary_order)):
            w = -L_red[a, b]
            if abs(w) >= tol:
                k += 1
                reduced_edges.append(Edge(f"k{k}", boundary_order[a], boundary_order[b], float(w)))
    return boundary_order, tuple(reduced_edges)


def kron_reduce_subgrid(subgrid, boundary_ids, *, tol=TOL_KRON):
    """Kron-reduce an ac or dc subgrid onto ``boundary_ids``.

    Every node of a validated subgrid carries a device, so a proper reduction
    (boundary smaller than the node set) raises ``DeviceOnInteriorNode``; use
    :func:`kron_reduce` directly to pre-process raw weighted graphs that still
    contain passive junction buses.
    """
    boundary_order, edges = kron_reduce(
        subgrid.node_ids, subgrid.edges, boundary_ids,
        device_node_ids=subgrid.node_ids, tol=tol,
    )
    kept = set(boundary_order)
    if isinstance(subgrid, AcSubgrid):
        return AcSubgrid(
            index=subgrid.index,
            machine_ids=tuple(n for n in subgrid.machine_ids if n in kept),
            converter_ids=tuple(n for n in subgrid.converter_ids if n in kept),
            edges=edges,
        )
    return DcSubgrid(
        index=subgrid.index,
        dc_bus_ids=tuple(n for n in subgrid.dc_bus_ids if n in kept),
        converter_ids=tuple(n for n in subgrid.converter_ids if n in kept),
        edges=edges,
    )
