"""Stability checks for hybrid ac/dc grids under dual-port grid-forming control.

The certification chain:

1. ``check_condition1``: converters sharing a dc subgrid must use identical
   dc-voltage/frequency droop gains (exact equality: gains are design
   choices, not measurements).
2. ``check_assumption1``: at least one device anywhere provides damping
   (strictly positive D, G, or source sensitivity k_g).
3. Per ac subgrid, the undamped nodes must synchronize to damped ones.  This
   is a column-rank condition on two Laplacian submatrices
   (``assumption2_numeric``); two weight-independent sufficient checks verify
   it from the topology alone: an iterative node-removal procedure
   (``algorithm1``) and a single-edge-neighbor/cycle criterion
   (``corollary1``) on the reduced subgrid graph.

``verify_stability`` runs everything and combines it with an independent
eigenvalue oracle on the reachable subspace.  An energy (LaSalle) function
and its dissipation identity are provided for trajectory diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from .devices import NodeRoleSets, classify_nodes
from .errors import CertificateInvalid
from .network import graph_matrices, natural_key, natural_sorted
from .system import SystemModel, reachable_subspace_basis

#: Relative singular-value cutoff for the numeric column-rank test.  Rank is
#: weight-generic; near-threshold results are reported as indeterminate
#: rather than trusted.
TOL_RANK = 1e-8
#: Results within a factor 100 below TOL_RANK count as indeterminate.
RANK_INDETERMINATE_FACTOR = 1e-2
#: Spectral-abscissa tolerance: |max Re| below this is "marginal".
TOL_EIG = 1e-9


# ---------------------------------------------------------------------------
# Condition 1 and Assumption 1
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DcGainCheck:
    subgrid_index: int
    gains: dict          # converter id -> k_theta
    passed: bool


@dataclass(frozen=True)
class Condition1Result:
    passed: bool
    subgrids: tuple      # DcGainCheck per dc subgrid

    @property
    def offending(self):
        return {c.subgrid_index: c.gains for c in self.subgrids if not c.passed}


def check_condition1(partition, devices) -> Condition1Result:
    checks = []
    for sg in partition.dc_subgrids:
        gains = {n: devices[n].k_theta for n in sg.converter_ids}
        vals = list(gains.values())
        checks.append(DcGainCheck(
            subgrid_index=sg.index,
            gains=gains,
            passed=all(v == vals[0] for v in vals) if vals else True,
        ))
    return Condition1Result(passed=all(c.passed for c in checks), subgrids=tuple(checks))


@dataclass(frozen=True)
class Assumption1Result:
    passed: bool
    witness: str | None  # one node providing damping or a responsive source


def check_assumption1(role_sets: NodeRoleSets) -> Assumption1Result:
    for mapping in (role_sets.ac_machines, role_sets.ac_converters,
                    role_sets.dc_buses, role_sets.dc_converters):
        for idx in sorted(mapping):
            damped = mapping[idx].damped
            if damped:
                return Assumption1Result(passed=True, witness=damped[0])
    return Assumption1Result(passed=False, witness=None)


# ---------------------------------------------------------------------------
# Topology partition (damped / undamped / free) and reduced graph
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Def1Partition:
    """Per-ac-subgrid split driving the synchronization checks.

    ``dominated`` records which rule applied: subgrids with at least as many
    converters as machines put all converters in D and all machines in C;
    machine-dominated subgrids put damped nodes in D, undamped machines in C,
    and undamped converters in F.
    """

    subgrid_index: int
    dominated: str       # "converter" | "machine"
    D: tuple
    C: tuple
    F: tuple


def def1_partition(subgrid, role_sets: NodeRoleSets) -> Def1Partition:
    i = subgrid.index
    if len(subgrid.converter_ids) >= len(subgrid.machine_ids):
        return Def1Partition(
            subgrid_index=i, dominated="converter",
            D=tuple(natural_sorted(subgrid.converter_ids)),
            C=tuple(natural_sorted(subgrid.machine_ids)),
            F=(),
        )
    mach = role_sets.ac_machines[i]
    conv = role_sets.ac_converters[i]
    return Def1Partition(
        subgrid_index=i, dominated="machine",
        D=tuple(natural_sorted(mach.loss + mach.gen + conv.loss + conv.gen)),
        C=tuple(mach.other),
        F=tuple(conv.other),
    )


@dataclass(frozen=True)
class ReducedGraph:
    """Subgrid graph with C-C and D-D edges removed."""

    subgrid_index: int
    nodes: tuple
    edges: tuple  # Edge


def reduced_graph(subgrid, def1: Def1Partition) -> ReducedGraph:
    c, d = set(def1.C), set(def1.D)
    kept = tuple(
        e for e in subgrid.edges
        if not (e.u in c and e.v in c) and not (e.u in d and e.v in d)
    )
    return ReducedGraph(subgrid_index=subgrid.index, nodes=subgrid.node_ids, edges=kept)


def _adjacency(nodes, edges):
    adj = {n: set() for n in nodes}
    for e in edges:
        adj[e.u].add(e.v)
        adj[e.v].add(e.u)
    return adj


# ---------------------------------------------------------------------------
# Algorithm 1: iterative node removal
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Alg1Result:
    subgrid_index: int
    emptied: bool
    removal_order: tuple  # ((single-edge D node, removed C node), ...)
    remaining: tuple      # C nodes never removed


def algorithm1(reduced: ReducedGraph, def1: Def1Partition) -> Alg1Result:
    """While some single-edge D node neighbors a remaining C node, remove
    that C node (with all its edges).

    The loop is nondeterministic in principle; ties are broken by natural
    node order (smallest D node, then smallest C node).  The emptied verdict
    is order-independent.
    """
    adj = _adjacency(reduced.nodes, reduced.edges)
    d_set = set(def1.D)
    c_bar = set(def1.C)
    order = []
    while True:
        candidates = []
        for l in d_set:
            if len(adj[l]) == 1:
                (j,) = adj[l]
                if j in c_bar:
                    candidates.append((l, j))
        if not candidates:
            break
        l, j = min(candidates, key=lambda p: (natural_key(p[0]), natural_key(p[1])))
        for nb in adj[j]:
            adj[nb].discard(j)
        adj[j] = set()
        c_bar.discard(j)
        order.append((l, j))
    return Alg1Result(
        subgrid_index=reduced.subgrid_index,
        emptied=not c_bar,
        removal_order=tuple(order),
        remaining=tuple(natural_sorted(c_bar)),
    )


# ---------------------------------------------------------------------------
# Corollary 1: single-edge neighbors and cycles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NodeCase:
    node: str
    case1: bool  # has an edge to a single-edge D node
    case2: bool  # shares a cycle with a C node satisfying case 1


@dataclass(frozen=True)
class Cor1Result:
    subgrid_index: int
    passed: bool
    node_cases: tuple  # NodeCase per C node

    @property
    def case1_all(self):
        return all(nc.case1 for nc in self.node_cases)

    @property
    def case2_all(self):
        return bool(self.node_cases) and all(nc.case2 for nc in self.node_cases)


def corollary1(reduced: ReducedGraph, def1: Def1Partition) -> Cor1Result:
    """Per C node: (1) an edge to a single-edge D node, or (2) membership in
    a cycle through a C node satisfying (1).

    Cycles are taken inside the reduced graph.  Two nodes share a cycle iff
    they share a biconnected component that itself contains a cycle (three or
    more nodes; bridges do not count).
    """
    adj = _adjacency(reduced.nodes, reduced.edges)
    d_set, c_set = set(def1.D), set(def1.C)
    single_edge_d = {n for n in d_set if len(adj[n]) == 1}
    qualifying = {x for x in c_set if adj[x] & single_edge_d}

    g = nx.Graph()
    g.add_nodes_from(reduced.nodes)
    g.add_edges_from((e.u, e.v) for e in reduced.edges)
    case2 = set()
    for comp in nx.biconnected_components(g):
        if len(comp) >= 3 and comp & qualifying:
            case2 |= comp & c_set

    cases = tuple(
        NodeCase(node=x, case1=x in qualifying, case2=x in case2)
        for x in def1.C
    )
    return Cor1Result(
        subgrid_index=reduced.subgrid_index,
        passed=all(nc.case1 or nc.case2 for nc in cases),
        node_cases=cases,
    )


# ---------------------------------------------------------------------------
# Numeric column-rank test
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MatrixRank:
    name: str
    shape: tuple
    singular_values: tuple
    ratio: float         # smallest / largest singular value (0 if undefined)
    full_column_rank: bool


@dataclass(frozen=True)
class RankTestResult:
    subgrid_index: int
    auto_pass: bool      # subgrid has no machines
    matrices: tuple      # MatrixRank
    verdict: str         # "pass" | "fail" | "indeterminate"

    @property
    def passed(self):
        return self.verdict == "pass"


def _column_rank(name, mat, tol) -> MatrixRank:
    rows, cols = mat.shape
    if cols == 0:
        return MatrixRank(name, (rows, cols), (), 1.0, True)
    if rows < cols:
        sv = np.linalg.svd(mat, compute_uv=False) if rows else np.zeros(0)
        return MatrixRank(name, (rows, cols), tuple(sv.tolist()), 0.0, False)
    sv = np.linalg.svd(mat, compute_uv=False)
    ratio = float(sv[-1] / sv[0]) if sv[0] > 0 else 0.0
    return MatrixRank(name, (rows, cols), tuple(sv.tolist()), ratio, ratio > tol)


def assumption2_numeric(subgrid, role_sets: NodeRoleSets, *, tol_rank=TOL_RANK) -> RankTestResult:
    """Column-rank test on the converter-machine block and on the
    damped-rows/undamped-columns block of the subgrid Laplacian.

    Subgrids with no machines pass automatically: their angle differences are
    fully actuated by the converters regardless of network parameters.
    """
    i = subgrid.index
    if not subgrid.machine_ids:
        return RankTestResult(subgrid_index=i, auto_pass=True, matrices=(), verdict="pass")

    gm = graph_matrices(subgrid)
    pos = {n: k for k, n in enumerate(gm.node_order)}
    L = gm.laplacian
    mach = role_sets.ac_machines[i]
    conv_ids = list(natural_sorted(subgrid.converter_ids))

    m1 = L[np.ix_([pos[n] for n in conv_ids], [pos[n] for n in subgrid.machine_ids])]
    rows2 = [pos[n] for n in mach.loss] + [pos[n] for n in mach.gen] + [pos[n] for n in conv_ids]
    cols2 = [pos[n] for n in mach.other] + [pos[n] for n in role_sets.ac_converters[i].other]
    m2 = L[np.ix_(rows2, cols2)]

    checks = (
        _column_rank("converter_rows_machine_cols", m1, tol_rank),
        _column_rank("damped_rows_undamped_cols", m2, tol_rank),
    )
    if any(c.full_column_rank for c in checks):
        verdict = "pass"
    elif any(
        tol_rank * RANK_INDETERMINATE_FACTOR < c.ratio <= tol_rank
        for c in checks if c.shape[0] >= c.shape[1] > 0
    ):
        verdict = "indeterminate"
    else:
        verdict = "fail"
    return RankTestResult(subgrid_index=i, auto_pass=False, matrices=checks, verdict=verdict)


# ---------------------------------------------------------------------------
# Energy (LaSalle) function
# ---------------------------------------------------------------------------

def _source_weights(model: SystemModel):
    # Sources on machines weigh 1; sources on the dc side weigh the common
    # per-dc-subgrid droop gain of their owner node.
    w = np.ones(len(model.layout.p_ids))
    for j, n in enumerate(model.layout.p_ids):
        if n in model.v_order:
            w[j] = model.K_theta_tilde[model.v_order.index(n)]
    return w


def lasalle_value(model: SystemModel, x, *, allow_invalid=False) -> float:
    """Nonnegative energy function certifying convergence.

    V = 1/2 (eta' W eta + omega' M omega + v' Ktil C v + P' S Kg^-1 Tg P)
    with S the source weights above.  Only valid as a certificate when all
    converters on each dc subgrid share their dc droop gain.
    """
    if not model.lasalle_certificate_valid and not allow_invalid:
        raise CertificateInvalid(
            "dc droop gains differ within a dc subgrid; energy function is not a certificate"
        )
    x = np.asarray(x, dtype=float)
    s = model.layout
    eta, omega, v, p = x[s.eta], x[s.omega], x[s.v], x[s.p]
    sw = _source_weights(model)
    return 0.5 * float(
        eta @ (model.W_ac * eta)
        + omega @ (model.M * omega)
        + v @ (model.K_theta_tilde * model.C * v)
        + p @ (sw * model.T_g / model.K_g * p)
    )


def lasalle_gradient(model: SystemModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    s = model.layout
    g = np.zeros_like(x)
    g[s.eta] = model.W_ac * x[s.eta]
    g[s.omega] = model.M * x[s.omega]
    g[s.v] = model.K_theta_tilde * model.C * x[s.v]
    g[s.p] = _source_weights(model) * model.T_g / model.K_g * x[s.p]
    return g


def lasalle_derivative(model: SystemModel, x, *, allow_invalid=False) -> float:
    """Dissipation form of the energy function (nonpositive by construction).

    Equals d/dt V along trajectories whenever the non-responsive source block
    is zero and the certificate is valid.
    """
    if not model.lasalle_certificate_valid and not allow_invalid:
        raise CertificateInvalid(
            "dc droop gains differ within a dc subgrid; energy function is not a certificate"
        )
    x = np.asarray(x, dtype=float)
    s = model.layout
    eta, omega, v, p = x[s.eta], x[s.omega], x[s.v], x[s.p]
    y = (model.I_cac @ model.B_ac) @ (model.W_ac * eta)
    X = np.diag(model.G) + model.L_dc
    sw = _source_weights(model)
    return float(
        -y @ (model.M_p * y)
        - omega @ (model.D * omega)
        - 0.5 * (v @ (model.K_theta_tilde * (X @ v)) + v @ (X @ (model.K_theta_tilde * v)))
        - p @ (sw / model.K_g * p)
    )


# ---------------------------------------------------------------------------
# Eigenvalue oracle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EigenReport:
    eigenvalues: tuple   # complex, sorted by descending real part
    max_real_part: float
    verdict: str         # "stable" | "marginal" | "unstable"
    tol: float

    @property
    def margin(self):
        """Distance of the spectral abscissa from the imaginary axis
        (positive when stable)."""
        return -self.max_real_part


def eigen_oracle(model: SystemModel, *, tol_eig=TOL_EIG) -> EigenReport:
    """Spectrum of T^-1 A restricted to the reachable subspace."""
    Q = reachable_subspace_basis(model)
    F = Q.T @ model.T_inv_A @ Q
    eig = np.linalg.eigvals(F) if F.size else np.zeros(0, dtype=complex)
    eig = sorted(eig.tolist(), key=lambda z: (-z.real, z.imag))
    max_re = max((z.real for z in eig), default=-np.inf)
    if max_re < -tol_eig:
        verdict = "stable"
    elif max_re <= tol_eig:
        verdict = "marginal"
    else:
        verdict = "unstable"
    return EigenReport(eigenvalues=tuple(eig), max_real_part=float(max_re), verdict=verdict, tol=tol_eig)


# ---------------------------------------------------------------------------
# Full report
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AcSubgridChecks:
    subgrid_index: int
    def1: Def1Partition
    reduced_edges: tuple          # edge ids kept in the reduced graph
    algorithm1: Alg1Result
    corollary1: Cor1Result
    rank_numeric: RankTestResult
    certified_by: str | None      # "algorithm1" | "corollary1.1" | "corollary1.2" | "numeric-rank"
    verdict: str                  # "pass" | "fail" | "indeterminate"


@dataclass(frozen=True)
class StabilityReport:
    condition1: Condition1Result
    assumption1: Assumption1Result
    ac_subgrids: tuple            # AcSubgridChecks
    lasalle_certificate_valid: bool
    eigen: EigenReport
    verdict: str                  # "pass" | "fail" | "indeterminate"
    notes: tuple = field(default_factory=tuple)


def _subgrid_checks(subgrid, role_sets, *, tol_rank) -> AcSubgridChecks:
    d1 = def1_partition(subgrid, role_sets)
    red = reduced_graph(subgrid, d1)
    a1 = algorithm1(red, d1)
    c1 = corollary1(red, d1)
    rk = assumption2_numeric(subgrid, role_sets, tol_rank=tol_rank)
    if a1.emptied:
        certified = "algorithm1"
    elif c1.passed:
        certified = "corollary1.1" if c1.case1_all else "corollary1.2"
    elif rk.passed:
        certified = "numeric-rank"
    else:
        certified = None
    if certified:
        verdict = "pass"
    elif rk.verdict == "indeterminate":
        verdict = "indeterminate"
    else:
        verdict = "fail"
    return AcSubgridChecks(
        subgrid_index=subgrid.index,
        def1=d1,
        reduced_edges=tuple(e.id for e in red.edges),
        algorithm1=a1,
        corollary1=c1,
        rank_numeric=rk,
        certified_by=certified,
        verdict=verdict,
    )


def verify_stability(model: SystemModel, *, tol_rank=TOL_RANK, tol_eig=TOL_EIG) -> StabilityReport:
    """Run every check and the eigenvalue oracle; failures become report
    entries, not exceptions."""
    partition, devices = model.partition, model.devices
    roles = classify_nodes(partition, devices)
    cond1 = check_condition1(partition, devices)
    a1 = check_assumption1(roles)
    subs = tuple(
        _subgrid_checks(sg, roles, tol_rank=tol_rank) for sg in partition.ac_subgrids
    )
    eig = eigen_oracle(model, tol_eig=tol_eig)

    if cond1.passed and a1.passed and all(s.verdict == "pass" for s in subs):
        verdict = "pass"
    elif (not cond1.passed) or (not a1.passed) or any(s.verdict == "fail" for s in subs):
        verdict = "fail"
    else:
        verdict = "indeterminate"
    return StabilityReport(
        condition1=cond1,
        assumption1=a1,
        ac_subgrids=subs,
        lasalle_certificate_valid=model.lasalle_certificate_valid and cond1.passed,
        eigen=eig,
        verdict=verdict,
        notes=("cycle criterion evaluated on cycles of the reduced subgrid graph only",),
    )
