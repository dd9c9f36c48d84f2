"""Assembly of the full linear model T x' = A x + E_d p_d.

State layout (all per-unit deviations from the linearization point):

    eta   one entry per ac edge        angle difference across the edge
    omega one entry per machine        machine frequency
    v     one per converter + dc bus   dc(-link) voltage
    P     one per source with k_g > 0  responsive source power
    Pbar  one per source with k_g = 0  non-responsive source power

The block structure of A (rows x cols, empty blocks written 0):

    eta  | -Bc^T Mp Bc W | Bm^T | Bc^T Kth Icdc | 0    | 0    |
    omega| -Bm W         | -D   | 0             | Iga  | Iga~ |
    v    | -Icdc^T Bc W  | 0    | -(G + Ldc)    | Igd  | Igd~ |
    P    | 0             | -Kg Iga^T | -Kg Igd^T | -I   | 0    |
    Pbar | 0             | 0    | 0             | 0    | -I   |

with Bm/Bc the machine/converter rows of the ac incidence matrix, W the ac
edge susceptances, Mp/Kth the converter droop gains, Ldc the dc Laplacian,
and Iga/Igd (Iga~/Igd~) the 0/1 maps from responsive (non-responsive) sources
to the machine / dc-voltage rows.  T is the diagonal of ones, inertias, dc
capacitances, and source time constants.

Loads enter through E_d: an ac-side load hits the machine frequency rows and,
through the droop control, the converter angle rows; a dc-side load hits the
voltage rows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .devices import source_of
from .network import SubgridPartition, matrices_for, natural_sorted

#: Singular values of the incidence matrix below this (relative) are treated
#: as zero when computing the angle-difference subspace.
TOL_RANK_INCIDENCE = 1e-12


@dataclass(frozen=True)
class StateLayout:
    eta_ids: tuple   # ac edge ids
    omega_ids: tuple  # machine node ids
    v_ids: tuple     # converter + dc bus node ids
    p_ids: tuple     # nodes owning a source with k_g > 0
    pbar_ids: tuple  # nodes owning a source with k_g = 0

    @property
    def dim(self):
        return len(self.eta_ids) + len(self.omega_ids) + len(self.v_ids) + len(self.p_ids) + len(self.pbar_ids)

    def _offsets(self):
        n_eta, n_w, n_v, n_p = len(self.eta_ids), len(self.omega_ids), len(self.v_ids), len(self.p_ids)
        return (0, n_eta, n_eta + n_w, n_eta + n_w + n_v, n_eta + n_w + n_v + n_p)

    @property
    def eta(self):
        o = self._offsets()
        return slice(o[0], o[1])

    @property
    def omega(self):
        o = self._offsets()
        return slice(o[1], o[2])

    @property
    def v(self):
        o = self._offsets()
        return slice(o[2], o[3])

    @property
    def p(self):
        o = self._offsets()
        return slice(o[3], o[4])

    @property
    def pbar(self):
        o = self._offsets()
        return slice(o[4], self.dim)

    @property
    def labels(self):
        return (
            [f"eta[{e}]" for e in self.eta_ids]
            + [f"omega[{n}]" for n in self.omega_ids]
            + [f"v[{n}]" for n in self.v_ids]
            + [f"P[{n}]" for n in self.p_ids]
            + [f"Pbar[{n}]" for n in self.pbar_ids]
        )


def _selection(rows, cols):
    """0/1 matrix with one 1 per row, picking ``rows`` out of ``cols``."""
    pos = {c: k for k, c in enumerate(cols)}
    S = np.zeros((len(rows), len(cols)))
    for i, r in enumerate(rows):
        S[i, pos[r]] = 1.0
    return S


@dataclass(frozen=True)
class SystemModel:
    partition: SubgridPartition
    devices: dict
    layout: StateLayout

    T: np.ndarray        # diagonal entries, shape (dim,)
    A: np.ndarray        # (dim, dim)
    E_d: np.ndarray      # (dim, n_theta + n_v): columns = ac loads then dc loads

    theta_order: tuple   # machines + converters, natural order
    machine_order: tuple
    converter_order: tuple
    v_order: tuple
    dc_bus_order: tuple

    B_ac: np.ndarray     # (n_theta, n_eta)
    W_ac: np.ndarray     # (n_eta,)
    L_dc: np.ndarray     # (n_v, n_v)

    I_ac: np.ndarray     # machines from theta
    I_cac: np.ndarray    # converters from theta
    I_cdc: np.ndarray    # converters from v
    I_dc: np.ndarray     # dc buses from v
    I_g_ac: np.ndarray   # (n_machines, n_g)
    I_g_dc: np.ndarray   # (n_v, n_g)
    Ibar_g_ac: np.ndarray
    Ibar_g_dc: np.ndarray

    M: np.ndarray        # (n_machines,)
    D: np.ndarray
    C: np.ndarray        # (n_v,)
    G: np.ndarray
    M_p: np.ndarray      # (n_converters,)
    K_theta: np.ndarray
    K_g: np.ndarray      # (n_g,)
    T_g: np.ndarray
    Tbar_g: np.ndarray
    K_theta_tilde: np.ndarray  # (n_v,), per-dc-subgrid common gain
    lasalle_certificate_valid: bool

    @property
    def T_inv_A(self):
        return self.A / self.T[:, None]

    def pd_vector(self, ac_loads=None, dc_loads=None):
        """Stack ac- and dc-side load deviations into the E_d input vector."""
        from .errors import DimensionMismatch

        pa = np.zeros(len(self.theta_order))
        pdc = np.zeros(len(self.v_order))
        for node, val in (ac_loads or {}).items():
            if str(node) not in self.theta_order:
                raise DimensionMismatch(f"node {node!r} has no ac terminal for an ac-side load")
            pa[self.theta_order.index(str(node))] += float(val)
        for node, val in (dc_loads or {}).items():
            if str(node) not in self.v_order:
                raise DimensionMismatch(f"node {node!r} has no dc terminal for a dc-side load")
            pdc[self.v_order.index(str(node))] += float(val)
        return np.concatenate([pa, pdc])


def assemble(partition: SubgridPartition, devices: dict) -> SystemModel:
    """Build the full linear model from a validated partition and device table."""
    graph = partition.graph
    machine_order = tuple(graph.machine_ids)
    converter_order = tuple(graph.converter_ids)
    dc_bus_order = tuple(graph.dc_bus_ids)
    v_order = tuple(natural_sorted(converter_order + dc_bus_order))

    gm_ac = matrices_for(machine_order + converter_order, graph.ac_edges)
    theta_order = gm_ac.node_order
    B_ac, W_ac = gm_ac.incidence, gm_ac.weights
    gm_dc = matrices_for(v_order, graph.dc_edges)
    L_dc = gm_dc.laplacian

    sources = {n: source_of(devices[n]) for n in graph.node_ids if source_of(devices[n]) is not None}
    p_ids = tuple(natural_sorted([n for n, s in sources.items() if s.k_g > 0.0]))
    pbar_ids = tuple(natural_sorted([n for n, s in sources.items() if s.k_g == 0.0]))

    layout = StateLayout(
        eta_ids=gm_ac.edge_order,
        omega_ids=machine_order,
        v_ids=v_order,
        p_ids=p_ids,
        pbar_ids=pbar_ids,
    )

    I_ac = _selection(machine_order, theta_order)
    I_cac = _selection(converter_order, theta_order)
    I_cdc = _selection(converter_order, v_order)
    I_dc = _selection(dc_bus_order, v_order)

    def owner_map(ids, owner_order):
        S = np.zeros((len(owner_order), len(ids)))
        for j, n in enumerate(ids):
            if n in owner_order:
                S[owner_order.index(n), j] = 1.0
        return S

    I_g_ac = owner_map(p_ids, machine_order)
    I_g_dc = owner_map(p_ids, v_order)
    Ibar_g_ac = owner_map(pbar_ids, machine_order)
    Ibar_g_dc = owner_map(pbar_ids, v_order)

    M = np.array([devices[n].M for n in machine_order])
    D = np.array([devices[n].D for n in machine_order])
    C = np.array([devices[n].C for n in v_order])
    G = np.array([devices[n].G for n in v_order])
    M_p = np.array([devices[n].m_p for n in converter_order])
    K_theta = np.array([devices[n].k_theta for n in converter_order])
    K_g = np.array([sources[n].k_g for n in p_ids])
    T_g = np.array([sources[n].T_g for n in p_ids])
    Tbar_g = np.array([sources[n].T_g for n in pbar_ids])

    # Common per-dc-subgrid gain used by the energy function.  When the
    # converters of a dc subgrid disagree, fall back to their maximum so the
    # diagnostics stay computable, and mark the certificate invalid.
    K_theta_tilde = np.ones(len(v_order))
    certificate_valid = True
    v_pos = {n: k for k, n in enumerate(v_order)}
    c_pos = {n: k for k, n in enumerate(converter_order)}
    for sg in partition.dc_subgrids:
        gains = [K_theta[c_pos[n]] for n in sg.converter_ids]
        if gains:
            if any(g != gains[0] for g in gains):
                certificate_valid = False
            common = max(gains)
        else:
            common = 1.0
        for n in sg.node_ids:
            K_theta_tilde[v_pos[n]] = common

    n_eta, n_m, n_v, n_g, n_gbar = (
        len(layout.eta_ids), len(machine_order), len(v_order), len(p_ids), len(pbar_ids))
    dim = layout.dim

    Bm = I_ac @ B_ac
    Bc = I_cac @ B_ac

    A = np.zeros((dim, dim))
    s = layout
    A[s.eta, s.eta] = -Bc.T @ (M_p[:, None] * Bc) * W_ac[None, :]
    A[s.eta, s.omega] = Bm.T
    A[s.eta, s.v] = Bc.T @ (K_theta[:, None] * I_cdc)
    A[s.omega, s.eta] = -Bm * W_ac[None, :]
    A[s.omega, s.omega] = -np.diag(D)
    A[s.omega, s.p] = I_g_ac
    A[s.omega, s.pbar] = Ibar_g_ac
    A[s.v, s.eta] = -I_cdc.T @ Bc * W_ac[None, :]
    A[s.v, s.v] = -(np.diag(G) + L_dc)
    A[s.v, s.p] = I_g_dc
    A[s.v, s.pbar] = Ibar_g_dc
    A[s.p, s.omega] = -(K_g[:, None] * I_g_ac.T)
    A[s.p, s.v] = -(K_g[:, None] * I_g_dc.T)
    A[s.p, s.p] = -np.eye(n_g)
    A[s.pbar, s.pbar] = -np.eye(n_gbar)

    T = np.concatenate([np.ones(n_eta), M, C, T_g, Tbar_g])

    n_theta = len(theta_order)
    E_d = np.zeros((dim, n_theta + n_v))
    E_d[s.eta, :n_theta] = -Bc.T @ (M_p[:, None] * I_cac)
    E_d[s.omega, :n_theta] = -I_ac
    E_d[s.v, :n_theta] = -I_cdc.T @ I_cac
    E_d[s.v, n_theta:] = -np.eye(n_v)

    return SystemModel(
        partition=partition, devices=devices, layout=layout,
        T=T, A=A, E_d=E_d,
        theta_order=theta_order, machine_order=machine_order,
        converter_order=converter_order, v_order=v_order, dc_bus_order=dc_bus_order,
        B_ac=B_ac, W_ac=W_ac, L_dc=L_dc,
        I_ac=I_ac, I_cac=I_cac, I_cdc=I_cdc, I_dc=I_dc,
        I_g_ac=I_g_ac, I_g_dc=I_g_dc, Ibar_g_ac=Ibar_g_ac, Ibar_g_dc=Ibar_g_dc,
        M=M, D=D, C=C, G=G, M_p=M_p, K_theta=K_theta,
        K_g=K_g, T_g=T_g, Tbar_g=Tbar_g,
        K_theta_tilde=K_theta_tilde, lasalle_certificate_valid=certificate_valid,
    )


def reachable_subspace_basis(model: SystemModel) -> np.ndarray:
    """Orthonormal basis Q of the physically reachable state space.

    Angle differences are confined to the row space of the incidence matrix
    (eta = B^T theta); on cyclic ac graphs the orthogonal complement carries
    spurious zero modes of A.  All other blocks are fully reachable.
    """
    n_eta = len(model.layout.eta_ids)
    rest = model.layout.dim - n_eta
    if n_eta == 0:
        return np.eye(rest)
    # Row space of B_ac == column space of B_ac^T.
    u, sv, vh = np.linalg.svd(model.B_ac, full_matrices=False)
    rank = int(np.sum(sv > TOL_RANK_INCIDENCE * (sv[0] if sv.size else 1.0)))
    if rank == n_eta:
        U = np.eye(n_eta)
    else:
        U = vh[:rank].T
    Q = np.zeros((model.layout.dim, rank + rest))
    Q[:n_eta, :rank] = U
    Q[n_eta:, rank:] = np.eye(rest)
    return Q


def to_matrix_bundle(model: SystemModel) -> dict:
    """JSON-able bundle of all model matrices and orderings."""
    return {
        "state_labels": model.layout.labels,
        "eta_ids": list(model.layout.eta_ids),
        "omega_ids": list(model.layout.omega_ids),
        "v_ids": list(model.layout.v_ids),
        "p_ids": list(model.layout.p_ids),
        "pbar_ids": list(model.layout.pbar_ids),
        "theta_order": list(model.theta_order),
        "T": model.T.tolist(),
        "A": model.A.tolist(),
        "E_d": model.E_d.tolist(),
        "B_ac": model.B_ac.tolist(),
        "W_ac": model.W_ac.tolist(),
        "L_dc": model.L_dc.tolist(),
        "K_theta_tilde": model.K_theta_tilde.tolist(),
    }


def save_matrix_bundle(model: SystemModel, path) -> None:
    """Write the matrix bundle as .json or .npz depending on the suffix."""
    path = str(path)
    bundle = to_matrix_bundle(model)
    if path.endswith(".npz"):
        arrays = {k: np.asarray(v) for k, v in bundle.items()}
        np.savez(path, **arrays)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(bundle, fh, indent=1)
