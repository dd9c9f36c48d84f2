"""Synchronous steady state under constant load deviations.

With constant loads, every ac subgrid settles at one synchronous frequency
deviation ``omega_s`` (machine frequencies and converter angle rates all
equal it) and dc voltages settle to constants.  The equilibrium is computed
by a structured linear solve with one augmented frequency unknown per ac
subgrid and one grounded reference angle per ac subgrid; this matches the
synchronous-steady-state definition directly and avoids the structural null
space of the dynamics matrix.

Closed-form per-subgrid aggregates provide independent residual checks:

    delta_ac = k_theta / (k_theta + m_p (G + k_g))          (converters)
    gamma_ac = (G + k_g) / (k_theta + m_p (G + k_g))        (converters)
    gamma_ac = D + k_g                                      (machines)
    gamma_dc = k_theta / m_p + G + k_g                      (converters)
    gamma_dc = G + k_g                                      (dc buses)

    omega_s * sum(gamma_ac) + sum(delta_ac * P_dc) + 1' P_d_ac = 0
    sum(gamma_dc * v) - sum(omega_s / m_p) + 1' P_d_dc = 0

where P_dc is each converter's steady-state injection into the dc network.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .devices import ConverterParams, source_of
from .errors import PreconditionViolated, RequiresPositiveKg, SingularEquilibrium
from .network import natural_sorted
from .system import SystemModel

#: Condition numbers above this abort the solve.
COND_SINGULAR = 1e12
#: Condition numbers above this only raise a flag on the result.
COND_SUSPECT = 1e10


def _kg(params) -> float:
    src = source_of(params)
    return src.k_g if src is not None else 0.0


def converter_steady_map(params: ConverterParams, v: float, p_dc: float) -> float:
    """Steady-state frequency sustained by one converter at dc voltage ``v``
    while injecting ``p_dc`` into the dc network."""
    return (params.m_p * params.G + params.m_p * _kg(params) + params.k_theta) * v + params.m_p * p_dc


def droop_characteristic(params: ConverterParams) -> float:
    """Effective frequency/active-power slope of a source-backed converter
    with no dc network or losses: -(m_p + k_theta / k_g)."""
    kg = _kg(params)
    if kg <= 0.0:
        raise RequiresPositiveKg("droop slope undefined without a responsive source (k_g > 0)")
    return -(params.m_p + params.k_theta / kg)


def delta_ac(params: ConverterParams) -> float:
    return params.k_theta / (params.k_theta + params.m_p * (params.G + _kg(params)))


def gamma_ac(params) -> float:
    if isinstance(params, ConverterParams):
        return (params.G + _kg(params)) / (params.k_theta + params.m_p * (params.G + _kg(params)))
    return params.D + _kg(params)


def gamma_dc(params) -> float:
    if isinstance(params, ConverterParams):
        return params.k_theta / params.m_p + params.G + _kg(params)
    return params.G + _kg(params)


@dataclass(frozen=True)
class Equilibrium:
    omega_s: dict        # ac subgrid index -> synchronous frequency deviation
    theta: dict          # node -> angle deviation (reference node per subgrid at 0)
    v: dict              # node -> dc voltage deviation
    P: dict              # responsive source owner node -> power deviation
    eta: np.ndarray      # angle differences, layout order
    x: np.ndarray        # full state vector in layout order
    p_ac: dict           # ac node -> network active-power injection
    p_dc: dict           # v node -> dc network power injection
    conditioning_suspect: bool
    condition_number: float


def solve_equilibrium(model: SystemModel, ac_loads=None, dc_loads=None) -> Equilibrium:
    """Solve for the synchronous steady state under constant loads.

    ``ac_loads`` maps machine/converter ids to ac-side load deviations;
    ``dc_loads`` maps converter/dc-bus ids to dc-side load deviations.
    """
    pd = model.pd_vector(ac_loads, dc_loads)
    n_theta, n_v = len(model.theta_order), len(model.v_order)
    pd_ac, pd_dc = pd[:n_theta], pd[n_theta:]

    partition, devices = model.partition, model.devices
    theta_pos = {n: k for k, n in enumerate(model.theta_order)}
    v_pos = {n: k for k, n in enumerate(model.v_order)}

    ac_index_of = {}
    sub_pos = {}
    for k, sg in enumerate(partition.ac_subgrids):
        sub_pos[sg.index] = k
        for n in sg.node_ids:
            ac_index_of[n] = sg.index

    refs = {min(sg.node_ids, key=lambda n: theta_pos[n]) for sg in partition.ac_subgrids}
    free_thetas = [n for n in model.theta_order if n not in refs]
    th_col = {n: j for j, n in enumerate(free_thetas)}
    n_free = len(free_thetas)
    n_sub = len(partition.ac_subgrids)

    L_ac = (model.B_ac * model.W_ac[None, :]) @ model.B_ac.T
    L_dc = model.L_dc

    dim = n_theta + n_v
    F = np.zeros((dim, dim))
    rhs = np.zeros(dim)

    # Angle rows: one per machine / converter.
    for n in model.theta_order:
        r = theta_pos[n]
        params = devices[n]
        sub = ac_index_of[n]
        lrow = L_ac[theta_pos[n], :]
        if n in model.machine_order:
            # 0 = -(D + kg) omega_s - (L theta)_n - pd
            for m_id, coeff in zip(model.theta_order, lrow):
                j = th_col.get(m_id)
                if j is not None:
                    F[r, j] -= coeff
            F[r, n_free + n_v + sub_pos[sub]] = -(params.D + _kg(params))
            rhs[r] = pd_ac[theta_pos[n]]
        else:
            # omega_s = -m_p ((L theta)_n + pd) + k_theta v
            for m_id, coeff in zip(model.theta_order, lrow):
                j = th_col.get(m_id)
                if j is not None:
                    F[r, j] += params.m_p * coeff
            F[r, n_free + v_pos[n]] = -params.k_theta
            F[r, n_free + n_v + sub_pos[sub]] = 1.0
            rhs[r] = -params.m_p * pd_ac[theta_pos[n]]

    # Voltage rows: one per converter / dc bus.
    for n in model.v_order:
        r = n_theta + v_pos[n]
        params = devices[n]
        q = v_pos[n]
        F[r, n_free + q] -= params.G + _kg(params)
        for m_id, coeff in zip(model.v_order, L_dc[q, :]):
            F[r, n_free + v_pos[m_id]] -= coeff
        rhs[r] = pd_dc[q]
        if n in model.converter_order:
            lrow = L_ac[theta_pos[n], :]
            for m_id, coeff in zip(model.theta_order, lrow):
                j = th_col.get(m_id)
                if j is not None:
                    F[r, j] -= coeff
            rhs[r] += pd_ac[theta_pos[n]]

    if dim:
        cond = float(np.linalg.cond(F))
        if not np.isfinite(cond) or cond > COND_SINGULAR:
            raise SingularEquilibrium(
                f"steady-state system is singular or near-singular (cond ~ {cond:.3e}); "
                "no stabilizing source or loss reaches some subgrid"
            )
        z = np.linalg.solve(F, rhs)
    else:
        cond = 1.0
        z = np.zeros(0)

    theta = {n: 0.0 for n in refs}
    theta.update({n: float(z[th_col[n]]) for n in free_thetas})
    v = {n: float(z[n_free + v_pos[n]]) for n in model.v_order}
    omega_s = {sg.index: float(z[n_free + n_v + sub_pos[sg.index]]) for sg in partition.ac_subgrids}

    theta_vec = np.array([theta[n] for n in model.theta_order])
    v_vec = np.array([v[n] for n in model.v_order])
    eta = model.B_ac.T @ theta_vec

    P = {}
    for n in model.layout.p_ids:
        src = source_of(devices[n])
        if n in model.machine_order:
            P[n] = -src.k_g * omega_s[ac_index_of[n]]
        else:
            P[n] = -src.k_g * v[n]

    s = model.layout
    x = np.zeros(s.dim)
    x[s.eta] = eta
    x[s.omega] = [omega_s[ac_index_of[n]] for n in model.machine_order]
    x[s.v] = v_vec
    x[s.p] = [P[n] for n in s.p_ids]

    p_ac_vec = L_ac @ theta_vec + pd_ac
    p_dc_vec = L_dc @ v_vec + pd_dc
    return Equilibrium(
        omega_s=omega_s,
        theta=theta,
        v=v,
        P=P,
        eta=eta,
        x=x,
        p_ac={n: float(p_ac_vec[theta_pos[n]]) for n in model.theta_order},
        p_dc={n: float(p_dc_vec[v_pos[n]]) for n in model.v_order},
        conditioning_suspect=cond > COND_SUSPECT,
        condition_number=cond,
    )


def eq10_residual(model: SystemModel, eq: Equilibrium, ac_loads, subgrid_index: int) -> float:
    """Residual of the per-ac-subgrid frequency identity (see module docstring)."""
    sg = next(s for s in model.partition.ac_subgrids if s.index == subgrid_index)
    devices = model.devices
    loads = {str(k): float(val) for k, val in (ac_loads or {}).items()}
    total_gamma = sum(gamma_ac(devices[n]) for n in sg.node_ids)
    conv_term = sum(delta_ac(devices[n]) * eq.p_dc[n] for n in sg.converter_ids)
    load_term = sum(loads.get(n, 0.0) for n in sg.node_ids)
    return float(eq.omega_s[subgrid_index] * total_gamma + conv_term + load_term)


def eq11_residual(model: SystemModel, eq: Equilibrium, dc_loads, subgrid_index: int) -> float:
    """Residual of the per-dc-subgrid voltage identity (see module docstring)."""
    sg = next(s for s in model.partition.dc_subgrids if s.index == subgrid_index)
    devices = model.devices
    loads = {str(k): float(val) for k, val in (dc_loads or {}).items()}
    lhs = sum(gamma_dc(devices[n]) * eq.v[n] for n in sg.node_ids)
    conv = sum(
        eq.omega_s[model.partition.ac_subgrid_of(n)] / devices[n].m_p
        for n in sg.converter_ids
    )
    load_term = sum(loads.get(n, 0.0) for n in sg.node_ids)
    return float(lhs - conv + load_term)


def hvdc_average_identity(model: SystemModel, eq: Equilibrium, subgrid_index: int, dc_loads=None) -> float:
    """|mean over converters of (k_theta * v - omega_s of the attached ac
    subgrid)| for a lossless, source-free, load-free dc subgrid with
    identical converter gains."""
    sg = next(s for s in model.partition.dc_subgrids if s.index == subgrid_index)
    if not sg.converter_ids:
        raise PreconditionViolated(f"dc subgrid {subgrid_index} has no converters")
    devices = model.devices
    loads = {str(k): float(val) for k, val in (dc_loads or {}).items()}
    for n in sg.node_ids:
        p = devices[n]
        if p.G != 0.0 or _kg(p) != 0.0:
            raise PreconditionViolated(f"node {n!r} has losses or a responsive source")
        if loads.get(n, 0.0) != 0.0:
            raise PreconditionViolated(f"node {n!r} carries a dc load")
    gains = {(devices[n].m_p, devices[n].k_theta) for n in sg.converter_ids}
    if len(gains) > 1:
        raise PreconditionViolated(
            f"converters of dc subgrid {subgrid_index} have non-identical gains: {natural_sorted(sg.converter_ids)}"
        )
    k_theta = devices[sg.converter_ids[0]].k_theta
    terms = [
        k_theta * eq.v[n] - eq.omega_s[model.partition.ac_subgrid_of(n)]
        for n in sg.converter_ids
    ]
    return float(abs(np.mean(terms)))
