"""Deterministic fixed-step simulation of the linear model.

Classical 4th-order Runge-Kutta on x' = T^-1 (A x + E_d p_d(t)) with
piecewise-constant loads.  Within each constant-load segment the RK4 update
is the fixed affine map

    x_{k+1} = R(h F) x_k + h (I + hF/2 + (hF)^2/6 + (hF)^3/24) c,
    R(z) = I + z + z^2/2 + z^3/6 + z^4/24,
    F = T^-1 A,  c = T^-1 E_d p_d,

which is precomputed once per segment; this is algebraically identical to
evaluating the four stages and keeps reruns bit-identical.  Step boundaries
are aligned to load discontinuities (the last step of a segment is shortened
to land exactly on the boundary).

Energy diagnostics: the logged energy V and dissipation dV/dt are evaluated
on the deviation from the segment's own equilibrium (the origin for zero
load), so V is non-increasing within every segment of a certified network
started with zero non-responsive source power.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonFiniteState, RatioMismatch, SingularEquilibrium
from .stability import _source_weights
from .steady_state import solve_equilibrium
from .system import SystemModel

#: Any |state entry| above this aborts the run: far outside linearization
#: validity, so it signals model misuse rather than physics.
DIVERGENCE_GUARD = 1e6


@dataclass(frozen=True)
class DisturbanceStep:
    t_start: float
    node: str
    delta_p: float
    side: str  # "ac" | "dc"


@dataclass(frozen=True)
class DisturbanceSchedule:
    steps: tuple

    @classmethod
    def parse(cls, doc, model: SystemModel) -> "DisturbanceSchedule":
        """Parse ``{"steps": [{"t_start", "node", "delta_p", "side"?}]}``.

        ``side`` defaults by node kind; converters carry both an ac and a dc
        terminal, so for them it must be given explicitly.
        """
        steps = []
        for k, item in enumerate(doc.get("steps", [])):
            node = str(item["node"])
            t0 = float(item.get("t_start", 0.0))
            if t0 < 0:
                raise DimensionMismatch(f"steps[{k}].t_start must be >= 0, got {t0}")
            kind = model.partition.graph.node_kinds.get(node)
            if kind is None:
                raise DimensionMismatch(f"steps[{k}].node: unknown node id {node!r}")
            side = item.get("side")
            if side is None:
                if kind == "ac-machine":
                    side = "ac"
                elif kind == "dc-bus":
                    side = "dc"
                else:
                    raise DimensionMismatch(
                        f"steps[{k}].side: converter {node!r} needs side 'ac' or 'dc'"
                    )
            if side not in ("ac", "dc"):
                raise DimensionMismatch(f"steps[{k}].side must be 'ac' or 'dc', got {side!r}")
            if side == "ac" and kind == "dc-bus":
                raise DimensionMismatch(f"steps[{k}]: dc bus {node!r} has no ac terminal")
            if side == "dc" and kind == "ac-machine":
                raise DimensionMismatch(f"steps[{k}]: machine {node!r} has no dc terminal")
            steps.append(DisturbanceStep(t_start=t0, node=node, delta_p=float(item["delta_p"]), side=side))
        return cls(steps=tuple(steps))

    def load_dicts_at(self, t: float):
        """Cumulative (ac_loads, dc_loads) active at time t."""
        ac, dc = {}, {}
        for s in self.steps:
            if s.t_start <= t:
                target = ac if s.side == "ac" else dc
                target[s.node] = target.get(s.node, 0.0) + s.delta_p
        return ac, dc

    def change_times(self):
        return sorted({s.t_start for s in self.steps})


EMPTY_SCHEDULE = DisturbanceSchedule(steps=())


@dataclass(frozen=True)
class Trajectory:
    """Sampled run plus energy diagnostics.

    ``segments`` holds one (first index, last index, reference kind) triple
    per constant-load span; spans share their boundary sample, whose logged
    V/dVdt value uses the *later* segment's reference.  ``references`` holds
    the equilibrium each segment's energy is measured about.
    """

    model: object          # the SystemModel that produced this run
    times: np.ndarray      # strictly increasing
    states: np.ndarray     # (len(times), dim) in layout order
    layout: object
    p_ac_edges: np.ndarray  # (len(times), n_eta): per-edge active power W * eta
    V: np.ndarray
    dVdt: np.ndarray
    segments: tuple        # (i0, i1, reference kind) index spans
    references: tuple      # reference state per segment
    certificate_valid: bool

    @property
    def terminal_state(self):
        return self.states[-1]

    def block(self, name):
        return self.states[:, getattr(self.layout, name)]

    def segment_energy(self, k: int):
        """(times, V, dVdt) of segment k about its own reference."""
        i0, i1, _kind = self.segments[k]
        Z = self.states[i0:i1 + 1] - self.references[k][None, :]
        V, dV = _batch_energy(self.model, Z)
        return self.times[i0:i1 + 1], V, dV


def _rk4_maps(F, c, h):
    n = F.shape[0]
    eye = np.eye(n)
    hF = h * F
    hF2 = hF @ hF
    hF3 = hF2 @ hF
    phi = eye + hF + hF2 / 2.0 + hF3 / 6.0 + hF3 @ hF / 24.0
    psi = h * ((eye + hF / 2.0 + hF2 / 6.0 + hF3 / 24.0) @ c)
    return phi, psi


def _batch_energy(model, Z):
    """Vectorized energy and dissipation over rows of Z (deviation states)."""
    s = model.layout
    Ze, Zw, Zv, Zp = Z[:, s.eta], Z[:, s.omega], Z[:, s.v], Z[:, s.p]
    sw = _source_weights(model)
    V = 0.5 * (
        np.einsum("ij,j,ij->i", Ze, model.W_ac, Ze)
        + np.einsum("ij,j,ij->i", Zw, model.M, Zw)
        + np.einsum("ij,j,ij->i", Zv, model.K_theta_tilde * model.C, Zv)
        + np.einsum("ij,j,ij->i", Zp, sw * model.T_g / model.K_g, Zp)
    )
    Bc = model.I_cac @ model.B_ac
    Y = (Ze * model.W_ac[None, :]) @ Bc.T
    X = np.diag(model.G) + model.L_dc
    XZ = Zv @ X.T
    dV = (
        -np.einsum("ij,j,ij->i", Y, model.M_p, Y)
        - np.einsum("ij,j,ij->i", Zw, model.D, Zw)
        - 0.5 * (
            np.einsum("ij,j,ij->i", Zv, model.K_theta_tilde, XZ)
            + np.einsum("ij,ij->i", XZ, Zv * model.K_theta_tilde[None, :])
        )
        - np.einsum("ij,j,ij->i", Zp, sw / model.K_g, Zp)
    )
    return V, dV


def simulate(model: SystemModel, x0, schedule: DisturbanceSchedule | None,
             t_final: float, dt: float) -> Trajectory:
    """Integrate from x0 over [0, t_final] with fixed step dt."""
    if dt <= 0:
        raise DimensionMismatch(f"dt must be > 0, got {dt}")
    if t_final < dt:
        raise DimensionMismatch(f"t_final must be >= dt, got {t_final} < {dt}")
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (model.layout.dim,):
        raise DimensionMismatch(
            f"x0 has shape {x0.shape}, model state dimension is {model.layout.dim}"
        )
    schedule = schedule or EMPTY_SCHEDULE

    boundaries = [0.0] + [t for t in schedule.change_times() if 0.0 < t < t_final] + [t_final]
    F = model.T_inv_A
    dim = model.layout.dim

    times = [0.0]
    states = [x0.copy()]
    seg_spans = []  # (start index, end index inclusive, ref kind, ref state)

    x = x0.copy()
    for t0, t1 in zip(boundaries[:-1], boundaries[1:]):
        ac, dc = schedule.load_dicts_at(t0)
        pd = model.pd_vector(ac, dc)
        c = (model.E_d @ pd) / model.T
        if np.any(pd):
            try:
                ref = solve_equilibrium(model, ac, dc).x
                ref_kind = "equilibrium"
            except SingularEquilibrium:
                ref = np.zeros(dim)
                ref_kind = "origin"
        else:
            ref = np.zeros(dim)
            ref_kind = "origin"

        n_full = int(np.floor((t1 - t0) / dt + 1e-9))
        h_rem = (t1 - t0) - n_full * dt
        if h_rem < 1e-12:
            h_rem = 0.0
        seg_start = len(times) - 1

        phi, psi = _rk4_maps(F, c, dt)
        for k in range(1, n_full + 1):
            x = phi @ x + psi
            m = float(np.max(np.abs(x))) if dim else 0.0
            if not np.isfinite(m) or m > DIVERGENCE_GUARD:
                raise NonFiniteState(f"state exceeded {DIVERGENCE_GUARD:g} at t={t0 + k * dt:g}")
            times.append(t0 + k * dt)
            states.append(x.copy())
        if h_rem > 0.0:
            phi_r, psi_r = _rk4_maps(F, c, h_rem)
            x = phi_r @ x + psi_r
            m = float(np.max(np.abs(x))) if dim else 0.0
            if not np.isfinite(m) or m > DIVERGENCE_GUARD:
                raise NonFiniteState(f"state exceeded {DIVERGENCE_GUARD:g} at t={t1:g}")
            times.append(t1)
            states.append(x.copy())
        seg_spans.append((seg_start, len(times) - 1, ref_kind, ref))

    times = np.asarray(times)
    states = np.asarray(states)

    V = np.zeros(len(times))
    dV = np.zeros(len(times))
    segments = []
    references = []
    for (i0, i1, ref_kind, ref) in seg_spans:
        Z = states[i0:i1 + 1] - ref[None, :]
        V[i0:i1 + 1], dV[i0:i1 + 1] = _batch_energy(model, Z)
        segments.append((i0, i1, ref_kind))
        references.append(ref)

    p_ac_edges = states[:, model.layout.eta] * model.W_ac[None, :]
    return Trajectory(
        model=model,
        times=times,
        states=states,
        layout=model.layout,
        p_ac_edges=p_ac_edges,
        V=V,
        dVdt=dV,
        segments=tuple(segments),
        references=tuple(references),
        certificate_valid=model.lasalle_certificate_valid,
    )


def closed_form_example1(b1: float, b2: float, m2: float, m3: float, t: float) -> np.ndarray:
    """Closed-form marginal orbit of the three-machine benchmark.

    Valid only on the resonant parameter ray b2/b1 == m3/m2; returns the
    state (eta_1, eta_2, omega_1, omega_2, omega_3).
    """
    if abs(b2 / b1 - m3 / m2) > 1e-12:
        raise RatioMismatch(f"requires b2/b1 == m3/m2, got {b2 / b1} vs {m3 / m2}")
    zeta = np.sqrt(b1 / m2)
    return np.array([
        (b2 / b1) * np.cos(zeta * t),
        -np.cos(zeta * t),
        0.0,
        b2 / np.sqrt(b1 * m2) * np.sin(zeta * t),
        -zeta * np.sin(zeta * t),
    ])
