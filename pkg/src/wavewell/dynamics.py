"""Explicit Störmer–Verlet integration of ``u_tt = Δu + f(u)`` with moment tracking.

Energy is ``E = ½‖u_t‖² + J(u)`` with the same quadrature and stencil
gradient as :mod:`wavewell.wells`, so ``E`` is the quantity the scheme
nearly conserves.  ``M(t) = ∫u²`` and ``M'(t) = 2∫u u_t`` are recorded at
every sample.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .domain import Grid, apply_laplacian, inner, l2_norm_sq
from .errors import InputError, NumericalError, StepFailure
from .nonlinearity import ConditionParams, NonlinearitySpec
from .wells import classify_membership, evaluate

DIAGNOSTIC_COLUMNS = ("t", "E", "M", "M_prime", "I", "J", "grad_norm_sq", "tag")


@dataclass(frozen=True)
class State:
    t: float
    u: np.ndarray
    v: np.ndarray

    @classmethod
    def initial(cls, grid: Grid, u0, u1, t: float = 0.0) -> "State":
        u = np.array(grid.check(u0, "u0"), dtype=float)
        v = np.array(grid.check(u1, "u1"), dtype=float)
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise InputError("initial data must be finite")
        return cls(float(t), u, v)


def max_stable_dt(grid: Grid, cfl: float = 0.9) -> float:
    # leapfrog is stable for dt * sqrt(max eigenvalue of -Δ_h) <= 2
    return cfl * 2.0 / math.sqrt(grid.stencil_bound)


def _accel(grid, spec, u):
    return apply_laplacian(grid, u) + spec.f(u)


def _verlet(grid, spec, u, v, a, dt):
    # overflow is detected by the callers, so keep numpy quiet about it
    with np.errstate(over="ignore", invalid="ignore"):
        vh = v + 0.5 * dt * a
        u1 = u + dt * vh
        a1 = _accel(grid, spec, u1)
        v1 = vh + 0.5 * dt * a1
    return u1, v1, a1


def step(grid: Grid, spec: NonlinearitySpec, state: State, dt: float, cfl: float = 0.9) -> State:
    """One Störmer–Verlet step.  Negative ``dt`` steps backwards in time."""
    if dt == 0 or not math.isfinite(dt):
        raise InputError(f"dt must be finite and nonzero, got {dt}")
    if abs(dt) > max_stable_dt(grid, cfl) * (1 + 1e-12):
        raise InputError(f"|dt| = {abs(dt)} exceeds the CFL limit {max_stable_dt(grid, cfl)}")
    with np.errstate(over="ignore", invalid="ignore"):
        a = _accel(grid, spec, state.u)
    u1, v1, _ = _verlet(grid, spec, state.u, state.v, a, dt)
    if not (np.all(np.isfinite(u1)) and np.all(np.isfinite(v1))):
        raise StepFailure(f"non-finite state after step from t = {state.t}", state.t)
    return State(state.t + dt, u1, v1)


def energy(grid: Grid, spec: NonlinearitySpec, params: ConditionParams, state: State) -> float:
    return 0.5 * l2_norm_sq(grid, state.v) + evaluate(grid, spec, params, state.u).j_value


def blowup_bounds(grid: Grid, state0: State, alpha: float):
    """Time bounds ``M(0)/((α+2)∫u₀u₁)`` and half of it; ``(None, None)`` unless ``∫u₀u₁ > 0``."""
    m0 = l2_norm_sq(grid, state0.u)
    c = inner(grid, state0.u, state0.v)
    if not c > 0:
        return None, None
    T = m0 / ((alpha + 2.0) * c)
    return T, m0 / ((alpha + 2.0) * 2.0 * c)


def concavity_bound(grid: Grid, state0: State, alpha: float) -> Optional[float]:
    """``4M(0)/((α−2)M'(0))``, the bound from ``M M'' >= (α+2)/4 · M'^2``.

    ``M'' >= (α+2)‖u_t‖²`` and Cauchy–Schwarz ``M'^2 <= 4M‖u_t‖²`` make
    ``M^{-(α-2)/4}`` concave, and its tangent line at ``t = 0`` hits zero here.
    """
    c = inner(grid, state0.u, state0.v)
    if not c > 0 or not alpha > 2:
        return None
    return 4.0 * l2_norm_sq(grid, state0.u) / ((alpha - 2.0) * 2.0 * c)


@dataclass
class Monitors:
    """Sampling, drift and blow-up settings for :func:`simulate`."""

    sample_stride: Optional[int] = None
    drift_fail: float = 1e-2
    blowup_factor: float = 1e6
    amplitude_limit: float = 1e154
    dt_min_factor: float = 2.0**-10
    refine: bool = True
    refine_tol: float = 0.2
    depth: float = math.inf
    delta: float = 1.0
    alpha: float = 4.0
    cfl: float = 0.9

    def stride(self, dt: float) -> int:
        if self.sample_stride is not None:
            if self.sample_stride < 1:
                raise InputError("sample_stride must be >= 1")
            return int(self.sample_stride)
        return max(1, int(math.floor(0.01 / dt)))


@dataclass
class TrajectoryDiagnostics:
    times: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    M: list = field(default_factory=list)
    M_prime: list = field(default_factory=list)
    I_values: list = field(default_factory=list)
    J_values: list = field(default_factory=list)
    grad_norm_sq: list = field(default_factory=list)
    uf_integral: list = field(default_factory=list)
    kinetic: list = field(default_factory=list)
    max_abs: list = field(default_factory=list)
    tags: list = field(default_factory=list)

    def __len__(self):
        return len(self.times)

    def record(self, grid, spec, params, state, depth=math.inf, delta=1.0):
        u, v = state.u, state.v
        self.times.append(float(state.t))
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            for col in (self.energy, self.M, self.M_prime, self.I_values, self.J_values,
                        self.grad_norm_sq, self.uf_integral, self.kinetic):
                col.append(math.nan)
            self.max_abs.append(math.nan)
            self.tags.append("nan")
            return
        r = evaluate(grid, spec, params, u, delta)
        kin = l2_norm_sq(grid, v)
        self.energy.append(0.5 * kin + r.j_value)
        self.M.append(r.l2_norm_sq)
        self.M_prime.append(2.0 * inner(grid, u, v))
        self.I_values.append(r.i_value)
        self.J_values.append(r.j_value)
        self.grad_norm_sq.append(r.grad_norm_sq)
        self.uf_integral.append(r.f_integral)
        self.kinetic.append(kin)
        self.max_abs.append(float(np.max(np.abs(u))))
        self.tags.append(classify_membership(r, depth))

    def array(self, name: str) -> np.ndarray:
        return np.asarray(getattr(self, name), dtype=float)

    def i_delta(self, delta: float) -> np.ndarray:
        return delta * self.array("grad_norm_sq") - self.array("uf_integral")

    def drift(self) -> np.ndarray:
        E = self.array("energy")
        return np.abs(E - E[0]) / (1.0 + abs(E[0]))

    def rows(self):
        cols = (self.times, self.energy, self.M, self.M_prime, self.I_values, self.J_values, self.grad_norm_sq, self.tags)
        return [dict(zip(DIAGNOSTIC_COLUMNS, r)) for r in zip(*cols)]


@dataclass
class BlowupVerdict:
    detected: bool
    t_detect: Optional[float] = None
    trigger: Optional[str] = None
    bound_T_theorem: Optional[float] = None
    bound_T_proof: Optional[float] = None
    bound_T_concavity: Optional[float] = None
    # "global", "blowup", "inconclusive" or "numerical-failure"
    status: str = "global"
    t_detect_refined: Optional[float] = None
    max_drift: float = 0.0
    message: str = ""

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def detect_blowup(diagnostics: TrajectoryDiagnostics, thresholds: Optional[Monitors] = None) -> BlowupVerdict:
    """Scan sampled diagnostics for the earliest blow-up trigger.

    ``M >= blowup_factor * max(M(0), 1)`` or ``max|u| > amplitude_limit``;
    a non-finite sample before either trigger makes the verdict inconclusive.
    """
    th = thresholds or Monitors()
    if len(diagnostics) == 0:
        return BlowupVerdict(False, status="inconclusive", message="no samples")
    M = diagnostics.array("M")
    amp = diagnostics.array("max_abs")
    limit = th.blowup_factor * max(M[0], 1.0) if math.isfinite(M[0]) else math.inf
    for k, t in enumerate(diagnostics.times):
        if not (math.isfinite(M[k]) and math.isfinite(amp[k])):
            return BlowupVerdict(False, status="inconclusive", message=f"non-finite sample at t = {t}")
        if M[k] >= limit:
            return BlowupVerdict(True, float(t), "moment-threshold", status="blowup")
        if amp[k] > th.amplitude_limit:
            return BlowupVerdict(True, float(t), "amplitude-overflow", status="blowup")
    return BlowupVerdict(False, status="global")


def _advance(grid, spec, u, v, a, dt, dt_min):
    """Step by ``dt``; on non-finite output retry as two half steps, down to ``dt_min``."""
    u1, v1, a1 = _verlet(grid, spec, u, v, a, dt)
    if np.all(np.isfinite(u1)) and np.all(np.isfinite(v1)) and np.all(np.isfinite(a1)):
        return u1, v1, a1
    half = 0.5 * dt
    if half < dt_min:
        raise StepFailure("step collapse", math.nan)
    um, vm, am = _advance(grid, spec, u, v, a, half, dt_min)
    return _advance(grid, spec, um, vm, am, half, dt_min)


def _integrate(grid, spec, params, state0, dt, t_end, mon):
    diag = TrajectoryDiagnostics()
    diag.record(grid, spec, params, state0, mon.depth, mon.delta)
    stride = mon.stride(dt)
    # enough whole steps to reach t_end; the last sample may overshoot by under one dt
    n_steps = max(1, int(math.ceil(t_end / dt - 1e-9)))
    M0 = diag.M[0]
    m_limit = mon.blowup_factor * max(M0, 1.0)
    dt_min = dt * mon.dt_min_factor
    u, v = state0.u, state0.v
    a = _accel(grid, spec, u)
    t0 = state0.t
    collapse = None
    for k in range(1, n_steps + 1):
        try:
            u, v, a = _advance(grid, spec, u, v, a, dt, dt_min)
        except StepFailure:
            collapse = t0 + (k - 1) * dt
            break
        t = t0 + k * dt
        # moment and amplitude are checked every step, and the trigger step is always sampled
        hit = l2_norm_sq(grid, u) >= m_limit or float(np.max(np.abs(u))) > mon.amplitude_limit
        if hit or k % stride == 0 or k == n_steps:
            diag.record(grid, spec, params, State(t, u, v), mon.depth, mon.delta)
        if hit:
            break
    return diag, collapse


def simulate(
    grid: Grid,
    spec: NonlinearitySpec,
    params: ConditionParams,
    state0: State,
    dt: float,
    t_end: float,
    monitors: Optional[Monitors] = None,
):
    """Integrate to ``t_end`` or blow-up.  Returns ``(diagnostics, verdict)``.

    On a trigger the run is repeated once at ``dt/2`` (when ``monitors.refine``);
    the blow-up is accepted only if the detection time moves by less than
    ``refine_tol`` relative.
    """
    mon = monitors or Monitors(alpha=params.alpha)
    if not dt > 0 or not t_end > 0:
        raise InputError("dt and t_end must be positive")
    if dt > max_stable_dt(grid, mon.cfl) * (1 + 1e-12):
        raise InputError(f"dt = {dt} exceeds the CFL limit {max_stable_dt(grid, mon.cfl)}")
    diag, collapse = _integrate(grid, spec, params, state0, dt, t_end, mon)
    verdict = detect_blowup(diag, mon)
    verdict.bound_T_theorem, verdict.bound_T_proof = blowup_bounds(grid, state0, mon.alpha)
    verdict.bound_T_concavity = concavity_bound(grid, state0, mon.alpha)
    drift = diag.drift()
    finite = drift[np.isfinite(drift)]
    verdict.max_drift = float(finite.max()) if finite.size else math.nan

    if collapse is not None and not verdict.detected:
        m_limit = mon.blowup_factor * max(diag.M[0], 1.0)
        if diag.M and max(diag.M) >= m_limit:
            verdict = replace(verdict, detected=True, t_detect=collapse, trigger="step-collapse", status="blowup")
        else:
            verdict.status = "numerical-failure"
            verdict.message = f"step collapse at t = {collapse} before the moment threshold"
            return diag, verdict

    if not verdict.detected:
        if verdict.status == "global" and verdict.max_drift > mon.drift_fail:
            verdict.status = "numerical-failure"
            verdict.message = f"energy drift {verdict.max_drift:.3e} exceeds {mon.drift_fail}"
        return diag, verdict

    if mon.refine:
        fine = replace(mon, refine=False)
        horizon = min(t_end, 2.0 * (verdict.t_detect - state0.t) + 10 * dt)
        d2, c2 = _integrate(grid, spec, params, state0, dt / 2, horizon, fine)
        v2 = detect_blowup(d2, fine)
        t2 = v2.t_detect if v2.detected else None
        verdict.t_detect_refined = t2
        span = verdict.t_detect - state0.t
        if t2 is None or abs((t2 - state0.t) - span) > mon.refine_tol * span:
            verdict.status = "inconclusive"
            verdict.message = f"detection time moved from {verdict.t_detect} to {t2} under dt/2"
    return diag, verdict
