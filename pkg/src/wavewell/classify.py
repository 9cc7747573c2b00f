"""Regime prediction from initial data, and end-to-end verification runs."""
from __future__ import annotations

import hashlib
import json
import math
import platform
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
import scipy

from .domain import Grid, WellContext, embedding_constant, grad_norm_sq, inner, l2_norm_sq, lambda1
from .dynamics import Monitors, State, TrajectoryDiagnostics, simulate
from .errors import InputError
from .nonlinearity import ConditionParams, NonlinearitySpec, estimate_sup_a, growth_constants
from .wells import (
    DepthCurve,
    FunctionalReadout,
    a_delta,
    classify_membership,
    delta_roots,
    depth,
    depth_curve,
    evaluate,
    nehari_scale,
)

REGIMES = (
    "global",
    "blowup",
    "global-critical",
    "blowup-critical",
    "negative-energy-blowup",
    "indeterminate",
)
BLOWUP_REGIMES = ("blowup", "blowup-critical", "negative-energy-blowup")


@dataclass(frozen=True)
class Recipe:
    """Initial field: a sum of sine modes or seeded random smooth noise, times ``amplitude``.

    ``kind="u0"`` (only meaningful for ``u1``) reuses the ``u0`` field.
    """

    kind: str = "modes"
    amplitude: float = 1.0
    modes: tuple = (1,)
    weights: Optional[tuple] = None
    n_modes: int = 12
    decay: float = 2.0

    def __post_init__(self):
        if self.kind not in ("modes", "random", "zero", "u0"):
            raise InputError(f"unknown initial-data kind {self.kind!r}")
        if self.kind == "modes":
            if len(self.modes) == 0:
                raise InputError("mode recipe needs at least one mode")
            if self.weights is not None and len(self.weights) != len(self.modes):
                raise InputError("weights and modes must have the same length")

    def build(self, grid: Grid, seed: int, slot: int, u0=None) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros(grid.size)
        if self.kind == "u0":
            if u0 is None:
                raise InputError("recipe kind 'u0' is only valid for u1")
            return self.amplitude * np.asarray(u0)
        if self.kind == "random":
            # stream 0 is reserved for initial data; slot separates u0 from u1
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0, slot)))
            w = grid.random_smooth(rng, self.n_modes, self.decay)
            return self.amplitude * w / np.max(np.abs(w))
        weights = self.weights or (1.0,) * len(self.modes)
        u = np.zeros(grid.size)
        for m, c in zip(self.modes, weights):
            idx = tuple(m) if isinstance(m, (list, tuple)) else int(m)
            u += c * grid.eigenmode(idx)
        return self.amplitude * u


@dataclass(frozen=True)
class ExperimentPlan:
    grid: Grid
    spec: NonlinearitySpec
    params: ConditionParams
    u0: Recipe = Recipe()
    u1: Recipe = Recipe(kind="zero")
    dt: Optional[float] = None
    t_end: float = 10.0
    e: Optional[float] = None
    budget: int = 64
    seed: int = 0
    descent_starts: int = 4
    curve_points: int = 20
    curve_budget: int = 8
    # critical runs rescale u0 until |E0 - d| <= tol_d, on the I0 >= 0 ("inside") or I0 < 0 side
    critical: Optional[str] = None
    monitors: Monitors = field(default_factory=Monitors)

    def __post_init__(self):
        if self.budget < 1 or self.curve_budget < 1:
            raise InputError("search budgets must be at least 1")
        if self.critical not in (None, "inside", "outside"):
            raise InputError("critical must be None, 'inside' or 'outside'")
        if not self.t_end > 0:
            raise InputError("t_end must be positive")

    @property
    def time_step(self) -> float:
        return self.dt if self.dt is not None else min(self.grid.spacing) / 4.0

    def describe(self) -> dict:
        g, s = self.grid, self.spec
        return {
            "grid": {"dim": g.dim, "extents": list(g.extents), "counts": list(g.counts)},
            "nonlinearity": {"family": s.family, "p": s.p, "case": s.case, "label": s.label},
            "condition": asdict(self.params),
            "initial": {"u0": asdict(self.u0), "u1": asdict(self.u1)},
            "integrator": {"dt": self.time_step, "t_end": self.t_end, "monitors": asdict(self.monitors)},
            "search": {
                "budget": self.budget,
                "seed": self.seed,
                "descent_starts": self.descent_starts,
                "curve_points": self.curve_points,
                "curve_budget": self.curve_budget,
                "critical": self.critical,
                "e": self.e,
            },
        }

    def digest(self) -> str:
        text = json.dumps(self.describe(), sort_keys=True, default=list)
        return hashlib.sha256(text.encode()).hexdigest()


def well_context(grid: Grid, spec: NonlinearitySpec, params: ConditionParams, seed: int = 0) -> WellContext:
    g = growth_constants(spec, params)
    return WellContext(
        lambda1=lambda1(grid),
        c_star=embedding_constant(grid, params.gamma, seed=seed),
        sup_a=estimate_sup_a(spec, params),
        growth_A=g.A,
        growth_B=g.B,
        probe_u=g.probe_u,
        omega_measure=grid.measure,
    )


_CACHE: dict = {}


def _cached(key, fn):
    if key not in _CACHE:
        _CACHE[key] = fn()
    return _CACHE[key]


def _well_key(plan):
    return (plan.grid, plan.spec.family, plan.spec.p, plan.spec.case, id(plan.spec.f_custom), plan.params, plan.seed)


def plan_context(plan: ExperimentPlan) -> WellContext:
    return _cached(("ctx",) + _well_key(plan), lambda: well_context(plan.grid, plan.spec, plan.params, plan.seed))


def plan_depth(plan: ExperimentPlan) -> float:
    if plan.spec.family == "zero":
        return math.inf
    key = ("d",) + _well_key(plan) + (plan.budget, plan.descent_starts)
    return _cached(key, lambda: depth(plan.grid, plan.spec, plan.params, 1.0, plan.budget, plan.seed, plan.descent_starts).value)


def plan_curve(plan: ExperimentPlan) -> Optional[DepthCurve]:
    if plan.spec.family == "zero":
        return None
    key = ("curve",) + _well_key(plan) + (plan.curve_budget, plan.curve_points)

    def build():
        top = plan.params.gamma / 2
        deltas = np.linspace(top / plan.curve_points, top, plan.curve_points)
        return depth_curve(
            plan.grid, plan.spec, plan.params, plan_context(plan), deltas,
            budget=plan.curve_budget, seed=plan.seed, descent_starts=min(2, plan.curve_budget), b_xtol=1e-4,
        )

    return _cached(key, build)


def initial_fields(plan: ExperimentPlan):
    u0 = plan.u0.build(plan.grid, plan.seed, 0)
    u1 = plan.u1.build(plan.grid, plan.seed, 1, u0)
    if plan.critical is not None:
        u0 = critical_scale(plan, u0, u1) * u0
        if plan.u1.kind == "u0":
            raise InputError("critical runs need u1 independent of u0")
    return u0, u1


def initial_energy(grid, spec, params, u0, u1) -> float:
    return 0.5 * l2_norm_sq(grid, u1) + evaluate(grid, spec, params, u0).j_value


def critical_scale(plan: ExperimentPlan, u0, u1) -> float:
    """Factor ``s`` with ``|E0(s u0, u1) − d| <= tol_d`` on the requested side of the Nehari scale."""
    grid, spec, params = plan.grid, plan.spec, plan.params
    d = plan_depth(plan)
    if not math.isfinite(d):
        raise InputError("critical runs need a finite well depth")
    tol = 1e-6 * (1.0 + abs(d))
    s_star = nehari_scale(grid, spec, u0)

    def gap(s):
        return initial_energy(grid, spec, params, s * u0, u1) - d

    if gap(s_star) < 0:
        raise InputError("E0 never reaches d along this ray; pick another u0 direction or a smaller u1")
    if plan.critical == "inside":
        lo, hi = 0.0, s_star
        if gap(lo) > 0:
            raise InputError("kinetic energy of u1 already exceeds d")
    else:
        lo, hi = s_star, s_star
        while gap(hi) >= 0:
            hi *= 2.0
            if hi > 1e8 * s_star:
                raise InputError("could not bracket the outer critical amplitude")
        lo, hi = hi, s_star  # gap(lo) < 0 <= gap(hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        g = gap(mid)
        if abs(g) <= 0.25 * tol:
            return mid
        if g < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass
class Prediction:
    E0: float
    I0: float
    d_estimate: float
    regime: str
    delta_window: Optional[tuple]
    grad_norm_sq0: float
    u0u1: float
    tol_d: float
    reason: str = ""

    @property
    def predicts_blowup(self) -> bool:
        return self.regime in BLOWUP_REGIMES

    def to_dict(self) -> dict:
        out = asdict(self)
        out["delta_window"] = list(self.delta_window) if self.delta_window else None
        out["d_estimate"] = self.d_estimate if math.isfinite(self.d_estimate) else None
        return out


def regime_of(E0: float, I0: float, d: float, G0: float, u0u1: float, critical: bool = False):
    """Decision table; returns ``(regime, reason)``."""
    tol = 1e-6 * (1.0 + abs(d)) if math.isfinite(d) else 0.0
    if G0 != 0 and E0 <= 0:
        return "negative-energy-blowup", "E0 <= 0 with nonzero gradient"
    if G0 == 0 and E0 < d - tol:
        return "global", "u0 = 0 below the well depth"
    if abs(E0 - d) <= tol:
        if not critical:
            return "indeterminate", "E0 within tol_d of the depth estimate"
        if I0 >= 0:
            return "global-critical", "E0 = d with I0 >= 0"
        if u0u1 >= 0:
            return "blowup-critical", "E0 = d with I0 < 0 and <u0,u1> >= 0"
        return "indeterminate", "E0 = d with I0 < 0 and <u0,u1> < 0"
    if E0 < d:
        if I0 >= 0:
            return "global", "E0 < d and I0 >= 0"
        return "blowup", "E0 < d and I0 < 0"
    return "indeterminate", "E0 above the well depth"


def predict(plan: ExperimentPlan, u0=None, u1=None) -> Prediction:
    grid, spec, params = plan.grid, plan.spec, plan.params
    if u0 is None:
        u0, u1 = initial_fields(plan)
    r = evaluate(grid, spec, params, u0)
    E0 = 0.5 * l2_norm_sq(grid, u1) + r.j_value
    d = plan_depth(plan)
    G0 = r.grad_norm_sq
    c = inner(grid, u0, u1)
    regime, reason = regime_of(E0, r.i_value, d, G0, c, plan.critical is not None)
    window = None
    if math.isfinite(d):
        if 0 < E0 < d - 1e-6 * (1.0 + d):
            window = delta_roots(plan_curve(plan), E0)
        elif regime == "negative-energy-blowup":
            window = (0.0, params.alpha / 2 - params.beta / plan_context(plan).lambda1)
    return Prediction(float(E0), float(r.i_value), float(d), regime, window, float(G0), float(c), 1e-6 * (1 + abs(d)), reason)


@dataclass
class InvarianceReport:
    deltas: list
    initial_tags: list
    violations: list
    vacuum_hits: list
    first_violation_time: Optional[float]
    applicable: bool = True

    @property
    def ok(self) -> bool:
        return not self.violations and not self.vacuum_hits

    def to_dict(self):
        return {**asdict(self), "ok": self.ok}


def sample_readouts(diagnostics: TrajectoryDiagnostics, delta: float):
    G = diagnostics.array("grad_norm_sq")
    uf = diagnostics.array("uf_integral")
    for k in range(len(diagnostics)):
        yield FunctionalReadout(
            delta=delta,
            j_value=diagnostics.J_values[k],
            i_value=diagnostics.I_values[k],
            i_delta=delta * G[k] - uf[k],
            grad_norm_sq=G[k],
            l2_norm_sq=diagnostics.M[k],
            f_integral=uf[k],
            F_integral=math.nan,
        )


def verify_invariance(prediction: Prediction, diagnostics: TrajectoryDiagnostics, curve: Optional[DepthCurve] = None, n_deltas: int = 5, tol_I: float = 1e-9) -> InvarianceReport:
    """Tags at in-window ``δ`` must stay at their initial value, with no sample in the vacuum band."""
    if prediction.delta_window is None:
        return InvarianceReport([], [], [], [], None, applicable=False)
    lo, hi = prediction.delta_window
    deltas = list(np.linspace(lo, hi, n_deltas + 2)[1:-1])
    tags0, bad, vac = [], [], []
    for dl in deltas:
        d_here = curve.depth_at(dl) if curve is not None else math.inf
        tags = [classify_membership(r, d_here, tol_I) for r in sample_readouts(diagnostics, dl)]
        tags0.append(tags[0])
        for t, tag, r in zip(diagnostics.times, tags, sample_readouts(diagnostics, dl)):
            if not math.isfinite(r.grad_norm_sq):
                continue
            if tag == "boundary":
                vac.append((float(dl), float(t)))
            elif tag != tags[0]:
                bad.append((float(dl), float(t), tag))
    first = min([b[1] for b in bad] + [v[1] for v in vac], default=None)
    return InvarianceReport([float(x) for x in deltas], tags0, bad, vac, first)


def zero_energy_bound(ctx: WellContext, params: ConditionParams) -> float:
    g = params.gamma
    return (1.0 / (2.0 * ctx.growth_A * ctx.c_star**g)) ** (1.0 / (g - 2.0))


def verify_zero_energy_bound(diagnostics: TrajectoryDiagnostics, ctx: WellContext, params: ConditionParams, tol_d: float = 1e-6, factor: float = 0.99) -> dict:
    E0 = diagnostics.energy[0]
    G0 = diagnostics.grad_norm_sq[0]
    if abs(E0) > tol_d or G0 == 0:
        return {"applicable": False, "reason": "not applicable: needs E0 = 0 and nonzero gradient"}
    bound = zero_energy_bound(ctx, params)
    grad = np.sqrt(diagnostics.array("grad_norm_sq"))
    low = [(float(t), float(g)) for t, g in zip(diagnostics.times, grad) if math.isfinite(g) and g < factor * bound]
    return {"applicable": True, "bound": bound, "min_grad_norm": float(np.nanmin(grad)), "violations": low, "ok": not low}


def _versions():
    from . import __version__

    return {"wavewell": __version__, "numpy": np.__version__, "scipy": scipy.__version__, "python": platform.python_version()}


@dataclass
class RunRecord:
    plan_hash: str
    plan: dict
    prediction: dict
    diagnostics_summary: dict
    verdict: dict
    invariance: dict
    checks: dict
    outcome: str
    seeds: dict
    versions: dict
    diagnostics: Optional[TrajectoryDiagnostics] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if k != "diagnostics"}
        return json.loads(json.dumps(out, default=_json_default))


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(f"cannot serialise {type(x)}")


def _clean(x):
    return None if x is None or (isinstance(x, float) and not math.isfinite(x)) else x


def run_experiment(plan: ExperimentPlan) -> RunRecord:
    """Predict, simulate, verify; ``outcome`` is ``confirmed``, ``violation`` or ``inconclusive``."""
    grid, spec, params = plan.grid, plan.spec, plan.params
    u0, u1 = initial_fields(plan)
    pred = predict(plan, u0, u1)
    finite_d = math.isfinite(pred.d_estimate)
    curve = plan_curve(plan) if pred.delta_window is not None else None
    mon = Monitors(**{**asdict(plan.monitors), "depth": pred.d_estimate, "alpha": params.alpha})
    diag, verdict = simulate(grid, spec, params, State.initial(grid, u0, u1), plan.time_step, plan.t_end, mon)
    inv = verify_invariance(pred, diag, curve)

    G = diag.array("grad_norm_sq")
    I = diag.array("I_values")
    summary = {
        "samples": len(diag),
        "t_last": diag.times[-1],
        "max_drift": verdict.max_drift,
        "sup_grad_norm_sq": float(np.nanmax(G)),
        "min_I": float(np.nanmin(I)),
        "max_I": float(np.nanmax(I)),
    }
    checks: dict = {}
    findings = []
    if finite_d and spec.family != "zero":
        a1 = a_delta(1.0, params, plan_context(plan).lambda1)
        checks["norm_bound"] = pred.d_estimate / a1 * (1 + 1e-3)

    if verdict.status in ("inconclusive", "numerical-failure"):
        outcome = "inconclusive"
    elif pred.regime == "indeterminate":
        outcome = "inconclusive"
        findings.append("no prediction for this initial data")
    elif pred.predicts_blowup:
        if not verdict.detected:
            findings.append("blow-up predicted but not detected before t_end")
        elif pred.u0u1 > 0 and verdict.bound_T_theorem is not None and verdict.t_detect > verdict.bound_T_theorem:
            findings.append(f"t_detect {verdict.t_detect} exceeds the time bound {verdict.bound_T_theorem}")
        if np.any(I[np.isfinite(I)] >= 0):
            findings.append("I(u(t)) changed sign along a blow-up run")
        outcome = "violation" if findings else "confirmed"
    else:
        if verdict.detected:
            findings.append("blow-up detected in a global regime")
        if np.any(I[np.isfinite(I)][1:] <= 0) and pred.grad_norm_sq0 > 0:
            findings.append("I(u(t)) left the positive side")
        if "norm_bound" in checks and summary["sup_grad_norm_sq"] >= checks["norm_bound"]:
            findings.append("sup |grad u|^2 reached d/a(1)")
        outcome = "violation" if findings else "confirmed"
    if inv.applicable and not inv.ok:
        findings.append("membership tag change or vacuum sample inside the delta window")
        if outcome == "confirmed":
            outcome = "violation"
    if finite_d and abs(pred.E0) <= pred.tol_d and pred.grad_norm_sq0 > 0:
        checks["zero_energy_bound"] = verify_zero_energy_bound(diag, plan_context(plan), params, pred.tol_d)
        if not checks["zero_energy_bound"]["ok"] and outcome == "confirmed":
            outcome = "violation"
    checks["findings"] = findings

    return RunRecord(
        plan_hash=plan.digest(),
        plan=plan.describe(),
        prediction=pred.to_dict(),
        diagnostics_summary={k: _clean(v) for k, v in summary.items()},
        verdict={k: _clean(v) for k, v in verdict.to_dict().items()},
        invariance=inv.to_dict(),
        checks=checks,
        outcome=outcome,
        seeds={"seed": plan.seed, "streams": {"initial": 0, "depth": 1, "embedding": 2}},
        versions=_versions(),
        diagnostics=diag,
    )
