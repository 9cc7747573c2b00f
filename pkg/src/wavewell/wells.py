"""Potential-well functionals, the Nehari scaling, and the well-depth family.

Conventions: ``G = ‖∇u‖²`` (stencil form), ``J(u) = G/2 − ∫[F(u) − σ]``,
``I_δ(u) = δG − ∫u f(u)``.  With ``σ > 0`` every ray starts at
``J(0) = σ|Ω|``; results keep that shift and also report it separately.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .domain import Grid, WellContext, grad_norm_sq, inner, l2_norm_sq
from .errors import InputError, NumericalError
from .nonlinearity import ConditionParams, NonlinearitySpec

TOL_I = 1e-9
MEMBERSHIP_TAGS = ("W", "V", "boundary", "zero", "exterior")


@dataclass(frozen=True)
class FunctionalReadout:
    delta: float
    j_value: float
    i_value: float
    i_delta: float
    grad_norm_sq: float
    l2_norm_sq: float
    f_integral: float
    F_integral: float


def evaluate(grid: Grid, spec: NonlinearitySpec, params: ConditionParams, u, delta: float = 1.0) -> FunctionalReadout:
    if not delta > 0:
        raise InputError(f"delta must be positive, got {delta}")
    u = grid.check(u)
    if not np.all(np.isfinite(u)):
        raise NumericalError("field contains non-finite values")
    G = grad_norm_sq(grid, u)
    fint = grid.integrate(spec.uf(u))
    F0 = float(spec.F(np.zeros(1))[0])
    Fint = grid.integrate(spec.F(u) - params.sigma, boundary_value=F0 - params.sigma)
    return FunctionalReadout(
        delta=float(delta),
        j_value=0.5 * G - Fint,
        i_value=G - fint,
        i_delta=delta * G - fint,
        grad_norm_sq=G,
        l2_norm_sq=l2_norm_sq(grid, u),
        f_integral=fint,
        F_integral=Fint,
    )


def J(grid, spec, params, u) -> float:
    return evaluate(grid, spec, params, u).j_value


def _require_positive(spec, u):
    if spec.positive_only and not np.all(u > 0):
        raise InputError("case H-b needs a strictly positive direction field")


def phi(grid: Grid, spec: NonlinearitySpec, u, eps: float) -> float:
    """``(1/ε)∫u f(εu)``: increasing in ε, the slope profile of the fibering map."""
    if not eps > 0:
        raise InputError(f"eps must be positive, got {eps}")
    u = grid.check(u)
    _require_positive(spec, u)
    return grid.integrate(u * spec.f(eps * u)) / eps


def nehari_scale(grid: Grid, spec: NonlinearitySpec, u, delta: float = 1.0, rtol: float = 1e-12) -> float:
    """The unique ``ε > 0`` with ``I_δ(εu) = 0``.

    Solves ``δ‖∇u‖² = φ(ε)`` (``φ`` increasing) by geometric bracketing in
    ``[1e-8, 1e8]`` and Brent's method.
    """
    u = grid.check(u)
    _require_positive(spec, u)
    G = grad_norm_sq(grid, u)
    if not G > 0:
        raise InputError("nehari_scale needs a nonzero field")
    target = delta * G

    def h(eps):
        return target - grid.integrate(u * spec.f(eps * u)) / eps

    lo = hi = 1.0
    if h(1.0) > 0:
        while h(hi) > 0:
            hi *= 4.0
            if hi > 1e8:
                raise NumericalError("no sign change of I_delta(eps u) for eps up to 1e8")
        lo = hi / 4.0
    else:
        while h(lo) <= 0:
            lo /= 4.0
            if lo < 1e-8:
                raise NumericalError("no sign change of I_delta(eps u) for eps down to 1e-8")
        hi = lo * 4.0
    return float(brentq(h, lo, hi, xtol=1e-300, rtol=rtol, maxiter=200))


@dataclass
class FiberScan:
    eps: np.ndarray
    J: np.ndarray
    I: np.ndarray
    argmax_eps: float
    zero_crossing_eps: Optional[float]
    cell: float

    @property
    def consistent(self) -> bool:
        return self.zero_crossing_eps is not None and abs(self.argmax_eps - self.zero_crossing_eps) <= self.cell


def fiber_scan(grid, spec, params, u, eps_grid) -> FiberScan:
    """Sample ``ε ↦ (J(εu), I(εu))``; the argmax of J should sit at the zero of I."""
    u = grid.check(u)
    _require_positive(spec, u)
    eps = np.asarray(eps_grid, dtype=float)
    if eps.ndim != 1 or eps.size < 2 or np.any(np.diff(eps) <= 0):
        raise InputError("eps_grid must be strictly increasing with at least two points")
    rows = [evaluate(grid, spec, params, e * u) for e in eps]
    Jv = np.array([r.j_value for r in rows])
    Iv = np.array([r.i_value for r in rows])
    k = int(np.argmax(Jv))
    cross = None
    s = np.nonzero((Iv[:-1] > 0) & (Iv[1:] <= 0))[0]
    if s.size:
        i = int(s[0])
        cross = float(eps[i] + (eps[i + 1] - eps[i]) * Iv[i] / (Iv[i] - Iv[i + 1]))
    lo, hi = max(k - 1, 0), min(k + 1, eps.size - 1)
    cell = float(max(eps[hi] - eps[k], eps[k] - eps[lo]))
    return FiberScan(eps, Jv, Iv, float(eps[k]), cross, cell)


def a_delta(delta: float, params: ConditionParams, lambda1: float) -> float:
    return 0.5 - delta / params.alpha - params.beta / (lambda1 * params.alpha)


def r_delta(delta: float, ctx: WellContext, gamma: float) -> float:
    return (delta / (ctx.sup_a * ctx.c_star**gamma)) ** (1.0 / (gamma - 2.0))


def _direction(grid: Grid, i: int, seed: int, n_modes: int = 4) -> np.ndarray:
    # first n_modes directions are eigenmodes, the rest come from independent seed streams
    if i < n_modes:
        return grid.eigenmode(grid.mode_indices(i + 1)[-1])
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1, i)))
    return grid.random_smooth(rng)


def _fold(spec, u):
    if spec.positive_only:
        u = np.abs(u)
        if not np.all(u > 0):
            return None
    return u


def _h1(grid, a, b):
    return inner(grid, grid.neg_laplacian_matrix @ a, b)


def nehari_descent(
    grid: Grid,
    spec: NonlinearitySpec,
    params: ConditionParams,
    w,
    delta: float = 1.0,
    tol: float = 1e-8,
    max_iter: int = 300,
):
    """Projected ``H¹₀`` gradient descent of ``J`` on ``{I_δ = 0}``.

    Each step removes the component of the Riesz gradient of ``J`` along the
    Riesz gradient of ``I_δ``, takes an Armijo-backtracked step, and pulls
    the result back onto the constraint with :func:`nehari_scale`.
    Stops at relative gradient norm ``tol`` or after five steps that each
    gain less than ``1e-14(1 + |J|)``.  Returns ``(w, J(w), iterations)``;
    ``J`` never increases.
    """
    K = grid.solve_neg_laplacian
    w = grid.check(w).copy()
    Jw = J(grid, spec, params, w)
    tau = 1.0
    stalls = 0
    for it in range(1, max_iter + 1):
        fw = spec.f(w)
        gJ = w - K(fw)
        gI = 2.0 * delta * w - K(fw + w * spec.fprime(w))
        nI = _h1(grid, gI, gI)
        g = gJ - (_h1(grid, gJ, gI) / nI) * gI if nI > 0 else gJ
        gnorm2 = _h1(grid, g, g)
        if not math.isfinite(gnorm2):
            raise NumericalError("non-finite gradient in Nehari descent", it)
        if gnorm2 <= (tol**2) * _h1(grid, w, w):
            return w, Jw, it
        tau = min(1.0, 2.0 * tau)
        while True:
            trial = _fold(spec, w - tau * g)
            if trial is not None and grad_norm_sq(grid, trial) > 0:
                try:
                    trial = nehari_scale(grid, spec, trial, delta) * trial
                    Jt = J(grid, spec, params, trial)
                except NumericalError:
                    Jt = math.inf
                if Jt <= Jw - 1e-4 * tau * gnorm2:
                    break
            tau *= 0.5
            if tau < 1e-12:
                return w, Jw, it
        stalls = stalls + 1 if Jw - Jt <= 1e-14 * (1.0 + abs(Jw)) else 0
        w, Jw = trial, Jt
        if stalls >= 5:
            return w, Jw, it
    return w, Jw, max_iter


@dataclass
class DepthResult:
    delta: float
    value: float
    shifted: float
    minimizer: np.ndarray = field(repr=False)
    raw_values: list = field(repr=False)
    descended: dict = field(repr=False)
    budget: int = 0


def depth(
    grid: Grid,
    spec: NonlinearitySpec,
    params: ConditionParams,
    delta: float = 1.0,
    budget: int = 64,
    seed: int = 0,
    descent_starts: int = 4,
    warm: Optional[list] = None,
) -> DepthResult:
    """Upper estimate of ``d(δ) = inf{J(u) : u ≠ 0, I_δ(u) = 0}``.

    Projects ``budget`` directions (leading eigenmodes, then spectrally
    filtered noise) onto ``{I_δ = 0}`` and runs :func:`nehari_descent` from
    the first ``descent_starts`` directions, from the best raw direction,
    and from any ``warm`` fields.  A larger budget only adds candidates, so
    the estimate is non-increasing in ``budget``.
    """
    if budget < 1:
        raise InputError("search budget must be at least 1")
    if not delta > 0:
        raise InputError(f"delta must be positive, got {delta}")
    raw, points = [], []
    for i in range(budget):
        u = _fold(spec, _direction(grid, i, seed))
        if u is None:
            raw.append(math.inf)
            points.append(None)
            continue
        w = nehari_scale(grid, spec, u, delta) * u
        raw.append(J(grid, spec, params, w))
        points.append(w)
    best_raw = int(np.argmin(raw))
    starts = sorted(set(range(min(descent_starts, budget))) | {best_raw})
    cands = [(raw[i], points[i]) for i in range(budget) if points[i] is not None]
    descended = {}
    for i in starts:
        if points[i] is None:
            continue
        w, Jw, _ = nehari_descent(grid, spec, params, points[i], delta)
        descended[i] = Jw
        cands.append((Jw, w))
    for u in warm or []:
        u = _fold(spec, grid.check(u))
        if u is None:
            continue
        w, Jw, _ = nehari_descent(grid, spec, params, nehari_scale(grid, spec, u, delta) * u, delta)
        cands.append((Jw, w))
    if not cands:
        raise NumericalError("no admissible search direction")
    value, minimizer = min(cands, key=lambda c: c[0])
    return DepthResult(
        delta=float(delta),
        value=float(value),
        shifted=float(value - params.sigma * grid.measure),
        minimizer=minimizer,
        raw_values=raw,
        descended=descended,
        budget=budget,
    )


@dataclass
class DepthCurve:
    deltas: np.ndarray
    depths: np.ndarray
    radius: np.ndarray
    a_coeffs: np.ndarray
    b_root: float
    b_is_lower_bound: bool
    d_at_one: float
    b_bounds: tuple
    b_in_bounds: bool
    seed: int = 0
    budget: int = 0

    def depth_at(self, delta: float) -> float:
        """Piecewise-linear interpolation, anchored at ``d(0) = 0`` and ``d(b) = 0``."""
        x, y = self._anchored()
        return float(np.interp(delta, x, y))

    def _anchored(self):
        x = [0.0] + list(self.deltas)
        y = [0.0] + list(self.depths)
        if not self.b_is_lower_bound and self.b_root > x[-1]:
            x.append(self.b_root)
            y.append(0.0)
        return np.array(x), np.array(y)

    def rows(self):
        return [
            {"delta": float(d), "d_estimate": float(v), "r_delta": float(r), "a_delta": float(a)}
            for d, v, r, a in zip(self.deltas, self.depths, self.radius, self.a_coeffs)
        ]


def depth_curve(
    grid: Grid,
    spec: NonlinearitySpec,
    params: ConditionParams,
    ctx: WellContext,
    deltas,
    budget: int = 64,
    seed: int = 0,
    descent_starts: int = 4,
    b_xtol: float = 1e-6,
) -> DepthCurve:
    """``d(δ)`` on a grid plus the root ``b`` of ``d`` by bisection between samples.

    ``δ = 1`` is always added to the grid.  A sample counts as non-positive
    when ``d(δ) <= 1e-9(1 + |d(1)|)``.
    """
    deltas = np.asarray(deltas, dtype=float)
    deltas = np.unique(np.append(np.where(np.abs(deltas - 1.0) < 1e-12, 1.0, deltas), 1.0))
    if deltas[0] <= 0 or deltas[-1] > params.gamma / 2 + 1e-12:
        raise InputError(f"delta grid must lie in (0, gamma/2] = (0, {params.gamma / 2}]")
    results = [depth(grid, spec, params, d, budget, seed, descent_starts) for d in deltas]
    depths = np.array([r.value for r in results])
    d1 = float(depths[np.searchsorted(deltas, 1.0)])
    zero_tol = 1e-9 * (1.0 + abs(d1))

    nonpos = np.nonzero(depths <= zero_tol)[0]
    nonpos = nonpos[deltas[nonpos] > 1.0]
    if nonpos.size == 0:
        b, lower = float(deltas[-1]), True
    else:
        j = int(nonpos[0])
        lo, hi = float(deltas[j - 1]), float(deltas[j])
        warm = [results[j - 1].minimizer, results[j].minimizer]
        while hi - lo > b_xtol:
            mid = 0.5 * (lo + hi)
            dm = depth(grid, spec, params, mid, min(budget, descent_starts), seed, descent_starts, warm).value
            if dm <= zero_tol:
                hi = mid
            else:
                lo = mid
        b, lower = 0.5 * (lo + hi), False
    lam1 = ctx.lambda1
    b_lo, b_hi = params.alpha / 2 - params.beta / lam1, params.gamma / 2
    in_bounds = b_lo - b_xtol <= b <= b_hi + b_xtol if not lower else b <= b_hi + b_xtol
    return DepthCurve(
        deltas=deltas,
        depths=depths,
        radius=np.array([r_delta(d, ctx, params.gamma) for d in deltas]),
        a_coeffs=np.array([a_delta(d, params, lam1) for d in deltas]),
        b_root=b,
        b_is_lower_bound=lower,
        d_at_one=d1,
        b_bounds=(b_lo, b_hi),
        b_in_bounds=bool(in_bounds),
        seed=seed,
        budget=budget,
    )


def classify_membership(readout: FunctionalReadout, depth_at_delta: float, tol_I: float = TOL_I) -> str:
    """Tag a state against ``W_δ`` / ``V_δ`` for the readout's ``δ``."""
    G = readout.grad_norm_sq
    if G == 0.0:
        return "zero"
    if abs(readout.i_delta) <= tol_I * (1.0 + G):
        return "boundary"
    if readout.j_value >= depth_at_delta:
        return "exterior"
    return "W" if readout.i_delta > 0 else "V"


def delta_roots(curve: DepthCurve, e: float) -> tuple[float, float]:
    """The two roots ``δ₁ < 1 < δ₂`` of ``d(δ) = e`` on the sampled curve."""
    d = curve.d_at_one
    if not 0 < e < d:
        raise InputError(f"energy level e = {e} must lie in (0, d) = (0, {d})")
    x, y = curve._anchored()
    # split the two monotone branches at the sampled maximum
    k = int(np.argmax(y))

    def root(xs, ys):
        for i in range(len(xs) - 1):
            y0, y1 = ys[i] - e, ys[i + 1] - e
            if y0 == 0:
                return float(xs[i])
            if y0 * y1 < 0 or y1 == 0:
                return float(brentq(lambda t: np.interp(t, xs[i:i + 2], ys[i:i + 2]) - e, xs[i], xs[i + 1]))
        return None

    d1 = root(x[: k + 1], y[: k + 1])
    right = root(x[k:], y[k:])
    if right is None:
        # curve never drops to e within the sampled range: use the last sample as a lower bound
        right = float(x[-1])
    return d1, right


def ball_trichotomy(readout: FunctionalReadout, radius: float, tol_I: float = TOL_I, rtol: float = 1e-6) -> list[str]:
    """Implications that fail for one state, given ``r(δ)``.

    Inside the ball ``0 < ‖∇u‖ < r`` the state must have ``I_δ > 0``; ``I_δ < 0``
    forces ``‖∇u‖ > r``; a boundary state (``|I_δ|`` within tolerance) has
    ``‖∇u‖ >= r(1 − rtol)``.
    """
    G = readout.grad_norm_sq
    if G == 0.0:
        return []
    g = math.sqrt(G)
    i = readout.i_delta
    on_boundary = abs(i) <= tol_I * (1.0 + G)
    bad = []
    if g < radius and not on_boundary and not i > 0:
        bad.append("inside-ball-not-positive")
    if i < 0 and not on_boundary and not g > radius:
        bad.append("negative-inside-ball")
    if on_boundary and g < radius * (1.0 - rtol):
        bad.append("boundary-inside-ball")
    return bad
