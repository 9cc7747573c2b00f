"""Source terms ``f`` and scan-based checks of the structural assumptions on them.

Every check samples ``u`` on a finite range, so a passing report only says
the inequality held on the recorded range and density.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad
from scipy.optimize import minimize_scalar

from .errors import InputError

FAMILIES = ("odd-power", "even-power", "zero", "custom")
CASES = ("H-a", "H-b")


@dataclass(frozen=True)
class NonlinearitySpec:
    """``f`` with its antiderivative ``F`` and derivative ``f'``.

    ``odd-power`` is ``|u|^{p-1}u`` (case H-a), ``even-power`` is ``u^p`` for
    an integer ``p >= 2`` (case H-b), ``zero`` is the linear control, and
    ``custom`` takes the three callables verbatim.
    """

    family: str = "odd-power"
    p: float = 3.0
    case: Optional[str] = None
    f_custom: Optional[Callable] = field(default=None, compare=False, repr=False)
    F_custom: Optional[Callable] = field(default=None, compare=False, repr=False)
    fprime_custom: Optional[Callable] = field(default=None, compare=False, repr=False)
    label: str = ""

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InputError(f"unknown nonlinearity family {self.family!r}; expected one of {FAMILIES}")
        if self.family in ("odd-power", "even-power") and not self.p > 1:
            raise InputError(f"exponent p must exceed 1, got {self.p}")
        if self.family == "even-power" and (int(self.p) != self.p or self.p < 2):
            raise InputError(f"even-power family needs an integer p >= 2, got {self.p}")
        if self.family == "custom" and None in (self.f_custom, self.F_custom, self.fprime_custom):
            raise InputError("custom nonlinearity must supply f, F and f' callables")
        case = self.case
        if case is None:
            case = "H-b" if self.family == "even-power" else "H-a"
        if case not in CASES:
            raise InputError(f"case must be one of {CASES}, got {case!r}")
        object.__setattr__(self, "case", case)
        object.__setattr__(self, "p", float(self.p))

    @classmethod
    def cubic(cls) -> "NonlinearitySpec":
        return cls("odd-power", 3.0)

    @classmethod
    def custom(cls, f, F, fprime, case="H-a", label="custom") -> "NonlinearitySpec":
        return cls("custom", 0.0, case, f, F, fprime, label)

    @property
    def positive_only(self) -> bool:
        return self.case == "H-b"

    @property
    def is_pure_power(self) -> bool:
        return self.family in ("odd-power", "even-power")

    def f(self, u):
        u = np.asarray(u, dtype=float)
        p = self.p
        if self.family == "odd-power":
            return np.abs(u) ** (p - 1) * u
        if self.family == "even-power":
            return u ** int(p)
        if self.family == "zero":
            return np.zeros_like(u)
        return np.asarray(self.f_custom(u), dtype=float)

    def F(self, u):
        u = np.asarray(u, dtype=float)
        p = self.p
        if self.family == "odd-power":
            return np.abs(u) ** (p + 1) / (p + 1)
        if self.family == "even-power":
            return u ** int(p + 1) / (p + 1)
        if self.family == "zero":
            return np.zeros_like(u)
        return np.asarray(self.F_custom(u), dtype=float)

    def fprime(self, u):
        u = np.asarray(u, dtype=float)
        p = self.p
        if self.family == "odd-power":
            return p * np.abs(u) ** (p - 1)
        if self.family == "even-power":
            return p * u ** int(p - 1)
        if self.family == "zero":
            return np.zeros_like(u)
        return np.asarray(self.fprime_custom(u), dtype=float)

    def uf(self, u):
        """``u·f(u)``, computed without cancellation for the power families."""
        u = np.asarray(u, dtype=float)
        if self.family == "odd-power":
            return np.abs(u) ** (self.p + 1)
        if self.family == "even-power":
            return u ** int(self.p + 1)
        return u * self.f(u)

    def validate(self, u_max: float = 2.0, n_quad: int = 9, rtol: float = 1e-8) -> list[str]:
        """Numerical checks of ``f(0)=f'(0)=0`` and ``F' = f``; returns issue strings."""
        issues = []
        f0 = float(self.f(np.array([0.0]))[0])
        fp0 = float(self.fprime(np.array([0.0]))[0])
        if f0 != 0.0:
            issues.append(f"f(0) = {f0!r} != 0")
        if fp0 != 0.0:
            issues.append(f"f'(0) = {fp0!r} != 0")
        eps = 1e-6
        fd = float((self.f(np.array([eps])) - self.f(np.array([-eps])))[0] / (2 * eps))
        if abs(fd) > 1e-4:
            issues.append(f"finite-difference f'(0) = {fd:.3e} != 0")
        lo = 0.0 if self.positive_only else -u_max
        for u in np.linspace(lo, u_max, n_quad):
            if u == 0.0:
                continue
            exact, _ = quad(lambda s: float(self.f(np.array([s]))[0]), 0.0, u, epsabs=0.0, epsrel=1e-12, limit=200)
            got = float(self.F(np.array([u]))[0])
            if abs(got - exact) > rtol * max(abs(exact), 1e-300):
                issues.append(f"F({u:.4g}) = {got!r} but quadrature of f gives {exact!r}")
        return issues


@dataclass(frozen=True)
class ConditionParams:
    alpha: float = 4.0
    beta: float = 0.0
    sigma: float = 0.0
    gamma: float = 4.0
    u_max: float = 2.0
    samples: int = 20001

    def __post_init__(self):
        if not self.alpha > 2:
            raise InputError(f"alpha must exceed 2, got {self.alpha}")
        if not self.alpha <= self.gamma:
            raise InputError(f"need alpha <= gamma, got alpha={self.alpha}, gamma={self.gamma}")
        if self.beta < 0:
            raise InputError(f"beta must be >= 0, got {self.beta}")
        if self.sigma < 0:
            raise InputError(f"sigma must be >= 0, got {self.sigma}")
        if not self.u_max > 0:
            raise InputError(f"u_max must be positive, got {self.u_max}")
        if self.samples < 10_000:
            raise InputError(f"scan needs at least 10000 samples, got {self.samples}")

    @property
    def lambda_equiv(self) -> float:
        return self.alpha / (1.0 + self.beta)

    @property
    def sigma_warning(self) -> Optional[str]:
        if self.sigma == 0:
            return "sigma = 0 reduces the condition to the classical one; sigma > 0 is assumed by the theory"
        return None

    def beta_bound(self, lambda1: float) -> float:
        return lambda1 * (self.alpha - 2.0) / 2.0

    def check_beta(self, lambda1: float) -> None:
        if not self.beta < self.beta_bound(lambda1):
            raise InputError(
                f"beta = {self.beta} must be below lambda1*(alpha-2)/2 = {self.beta_bound(lambda1):.6g}"
            )


def scan_points(spec: NonlinearitySpec, params: ConditionParams, include_zero: bool = True) -> np.ndarray:
    """Sign-aware sample grid: ``(0, U]`` for case H-b, symmetric otherwise."""
    if spec.positive_only:
        return np.linspace(params.u_max / params.samples, params.u_max, params.samples)
    half = params.samples // 2
    pos = np.linspace(params.u_max / half, params.u_max, half)
    parts = [-pos[::-1], pos]
    if include_zero:
        parts.insert(1, np.zeros(1))
    return np.concatenate(parts)


def _worst(u, slack, limit=10):
    order = np.argsort(-slack, kind="stable")
    bad = [i for i in order[:limit] if slack[i] > 0]
    return [(float(u[i]), float(slack[i])) for i in bad]


def _round_tol(*terms):
    return 64 * np.finfo(float).eps * sum(np.abs(t) for t in terms)


def _minimal_sigma_for_growth(F, uf, gamma):
    # feasible sigma must avoid every open interval (F - r, F + r), r = |uf|/gamma
    r = np.abs(uf) / gamma
    keep = r > 0
    lo, hi = F[keep] - r[keep], F[keep] + r[keep]
    order = np.argsort(lo)
    lo, hi = lo[order], hi[order]
    sigma = 0.0
    for a, b in zip(lo, hi):
        if a >= sigma:
            break
        if b > sigma:
            sigma = b
    return float(sigma)


@dataclass
class ConditionReport:
    family: str
    case: str
    scan_min: float
    scan_max: float
    n_samples: int
    alpha: float
    beta: float
    sigma: float
    gamma: float
    worst_slack_1: float
    worst_slack_1_at: float
    worst_excess_1: float
    minimal_sigma_1: float
    worst_slack_2: float
    worst_slack_2_at: float
    gamma_ratio_sup: float
    minimal_gamma: Optional[float]
    minimal_sigma_2: float
    passed_1: bool
    passed_2: bool
    violations_1: list
    violations_2: list
    spec_issues: list
    properties: dict
    warnings: list

    @property
    def passed(self) -> bool:
        return self.passed_1 and self.passed_2

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def _growth_slack(spec, params, u, gamma):
    F = spec.F(u)
    uf = spec.uf(u)
    slack = np.abs(uf) - gamma * np.abs(F - params.sigma)
    return slack - _round_tol(uf, gamma * F, gamma * params.sigma)


def minimal_feasible_gamma(spec, params, u=None, lo=None, hi=20.0, xtol=1e-10) -> Optional[float]:
    """Smallest ``gamma`` in ``[alpha, hi]`` for which ``|uf| <= gamma|F - sigma|`` holds on the scan.

    Bisection with the scan as feasibility oracle; ``None`` when even ``hi``
    is infeasible.
    """
    if u is None:
        u = scan_points(spec, params)
    lo = params.alpha if lo is None else lo

    def feasible(g):
        return bool(np.max(_growth_slack(spec, params, u, g)) <= 0)

    if feasible(lo):
        return float(lo)
    if not feasible(hi):
        return None
    a, b = lo, hi
    while b - a > xtol:
        mid = 0.5 * (a + b)
        if feasible(mid):
            b = mid
        else:
            a = mid
    return float(b)


def check_condition_H(spec: NonlinearitySpec, params: ConditionParams) -> ConditionReport:
    """Scan ``αF ≤ uf + βu² + ασ`` and ``|uf| ≤ γ|F − σ|`` over the sample grid."""
    u = scan_points(spec, params)
    F = spec.F(u)
    uf = spec.uf(u)
    a, b, s, g = params.alpha, params.beta, params.sigma, params.gamma

    excess = a * F - uf - b * u * u
    slack1 = excess - a * s
    tol1 = _round_tol(a * F, uf, b * u * u, a * s)
    i1 = int(np.argmax(slack1))
    slack2 = np.abs(uf) - g * np.abs(F - s)
    tol2 = _round_tol(uf, g * F, g * s)
    i2 = int(np.argmax(slack2))

    denom = np.abs(F - s)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(np.abs(uf) == 0, 0.0, np.abs(uf) / denom)
    ratio_sup = float(np.max(ratio))

    warn = []
    if params.sigma_warning:
        warn.append(params.sigma_warning)
        warnings.warn(params.sigma_warning, stacklevel=2)

    return ConditionReport(
        family=spec.family,
        case=spec.case,
        scan_min=float(u[0]),
        scan_max=float(u[-1]),
        n_samples=int(u.size),
        alpha=a,
        beta=b,
        sigma=s,
        gamma=g,
        worst_slack_1=float(slack1[i1]),
        worst_slack_1_at=float(u[i1]),
        worst_excess_1=float(np.max(excess)),
        minimal_sigma_1=max(0.0, float(np.max(excess)) / a),
        worst_slack_2=float(slack2[i2]),
        worst_slack_2_at=float(u[i2]),
        gamma_ratio_sup=ratio_sup,
        minimal_gamma=minimal_feasible_gamma(spec, params, u),
        minimal_sigma_2=_minimal_sigma_for_growth(F, uf, g),
        passed_1=bool(np.all(slack1 <= tol1)),
        passed_2=bool(np.all(slack2 <= tol2)),
        violations_1=_worst(u, np.where(slack1 > tol1, slack1, 0.0)),
        violations_2=_worst(u, np.where(slack2 > tol2, slack2, 0.0)),
        spec_issues=spec.validate(params.u_max),
        properties=structural_properties(spec, u),
        warnings=warn,
    )


def structural_properties(spec: NonlinearitySpec, u) -> dict:
    """Sign and convexity consequences of the assumptions, checked pointwise on ``u``."""
    f, F, uf = spec.f(u), spec.F(u), spec.uf(u)
    ufp = u * spec.fprime(u)
    # u(uf' - f) >= 0: the sign-corrected form that holds for odd f on u < 0
    second = u * (ufp - f)
    out = {}
    if spec.case == "H-a":
        out["uf_nonneg"] = bool(np.all(uf >= 0))
        out["F_nonneg"] = bool(np.all(F >= 0))
        out["u_times_ufprime_minus_f_nonneg"] = bool(np.all(second >= -_round_tol(u * ufp, uf)))
    else:
        neg = u < 0
        out["f_nonneg"] = bool(np.all(f >= 0))
        out["uf_nonpos_for_negative_u"] = bool(np.all(uf[neg] <= 0))
        out["F_nonpos_for_negative_u"] = bool(np.all(F[neg] <= 0))
        pos = u >= 0
        out["ufprime_minus_f_nonneg"] = bool(np.all(ufp[pos] - f[pos] >= -_round_tol(ufp[pos], f[pos])))
    return out


def estimate_sup_a(spec: NonlinearitySpec, params: ConditionParams) -> float:
    """``sup uf(u)/|u|^γ`` over the scan, refined around the best sample.

    Raises ``InputError`` when the ratio is still growing at either end of the
    scanned range, i.e. the supremum is not attained for this ``γ``.
    """
    g = params.gamma

    def ratio(x):
        x = np.asarray(x, dtype=float)
        return spec.uf(x) / np.abs(x) ** g

    u = scan_points(spec, params, include_zero=False)
    r = ratio(u)
    best = int(np.argmax(r))
    rbest = float(r[best])
    if not math.isfinite(rbest):
        raise InputError("uf(u)/|u|^gamma is not finite on the scan")

    # endpoints of each sign branch: the ones nearest zero and the outer ones
    ends = {0, u.size - 1}
    if not spec.positive_only:
        half = u.size // 2
        ends |= {half - 1, half}
    for e in ends:
        if r[e] < rbest * (1 - 1e-12):
            continue
        x = u[e]
        toward_zero = abs(x) < params.u_max / 2
        probes = x * np.array([0.1, 0.01]) if toward_zero else x * np.array([10.0, 100.0])
        rp = ratio(probes)
        if rp[0] > r[e] * (1 + 1e-9) and rp[1] > rp[0] * (1 + 1e-9):
            where = "|u| -> 0" if toward_zero else "|u| -> infinity"
            hint = "gamma is too large for f near 0" if toward_zero else "gamma is too small for the growth of f"
            raise InputError(f"uf(u)/|u|^gamma = {r[e]:.6g} keeps increasing as {where}: {hint}")

    if 0 < best < u.size - 1:
        lo, hi = sorted((u[best - 1], u[best + 1]))
        if lo < 0 < hi:
            lo, hi = (lo, -1e-300) if u[best] < 0 else (1e-300, hi)
        res = minimize_scalar(lambda x: -float(ratio([x])[0]), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12 * max(1.0, abs(u[best]))})
        if res.success and -res.fun > rbest:
            rbest = float(-res.fun)
    return rbest


@dataclass
class GrowthReport:
    probe_u: float
    A: float
    B: float
    lambda_equiv: float
    A_holds: bool
    B_holds: bool
    f_bound_holds: bool
    violations_A: list
    violations_B: list
    violations_f_bound: list

    def to_dict(self):
        return asdict(self)


def growth_constants(spec: NonlinearitySpec, params: ConditionParams, probe_u: float = 2.0) -> GrowthReport:
    """Growth constants from a reference point ``ũ`` and their scan verification.

    ``A = |F(ũ)−σ|/|ũ|^γ`` bounds ``|F−σ| ≤ A|u|^γ``; ``B = F(ũ)/ũ^λ`` with
    ``λ = α/(1+β)`` bounds ``F−σ ≥ B|u|^λ`` for ``|u| ≥ 1``.
    """
    if probe_u == 0:
        raise InputError("probe_u must be nonzero")
    Fp = float(spec.F(np.array([probe_u]))[0])
    if not Fp > 0:
        raise InputError(f"F(probe_u) = {Fp} must be positive to define B")
    g, s, lam = params.gamma, params.sigma, params.lambda_equiv
    A = abs(Fp - s) / abs(probe_u) ** g
    B = Fp / abs(probe_u) ** lam

    u = scan_points(spec, params)
    F = spec.F(u)
    au = np.abs(u)
    slack_A = np.abs(F - s) - A * au**g
    slack_A = np.where(slack_A > _round_tol(F, s, A * au**g), slack_A, 0.0)
    big = au >= 1
    slack_B = np.zeros_like(u)
    slack_B[big] = B * au[big] ** lam - (F[big] - s)
    slack_B = np.where(slack_B > _round_tol(F, s, B * au**lam), slack_B, 0.0)
    slack_f = np.abs(spec.f(u)) - g * A * au ** (g - 1)
    slack_f = np.where(slack_f > _round_tol(spec.f(u), g * A * au ** (g - 1)), slack_f, 0.0)
    return GrowthReport(
        probe_u=float(probe_u),
        A=float(A),
        B=float(B),
        lambda_equiv=float(lam),
        A_holds=not np.any(slack_A > 0),
        B_holds=not np.any(slack_B > 0),
        f_bound_holds=not np.any(slack_f > 0),
        violations_A=_worst(u, slack_A),
        violations_B=_worst(u, slack_B),
        violations_f_bound=_worst(u, slack_f),
    )


def check_lemma_equivalence(
    spec: NonlinearitySpec, params: ConditionParams, lambda1: float, u_tail: float = 1e3, n: int = 20001
) -> dict:
    """Diagnostic: under ``uf ≥ λ̄u²`` with ``λ̄ > λ₁``, look for ``m > 1, μ > 0`` with ``uf ≥ μu^{α}`` on ``u ≥ m``.

    The search runs on a log-spaced grid up to ``u_tail``; a candidate ``μ``
    is rejected when ``uf/u^α`` still decays like a power at the tail
    (log-slope below ``-(α-2)/2``), since then no positive ``μ`` survives
    ``u → ∞``.
    """
    eps_bar = params.alpha - 2.0
    u = np.geomspace(params.u_max / n, max(u_tail, params.u_max), n)
    uf = spec.uf(u)
    lam_bar = float(np.min(uf / u**2))
    out = {"lambda_bar": lam_bar, "lambda1": float(lambda1), "eps_bar": eps_bar, "scan_max": float(u[-1])}
    if not lam_bar > lambda1:
        out.update(hypothesis_met=False, found=False, m=None, mu=None, tail_slope=None,
                   message="hypothesis not met: inf uf/u^2 <= lambda1")
        return out
    q = uf / u ** (2.0 + eps_bar)
    suffix_min = np.minimum.accumulate(q[::-1])[::-1]
    tail_slope = float(np.log(q[-1] / q[np.searchsorted(u, u[-1] / 2)]) / np.log(u[-1] / u[np.searchsorted(u, u[-1] / 2)]))
    cand = np.nonzero((u > 1) & (suffix_min > 0))[0]
    found = cand.size > 0 and tail_slope > -eps_bar / 2
    if found:
        i = int(cand[0])
        m, mu = float(u[i]), float(suffix_min[i])
        msg = f"uf(u) >= {mu:.6g} u^{2 + eps_bar:g} for u >= {m:.6g}"
    else:
        m = mu = None
        msg = f"no m, mu found: uf/u^{2 + eps_bar:g} decays with tail slope {tail_slope:.3g}"
    out.update(hypothesis_met=True, found=bool(found), m=m, mu=mu, tail_slope=tail_slope, message=msg)
    return out
