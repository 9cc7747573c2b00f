"""Uniform finite-difference discretisation of an interval or a rectangle.

Fields are plain 1-D float arrays holding the interior nodes in C order
(``x`` slowest in 2D).  Boundary values are zero by construction and never
stored.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import InputError, NumericalError


@dataclass(frozen=True)
class Grid:
    dim: int
    extents: tuple[float, ...]
    counts: tuple[int, ...]

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise InputError(f"grid dim must be 1 or 2, got {self.dim}")
        if len(self.extents) != self.dim or len(self.counts) != self.dim:
            raise InputError("extents and counts must have one entry per axis")
        for L in self.extents:
            if not (L > 0 and math.isfinite(L)):
                raise InputError(f"grid extents must be positive, got {self.extents}")
        for n in self.counts:
            if int(n) != n or n < 3:
                raise InputError(f"need at least 3 interior nodes per axis, got {self.counts}")
        object.__setattr__(self, "extents", tuple(float(L) for L in self.extents))
        object.__setattr__(self, "counts", tuple(int(n) for n in self.counts))

    @classmethod
    def interval(cls, L: float = math.pi, n: int = 200) -> "Grid":
        return cls(1, (L,), (n,))

    @classmethod
    def rectangle(cls, Lx: float = math.pi, Ly: float = math.pi, nx: int = 64, ny: int = 64) -> "Grid":
        return cls(2, (Lx, Ly), (nx, ny))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / (n + 1) for L, n in zip(self.extents, self.counts))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.counts

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @property
    def measure(self) -> float:
        return float(np.prod(self.extents))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoid weights on interior nodes (each equal to the cell volume)."""
        w = np.full(self.size, self.cell_volume)
        w.flags.writeable = False
        return w

    @property
    def boundary_weight(self) -> float:
        """Total trapezoid weight carried by the boundary nodes.

        Interior weights plus this sum to ``measure``; it matters only when the
        integrand is nonzero on the boundary (e.g. the constant ``-sigma``).
        """
        return self.measure - self.size * self.cell_volume

    def axes(self) -> list[np.ndarray]:
        return [h * np.arange(1, n + 1) for h, n in zip(self.spacing, self.counts)]

    def coordinates(self) -> tuple[np.ndarray, ...]:
        """Node coordinates flattened to match field layout."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return tuple(m.ravel() for m in mesh)

    def check(self, u, name="field") -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.ndim != 1 or u.shape[0] != self.size:
            raise InputError(f"{name} has shape {u.shape}, grid expects ({self.size},)")
        return u

    def integrate(self, values, boundary_value: float = 0.0) -> float:
        """Trapezoid integral of nodal values; ``boundary_value`` is the integrand on the boundary."""
        return float(np.dot(self.weights, values) + boundary_value * self.boundary_weight)

    @cached_property
    def neg_laplacian_matrix(self) -> sp.csc_matrix:
        def lap1(n, h):
            return sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]) / h**2

        if self.dim == 1:
            A = lap1(self.counts[0], self.spacing[0])
        else:
            (nx, ny), (hx, hy) = self.counts, self.spacing
            A = sp.kron(lap1(nx, hx), sp.identity(ny)) + sp.kron(sp.identity(nx), lap1(ny, hy))
        return sp.csc_matrix(A)

    @cached_property
    def _factor(self):
        return splu(self.neg_laplacian_matrix)

    def solve_neg_laplacian(self, rhs) -> np.ndarray:
        """Solve ``-Δ w = rhs`` with zero Dirichlet data."""
        return self._factor.solve(np.asarray(rhs, dtype=float))

    @property
    def stencil_bound(self) -> float:
        """Upper bound on the spectrum of the discrete ``-Δ``."""
        return sum(4.0 / h**2 for h in self.spacing)

    def discrete_lambda1(self) -> float:
        """Closed-form smallest eigenvalue of the stencil."""
        return sum(
            (2.0 / h**2) * (1.0 - math.cos(math.pi * h / L)) for h, L in zip(self.spacing, self.extents)
        )

    def mode_indices(self, k: int) -> list[tuple[int, ...]]:
        """First ``k`` sine-mode multi-indices ordered by continuum eigenvalue."""
        if self.dim == 1:
            return [(j,) for j in range(1, k + 1)]
        m = int(math.ceil(math.sqrt(k))) + 2
        Lx, Ly = self.extents
        cand = [(i, j) for i in range(1, m + 1) for j in range(1, m + 1)]
        cand.sort(key=lambda ij: ((ij[0] / Lx) ** 2 + (ij[1] / Ly) ** 2, ij))
        return cand[:k]

    def eigenmode(self, index) -> np.ndarray:
        """Sampled sine eigenfunction; ``index`` is an int (1D) or a tuple."""
        if isinstance(index, (int, np.integer)):
            index = (int(index),) if self.dim == 1 else self.mode_indices(int(index))[-1]
        if len(index) != self.dim:
            raise InputError(f"mode index {index} does not match grid dim {self.dim}")
        factors = [np.sin(k * math.pi * x / L) for k, x, L in zip(index, self.axes(), self.extents)]
        if self.dim == 1:
            return factors[0]
        return np.outer(factors[0], factors[1]).ravel()

    def random_smooth(self, rng: np.random.Generator, n_modes: int = 12, decay: float = 2.0) -> np.ndarray:
        """Spectrally filtered noise: random sine coefficients damped like 1/k**decay."""
        u = np.zeros(self.size)
        for idx in self.mode_indices(n_modes):
            k2 = sum(k * k for k in idx)
            u += rng.standard_normal() / k2 ** (decay / 2) * self.eigenmode(idx)
        return u


def apply_laplacian(grid: Grid, u) -> np.ndarray:
    """Second-order Dirichlet Laplacian (3-point in 1D, 5-point in 2D)."""
    u = grid.check(u)
    if grid.dim == 1:
        (h,) = grid.spacing
        p = np.pad(u, 1)
        return (p[:-2] - 2.0 * u + p[2:]) / h**2
    hx, hy = grid.spacing
    U = u.reshape(grid.shape)
    P = np.pad(U, 1)
    out = (P[:-2, 1:-1] - 2.0 * U + P[2:, 1:-1]) / hx**2 + (P[1:-1, :-2] - 2.0 * U + P[1:-1, 2:]) / hy**2
    return out.ravel()


def inner(grid: Grid, u, v) -> float:
    return float(np.dot(grid.weights, np.asarray(u) * np.asarray(v)))


def l2_norm_sq(grid: Grid, u) -> float:
    u = grid.check(u)
    return inner(grid, u, u)


def grad_norm_sq(grid: Grid, u) -> float:
    # <-Δu, u> keeps discrete integration by parts exact
    u = grid.check(u)
    return inner(grid, -apply_laplacian(grid, u), u)


def lp_norm_pow(grid: Grid, u, gamma: float) -> float:
    """``∫|u|^gamma`` (the gamma-th power of the L^gamma norm)."""
    if gamma < 1:
        raise InputError(f"L^gamma norm needs gamma >= 1, got {gamma}")
    u = grid.check(u)
    return float(np.dot(grid.weights, np.abs(u) ** gamma))


def norms(grid: Grid, u, gamma: float = 4.0) -> dict:
    """All quadrature norms used by the well functionals."""
    return {
        "l2_sq": l2_norm_sq(grid, u),
        "grad_sq": grad_norm_sq(grid, u),
        "lgamma_pow": lp_norm_pow(grid, u, gamma),
    }


def lambda1(grid: Grid, rtol: float = 1e-10, max_iter: int = 500) -> float:
    """Smallest eigenvalue of the discrete ``-Δ`` by inverse power iteration.

    Starts from the all-ones vector and stops when successive Rayleigh
    quotients agree to ``rtol``.
    """
    x = np.ones(grid.size)
    mu_prev = np.inf
    for it in range(1, max_iter + 1):
        y = grid.solve_neg_laplacian(x)
        y /= math.sqrt(l2_norm_sq(grid, y))
        mu = grad_norm_sq(grid, y)
        if abs(mu - mu_prev) <= rtol * mu:
            return mu
        x, mu_prev = y, mu
    raise NumericalError(f"inverse power iteration did not converge in {max_iter} iterations", max_iter)


def sobolev_ratio(grid: Grid, u, gamma: float) -> float:
    """``‖u‖_γ / ‖∇u‖``."""
    return lp_norm_pow(grid, u, gamma) ** (1.0 / gamma) / math.sqrt(grad_norm_sq(grid, u))


@dataclass
class EmbeddingEstimate:
    value: float
    gamma: float
    n_starts: int
    best_start: int
    ratios: list
    converged: list
    iterations: list
    tol: float


def embedding_constant(
    grid: Grid,
    gamma: float,
    n_starts: int = 8,
    seed: int = 0,
    tol: float = 1e-8,
    max_iter: int = 3000,
    full: bool = False,
):
    """Lower estimate of the embedding constant ``C* = sup ‖u‖_γ/‖∇u‖``.

    Gradient ascent of ``∫|u|^γ`` on the unit sphere of the ``H¹₀`` norm,
    using the ``H¹₀`` Riesz gradient ``(-Δ)⁻¹(|u|^{γ-2}u)`` with a full step and
    re-projection.  The functional is convex, so each step cannot decrease it
    and every value reported is attained, hence a lower bound of the discrete
    supremum.  Even-numbered starts are eigenmodes, odd ones random smooth
    fields from a per-start seed stream, so a longer start list always
    contains a shorter one.
    """
    if gamma < 2:
        raise InputError(f"embedding constant needs gamma >= 2, got {gamma}")
    if n_starts < 1:
        raise InputError("need at least one start")

    def h1_normalise(w):
        return w / math.sqrt(grad_norm_sq(grid, w))

    ratios, converged, iterations = [], [], []
    for i in range(n_starts):
        if i % 2 == 0:
            idx = grid.mode_indices(i // 2 + 1)[-1]
            u = grid.eigenmode(idx)
        else:
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2, i)))
            u = grid.random_smooth(rng)
        u = h1_normalise(u)
        ok = False
        for it in range(1, max_iter + 1):
            w = grid.solve_neg_laplacian(np.abs(u) ** (gamma - 2.0) * u)
            if not np.all(np.isfinite(w)):
                raise NumericalError("embedding ascent produced non-finite values", it)
            w = h1_normalise(w)
            step = math.sqrt(grad_norm_sq(grid, w - u))
            u = w
            if step <= tol:
                ok = True
                break
        ratios.append(sobolev_ratio(grid, u, gamma))
        converged.append(ok)
        iterations.append(it)
    best = int(np.argmax(ratios))
    est = EmbeddingEstimate(
        value=float(ratios[best]),
        gamma=gamma,
        n_starts=n_starts,
        best_start=best,
        ratios=ratios,
        converged=converged,
        iterations=iterations,
        tol=tol,
    )
    return est if full else est.value


@dataclass(frozen=True)
class WellContext:
    """Domain/nonlinearity constants shared by all well formulas."""

    lambda1: float
    c_star: float
    sup_a: float
    growth_A: float
    growth_B: float
    probe_u: float
    omega_measure: float

    def __post_init__(self):
        for name in ("lambda1", "c_star", "sup_a", "omega_measure"):
            v = getattr(self, name)
            if not v > 0:
                raise InputError(f"WellContext.{name} must be positive, got {v}")
        if self.probe_u == 0:
            raise InputError("probe_u must be nonzero")
