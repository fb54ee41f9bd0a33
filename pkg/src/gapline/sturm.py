"""Finite-difference discretization of -u'' + V u = lambda w u on [0, pi].

Dirichlet conditions eliminate the endpoints; the weight enters as a diagonal
(lumped) mass.  The pencil is reduced to a standard symmetric tridiagonal
problem with the similarity diag(w)^(-1/2), whose two lowest eigenvalues are
located by Sturm-count bisection and whose eigenvectors come from inverse
iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _tridiag
from .errors import GridMismatch, SolverError, ValidationError

DEFAULT_N_INTERIOR = 2000
DEFAULT_TOL = 1e-10
INVERSE_ITERATIONS = 4
RAYLEIGH_GUARD = 1e-6


@dataclass(frozen=True)
class Grid:
    """Uniform interior grid x_i = i*h, i = 1..n_interior, h = pi/(n_interior+1)."""

    n_interior: int

    def __post_init__(self):
        if int(self.n_interior) != self.n_interior or self.n_interior < 1:
            raise ValidationError(f"n_interior must be a positive integer, got {self.n_interior!r}")

    @property
    def h(self) -> float:
        return np.pi / (self.n_interior + 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(1, self.n_interior + 1) * self.h

    @property
    def full_nodes(self) -> np.ndarray:
        """Nodes including both endpoints 0 and pi."""
        x = np.arange(self.n_interior + 2) * self.h
        x[-1] = np.pi
        return x

    def refined(self) -> Grid:
        """Grid with step h/2."""
        return Grid(2 * self.n_interior + 1)


@dataclass(frozen=True)
class SampledFunction:
    grid: Grid
    values: np.ndarray
    endpoint_values: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.n_interior,):
            raise GridMismatch(
                f"expected {self.grid.n_interior} interior samples, got shape {values.shape}"
            )
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "endpoint_values", tuple(float(v) for v in self.endpoint_values))

    @classmethod
    def from_callable(cls, f: Callable[[np.ndarray], np.ndarray], grid: Grid) -> SampledFunction:
        full = np.broadcast_to(np.asarray(f(grid.full_nodes), dtype=float), (grid.n_interior + 2,))
        return cls(grid, full[1:-1].copy(), (full[0], full[-1]))

    @property
    def full_values(self) -> np.ndarray:
        return np.concatenate(([self.endpoint_values[0]], self.values, [self.endpoint_values[1]]))

    def _combine(self, other, op):
        if isinstance(other, SampledFunction):
            if other.grid != self.grid:
                raise GridMismatch("functions live on different grids")
            a, b = op(self.endpoint_values[0], other.endpoint_values[0]), op(
                self.endpoint_values[1], other.endpoint_values[1]
            )
            return SampledFunction(self.grid, op(self.values, other.values), (a, b))
        return SampledFunction(
            self.grid,
            op(self.values, other),
            (op(self.endpoint_values[0], other), op(self.endpoint_values[1], other)),
        )

    def __add__(self, other):
        return self._combine(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, other):
        return self._combine(other, np.multiply)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __pow__(self, k):
        return SampledFunction(
            self.grid, self.values**k, (self.endpoint_values[0] ** k, self.endpoint_values[1] ** k)
        )


@dataclass(frozen=True)
class DiscreteOperator:
    """Pencil (A + diag(V), diag(w)) with A the Dirichlet second-difference matrix."""

    stiffness_diag: np.ndarray
    stiffness_offdiag: np.ndarray
    weight_diag: np.ndarray
    grid: Grid


@dataclass(frozen=True)
class EigenPair:
    lam: float
    u: SampledFunction
    index: int
    derivative_at_endpoints: tuple[float, float] = field(default=(np.nan, np.nan))

    @property
    def values(self) -> np.ndarray:
        return self.u.values


def assemble(V: SampledFunction, w: SampledFunction, grid: Grid) -> DiscreteOperator:
    if V.grid != grid or w.grid != grid:
        raise GridMismatch("V and w must be sampled on the operator grid")
    if np.any(w.values <= 0) or min(w.endpoint_values) <= 0:
        raise ValidationError("weight must be strictly positive")
    h2 = grid.h**2
    n = grid.n_interior
    return DiscreteOperator(
        stiffness_diag=2.0 / h2 + V.values,
        stiffness_offdiag=np.full(n - 1, -1.0 / h2),
        weight_diag=w.values.copy(),
        grid=grid,
    )


def _start_vectors(n: int) -> np.ndarray:
    # Fixed, generic start vectors; not orthogonal to any eigenvector in practice.
    rng = np.random.default_rng(20240229)
    return rng.uniform(0.5, 1.5, size=(2, n))


def solve_lowest_two(
    op: DiscreteOperator, grid: Grid | None = None, tol: float = DEFAULT_TOL
) -> tuple[EigenPair, EigenPair]:
    """Two lowest generalized eigenpairs of the pencil, normalized and sign-fixed.

    Eigenfunctions satisfy quadrature(w u^2) = 1 and are positive at the first
    interior node.
    """
    grid = op.grid if grid is None else grid
    if grid != op.grid:
        raise GridMismatch("operator was assembled on a different grid")
    if tol <= 0:
        raise ValidationError("tol must be positive")
    n = grid.n_interior
    if n < 2:
        raise ValidationError("need at least two interior nodes for two eigenpairs")

    s = 1.0 / np.sqrt(op.weight_diag)
    d = op.stiffness_diag * s * s
    e = op.stiffness_offdiag * s[:-1] * s[1:]
    lam, y = _tridiag.lowest_eigenpairs(d, e, 2, tol, INVERSE_ITERATIONS, _start_vectors(n))
    if not np.all(np.isfinite(lam)) or not np.all(np.isfinite(y)):
        raise SolverError("bisection or inverse iteration produced non-finite values")
    if _tridiag.sturm_count(d, e, lam[1] + tol) < 2:
        raise SolverError("bisection bracket lost an eigenvalue")
    if lam[1] - lam[0] <= tol:
        raise SolverError(
            f"lambda1 and lambda2 coincide within tol ({lam[0]!r}, {lam[1]!r}); refine the grid"
        )

    pairs = []
    for k in range(2):
        u = y[k] * s
        u /= np.sqrt(grid.h * np.sum(op.weight_diag * u * u))
        if u[0] < 0:
            u = -u
        rq = _rayleigh_quotient(u, op)
        if abs(rq - lam[k]) > RAYLEIGH_GUARD * max(1.0, abs(lam[k])):
            raise SolverError(f"eigenvector {k + 1} does not match its eigenvalue ({rq!r} vs {lam[k]!r})")
        sampled = SampledFunction(grid, u, (0.0, 0.0))
        pairs.append(EigenPair(rq, sampled, k + 1, _one_sided_derivatives(u, grid.h)))
    if not pairs[1].lam > pairs[0].lam:
        raise SolverError("eigenvalues are not strictly ordered")
    return pairs[0], pairs[1]


def _rayleigh_quotient(u: np.ndarray, op: DiscreteOperator) -> float:
    """u^T (A + V) u / u^T W u with A applied in difference form.

    Summing squared differences avoids the cancellation of the 2/h^2 diagonal
    against the off-diagonals, so the quotient is accurate to rounding in
    lambda itself rather than in ||A||.
    """
    h2 = op.grid.h ** 2
    potential = op.stiffness_diag - 2.0 / h2
    kinetic = (np.sum(np.diff(u) ** 2) + u[0] ** 2 + u[-1] ** 2) / h2
    return float((kinetic + np.sum(potential * u * u)) / np.sum(op.weight_diag * u * u))


def _one_sided_derivatives(u: np.ndarray, h: float) -> tuple[float, float]:
    if u.shape[0] < 3:
        raise ValidationError("endpoint derivatives need n_interior >= 3")
    # u(0) = u(pi) = 0 drops the endpoint terms of the 3-point formulas.
    left = (4.0 * u[0] - u[1]) / (2.0 * h)
    right = (u[-2] - 4.0 * u[-1]) / (2.0 * h)
    return float(left), float(right)


def endpoint_derivative(u: EigenPair | SampledFunction, grid: Grid | None = None) -> tuple[float, float]:
    """Second-order one-sided estimates of u'(0) and u'(pi)."""
    f = u.u if isinstance(u, EigenPair) else u
    grid = f.grid if grid is None else grid
    if grid.n_interior < 3:
        raise ValidationError("endpoint derivatives need n_interior >= 3")
    full = f.full_values
    h = grid.h
    left = (-3.0 * full[0] + 4.0 * full[1] - full[2]) / (2.0 * h)
    right = (3.0 * full[-1] - 4.0 * full[-2] + full[-3]) / (2.0 * h)
    return float(left), float(right)


def quadrature(f: SampledFunction) -> float:
    """Composite trapezoid rule over [0, pi]."""
    a, b = f.endpoint_values
    return float(f.grid.h * (0.5 * a + np.sum(f.values) + 0.5 * b))


def solve(V, w, grid: Grid, tol: float = DEFAULT_TOL) -> tuple[EigenPair, EigenPair]:
    """Sample ``V`` and ``w`` (callables or numbers) on ``grid`` and solve."""
    return solve_lowest_two(assemble(_as_samples(V, grid), _as_samples(w, grid), grid), grid, tol)


def _as_samples(f, grid: Grid) -> SampledFunction:
    if isinstance(f, SampledFunction):
        return f
    if callable(f):
        return SampledFunction.from_callable(f, grid)
    c = float(f)
    return SampledFunction(grid, np.full(grid.n_interior, c), (c, c))



def richardson_eigenvalues(V, w, grid: Grid, tol: float = DEFAULT_TOL) -> tuple[float, float]:
    """lambda_1, lambda_2 extrapolated from steps h and h/2 (O(h^2) error model)."""
    coarse = solve(V, w, grid, tol)
    fine = solve(V, w, grid.refined(), tol)
    return tuple(float((4.0 * f.lam - c.lam) / 3.0) for c, f in zip(coarse, fine))
