"""The fundamental gap lambda_2 - lambda_1 and the eigenfunction facts behind it.

Everything here works on one solve grid: eigenpairs come from
:func:`gapline.sturm.solve`, integrals from the trapezoid rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from numpy.polynomial import Polynomial

from .classes import PiecewiseLinearFn, sample_on_grid
from .errors import MoreThanTwoCrossings, SolverError, ValidationError
from .sturm import (
    DEFAULT_TOL,
    EigenPair,
    Grid,
    SampledFunction,
    quadrature,
    richardson_eigenvalues,
    solve,
)

RATIO_FLOOR = 1e-12


def _sampled(f, grid: Grid) -> SampledFunction:
    if isinstance(f, SampledFunction):
        return f
    if isinstance(f, PiecewiseLinearFn):
        return sample_on_grid(f, grid)
    if callable(f):
        return SampledFunction.from_callable(f, grid)
    return SampledFunction.from_callable(lambda x: np.full_like(x, float(f)), grid)


class Crossings(NamedTuple):
    x_minus: float
    x_plus: float
    count: int
    merged: int = 0


class RatioReport(NamedTuple):
    max_violation: float
    excluded: int


@dataclass
class GapReport:
    lambda1: float
    lambda2: float
    gap: float
    x_minus: float
    x_plus: float
    x_hat_minus: float
    x_hat_plus: float
    crossing_count: int
    weighted_crossing_count: int
    diagnostics: dict = field(default_factory=dict)
    pairs: tuple = field(default=(), repr=False)

    def row(self) -> dict:
        return {
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "gap": self.gap,
            "x_minus": self.x_minus,
            "x_plus": self.x_plus,
            "x_hat_minus": self.x_hat_minus,
            "x_hat_plus": self.x_hat_plus,
        }


def _roots(diff: np.ndarray, grid: Grid) -> tuple[list[float], int]:
    """Sign changes of ``diff`` over interior nodes, linearly interpolated.

    Roots closer than 2h are merged into one; returns (roots, merges).
    """
    x = grid.nodes
    sign = np.sign(diff)
    # exact zeros inherit the sign of the preceding node so they count once
    for i in range(1, len(sign)):
        if sign[i] == 0:
            sign[i] = sign[i - 1]
    idx = np.flatnonzero(sign[:-1] * sign[1:] < 0)
    roots = []
    for i in idx:
        a, b = diff[i], diff[i + 1]
        roots.append(float(x[i] + (x[i + 1] - x[i]) * a / (a - b)))
    merged = 0
    out: list[float] = []
    for r in roots:
        if out and r - out[-1] < 2 * grid.h:
            # a close pair is a tangential touch: both roots vanish
            out.pop()
            merged += 1
            continue
        out.append(r)
    return out, merged


def _crossings_of(diff: np.ndarray, grid: Grid, what: str) -> Crossings:
    roots, merged = _roots(diff, grid)
    if len(roots) > 2:
        raise MoreThanTwoCrossings(f"{what}: {len(roots)} crossings at {roots}")
    if not roots:
        raise SolverError(f"{what}: no interior crossing found")
    if len(roots) == 2:
        return Crossings(roots[0], roots[1], 2, merged)
    r = roots[0]
    # diff > 0 left of r means the "second dominates" region is (0, r)
    if diff[grid.nodes < r][-1] > 0:
        return Crossings(r, float(np.pi), 1, merged)
    return Crossings(0.0, r, 1, merged)


def crossing_points(u1: EigenPair, u2: EigenPair) -> Crossings:
    """Boundary (x_minus, x_plus) of the set where u1^2 > u2^2."""
    return _crossings_of(u2.values**2 - u1.values**2, u1.u.grid, "u1^2 vs u2^2")


def weighted_crossing_points(pair1: EigenPair, pair2: EigenPair) -> Crossings:
    """Boundary of the set where lambda1 u1^2 > lambda2 u2^2."""
    diff = pair2.lam * pair2.values**2 - pair1.lam * pair1.values**2
    return _crossings_of(diff, pair1.u.grid, "lambda1 u1^2 vs lambda2 u2^2")


def sign_pattern_violations(diff: np.ndarray, grid: Grid, c: Crossings) -> int:
    """Nodes farther than 2h from every root where ``diff`` has the wrong sign.

    Inside (x_minus, x_plus) ``diff`` must be negative, outside non-negative.
    """
    x = grid.nodes
    roots = [r for r in (c.x_minus, c.x_plus) if 0.0 < r < np.pi]
    far = np.ones_like(x, dtype=bool)
    for r in roots:
        far &= np.abs(x - r) > 2 * grid.h
    inside = (x > c.x_minus) & (x < c.x_plus)
    bad = far & ((inside & (diff >= 0)) | (~inside & (diff < 0)))
    return int(np.count_nonzero(bad))


def ratio_monotonicity_report(u1: EigenPair, u2: EigenPair, floor: float = RATIO_FLOOR) -> RatioReport:
    """Largest increase of u2/u1 between consecutive nodes (0 when non-increasing)."""
    keep = np.abs(u1.values) >= floor
    r = u2.values[keep] / u1.values[keep]
    violation = float(max(0.0, np.max(np.diff(r), initial=0.0)))
    return RatioReport(violation, int(np.count_nonzero(~keep)))


def fundamental_gap(V, w, grid: Grid, tol: float = DEFAULT_TOL, richardson: bool = False) -> GapReport:
    Vs, ws = _sampled(V, grid), _sampled(w, grid)
    p1, p2 = solve(Vs, ws, grid, tol)
    lam1, lam2 = p1.lam, p2.lam
    if richardson:
        lam1, lam2 = richardson_eigenvalues(_as_callable(V), _as_callable(w), grid, tol)
    c = crossing_points(p1, p2)
    wc = weighted_crossing_points(p1, p2)
    diagnostics = {
        "orthogonality": quadrature(ws * p1.u * p2.u),
        "normalization_1": quadrature(ws * p1.u**2) - 1.0,
        "normalization_2": quadrature(ws * p2.u**2) - 1.0,
        "ratio_violation": ratio_monotonicity_report(p1, p2).max_violation,
        "merged_crossings": c.merged + wc.merged,
    }
    return GapReport(
        lambda1=lam1,
        lambda2=lam2,
        gap=lam2 - lam1,
        x_minus=c.x_minus,
        x_plus=c.x_plus,
        x_hat_minus=wc.x_minus,
        x_hat_plus=wc.x_plus,
        crossing_count=c.count,
        weighted_crossing_count=wc.count,
        diagnostics=diagnostics,
        pairs=(p1, p2),
    )


def _as_callable(f) -> Callable:
    if isinstance(f, SampledFunction):
        raise ValidationError("Richardson extrapolation needs V and w as functions, not samples")
    if callable(f):
        return f
    return lambda x: np.full_like(x, float(f))


def gap(V, w, grid: Grid, tol: float = DEFAULT_TOL) -> float:
    """Gap only; skips the crossing analysis."""
    p1, p2 = solve(_sampled(V, grid), _sampled(w, grid), grid, tol)
    return p2.lam - p1.lam


def fh_derivative(V, w, dV, dw, n: int, grid: Grid, pairs=None, tol: float = DEFAULT_TOL) -> float:
    """d lambda_n / d kappa along V + kappa dV, w + kappa dw, at kappa = 0.

    -lambda_n * int(dw u_n^2) + int(dV u_n^2) with u_n weight-normalized.
    """
    if n not in (1, 2):
        raise ValidationError("n must be 1 or 2")
    if pairs is None:
        pairs = solve(_sampled(V, grid), _sampled(w, grid), grid, tol)
    pair = pairs[n - 1]
    u2 = pair.u**2
    return -pair.lam * quadrature(_sampled(dw, grid) * u2) + quadrature(_sampled(dV, grid) * u2)


def _cumulative(grid: Grid, f: np.ndarray):
    """Exact antiderivative of the linear interpolant of full-grid samples ``f``."""
    x = grid.full_nodes
    cells = 0.5 * grid.h * (f[1:] + f[:-1])
    F = np.concatenate([[0.0], np.cumsum(cells)])

    def at(t):
        t = np.clip(np.asarray(t, dtype=float), 0.0, np.pi)
        i = np.clip(np.floor(t / grid.h).astype(int), 0, len(x) - 2)
        ft = f[i] + (f[i + 1] - f[i]) * (t - x[i]) / grid.h
        return F[i] + 0.5 * (t - x[i]) * (f[i] + ft)

    return at


def _slope_integral(f, weight: np.ndarray, grid: Grid) -> float:
    """int f' * weight, with f' piecewise constant, integrated segment by segment."""
    if isinstance(f, (int, float)):
        return 0.0
    if not isinstance(f, PiecewiseLinearFn):
        raise ValidationError("derivatives need a piecewise-linear function or a constant")
    F = _cumulative(grid, weight)
    return float(np.sum(f.slopes * np.diff(F(f.knots))))


def g_identity_sides(G_spec, pair: EigenPair, V, w, grid: Grid) -> tuple[float, float]:
    """Both sides of the integral identity for a polynomial multiplier G.

    LHS: [G (u'^2 + (lam w - V) u^2) + G'' u^2 / 2] between 0 and pi.
    RHS: int [2 G'(lam w - V) + G (lam w' - V') + G'''/2] u^2.
    ``G_spec`` holds ascending coefficients, degree at most 4.
    """
    G = G_spec if isinstance(G_spec, Polynomial) else Polynomial(np.asarray(G_spec, dtype=float))
    if G.degree() > 4:
        raise ValidationError("G must have degree <= 4")
    G1, G2, G3 = G.deriv(1), G.deriv(2), G.deriv(3)
    lam = pair.lam
    Vs, ws = _sampled(V, grid), _sampled(w, grid)
    u0, upi = pair.u.endpoint_values
    du0, dupi = pair.derivative_at_endpoints

    def boundary(x, du, u, vv, ww):
        return G(x) * (du**2 + (lam * ww - vv) * u**2) + 0.5 * G2(x) * u**2

    lhs = boundary(np.pi, dupi, upi, Vs.endpoint_values[1], ws.endpoint_values[1]) - boundary(
        0.0, du0, u0, Vs.endpoint_values[0], ws.endpoint_values[0]
    )
    Gx = SampledFunction.from_callable(G, grid)
    G1x = SampledFunction.from_callable(G1, grid)
    G3x = SampledFunction.from_callable(G3, grid)
    u2 = pair.u**2
    smooth = quadrature((2.0 * G1x * (lam * ws - Vs) + 0.5 * G3x) * u2)
    # w' and V' jump at knots: integrate them exactly against the interpolant of G u^2
    Gu2 = (Gx * u2).full_values
    rhs = smooth + lam * _slope_integral(w, Gu2, grid) - _slope_integral(V, Gu2, grid)
    return float(lhs), float(rhs)


def g_identity_residual(G_spec, pair: EigenPair, V, w, grid: Grid) -> float:
    lhs, rhs = g_identity_sides(G_spec, pair, V, w, grid)
    return abs(lhs - rhs)


def moment_bound_check(pair1: EigenPair, pair2: EigenPair, w, tol: float = 1e-12):
    """(int x^2 (u2^2 - u1^2), 2 pi^2 / min w, lhs <= rhs)."""
    grid = pair1.u.grid
    ws = _sampled(w, grid)
    x2 = SampledFunction.from_callable(lambda t: t * t, grid)
    lhs = quadrature(x2 * (pair2.u**2 - pair1.u**2))
    wmin = min(float(np.min(ws.values)), *ws.endpoint_values)
    if wmin <= 0:
        raise ValidationError("weight must be strictly positive")
    rhs = 2.0 * np.pi**2 / wmin
    return lhs, rhs, bool(lhs <= rhs + tol)


@dataclass(frozen=True)
class HomotopyFamily:
    """theta -> theta * end + (1 - theta) * start, for a potential or a weight."""

    start: PiecewiseLinearFn
    end: PiecewiseLinearFn
    target: str = "potential"
    parameter_name: str = "theta"

    def __post_init__(self):
        if self.target not in ("potential", "weight"):
            raise ValidationError(f"target must be 'potential' or 'weight', got {self.target!r}")

    def at(self, theta: float) -> PiecewiseLinearFn:
        return theta * self.end + (1.0 - theta) * self.start

    @property
    def direction(self) -> PiecewiseLinearFn:
        return self.end - self.start


def homotopy_gap_derivative(
    fam: HomotopyFamily, theta: float, other, grid: Grid, tol: float = DEFAULT_TOL
) -> float:
    """d gap / d theta along the family, by Hellmann-Feynman at ``theta``."""
    coeff = fam.at(theta)
    V, w = (coeff, other) if fam.target == "potential" else (other, coeff)
    pairs = solve(_sampled(V, grid), _sampled(w, grid), grid, tol)
    direction = _sampled(fam.direction, grid)
    zero = SampledFunction(grid, np.zeros(grid.n_interior), (0.0, 0.0))
    dV, dw = (direction, zero) if fam.target == "potential" else (zero, direction)
    return fh_derivative(V, w, dV, dw, 2, grid, pairs) - fh_derivative(V, w, dV, dw, 1, grid, pairs)
