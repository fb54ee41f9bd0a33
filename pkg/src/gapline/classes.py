"""Piecewise-linear potentials and weights and their admissible classes.

Potentials live in the convex class (0 <= V <= M, convex); weights in the
concave class (N_lo <= w <= N_hi, concave).  Piecewise-linear functions make
class membership a finite condition on knot values and slopes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.optimize import nnls

from .errors import ClassViolation, UnsortedKnots, ValidationError
from .sturm import Grid, SampledFunction

SLOPE_RTOL = 1e-9
VALUE_ATOL = 1e-12


@dataclass(frozen=True)
class ConvexPotential:
    M: float = np.inf


@dataclass(frozen=True)
class ConcaveWeight:
    N_lo: float
    N_hi: float = np.inf


@dataclass(frozen=True)
class Affine:
    a: float
    b: float


@dataclass(frozen=True)
class Constant:
    c: float


@dataclass(frozen=True)
class Free:
    pass


ClassTag = Union[ConvexPotential, ConcaveWeight, Affine, Constant, Free]


@dataclass(frozen=True, eq=False)
class PiecewiseLinearFn:
    """Continuous piecewise-linear function on [0, pi] given by knots and values."""

    knots: np.ndarray
    values: np.ndarray
    tag: ClassTag = Free()

    def __call__(self, x):
        return np.interp(x, self.knots, self.values)

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.knots)

    def derivative(self, x) -> np.ndarray:
        """Segment slope at ``x``; the mean of both sides at an interior knot."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        s = self.slopes
        right = np.clip(np.searchsorted(self.knots, x, side="right") - 1, 0, len(s) - 1)
        left = np.clip(np.searchsorted(self.knots, x, side="left") - 1, 0, len(s) - 1)
        return 0.5 * (s[left] + s[right])

    def sample(self, grid: Grid) -> SampledFunction:
        return sample_on_grid(self, grid)

    def is_affine(self, rtol: float = SLOPE_RTOL) -> bool:
        s = self.slopes
        return bool(np.ptp(s) <= rtol * (1.0 + np.max(np.abs(s))))

    def min(self) -> float:
        return float(np.min(self.values))

    def max(self) -> float:
        return float(np.max(self.values))

    def __add__(self, other):
        if isinstance(other, PiecewiseLinearFn):
            knots = _merge_knots(self.knots, other.knots)
            return PiecewiseLinearFn(knots, self(knots) + other(knots), Free())
        return PiecewiseLinearFn(self.knots, self.values + float(other), Free())

    __radd__ = __add__

    def __mul__(self, c):
        return PiecewiseLinearFn(self.knots, self.values * float(c), Free())

    __rmul__ = __mul__

    def __sub__(self, other):
        return self + (-1.0) * other

    def __repr__(self):
        return f"PiecewiseLinearFn(knots={len(self.knots)}, tag={self.tag!r})"


def _merge_knots(a, b):
    return np.unique(np.concatenate((a, b)))


def _slope_tolerance(slopes: np.ndarray) -> float:
    return SLOPE_RTOL * (1.0 + float(np.max(np.abs(slopes), initial=0.0)))


def check_class(knots, values, tag: ClassTag) -> None:
    """Raise ClassViolation if (knots, values) is not a member of ``tag``'s class."""
    knots = np.asarray(knots, dtype=float)
    values = np.asarray(values, dtype=float)
    slopes = np.diff(values) / np.diff(knots)
    dslope = np.diff(slopes)
    stol = _slope_tolerance(slopes)

    if isinstance(tag, ConvexPotential):
        bad = np.flatnonzero(dslope < -stol)
        if bad.size:
            i = int(bad[0]) + 1
            raise ClassViolation(f"slopes decrease at knot {i} (x={knots[i]:.6g}); not convex", where=knots[i])
        vtol = VALUE_ATOL * (1.0 + (tag.M if np.isfinite(tag.M) else 0.0))
        bad = np.flatnonzero((values < -vtol) | (values > tag.M + vtol))
        if bad.size:
            i = int(bad[0])
            raise ClassViolation(
                f"value {values[i]:.6g} at x={knots[i]:.6g} outside [0, {tag.M}]", where=knots[i]
            )
    elif isinstance(tag, ConcaveWeight):
        if not tag.N_lo > 0:
            raise ClassViolation(f"weight lower bound must be positive, got {tag.N_lo}")
        bad = np.flatnonzero(dslope > stol)
        if bad.size:
            i = int(bad[0]) + 1
            raise ClassViolation(f"slopes increase at knot {i} (x={knots[i]:.6g}); not concave", where=knots[i])
        vtol = VALUE_ATOL * (1.0 + (tag.N_hi if np.isfinite(tag.N_hi) else 0.0))
        bad = np.flatnonzero((values < tag.N_lo - vtol) | (values > tag.N_hi + vtol))
        if bad.size:
            i = int(bad[0])
            raise ClassViolation(
                f"value {values[i]:.6g} at x={knots[i]:.6g} outside [{tag.N_lo}, {tag.N_hi}]",
                where=knots[i],
            )
    elif isinstance(tag, Affine):
        if len(knots) != 2:
            raise ClassViolation("affine functions carry exactly two knots")
        expected = (tag.b, tag.a * np.pi + tag.b)
        if not np.allclose(values, expected, rtol=1e-12, atol=1e-12):
            raise ClassViolation(f"values {values} do not match a*x+b with a={tag.a}, b={tag.b}")
    elif isinstance(tag, Constant):
        if not np.allclose(values, tag.c, rtol=1e-12, atol=1e-12):
            raise ClassViolation(f"values are not the constant {tag.c}")


def make_piecewise_linear(knots, knot_values, class_tag: ClassTag = Free()) -> PiecewiseLinearFn:
    knots = np.array(knots, dtype=float)
    values = np.array(knot_values, dtype=float)
    if knots.ndim != 1 or knots.shape != values.shape:
        raise ValidationError("knots and values must be 1-d sequences of equal length")
    if knots.size < 2:
        raise ValidationError("at least two knots are required")
    if not np.all(np.isfinite(values)):
        raise ValidationError("knot values must be finite")
    if np.any(np.diff(knots) <= 0):
        raise UnsortedKnots("knots must be strictly increasing")
    if not (np.isclose(knots[0], 0.0, atol=1e-12) and np.isclose(knots[-1], np.pi, rtol=0, atol=1e-12)):
        raise UnsortedKnots(f"knots must span [0, pi], got [{knots[0]}, {knots[-1]}]")
    knots[0], knots[-1] = 0.0, np.pi
    check_class(knots, values, class_tag)
    return PiecewiseLinearFn(knots, values, class_tag)


def constant(c: float) -> PiecewiseLinearFn:
    return make_piecewise_linear([0.0, np.pi], [c, c], Constant(float(c)))


def affine(a: float, b: float) -> PiecewiseLinearFn:
    return make_piecewise_linear([0.0, np.pi], [b, a * np.pi + b], Affine(float(a), float(b)))


def retag(f: PiecewiseLinearFn, tag: ClassTag) -> PiecewiseLinearFn:
    return make_piecewise_linear(f.knots, f.values, tag)


def sample_on_grid(f: PiecewiseLinearFn, grid: Grid) -> SampledFunction:
    return SampledFunction(grid, f(grid.nodes), (float(f.values[0]), float(f.values[-1])))


def uniform_knots(k: int) -> np.ndarray:
    knots = np.linspace(0.0, np.pi, k)
    knots[-1] = np.pi
    return knots


def _least_distance(G: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Minimum-norm x with G x >= h (Lawson-Hanson LDP via one NNLS solve)."""
    m, n = G.shape
    E = np.vstack((G.T, h[None, :]))
    f = np.zeros(n + 1)
    f[-1] = 1.0
    u, _ = nnls(E, f, maxiter=50 * (n + m))
    r = E @ u - f
    if abs(r[-1]) < 1e-14:
        raise ValidationError("projection constraints are infeasible")
    return -r[:n] / r[-1]


def _convexity_rows(knots: np.ndarray) -> np.ndarray:
    k = len(knots)
    dx = np.diff(knots)
    rows = np.zeros((k - 2, k))
    for i in range(1, k - 1):
        rows[i - 1, i - 1] = 1.0 / dx[i - 1]
        rows[i - 1, i] = -1.0 / dx[i - 1] - 1.0 / dx[i]
        rows[i - 1, i + 1] = 1.0 / dx[i]
    return rows


def project_convex(raw_values, M: float, knots=None) -> PiecewiseLinearFn:
    """Euclidean projection of knot values onto the convex class with bounds [0, M].

    Solved exactly as a least-distance problem: convexity rows, f >= 0, and
    f <= M at both ends (a convex function peaks at an endpoint).
    """
    y = np.asarray(raw_values, dtype=float)
    if not M > 0:
        raise ValidationError("M must be positive")
    knots = uniform_knots(len(y)) if knots is None else np.asarray(knots, dtype=float)
    if knots.shape != y.shape:
        raise ValidationError("raw_values and knots differ in length")
    k = len(y)
    rows = [_convexity_rows(knots), np.eye(k)]
    rhs = [np.zeros(k - 2), np.zeros(k)]
    if np.isfinite(M):
        ends = np.zeros((2, k))
        ends[0, 0] = ends[1, -1] = -1.0
        rows.append(ends)
        rhs.append(np.full(2, -M))
    G = np.vstack(rows)
    h = np.concatenate(rhs)
    slack = h - G @ y
    f = y if np.all(slack <= 0) else y + _least_distance(G, slack)
    f = np.clip(f, 0.0, M)
    return make_piecewise_linear(knots, f, ConvexPotential(M))


def _random_convex_shape(rng: np.random.Generator, k_knots: int):
    interior = np.sort(rng.uniform(0.0, np.pi, k_knots - 2))
    knots = np.concatenate(([0.0], interior, [np.pi]))
    while np.any(np.diff(knots) <= 1e-9):
        interior = np.sort(rng.uniform(0.0, np.pi, k_knots - 2))
        knots = np.concatenate(([0.0], interior, [np.pi]))
    increments = rng.exponential(1.0, k_knots - 2)
    total = increments.sum()
    s0 = -rng.uniform(0.0, 1.0) * total - rng.uniform(-0.5, 0.5)
    slopes = s0 + np.concatenate(([0.0], np.cumsum(increments)))
    values = np.concatenate(([0.0], np.cumsum(slopes * np.diff(knots))))
    values -= values.min()
    return knots, values


def sample_random_convex(seed: int, M: float, k_knots: int = 5) -> PiecewiseLinearFn:
    """Seeded random member of the convex class.

    Knots are uniform on (0, pi), slope increments exponential; the result is
    rescaled to a random range inside [0, M] and shifted by a random offset.
    """
    if not (M > 0 and np.isfinite(M)):
        raise ValidationError("M must be positive and finite")
    if k_knots < 2:
        raise ValidationError("k_knots must be at least 2")
    rng = np.random.default_rng(seed)
    knots, values = _random_convex_shape(rng, k_knots)
    span = rng.uniform(0.05, 1.0) * M
    peak = values.max()
    values = values * (span / peak) if peak > 0 else values
    values = values + rng.uniform(0.0, M - values.max())
    values = np.clip(values, 0.0, M)
    return make_piecewise_linear(knots, values, ConvexPotential(M))


def sample_random_concave(seed: int, N_lo: float, N_hi: float, k_knots: int = 5) -> PiecewiseLinearFn:
    """Seeded random member of the concave class; mirror image of the convex sampler."""
    if not (0 < N_lo < N_hi < np.inf):
        raise ValidationError("need 0 < N_lo < N_hi < inf")
    if k_knots < 2:
        raise ValidationError("k_knots must be at least 2")
    rng = np.random.default_rng(seed)
    knots, values = _random_convex_shape(rng, k_knots)
    width = N_hi - N_lo
    span = rng.uniform(0.05, 1.0) * width
    peak = values.max()
    values = values * (span / peak) if peak > 0 else values
    top = N_hi - rng.uniform(0.0, width - values.max())
    values = np.clip(top - values, N_lo, N_hi)
    return make_piecewise_linear(knots, values, ConcaveWeight(N_lo, N_hi))


def affine_through(f, x_minus: float, x_plus: float) -> PiecewiseLinearFn:
    """The affine function agreeing with ``f`` at ``x_minus`` and ``x_plus``."""
    if not 0.0 <= x_minus <= np.pi or not 0.0 <= x_plus <= np.pi:
        raise ValidationError("interpolation points must lie in [0, pi]")
    if not x_plus > x_minus:
        raise ValidationError(f"interpolation points coincide or are unordered: {x_minus}, {x_plus}")
    fm, fp = float(f(x_minus)), float(f(x_plus))
    a = (fp - fm) / (x_plus - x_minus)
    b = fm - a * x_minus
    return affine(a, b)


def from_spec(spec: dict, role: str = "free") -> PiecewiseLinearFn:
    """Build a function from its JSON spec and validate it for ``role``.

    ``role`` is "potential" (convex, 0 <= V <= M), "weight" (concave,
    N_lo <= w <= N_hi, strictly positive) or "free".  Affine specs use
    ``a`` for the slope and ``b`` for the intercept, so the weight m*x + p
    is written {"type": "affine", "a": m, "b": p}.
    """
    if not isinstance(spec, dict) or "type" not in spec:
        raise ValidationError(f"function spec must be an object with a 'type' field: {spec!r}")
    kind = spec["type"]
    try:
        if kind == "constant":
            f = constant(float(spec["c"]))
        elif kind == "affine":
            f = affine(float(spec["a"]), float(spec["b"]))
        elif kind == "piecewise_linear":
            f = make_piecewise_linear(spec["knots"], spec["values"], Free())
        else:
            raise ValidationError(f"unknown function type {kind!r}")
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed {kind} spec: {exc}") from None

    if role == "potential":
        tag = ConvexPotential(float(spec.get("M", np.inf)))
        check_class(f.knots, f.values, tag)
        if kind == "piecewise_linear":
            f = PiecewiseLinearFn(f.knots, f.values, tag)
    elif role == "weight":
        lo = float(spec.get("N_lo", f.min()))
        tag = ConcaveWeight(lo, float(spec.get("N_hi", np.inf)))
        if f.min() <= 0:
            raise ClassViolation(f"weight must be strictly positive, min is {f.min()}")
        check_class(f.knots, f.values, tag)
        if kind == "piecewise_linear":
            f = PiecewiseLinearFn(f.knots, f.values, tag)
    elif role != "free":
        raise ValidationError(f"unknown role {role!r}")
    return f


def to_spec(f: PiecewiseLinearFn) -> dict:
    if isinstance(f.tag, Constant):
        return {"type": "constant", "c": f.tag.c}
    if isinstance(f.tag, Affine):
        return {"type": "affine", "a": f.tag.a, "b": f.tag.b}
    return {"type": "piecewise_linear", "knots": f.knots.tolist(), "values": f.values.tolist()}
