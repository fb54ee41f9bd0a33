"""Gap minimization over convex potentials, affine reduction, constancy checks."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .classes import (
    Affine,
    Constant,
    ConcaveWeight,
    PiecewiseLinearFn,
    affine,
    affine_through,
    make_piecewise_linear,
    project_convex,
    sample_random_convex,
    uniform_knots,
)
from .errors import ValidationError
from .gap import _sampled, fundamental_gap, gap as gap_value
from .sturm import DEFAULT_N_INTERIOR, DEFAULT_TOL, Grid, SampledFunction, quadrature, solve

log = logging.getLogger(__name__)

REDUCTION_TOL = 1e-6


@dataclass(frozen=True)
class OptimizeOptions:
    max_iters: int = 500
    step_init: float = 1.0
    armijo_c: float = 1e-4
    grad_tol: float = 1e-6
    flatness_tol: float = 1e-3
    seed: int = 0
    grid: Grid = field(default_factory=lambda: Grid(DEFAULT_N_INTERIOR))
    n_knots: int = 33
    tol: float = DEFAULT_TOL
    min_step: float = 1e-12
    max_step: float = 1e6

    def __post_init__(self):
        if self.max_iters <= 0 or self.step_init <= 0 or self.grad_tol <= 0 or self.flatness_tol <= 0:
            raise ValidationError("optimizer options must be positive")
        if not 0 < self.armijo_c < 1:
            raise ValidationError("armijo_c must lie in (0, 1)")
        if self.n_knots < 2:
            raise ValidationError("n_knots must be at least 2")


class Verdict(str, Enum):
    CONSTANT = "Constant"
    NON_CONSTANT = "NonConstant"
    CONDITION_NOT_MET = "ConditionNotMet"


@dataclass(frozen=True)
class ConstancyCertificate:
    m: float
    p: float
    condition_holds: bool
    variation: float
    verdict: Verdict

    @property
    def threshold(self) -> float:
        return 5.0 * self.m * np.pi


@dataclass
class Iterate:
    V: PiecewiseLinearFn
    gap: float
    grad_norm: float
    step: float


@dataclass
class OptimizeTrace:
    iterates: list[Iterate]
    final: PiecewiseLinearFn
    converged: bool
    certificate: ConstancyCertificate | None = None

    @property
    def final_gap(self) -> float:
        return self.iterates[-1].gap

    @property
    def gaps(self) -> np.ndarray:
        return np.array([it.gap for it in self.iterates])


@dataclass
class AffineReduction:
    chord: PiecewiseLinearFn
    gap_original: float
    gap_chord: float | None
    points: tuple[float, float]
    holds: bool
    degenerate: bool = False
    flags: tuple[str, ...] = ()

    def __iter__(self):
        # unpacks as (chord, gap_original, gap_chord)
        return iter((self.chord, self.gap_original, self.gap_chord))

    @property
    def margin(self) -> float:
        return np.nan if self.gap_chord is None else self.gap_original - self.gap_chord


def _is_constant(f) -> bool:
    if isinstance(f, PiecewiseLinearFn):
        return bool(np.ptp(f.values) == 0.0)
    return False


def reduce_to_affine_potential(V: PiecewiseLinearFn, w, grid: Grid, tol: float = REDUCTION_TOL) -> AffineReduction:
    """Replace convex V by its chord through the crossing points of u1^2, u2^2."""
    report = fundamental_gap(V, w, grid)
    xm, xp = report.x_minus, report.x_plus
    degenerate = xp - xm < 2 * grid.h
    chord = V if isinstance(V.tag, (Affine, Constant)) else affine_through(V, xm, xp)
    gap_chord = gap_value(chord, w, grid)
    holds = report.gap >= gap_chord - tol * max(1.0, abs(gap_chord))
    flags = ("degenerate_crossing",) if degenerate else ()
    return AffineReduction(chord, report.gap, gap_chord, (xm, xp), bool(holds), degenerate, flags)


def reduce_to_affine_weight(V, w: PiecewiseLinearFn, grid: Grid, tol: float = REDUCTION_TOL) -> AffineReduction:
    """Replace concave w by its chord through the weighted crossing points.

    A chord that is not strictly positive on [0, pi] is flagged and not solved.
    """
    report = fundamental_gap(V, w, grid)
    xm, xp = report.x_hat_minus, report.x_hat_plus
    degenerate = xp - xm < 2 * grid.h
    chord = w if isinstance(w.tag, (Affine, Constant)) else affine_through(w, xm, xp)
    flags = ["degenerate_crossing"] if degenerate else []
    if chord.min() <= 0:
        flags.append("non_positive_chord")
        return AffineReduction(chord, report.gap, None, (xm, xp), True, degenerate, tuple(flags))
    if isinstance(w.tag, ConcaveWeight) and (
        chord.min() < w.tag.N_lo - 1e-12 or chord.max() > w.tag.N_hi + 1e-12
    ):
        flags.append("chord_outside_bounds")
    gap_chord = gap_value(V, chord, grid)
    holds = report.gap >= gap_chord - tol * max(1.0, abs(gap_chord))
    return AffineReduction(chord, report.gap, gap_chord, (xm, xp), bool(holds), degenerate, tuple(flags))


def _hat_matrix(knots: np.ndarray, x: np.ndarray) -> np.ndarray:
    """H[j, i] = value of the j-th hat function at x_i."""
    eye = np.eye(len(knots))
    return np.stack([np.interp(x, knots, row) for row in eye])


class _GapObjective:
    """Gap and its knot-basis gradient for potentials on a fixed knot lattice."""

    def __init__(self, w, knots: np.ndarray, grid: Grid, tol: float):
        self.grid = grid
        self.tol = tol
        self.knots = knots
        self.w = _sampled(w, grid)
        self.hats = _hat_matrix(knots, grid.nodes)

    def potential(self, values: np.ndarray) -> SampledFunction:
        return SampledFunction(self.grid, values @ self.hats, (values[0], values[-1]))

    def evaluate(self, values: np.ndarray):
        p1, p2 = solve(self.potential(values), self.w, self.grid, self.tol)
        density = p2.values**2 - p1.values**2
        grad = self.grid.h * (self.hats @ density)
        return p2.lam - p1.lam, grad


def minimize_gap_over_convex(
    w, M: float, opts: OptimizeOptions | None = None, start: PiecewiseLinearFn | None = None
) -> OptimizeTrace:
    """Projected gradient descent on the knot values of V.

    The gradient is the Hellmann-Feynman density u2^2 - u1^2 integrated
    against the knot hat functions.  Steps are projected onto the convex class
    and accepted by an Armijo test on the gap; the trial step doubles after
    every acceptance.  When w is
    constant the gap is shift invariant and iterates are anchored at min V = 0.
    """
    opts = opts or OptimizeOptions()
    knots = uniform_knots(opts.n_knots)
    if start is None:
        start = sample_random_convex(opts.seed, M, k_knots=5)
    anchor = _is_constant(w)
    obj = _GapObjective(w, knots, opts.grid, opts.tol)

    def project(y):
        f = project_convex(y, M, knots)
        if anchor and f.min() != 0.0:
            # a shifted admissible function stays admissible
            f = make_piecewise_linear(knots, f.values - f.min(), f.tag)
        return f

    current = project(start(knots))
    g_val, grad = obj.evaluate(current.values)
    direction = grad
    gmap = float(np.max(np.abs(current.values - project(current.values - direction).values)))
    iterates = [Iterate(current, g_val, gmap, 0.0)]
    converged = gmap <= opts.grad_tol

    it = 0
    t = opts.step_init
    while not converged and it < opts.max_iters:
        it += 1
        accepted = False
        # trial moves larger than the box height M only get clipped away
        t = min(t, M / max(float(np.max(np.abs(direction))), 1e-300))
        while t >= opts.min_step:
            cand = project(current.values - t * direction)
            delta = cand.values - current.values
            slope = float(grad @ delta)
            if slope >= 0.0 and np.max(np.abs(delta)) > 0:
                t *= 0.5
                continue
            c_val, c_grad = obj.evaluate(cand.values)
            if c_val <= g_val + opts.armijo_c * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            log.info("line search failed at iteration %d (gap %.12g)", it, g_val)
            break
        current, g_val, grad = cand, c_val, c_grad
        step = t
        # a step accepted at the first trial suggests the next can be longer
        t = min(2.0 * t, opts.max_step)
        direction = grad
        gmap = float(np.max(np.abs(current.values - project(current.values - direction).values)))
        iterates.append(Iterate(current, g_val, gmap, step))
        converged = gmap <= opts.grad_tol
    if not converged:
        log.info("optimizer stopped without convergence: gap %.12g, gradient map %.3g", g_val, gmap)
    return OptimizeTrace(iterates, current, bool(converged))


def variation(f: PiecewiseLinearFn) -> float:
    return float(np.ptp(f.values))


def mean_value(f: PiecewiseLinearFn) -> float:
    return float(np.sum(np.diff(f.knots) * (f.values[1:] + f.values[:-1]) / 2) / np.pi)


def constancy_certificate(w_m: PiecewiseLinearFn, trace: OptimizeTrace, flatness_tol: float = 1e-3) -> ConstancyCertificate:
    """Check the flatness of the optimizer's final potential for w = m x + p."""
    if not isinstance(w_m.tag, Affine):
        raise ValidationError("certificate needs an affine weight m*x + p")
    m, p = w_m.tag.a, w_m.tag.b
    if not m > 0:
        raise ValidationError(f"certificate needs slope m > 0, got {m}")
    if not p > 0:
        raise ValidationError(f"certificate needs intercept p > 0, got {p}")
    holds = p > 5.0 * m * np.pi
    var = variation(trace.final)
    if not holds:
        verdict = Verdict.CONDITION_NOT_MET
    elif var <= flatness_tol * (1.0 + abs(mean_value(trace.final))):
        verdict = Verdict.CONSTANT
    else:
        verdict = Verdict.NON_CONSTANT
    return ConstancyCertificate(m, p, bool(holds), var, verdict)


def certify(w_m: PiecewiseLinearFn, M: float, opts: OptimizeOptions | None = None, starts: int = 1) -> OptimizeTrace:
    """Minimize over the convex class and attach a constancy certificate.

    With several starts the run with the lowest final gap is kept.
    """
    opts = opts or OptimizeOptions()
    best = None
    for k in range(starts):
        run_opts = OptimizeOptions(**{**opts.__dict__, "seed": opts.seed + k})
        trace = minimize_gap_over_convex(w_m, M, run_opts)
        if best is None or trace.final_gap < best.final_gap:
            best = trace
    best.certificate = constancy_certificate(w_m, best, opts.flatness_tol)
    return best


def critical_point_residual(a: float, w_m, grid: Grid, tol: float = DEFAULT_TOL) -> float:
    """int x (u2^2 - u1^2) at V = a x: the derivative of a -> gap(a x, w)."""
    if a < 0:
        raise ValidationError("slope a must be non-negative")
    p1, p2 = solve(affine(a, 0.0), _sampled(w_m, grid), grid, tol)
    x = SampledFunction.from_callable(lambda t: t, grid)
    return quadrature(x * (p2.u**2 - p1.u**2))


def lavine_floor(V, grid: Grid) -> float:
    """gap(V, 1) - 3: non-negative for convex V by Lavine's bound."""
    return gap_value(V, 1.0, grid) - 3.0

