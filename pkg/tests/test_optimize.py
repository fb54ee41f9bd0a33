import numpy as np
import pytest

from gapline import (
    Affine,
    ConvexPotential,
    Grid,
    OptimizeOptions,
    OptimizeTrace,
    ValidationError,
    Verdict,
    affine,
    constant,
    constancy_certificate,
    critical_point_residual,
    make_piecewise_linear,
    minimize_gap_over_convex,
    reduce_to_affine_potential,
    reduce_to_affine_weight,
    sample_random_concave,
    sample_random_convex,
)
from gapline.classes import check_class, uniform_knots
from gapline.gap import gap
from gapline.optimize import Iterate, lavine_floor, mean_value, variation

FAST = dict(grid=Grid(400), max_iters=300)


# --- affine reduction -----------------------------------------------------


def test_affine_potential_is_fixed(grid500):
    V = affine(0.7, 1.0)
    r = reduce_to_affine_potential(V, affine(1.0, 20.0), grid500)
    assert r.chord is V
    assert r.gap_original == r.gap_chord and r.holds
    chord, g0, g1 = r
    assert chord is V and g0 == g1


def test_parabola_reduces_to_constant(grid2000):
    knots = np.linspace(0.0, np.pi, 401)
    V = make_piecewise_linear(knots, (knots - np.pi / 2) ** 2, ConvexPotential(3.0))
    r = reduce_to_affine_potential(V, constant(1.0), grid2000)
    assert r.chord.tag.a == pytest.approx(0.0, abs=1e-6)
    # the chord passes through V at the reported crossings, symmetric about pi/2
    xm, xp = r.points
    assert xm + xp == pytest.approx(np.pi, abs=1e-6)
    assert r.chord.tag.b == pytest.approx(float(V(xp)), abs=1e-6)
    assert r.chord.tag.b == pytest.approx((xp - np.pi / 2) ** 2, abs=1e-4)
    assert r.gap_chord == pytest.approx(3.0, abs=1e-5)
    assert r.holds and r.gap_original > r.gap_chord


def test_affine_weight_is_fixed(grid500):
    w = affine(0.5, 3.0)
    r = reduce_to_affine_weight(constant(0.0), w, grid500)
    assert r.chord is w and r.margin == 0.0 and r.holds


def test_plateau_tent_weight(grid2000):
    w = make_piecewise_linear([0.0, 1.0, 2.0, np.pi], [20.0, 21.0, 21.0, 20.2])
    r = reduce_to_affine_weight(0.0, w, grid2000)
    assert isinstance(r.chord.tag, Affine)
    assert r.holds and r.margin >= -1e-6


def test_potential_reduction_on_corpus(grid500):
    w = affine(1.0, 20.0)
    for seed in range(15):
        r = reduce_to_affine_potential(sample_random_convex(seed, 10.0), w, grid500)
        assert r.holds and r.margin >= -1e-6


def test_weight_reduction_on_corpus(grid500):
    for seed in range(15):
        r = reduce_to_affine_weight(constant(0.0), sample_random_concave(seed, 1.0, 3.0), grid500)
        assert "non_positive_chord" not in r.flags
        assert r.holds and r.margin >= -1e-6


def test_non_positive_chord_is_flagged(grid500):
    # not concave, so the chord through the weighted crossings can go negative
    w = make_piecewise_linear([0.0, np.pi / 2, np.pi], [6.0, 0.05, 0.3])
    r = reduce_to_affine_weight(0.0, w, grid500)
    assert "non_positive_chord" in r.flags
    assert r.gap_chord is None and np.isnan(r.margin)


# --- optimizer ------------------------------------------------------------


def test_options_validation():
    with pytest.raises(ValidationError):
        OptimizeOptions(armijo_c=1.5)
    with pytest.raises(ValidationError):
        OptimizeOptions(max_iters=0)
    with pytest.raises(ValidationError):
        OptimizeOptions(grad_tol=-1.0)


def test_constant_start_is_fixed_point_for_unit_weight():
    opts = OptimizeOptions(**FAST)
    start = constant(0.0)
    trace = minimize_gap_over_convex(constant(1.0), 10.0, opts, start=start)
    assert trace.converged
    assert len(trace.iterates) == 1
    assert trace.final_gap == pytest.approx(3.0, abs=1e-4)


@pytest.fixture(scope="module")
def unit_weight_trace():
    return minimize_gap_over_convex(constant(1.0), 10.0, OptimizeOptions(seed=3, **FAST))


def test_optimizer_descends(unit_weight_trace):
    gaps = unit_weight_trace.gaps
    assert np.all(np.diff(gaps) <= 1e-12)
    assert all(it.step > 0 for it in unit_weight_trace.iterates[1:])


def test_optimizer_iterates_stay_feasible(unit_weight_trace):
    for it in unit_weight_trace.iterates:
        check_class(it.V.knots, it.V.values, ConvexPotential(10.0))
        assert it.V.min() == 0.0  # anchored: constant weight makes the gap shift invariant


def test_optimizer_recovers_lavine(unit_weight_trace):
    t = unit_weight_trace
    assert t.converged
    assert t.final_gap <= 3.0 + 1e-3
    assert variation(t.final) <= 1e-3
    assert len(t.final.knots) == 33


def test_optimizer_with_variable_weight_keeps_level():
    # no anchoring: shifting V changes the gap when w is not constant
    t = minimize_gap_over_convex(affine(1.0, 1.0), 10.0, OptimizeOptions(max_iters=5, grid=Grid(300)))
    assert np.all(np.diff(t.gaps) <= 1e-12)


# --- certificate ----------------------------------------------------------


def _flat_trace(level: float = 0.0, bump: float = 0.0) -> OptimizeTrace:
    knots = uniform_knots(5)
    values = np.full(5, level)
    values[0] += bump
    V = make_piecewise_linear(knots, values, ConvexPotential(10.0))
    return OptimizeTrace([Iterate(V, 1.0, 0.0, 0.0)], V, True)


def test_certificate_condition_not_met():
    c = constancy_certificate(affine(1.0, 1.0), _flat_trace())
    assert not c.condition_holds
    assert c.verdict == Verdict.CONDITION_NOT_MET
    assert c.threshold == pytest.approx(5 * np.pi)


def test_certificate_condition_arithmetic():
    c = constancy_certificate(affine(0.2, 5.0), _flat_trace())
    assert c.threshold == pytest.approx(3.14159265, abs=1e-8)
    assert c.condition_holds and c.verdict == Verdict.CONSTANT


def test_certificate_flags_non_constant():
    c = constancy_certificate(affine(0.1, 2.0), _flat_trace(bump=0.5))
    assert c.verdict == Verdict.NON_CONSTANT
    assert c.variation == pytest.approx(0.5)


def test_certificate_tolerance_is_relative_to_mean():
    trace = _flat_trace(level=9.0, bump=0.005)
    assert mean_value(trace.final) > 9.0
    assert constancy_certificate(affine(0.1, 2.0), trace).verdict == Verdict.CONSTANT


@pytest.mark.parametrize("w", [affine(0.0, 2.0), affine(-0.1, 2.0), constant(2.0)])
def test_certificate_rejects_non_increasing_weight(w):
    with pytest.raises(ValidationError):
        constancy_certificate(w, _flat_trace())


# --- critical point residual ----------------------------------------------


def test_residual_vanishes_for_unit_weight(grid2000):
    assert abs(critical_point_residual(0.0, constant(1.0), grid2000)) < 1e-8


def test_residual_is_gap_slope(grid2000):
    w = affine(1.0, 20.0)
    d = 1e-4
    fd = (gap(affine(d, 0.0), w, grid2000) - gap(affine(-d, 0.0), w, grid2000)) / (2 * d)
    assert critical_point_residual(0.0, w, grid2000) == pytest.approx(fd, rel=1e-4)


def test_residual_rejects_negative_slope(grid500):
    with pytest.raises(ValidationError):
        critical_point_residual(-1.0, constant(1.0), grid500)


def test_lavine_floor_on_random_convex(grid500):
    for seed in range(20):
        assert lavine_floor(sample_random_convex(seed, 10.0), grid500) >= -1e-3


def test_linear_potential_lowers_gap_for_weakly_increasing_weight(grid2000):
    # for w = 0.1 x + 2 the slope of a -> gap(a x) is negative at a = 0 and
    # vanishes near a = 0.084; the shooting oracle confirms the lower gap
    from scipy.optimize import brentq

    from oracles import pruefer_eigenvalue

    w = affine(0.1, 2.0)
    assert critical_point_residual(0.0, w, grid2000) < -5e-3
    a0 = brentq(lambda a: critical_point_residual(a, w, grid2000), 1e-6, 0.1)
    assert 0.08 < a0 < 0.09

    def oracle_gap(V):
        return pruefer_eigenvalue(2, V, w, -5.0, 60.0) - pruefer_eigenvalue(1, V, w, -5.0, 60.0)

    drop = oracle_gap(constant(0.0)) - oracle_gap(affine(a0, 0.0))
    assert drop == pytest.approx(gap(0.0, w, grid2000) - gap(affine(a0, 0.0), w, grid2000), abs=1e-5)
    assert drop > 3e-4
