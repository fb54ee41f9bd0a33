import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gapline import (
    Grid,
    SampledFunction,
    SolverError,
    ValidationError,
    assemble,
    endpoint_derivative,
    quadrature,
    richardson_eigenvalues,
    sample_random_concave,
    sample_random_convex,
    solve,
    solve_lowest_two,
)
from gapline.errors import GridMismatch

from oracles import const, dense_discrete_eigenvalues, pruefer_eigenvalue


def sampled(f, grid):
    return SampledFunction.from_callable(f, grid)


# --- grid -----------------------------------------------------------------


@pytest.mark.parametrize("n", [1, 3, 16, 2000])
def test_grid_spacing_and_nodes(n):
    g = Grid(n)
    assert g.h * (n + 1) == pytest.approx(np.pi, abs=1e-14)
    assert len(g.nodes) == n
    assert np.all(np.diff(g.nodes) > 0)
    assert g.nodes[0] > 0 and g.nodes[-1] < np.pi


def test_grid_rejects_nonpositive_size():
    with pytest.raises(ValidationError):
        Grid(0)


def test_sampled_function_length_checked():
    with pytest.raises(ValidationError):
        SampledFunction(Grid(4), np.ones(3), (0.0, 0.0))


# --- assemble -------------------------------------------------------------


def test_assemble_identity_stencil():
    g = Grid(3)
    op = assemble(sampled(const(0.0), g), sampled(const(1.0), g), g)
    np.testing.assert_allclose(op.stiffness_diag, 2 / g.h**2)
    np.testing.assert_allclose(op.stiffness_offdiag, -1 / g.h**2)
    np.testing.assert_allclose(op.weight_diag, 1.0)
    assert len(op.stiffness_offdiag) == 2


def test_assemble_constant_potential_shifts_diagonal():
    g = Grid(3)
    op = assemble(sampled(const(2.5), g), sampled(const(1.0), g), g)
    np.testing.assert_allclose(op.stiffness_diag, 2 / g.h**2 + 2.5)


def test_assemble_samples_weight():
    g = Grid(3)
    op = assemble(sampled(const(0.0), g), sampled(lambda x: x + 1, g), g)
    np.testing.assert_allclose(op.weight_diag, [1 + np.pi / 4, 1 + np.pi / 2, 1 + 3 * np.pi / 4])


def test_assemble_rejects_nonpositive_weight():
    g = Grid(8)
    with pytest.raises(ValidationError):
        assemble(sampled(const(0.0), g), sampled(lambda x: x - 1, g), g)


def test_assemble_rejects_grid_mismatch():
    with pytest.raises(GridMismatch):
        assemble(sampled(const(0.0), Grid(8)), sampled(const(1.0), Grid(9)), Grid(8))


# --- eigenvalues ----------------------------------------------------------


def test_classical_eigenpairs(grid2000):
    p1, p2 = solve(0.0, 1.0, grid2000)
    assert p1.lam == pytest.approx(1.0, abs=1e-5)
    assert p2.lam == pytest.approx(4.0, abs=1e-5)
    x = grid2000.nodes
    np.testing.assert_allclose(p1.values, np.sqrt(2 / np.pi) * np.sin(x), atol=1e-5)
    np.testing.assert_allclose(p2.values, np.sqrt(2 / np.pi) * np.sin(2 * x), atol=1e-5)


def test_discrete_eigenvalues_match_lapack():
    g = Grid(400)
    V = sample_random_convex(3, 10.0)
    w = sample_random_concave(4, 1.0, 3.0)
    p1, p2 = solve(V, w, g)
    ref = dense_discrete_eigenvalues(V, w, 400)
    np.testing.assert_allclose([p1.lam, p2.lam], ref, rtol=1e-11)


@pytest.mark.parametrize("c", [0.0, 3.0, 7.5])
def test_constant_potential_shifts_spectrum(grid2000, c):
    p1, p2 = solve(c, 1.0, grid2000)
    assert p1.lam == pytest.approx(1 + c, abs=1e-5)
    assert p2.lam == pytest.approx(4 + c, abs=1e-5)


def test_constant_weight_rescales(grid2000):
    p1, p2 = solve(0.0, 4.0, grid2000)
    assert p1.lam == pytest.approx(0.25, abs=1e-5)
    assert p2.lam == pytest.approx(1.0, abs=1e-5)


def test_affine_weight_against_shooting():
    w = lambda x: x + 20.0
    lam = richardson_eigenvalues(const(0.0), w, Grid(2000))
    for n, got in zip((1, 2), lam):
        ref = pruefer_eigenvalue(n, const(0.0), w, lo=0.0, hi=5.0)
        assert got == pytest.approx(ref, rel=5e-7)


def test_piecewise_linear_data_against_shooting():
    V = sample_random_convex(11, 10.0)
    w = sample_random_concave(12, 1.0, 3.0)
    lam = richardson_eigenvalues(V, w, Grid(2000))
    for n, got in zip((1, 2), lam):
        ref = pruefer_eigenvalue(n, V, w, lo=-1.0, hi=60.0)
        assert got == pytest.approx(ref, rel=1e-5)


def test_richardson_classical(grid2000):
    l1, l2 = richardson_eigenvalues(const(0.0), const(1.0), grid2000)
    assert abs(l1 - 1) < 1e-8 and abs(l2 - 4) < 1e-8


def test_convergence_order_is_two():
    sizes = [99, 199, 399, 799]
    hs = np.array([Grid(n).h for n in sizes])
    for k, exact in ((0, 1.0), (1, 4.0)):
        err = np.array([abs(solve(0.0, 1.0, Grid(n))[k].lam - exact) for n in sizes])
        orders = np.log(err[:-1] / err[1:]) / np.log(hs[:-1] / hs[1:])
        assert np.all((orders >= 1.9) & (orders <= 2.1)), orders


def test_solver_rejects_bad_tolerance():
    g = Grid(16)
    op = assemble(sampled(const(0.0), g), sampled(const(1.0), g), g)
    with pytest.raises(ValidationError):
        solve_lowest_two(op, g, tol=0.0)


def test_solver_needs_two_nodes():
    g = Grid(1)
    op = assemble(sampled(const(0.0), g), sampled(const(1.0), g), g)
    with pytest.raises((ValidationError, SolverError)):
        solve_lowest_two(op, g)


# --- quadrature and endpoint derivatives ----------------------------------


def test_quadrature_constant_and_affine(grid500):
    assert quadrature(sampled(const(1.0), grid500)) == pytest.approx(np.pi, abs=1e-12)
    assert quadrature(sampled(lambda x: x, grid500)) == pytest.approx(np.pi**2 / 2, abs=1e-12)


def test_quadrature_normalization(grid2000):
    p1, _ = solve(0.0, 1.0, grid2000)
    assert quadrature(p1.u**2) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("n, expected", [(1, -np.sqrt(2 / np.pi)), (2, 2 * np.sqrt(2 / np.pi))])
def test_endpoint_derivative_of_sines(n, expected):
    errs = []
    for size in (199, 399, 799):
        g = Grid(size)
        u = sampled(lambda x: np.sqrt(2 / np.pi) * np.sin(n * x), g)
        d0, dpi = endpoint_derivative(u, g)
        assert d0 == pytest.approx(n * np.sqrt(2 / np.pi), abs=1e-3)
        errs.append(abs(dpi - expected))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    np.testing.assert_allclose(ratios, 4.0, rtol=0.05)


def test_endpoint_derivative_needs_three_nodes():
    g = Grid(2)
    with pytest.raises(ValidationError):
        endpoint_derivative(sampled(np.sin, g), g)


def test_eigenpair_endpoint_derivatives(grid2000):
    p1, p2 = solve(0.0, 1.0, grid2000)
    c = np.sqrt(2 / np.pi)
    np.testing.assert_allclose(p1.derivative_at_endpoints, (c, -c), atol=1e-5)
    np.testing.assert_allclose(p2.derivative_at_endpoints, (2 * c, 2 * c), atol=1e-5)


# --- invariants over random data ------------------------------------------

seeds = st.integers(min_value=0, max_value=10_000)


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_eigenpair_invariants(seed):
    g = Grid(600)
    V = sample_random_convex(seed, 10.0)
    w = sample_random_concave(seed + 1, 1.0, 3.0)
    p1, p2 = solve(V, w, g)
    ws = w.sample(g)
    assert 0 < p1.lam < p2.lam
    assert (p1.index, p2.index) == (1, 2)
    assert quadrature(ws * p1.u**2) == pytest.approx(1.0, abs=1e-10)
    assert quadrature(ws * p2.u**2) == pytest.approx(1.0, abs=1e-10)
    assert abs(quadrature(ws * p1.u * p2.u)) < 1e-9
    assert p1.values[0] > 0 and p2.values[0] > 0
    assert p1.u.endpoint_values == (0.0, 0.0)
    for pair, changes in ((p1, 0), (p2, 1)):
        s = np.sign(pair.values)
        assert np.count_nonzero(s[:-1] * s[1:] < 0) == changes


@settings(max_examples=20, deadline=None)
@given(seeds, st.floats(min_value=-5.0, max_value=20.0))
def test_shift_covariance_for_unit_weight(seed, c):
    g = Grid(500)
    V = sample_random_convex(seed, 10.0)
    base = solve(V, 1.0, g)
    shifted = solve(V + c, 1.0, g)
    for a, b in zip(base, shifted):
        assert b.lam - a.lam == pytest.approx(c, abs=1e-8)


@settings(max_examples=15, deadline=None)
@given(seeds)
def test_rayleigh_consistency(seed):
    g = Grid(1000)
    V = sample_random_convex(seed, 10.0)
    w = sample_random_concave(seed + 7, 1.0, 3.0)
    Vs, ws = V.sample(g), w.sample(g)
    for pair in solve(V, w, g):
        full = pair.u.full_values
        du = np.diff(full) / g.h
        kinetic = float(np.sum(du**2) * g.h)
        rq = (kinetic + quadrature(Vs * pair.u**2)) / quadrature(ws * pair.u**2)
        assert rq == pytest.approx(pair.lam, abs=10 * g.h)
