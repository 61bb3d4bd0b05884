"""Tests for the pencil-to-grid conversion and the three-point solver."""

import mpmath as mp
import numpy as np
import pytest

from dtncompress.errors import ConversionError, NearPoleError
from dtncompress.gridgen import (
    FdGrid,
    cf_eval,
    eval_extended,
    fd_solve,
    grid_pencil,
    rkfun_from_grid,
    to_contfrac,
)
from dtncompress.numerics import extended_precision
from dtncompress.operators import DtnSpec, build_operator
from dtncompress.rkfit import Rkfun, eval_rkfun, rkfit
from dtncompress.rkspace import Pencil


def linear_rkfun(slope, intercept):
    # pencil of the basis (1, lam): single polynomial Krylov step
    pencil = Pencil(np.array([[0.0], [1.0]]), np.array([[1.0], [0.0]]))
    return Rkfun(pencil, np.array([intercept, slope], dtype=complex), 1.0)


def test_linear_function_converts_exactly():
    grid, trace = to_contfrac(linear_rkfun(2.0, 5.0))
    assert grid.order == 1
    assert abs(grid.dual[0] - 2.0) <= 1e-14
    assert abs(grid.primal[0] - 0.2) <= 1e-14
    assert abs(cf_eval(grid, 3.0) - 11.0) <= 1e-12
    assert trace.structural_residual <= 1e-25
    assert len(trace.snapshots) == 7


def test_cf_eval_at_zero_collapses_to_series_resistance():
    # every dual level reads hhat*0 + 1/x, so the ladder telescopes to the
    # plain series sum of the primal steps
    grid = FdGrid([2.0, 4.0, 8.0], [1.0, 1.0, 1.0])
    assert abs(cf_eval(grid, 0.0) - 1.0 / (2.0 + 4.0 + 8.0)) <= 1e-15


def test_cf_eval_vector_argument_matches_scalar():
    grid = FdGrid([1.0 + 1.0j, 2.0], [2.0, 1.0 - 0.5j])
    pts = np.array([0.5, -3.0 + 0.25j, 100.0])
    vec = cf_eval(grid, pts)
    for i, p in enumerate(pts):
        assert vec[i] == cf_eval(grid, complex(p))


def test_cf_eval_signals_exact_pole():
    # r = lam + 1/(1 + 1/(lam + 1)) has a pole at lam = -2
    grid = FdGrid([1.0, 1.0], [1.0, 1.0])
    assert np.isfinite(cf_eval(grid, -2.0 + 1e-3))
    with pytest.raises(NearPoleError):
        cf_eval(grid, -2.0)


def test_grid_validation():
    with pytest.raises(ValueError):
        FdGrid([1.0, 0.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        FdGrid([1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        FdGrid([], [])
    with pytest.raises(ValueError):
        FdGrid([np.inf], [1.0])


def test_grid_pencil_null_vector_encodes_the_relations():
    # (b, u_0=1, u_1, ...) from the ladder solves must annihilate H - lam K
    rng = np.random.default_rng(3)
    grid = FdGrid(
        rng.standard_normal(4) + 1j * rng.uniform(0.2, 1.0, 4),
        rng.standard_normal(4) + 1j * rng.uniform(0.2, 1.0, 4),
    )
    hs, ks = grid_pencil(grid)
    # fd_solve works per eigenvalue, so a repeated-entry diagonal operator
    # gives the scalar ladder solution regardless of spectral ordering
    lam = 0.7
    op = build_operator("diagonal", diagonal=[lam, lam])
    b, interior = fd_solve(grid, op, np.ones(2))
    omega = np.concatenate([[b[0]], [1.0], interior[:, 0]])
    resid = omega @ (hs - lam * ks)
    assert np.max(np.abs(resid)) <= 1e-12 * max(1.0, np.abs(omega).max())


def test_rkfun_from_grid_matches_cf_eval():
    rng = np.random.default_rng(7)
    grid = FdGrid(
        rng.standard_normal(5) + 1j * rng.uniform(0.2, 1.0, 5),
        rng.standard_normal(5) + 1j * rng.uniform(0.2, 1.0, 5),
    )
    fun = rkfun_from_grid(grid)
    pts = rng.standard_normal(40) + 1j * rng.standard_normal(40)
    a = eval_rkfun(fun, pts)
    b = cf_eval(grid, pts)
    assert np.max(np.abs(a - b) / np.abs(b)) <= 1e-10


def test_handwritten_steps_recovered_in_extended_precision():
    # steps whose reciprocals are exact doubles, so the grid pencil and
    # hence the reconstructed rational function are exact; conversion at 50
    # digits must give the steps back far below double resolution
    primal = np.array([1.0 + 1.0j, 2.0, -1.0 + 1.0j])
    dual = np.array([2.0, 1.0 + 2.0j, -3.0 + 1.0j])
    fun = rkfun_from_grid(FdGrid(primal, dual))
    grid, trace = to_contfrac(fun, digits=50)
    with extended_precision(50):
        for got, want in zip(trace.primal_exact, primal):
            assert abs(got - mp.mpc(want)) <= mp.mpf("1e-20") * (1 + abs(want))
        for got, want in zip(trace.dual_exact, dual):
            assert abs(got - mp.mpc(want)) <= mp.mpf("1e-20") * (1 + abs(want))
    assert np.max(np.abs(grid.primal - primal)) <= 1e-13
    assert np.max(np.abs(grid.dual - dual)) <= 1e-13


def test_conversion_rejects_constant_fit():
    pencil = Pencil(np.array([[0.0], [1.0]]), np.array([[1.0], [0.0]]))
    fun = Rkfun(pencil, np.array([3.0, 0.0], dtype=complex), 1.0)
    with pytest.raises(ConversionError):
        to_contfrac(fun)


def test_conversion_rejects_polynomial_of_wrong_type():
    # lam^2 is type (2, 0), not (2, 1): no ladder of order 2 exists
    op = build_operator("diagonal", diagonal=[-4.0, -3.0, -2.0, 2.0, 3.0, 4.0])
    lam = op.spectral_points
    rng = np.random.default_rng(5)
    fun, report = rkfit(
        op, lambda w: op.apply_spectral_values(lam**2, w), rng.standard_normal(6), degree=2
    )
    assert report.best_misfit <= 1e-12
    with pytest.raises(ConversionError):
        to_contfrac(fun)


def make_waveguide_fit(degree, seed=11):
    h = 1.0 / 150.0
    op = build_operator("neumann1d", n=150, h=h, kinf=15.0)
    spec = DtnSpec("discrete_const", h=h)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(op.size)
    fun, report = rkfit(op, lambda w: op.apply_function(spec, w), v, degree=degree)
    return op, fun, report


def spectral_sample_points(op, per_interval=100):
    iv = op.spectral_intervals()
    neg = -np.logspace(np.log10(-iv.b1), np.log10(-iv.a1), per_interval)
    pos = np.logspace(np.log10(iv.a2), np.log10(iv.b2), per_interval)
    return np.concatenate([neg, pos])


def test_roundtrip_on_transverse_operator_fit():
    op, fun, report = make_waveguide_fit(10)
    assert report.best_misfit <= 1e-6
    grid, trace = to_contfrac(fun, digits=60)
    assert trace.structural_residual <= 1e-25
    pts = spectral_sample_points(op)
    a = eval_rkfun(fun, pts)
    b = cf_eval(grid, pts)
    assert np.max(np.abs(a - b) / np.abs(a)) <= 1e-8


def test_more_digits_do_not_move_the_steps():
    _, fun, _ = make_waveguide_fit(6)
    g40, _ = to_contfrac(fun, digits=40)
    g90, _ = to_contfrac(fun, digits=90)
    assert np.max(np.abs(g40.primal - g90.primal) / np.abs(g90.primal)) <= 1e-10
    assert np.max(np.abs(g40.dual - g90.dual) / np.abs(g90.dual)) <= 1e-10


def test_fd_solve_scalar_layer():
    grid = FdGrid([0.25], [3.0 + 1.0j])
    op = build_operator("diagonal", diagonal=[2.0, 5.0])
    u0 = np.array([1.0, -2.0])
    b, interior = fd_solve(grid, op, u0)
    assert interior.shape == (0, 2)
    want = (grid.dual[0] * np.array([2.0, 5.0]) + 4.0) * u0
    assert np.max(np.abs(b - want)) <= 1e-13


def test_fd_solve_matches_spectral_application():
    op = build_operator("kron2d", n=50 * 50, h=1.0 / 50.0, kinf=15.0)
    spec = DtnSpec("discrete_const", h=1.0 / 50.0)
    rng = np.random.default_rng(13)
    v = rng.standard_normal(op.size)
    fun, report = rkfit(op, lambda w: op.apply_function(spec, w), v, degree=10)
    assert report.best_misfit <= 1e-6
    grid, _ = to_contfrac(fun, digits=60)
    u0 = rng.standard_normal(op.size)
    b, interior = fd_solve(grid, op, u0)
    ref = op.apply_spectral_values(eval_rkfun(fun, op.spectral_points), u0)
    assert np.linalg.norm(b - ref) <= 1e-8 * np.linalg.norm(ref)
    # absorbing layer: amplitude collapses across the ten grid cells
    assert np.linalg.norm(interior[-1]) < 1e-2 * np.linalg.norm(u0)


def test_fd_solve_singular_layer_is_signalled():
    # real steps make the interior operator real symmetric; pick u0 so the
    # system matrix hits an exact eigenvalue of A
    grid = FdGrid([1.0, 1.0], [1.0, 1.0])
    # interior system for n=2 is the scalar -(1/h1 + 1/h2 + lam hhat1);
    # singular at lam = -2
    op = build_operator("diagonal", diagonal=[-2.0, 1.0])
    with pytest.raises(NearPoleError):
        fd_solve(grid, op, np.ones(2))


def test_extended_eval_agrees_with_double_on_benign_fit():
    op, fun, _ = make_waveguide_fit(6)
    pts = spectral_sample_points(op, per_interval=25)
    a = eval_rkfun(fun, pts)
    b = eval_extended(fun, pts)
    assert np.max(np.abs(a - b) / np.abs(a)) <= 1e-12
    one = eval_extended(fun, pts[0])
    assert isinstance(one, complex)
    assert abs(one - b[0]) <= 1e-14 * abs(one)


def test_extended_eval_handles_grid_pencils():
    grid = FdGrid([0.5, 0.25 + 0.1j], [2.0, 1.0 - 0.3j])
    fun = rkfun_from_grid(grid)
    pts = np.array([0.7, -3.0, 10.0 + 1.0j])
    a = cf_eval(grid, pts)
    b = eval_extended(fun, pts)
    assert np.max(np.abs(a - b) / np.abs(a)) <= 1e-12


def test_extended_eval_pole_hit_is_signalled():
    # basis denominator 1 - z/2 vanishes exactly at z = 2
    hs = np.array([[0.3], [1.0]], dtype=complex)
    ks = np.array([[0.0], [0.5]], dtype=complex)
    fun = Rkfun(Pencil(hs, ks), np.array([1.0, 1.0], dtype=complex), 1.0)
    with pytest.raises(NearPoleError):
        eval_extended(fun, 2.0)
