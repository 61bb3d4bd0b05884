"""Operator and scalar-DtN tests against closed-form and high-precision oracles."""

import math

import mpmath as mp
import numpy as np
import pytest

from dtncompress.errors import (
    EigenvalueCollisionError,
    NearPoleError,
    SemidefiniteOperatorError,
)
from dtncompress.operators import (
    DtnSpec,
    SpectralIntervals,
    branch_sqrt,
    build_operator,
    count_real_poles,
    dtn_scalar,
    locate_resonances,
)

H150 = 1.0 / 150.0


# -- branch of the square root --------------------------------------------------


def continued_sqrt(target):
    """Oracle: follow the root from +1 to ``target`` along a path through the
    closed upper half plane, picking the nearer root at each step."""
    r1 = abs(target)
    theta = np.angle(target)
    if theta < 0:
        theta += 2.0 * np.pi
    w = 1.0 + 0.0j
    for t in np.linspace(0.0, 1.0, 4001)[1:]:
        z = (r1**t) * np.exp(1j * theta * t)
        cand = np.sqrt(z)
        w = cand if abs(cand - w) <= abs(-cand - w) else -cand
    return w


def test_branch_sqrt_basic_values():
    assert branch_sqrt(4.0) == 2.0
    assert abs(branch_sqrt(-9.0) - 3j) < 1e-15
    arr = branch_sqrt(np.array([4.0, -9.0]))
    assert np.allclose(arr, [2.0, 3j])


def test_branch_sqrt_matches_path_continuation():
    rng = np.random.default_rng(2)
    targets = [2j, -2j, -9.0 + 0j, 5.0 - 1j, -3.0 + 4j]
    targets += list(rng.standard_normal(10) * 3 + 1j * rng.standard_normal(10) * 3)
    for z in targets:
        if abs(z) < 0.3:
            continue
        want = continued_sqrt(z)
        got = branch_sqrt(z)
        assert abs(got - want) < 1e-3 * abs(want), z
        assert got.imag >= -1e-12


# -- scalar DtN functions --------------------------------------------------------


def test_dtn_sqrt_and_const_values():
    assert abs(dtn_scalar(DtnSpec("sqrt"), 4.0) - 2.0) < 1e-15
    h = 0.1
    spec = DtnSpec("discrete_const", h=h)
    assert abs(dtn_scalar(spec, -4.0 / h**2)) < 1e-12


def test_dtn_const_squared_relation():
    # In either branch f_h(z)^2 = z + h^2 z^2 / 4 holds identically.
    rng = np.random.default_rng(4)
    h = 0.1
    spec = DtnSpec("discrete_const", h=h)
    zs = rng.standard_normal(200) * 300 + 1j * rng.standard_normal(200) * 300
    zs = np.concatenate([zs, np.linspace(-4 / h**2 + 1, 1e4, 100)])
    f = dtn_scalar(spec, zs)
    resid = np.abs(f**2 - zs - h**2 * zs**2 / 4)
    assert np.all(resid <= 1e-12 * (1 + np.abs(zs) ** 2))


def test_dtn_const_upper_half_plane_on_bounded_range():
    h = 0.05
    spec = DtnSpec("discrete_const", h=h)
    lam = np.linspace(-4 / h**2 + 1e-6, 1e5, 20001)
    f = dtn_scalar(spec, lam)
    assert np.all(f.imag >= -1e-13)


def test_dtn_variable_collapses_to_const_for_zero_offsets():
    rng = np.random.default_rng(6)
    h = 1.0 / 7.0
    const = DtnSpec("discrete_const", h=h)
    for n_layers in (1, 2, 5, 11):
        var = DtnSpec("discrete_variable", h=h, offsets=(0.0,) * n_layers)
        zs = rng.standard_normal(50) * 40 + 1j * (rng.standard_normal(50) * 40)
        zs = np.concatenate([zs, np.linspace(-4 / h**2 + 2, 5e3, 30)])
        a = dtn_scalar(var, zs)
        b = dtn_scalar(const, zs)
        assert np.all(np.abs(a - b) <= 1e-9 * (1 + np.abs(b)))


def layered_oracle(thickness, offset, lam):
    """Oracle: sinh/cosh transfer formula at 50 digits."""
    with mp.workdps(50):
        lam = mp.mpc(lam)
        s = mp.sqrt(lam + offset)
        if mp.im(s) < 0:
            s = -s
        rt = mp.sqrt(lam)
        if mp.im(rt) < 0:
            rt = -rt
        num = s * (s * mp.sinh(thickness * s) + rt * mp.cosh(thickness * s))
        den = s * mp.cosh(thickness * s) + rt * mp.sinh(thickness * s)
        return complex(num / den)


def test_dtn_layered_against_high_precision_oracle():
    for lam in [100.0, -50.0 + 3j, 7.0 + 0.5j, -200.0 + 0j, 0.5 + 0j]:
        want = layered_oracle(0.8, -30.0, lam)
        got = dtn_scalar(DtnSpec("continuous_layered", thickness=0.8, offset=-30.0), lam)
        assert abs(got - want) <= 1e-12 * abs(want), lam


def test_dtn_layered_special_values():
    got = dtn_scalar(DtnSpec("continuous_layered", thickness=1.0, offset=0.0), 7.0)
    assert abs(got - math.sqrt(7)) < 1e-13
    # deep-layer regime: tanh saturates and the layer root takes over
    got = dtn_scalar(DtnSpec("continuous_layered", thickness=5.0, offset=-9.0), 100.0)
    assert abs(got - math.sqrt(91)) < 1e-12


def test_dtn_variable_pole_at_zero_is_signalled():
    spec = DtnSpec("discrete_variable", h=0.2, offsets=(3.0, -1.0))
    with pytest.raises(NearPoleError):
        dtn_scalar(spec, 0.0)


def test_dtn_spec_validation_and_hashing():
    with pytest.raises(ValueError):
        DtnSpec("nope")
    with pytest.raises(ValueError):
        DtnSpec("discrete_const")
    with pytest.raises(ValueError):
        DtnSpec("discrete_variable", h=0.1, offsets=())
    with pytest.raises(ValueError):
        DtnSpec("continuous_layered", thickness=-1.0, offset=2.0)
    a = DtnSpec("discrete_variable", h=0.1, offsets=[1, 2])
    b = DtnSpec("discrete_variable", h=0.1, offsets=(1.0, 2.0))
    assert a == b and hash(a) == hash(b)


# -- resonance counting ----------------------------------------------------------


def test_count_real_poles_reference_cases():
    assert count_real_poles(5.0, -9.0) == 5
    assert count_real_poles(5.0, 9.0) == 0
    assert locate_resonances(5.0, 9.0).size == 0
    with pytest.raises(ValueError):
        count_real_poles(0.0, -9.0)


def test_count_real_poles_dense_scan_oracle():
    # Oracle: brute-force sign-change count on a million-point grid.
    t, c = math.pi, -1.0
    ymax = math.sqrt(-c)
    ys = np.linspace(0.0, ymax, 1_000_002)[1:-1]
    vals = ys * np.cos(t * ys) + np.sqrt(-c - ys * ys) * np.sin(t * ys)
    signs = np.sign(vals)
    signs = signs[signs != 0]
    want = int(np.sum(signs[:-1] * signs[1:] < 0))
    assert count_real_poles(t, c) == want
    assert want in (1, 2)


def test_real_pole_bracket_property():
    rng = np.random.default_rng(12)
    for _ in range(200):
        t = float(rng.uniform(0.05, 8.0))
        cap = min(100.0, (40.0 / t) ** 2)
        c = -float(rng.uniform(0.1, cap))
        count = count_real_poles(t, c)
        cells = int(t * math.sqrt(-c) / math.pi)
        assert count in (cells, cells + 1), (t, c)
        lam = locate_resonances(t, c)
        assert lam.size == count
        assert np.all(lam > 0) and np.all(lam < -c)


# -- operators -------------------------------------------------------------------


def neumann_eigs(n, h, kinf):
    j = np.arange(n)
    return 4.0 / h**2 * np.sin(j * np.pi / (2 * n)) ** 2 - kinf**2


def dirichlet_eigs(n, h, kinf):
    j = np.arange(1, n + 1)
    return 4.0 / h**2 * np.sin(j * np.pi / (2 * (n + 1))) ** 2 - kinf**2


def test_neumann1d_reference_intervals():
    op = build_operator("neumann1d", n=150, h=H150, kinf=15.0)
    want = np.sort(neumann_eigs(150, H150, 15.0))
    assert np.allclose(op.eigenvalues, want, atol=1e-7)
    iv = op.spectral_intervals()
    assert abs(iv.a1 + 225.0) < 1e-8
    assert abs(iv.b1 + 67.18) < 0.01
    assert abs(iv.a2 - 21.52) < 0.01
    assert abs(iv.b2 - 8.98e4) < 50.0


def test_dirichlet1d_waveguide_eigenvalue():
    op = build_operator("dirichlet1d", n=149, h=H150, kinf=14.0)
    want = np.sort(dirichlet_eigs(149, H150, 14.0))
    assert np.allclose(op.eigenvalues, want, atol=1e-7)
    target = 4.0 * 150**2 * math.sin(5 * math.pi / 300) ** 2 - 196.0
    assert abs(target - 50.5) < 0.02
    assert np.abs(op.eigenvalues - target).min() < 1e-7


def test_kron2d_reference_intervals():
    op = build_operator("kron2d", n=150 * 150, h=H150, kinf=15.0)
    w = 4.0 * 150**2 * np.sin(np.arange(150) * np.pi / 300) ** 2
    grid = (w[:, None] + w[None, :]) - 225.0
    assert np.allclose(np.sort(grid.ravel()), op.eigenvalues, atol=1e-6)
    iv = op.spectral_intervals()
    assert abs(iv.a1 + 225.0) < 1e-7
    assert abs(iv.b1 + 27.7) < 0.1
    assert abs(iv.a2 - 21.5) < 0.1
    assert abs(iv.b2 - 1.80e5) < 300.0


def test_apply_agrees_with_spectral_route():
    rng = np.random.default_rng(21)
    ops = [
        build_operator("neumann1d", n=40, h=0.1, kinf=3.0),
        build_operator("dirichlet1d", n=37, h=0.1, kinf=3.0),
        build_operator("kron2d", n=15 * 15, h=0.2, kinf=2.0),
        build_operator("diagonal", diagonal=np.concatenate([-rng.uniform(1, 9, 6), rng.uniform(1, 9, 6)])),
    ]
    for op in ops:
        v = rng.standard_normal(op.size) + 1j * rng.standard_normal(op.size)
        direct = op.apply(v)
        spectral = op.apply_spectral_values(op.spectral_points, v)
        assert np.linalg.norm(direct - spectral) <= 1e-11 * op.spectral_radius * np.linalg.norm(v)


def dense_kron_matrix(side, h, kinf):
    stencil = 2.0 * np.eye(side) - np.eye(side, k=1) - np.eye(side, k=-1)
    stencil[0, 0] = stencil[-1, -1] = 1.0
    eye = np.eye(side)
    return (np.kron(stencil, eye) + np.kron(eye, stencil)) / h**2 - kinf**2 * np.eye(side * side)


@pytest.mark.parametrize("side", [3, 16])
def test_kron2d_matches_dense_eigendecomposition(side):
    h, kinf = 0.25, 1.5
    op = build_operator("kron2d", n=side * side, h=h, kinf=kinf)
    dense = dense_kron_matrix(side, h, kinf)
    rng = np.random.default_rng(side)
    v = rng.standard_normal(side * side)
    assert np.linalg.norm(op.apply(v) - dense @ v) <= 1e-11 * np.abs(dense).max() * np.linalg.norm(v)
    w, q = np.linalg.eigh(dense)
    fw = branch_sqrt(w)
    want = q @ (fw * (q.T @ v))
    got = op.apply_function(DtnSpec("sqrt"), v)
    assert np.linalg.norm(got - want) <= 1e-12 * np.linalg.norm(want) * 100


def test_apply_function_sqrt_on_diagonal():
    op = build_operator("diagonal", diagonal=[4.0, 9.0])
    got = op.apply_function(DtnSpec("sqrt"), np.array([1.0, 1.0]))
    assert np.allclose(got, [2.0, 3.0], atol=1e-14)


def test_apply_function_round_trip_inverse_values():
    op = build_operator("neumann1d", n=30, h=0.05, kinf=4.0)
    spec = DtnSpec("discrete_const", h=0.05)
    rng = np.random.default_rng(33)
    v = rng.standard_normal(30)
    w = op.apply_function(spec, v)
    vals = dtn_scalar(spec, op.spectral_points)
    back = op.apply_spectral_values(1.0 / vals, w)
    assert np.linalg.norm(back - v) <= 1e-11 * np.linalg.norm(v)


def test_apply_function_cache_keyed_by_value_equality():
    op = build_operator("diagonal", diagonal=[-4.0, 9.0])
    v = np.array([1.0, 2.0])
    a = op.apply_function(DtnSpec("discrete_variable", h=0.1, offsets=[1.0, 2.0]), v)
    b = op.apply_function(DtnSpec("discrete_variable", h=0.1, offsets=(1, 2)), v)
    assert np.array_equal(a, b)


def test_solve_shifted_basic_and_collision():
    op = build_operator("diagonal", diagonal=[1.0, 2.0])
    got = op.solve_shifted(0.0, np.array([1.0, 2.0]))
    assert np.allclose(got, [1.0, 1.0], atol=1e-14)
    with pytest.raises(EigenvalueCollisionError):
        op.solve_shifted(2.0, np.array([1.0, 1.0]))


def test_solve_shifted_residual():
    rng = np.random.default_rng(41)
    op = build_operator("diagonal", diagonal=rng.standard_normal(6) * 5)
    rhs = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    xi = 0.3 + 0.2j
    x = op.solve_shifted(xi, rhs)
    assert np.linalg.norm(op.apply(x) - xi * x - rhs) <= 1e-10 * np.linalg.norm(rhs)


def test_solve_shifted_residual_on_stencil_kind():
    rng = np.random.default_rng(43)
    op = build_operator("neumann1d", n=25, h=0.2, kinf=1.0)
    rhs = rng.standard_normal(25)
    x = op.solve_shifted(-2.0 + 1j, rhs)
    assert np.linalg.norm(op.apply(x) - (-2.0 + 1j) * x - rhs) <= 1e-10 * np.linalg.norm(rhs)


def test_spectral_intervals_semidefinite_signal():
    op = build_operator("diagonal", diagonal=[1.0, 2.0, 3.0])
    with pytest.raises(SemidefiniteOperatorError):
        op.spectral_intervals()
    with pytest.raises(ValueError):
        SpectralIntervals(-2.0, 1.0, 3.0, 4.0)
