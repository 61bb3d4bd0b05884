"""Conversion of fitted rational functions into complex three-point grids.

A type (n, n-1) rational function held in rational Krylov form is turned
into the 2n steps of an equivalent three-point finite-difference scheme:
primal steps h_1..h_n between grid nodes and dual steps hhat_0..hhat_{n-1}
for the staggered control volumes.  The steps evaluate the function as a
Stieltjes continued fraction and realize it as an absorbing grid layer
terminated by a homogeneous Dirichlet condition.

The conversion itself is a sequence of six pencil transformations (basis
changes of the underlying rational Krylov space that pin the fitted vector
and the training vector as the two leading basis columns).  These
transformations can be severely ill conditioned, so they run entirely in
mpmath arbitrary precision and only the final steps are rounded back to
double.
"""

from __future__ import annotations

import dataclasses

import mpmath as mp
import numpy as np

from .errors import ConversionError, NearPoleError
from .numerics import (
    _mp_conj_transpose,
    extended_precision,
    to_extended,
    two_sided_lanczos,
)
from .rkfit import Rkfun
from .rkspace import Pencil

#: Pencil entries that should be structural zeros may not exceed this
#: fraction of the largest entry after any transformation step.
STRUCTURAL_TOL = mp.mpf("1e-25")


@dataclasses.dataclass(frozen=True)
class FdGrid:
    """Grid steps of a three-point scheme equivalent to a rational function.

    Parameters
    ----------
    primal : (n,) complex ndarray
        Steps h_1..h_n between consecutive grid nodes.
    dual : (n,) complex ndarray
        Steps hhat_0..hhat_{n-1} of the staggered control volumes.

    The represented function is

        r(lam) = hhat_0 lam + 1/(h_1 + 1/(hhat_1 lam + ... + 1/h_n))

    and equals the boundary response b/u_0 of the scheme in `fd_solve`.
    """

    primal: np.ndarray
    dual: np.ndarray

    def __post_init__(self):
        primal = np.asarray(self.primal, dtype=complex).ravel()
        dual = np.asarray(self.dual, dtype=complex).ravel()
        if primal.size == 0 or primal.size != dual.size:
            raise ValueError("need n >= 1 primal and equally many dual steps")
        for name, steps in (("primal", primal), ("dual", dual)):
            if not np.all(np.isfinite(steps)) or np.any(steps == 0):
                raise ValueError(f"{name} steps must be finite and nonzero")
        object.__setattr__(self, "primal", primal)
        object.__setattr__(self, "dual", dual)

    @property
    def order(self) -> int:
        return self.primal.size


@dataclasses.dataclass
class ConversionTrace:
    """Extended-precision record of one pencil-to-grid conversion.

    ``snapshots[j]`` holds the mpmath pencil pair after step j (j = 0..6),
    ``eta`` the tridiagonal-plus-corner matrix entering the scaling step,
    ``ell``/``rho`` the left and right scaling factors (1-based, so
    ``ell[0]`` and ``rho[0]`` are unused), and ``primal_exact`` /
    ``dual_exact`` the grid steps before rounding to double.
    """

    digits: int
    snapshots: list
    eta: mp.matrix
    ell: list
    rho: list
    primal_exact: list
    dual_exact: list
    structural_residual: float


def _max_abs(*mats) -> mp.mpf:
    out = mp.mpf(0)
    for m in mats:
        for i in range(m.rows):
            for j in range(m.cols):
                out = max(out, abs(m[i, j]))
    return out


class _PatternCheck:
    """Asserts structural zeros and keeps the worst relative magnitude."""

    def __init__(self):
        self.worst = mp.mpf(0)

    def zero(self, value, scale, where: str):
        rel = abs(value) / scale if scale > 0 else abs(value)
        self.worst = max(self.worst, rel)
        if rel > STRUCTURAL_TOL:
            raise ConversionError(
                f"entry at {where} should be a structural zero but has relative "
                f"magnitude {mp.nstr(rel, 5)}; the conversion lost too much "
                f"precision (raise `digits`) or the fit admits no ladder form"
            )


def to_contfrac(r: Rkfun, digits: int = 40):
    """Convert a rational function in pencil form into grid-step form.

    The pencil and coefficient vector are lifted to ``digits`` significant
    digits and pushed through six structure-revealing transformations; the
    scaling factors of the last step yield the primal and dual grid steps.

    Parameters
    ----------
    r : Rkfun
        Fit of full type (n, n-1); needs a nonzero trailing coefficient
        block, otherwise no grid of order n exists.
    digits : int
        Working precision of the conversion.  The defaults suffice for the
        fits produced here; raise it if a structural-zero check trips.

    Returns
    -------
    (FdGrid, ConversionTrace)

    Raises
    ------
    ConversionError
        If a pivot vanishes, a structural zero fails its threshold, or the
        resulting steps are not finite and nonzero in double precision.
    SeriousBreakdownError
        From the two-sided Lanczos stage.  Retryable: refitting with a
        different training vector usually moves the breakdown away.
    """
    n = r.order
    with extended_precision(digits):
        hs = to_extended(r.pencil.hs)
        ks = to_extended(r.pencil.ks)
        c = to_extended(np.asarray(r.coeffs, dtype=complex).reshape(-1, 1))
        check = _PatternCheck()
        snapshots = []

        # Step 0: change basis so that column one of the (implicit) basis is
        # the fitted vector r(A)v and column two is v itself.  The basis
        # change matrix is [c | e_1 | unit vectors], dropping the unit
        # vector where c is largest so the matrix stays invertible.
        m_star = max(range(1, n + 1), key=lambda i: abs(c[i, 0]))
        if abs(c[m_star, 0]) == 0:
            raise ConversionError(
                "coefficient vector has no component beyond the training "
                "vector; the fit is constant and admits no grid form"
            )
        x = mp.zeros(n + 1, n + 1)
        for i in range(n + 1):
            x[i, 0] = c[i, 0]
        x[0, 1] = 1
        for col, i in enumerate((i for i in range(1, n + 1) if i != m_star), start=2):
            x[i, col] = 1
        xinv = x ** -1
        hs, ks = xinv * hs, xinv * ks
        snapshots.append((hs.copy(), ks.copy()))

        # Step 1: right-multiply by the inverse of the lower n x n block of
        # K, which becomes the identity; the (1,1) entry of K vanishes
        # automatically because Av already leaves the space.
        try:
            rinv = ks[1:, :] ** -1
        except ZeroDivisionError:
            raise ConversionError(
                "lower part of K is singular; the pole set admits no grid "
                "(this happens when a relocated pole escaped to infinity)"
            ) from None
        hs, ks = hs * rinv, ks * rinv
        scale = _max_abs(hs, ks)
        check.zero(ks[0, 0], scale, "K(1,1) after step 1")
        ks[0, 0] = mp.mpc(0)
        for i in range(1, n + 1):
            for j in range(n):
                want = 1 if i - 1 == j else 0
                check.zero(ks[i, j] - want, scale, f"K({i + 1},{j + 1}) after step 1")
                ks[i, j] = mp.mpc(want)
        snapshots.append((hs.copy(), ks.copy()))

        # Step 2: zero the rest of the first row of K by adding multiples
        # of rows 3..n+1 (row j+2 carries the unit entry of column j+1, so
        # the first two basis columns stay untouched).
        for j in range(1, n):
            f = ks[0, j]
            for col in range(n):
                hs[0, col] -= f * hs[j + 1, col]
            ks[0, j] = mp.mpc(0)
        snapshots.append((hs.copy(), ks.copy()))

        # Step 3: zero the first row of H beyond the corner by column
        # operations; the corner pivot is nonzero for any fit of full type.
        scale = _max_abs(hs, ks)
        pivot = hs[0, 0]
        if abs(pivot) <= STRUCTURAL_TOL * scale:
            raise ConversionError(
                "corner pivot of H vanished; the fit degenerates to type "
                "(n, n) or lower and has no grid of this order"
            )
        for j in range(1, n):
            f = hs[0, j] / pivot
            for i in range(n + 1):
                hs[i, j] -= f * hs[i, 0]
                ks[i, j] -= f * ks[i, 0]
            hs[0, j] = mp.mpc(0)
        snapshots.append((hs.copy(), ks.copy()))

        # Step 4: repair the second row of K (the column operations above
        # smeared it) with the same kind of row additions as step 2.
        for j in range(1, n):
            f = ks[1, j]
            for col in range(n):
                hs[1, col] -= f * hs[j + 1, col]
            ks[1, j] = mp.mpc(0)
        scale = _max_abs(hs, ks)
        for i in range(n + 1):
            for j in range(n):
                want = 1 if i - 1 == j else 0
                check.zero(ks[i, j] - want, scale, f"K({i + 1},{j + 1}) after step 4")
                ks[i, j] = mp.mpc(want)
        snapshots.append((hs.copy(), ks.copy()))

        # Step 5: tridiagonalize the lower n x n block of H with two-sided
        # Lanczos started at e_1 on both sides.  Biorthogonality against
        # the left start keeps the first rows of both transformed matrices
        # structured, which the checks below confirm.
        sub = hs[1:, :]
        e1 = mp.zeros(n, 1)
        e1[0, 0] = 1
        zl, zr, _ = two_sided_lanczos(sub, e1, e1)
        zlh = _mp_conj_transpose(zl)
        lower_h = zlh * sub * zr
        top = hs[0, :] * zr
        hs = mp.zeros(n + 1, n)
        hs[0, :] = top
        hs[1:, :] = lower_h
        ks = mp.zeros(n + 1, n)
        ks[1:, :] = zlh * zr
        scale = _max_abs(hs, ks)
        for i in range(1, n + 1):
            for j in range(n):
                want = 1 if i - 1 == j else 0
                check.zero(ks[i, j] - want, scale, f"K({i + 1},{j + 1}) after step 5")
                ks[i, j] = mp.mpc(want)
        for j in range(1, n):
            check.zero(hs[0, j], scale, f"H(1,{j + 1}) after step 5")
            hs[0, j] = mp.mpc(0)
        for j in range(n):
            for i in range(j + 3, n + 1):
                check.zero(hs[i, j], scale, f"H({i + 1},{j + 1}) after step 5")
                hs[i, j] = mp.mpc(0)
            for i in range(1, j):
                check.zero(hs[i, j], scale, f"H({i + 1},{j + 1}) after step 5")
                hs[i, j] = mp.mpc(0)
        snapshots.append((hs.copy(), ks.copy()))

        # Step 6: read off diagonal scalings L = diag(1, 1, l_3, ...) and
        # R = diag(rho_1, ..., rho_n) matching the scaled pencil to the
        # grid pattern, equating entries down each column in turn.
        eta = hs.copy()

        def ent(i, j):
            return eta[i - 1, j - 1]

        ell = [mp.mpc(1)] * (n + 2)  # 1-based; ell[1] = ell[2] = 1
        rho = [mp.mpc(0)] * (n + 1)
        steps = [mp.mpc(0)] * (n + 1)
        try:
            rho[1] = 1 / ent(1, 1)
            steps[1] = -1 / (ent(2, 1) * rho[1])
            if n >= 2:
                ell[3] = 1 / (ent(3, 1) * steps[1] * rho[1])
            for j in range(2, n + 1):
                rho[j] = 1 / (ell[j] * ent(j, j) * steps[j - 1])
                steps[j] = -1 / (1 / steps[j - 1] + ell[j + 1] * ent(j + 1, j) * rho[j])
                if j <= n - 1:
                    ell[j + 2] = 1 / (ent(j + 2, j) * steps[j] * rho[j])
        except ZeroDivisionError:
            raise ConversionError(
                "a scaling denominator vanished in the final matching step; "
                "the fit has no Stieltjes continued fraction of this order"
            ) from None
        duals = [ell[j + 1] * rho[j] for j in range(1, n + 1)]

        lmat = mp.eye(n + 1)
        for k in range(3, n + 2):
            lmat[k - 1, k - 1] = ell[k]
        rmat = mp.zeros(n, n)
        for j in range(1, n + 1):
            rmat[j - 1, j - 1] = rho[j]
        hs, ks = lmat * hs * rmat, lmat * ks * rmat
        want_h, want_k = _grid_pencil_mp(steps[1:], duals)
        scale = _max_abs(hs, ks)
        for i in range(n + 1):
            for j in range(n):
                check.zero(hs[i, j] - want_h[i, j], scale, f"H({i + 1},{j + 1}) after step 6")
                check.zero(ks[i, j] - want_k[i, j], scale, f"K({i + 1},{j + 1}) after step 6")
        snapshots.append((want_h, want_k))

        trace = ConversionTrace(
            digits=int(digits),
            snapshots=snapshots,
            eta=eta,
            ell=ell[1:],
            rho=rho[1:],
            primal_exact=steps[1:],
            dual_exact=duals,
            structural_residual=float(check.worst),
        )
        primal = np.array([complex(s) for s in steps[1:]])
        dual = np.array([complex(d) for d in duals])
    try:
        grid = FdGrid(primal, dual)
    except ValueError as exc:
        raise ConversionError(f"grid steps unusable in double precision: {exc}") from None
    return grid, trace


def _grid_pencil_mp(primal, dual):
    """The grid pencil pattern with exact mpmath step values."""
    n = len(primal)
    hinv = [1 / s for s in primal]
    hs = mp.zeros(n + 1, n)
    ks = mp.zeros(n + 1, n)
    hs[0, 0] = 1
    hs[1, 0] = -hinv[0]
    if n >= 2:
        hs[2, 0] = hinv[0]
    for j in range(1, n):
        hs[j, j] = hinv[j - 1]
        hs[j + 1, j] = -hinv[j - 1] - hinv[j]
        if j + 2 <= n:
            hs[j + 2, j] = hinv[j]
    for j in range(n):
        ks[j + 1, j] = dual[j]
    return hs, ks


def grid_pencil(grid: FdGrid):
    """Pencil (H, K) of the grid's own rational Krylov decomposition.

    The basis order is (b, u_0, ..., u_{n-1}): column j states the
    three-point relation centered at node j, with the boundary flux b
    entering the first relation only.

    Returns
    -------
    (hs, ks) : complex ndarrays of shape (n+1, n)
    """
    n = grid.order
    hinv = 1.0 / grid.primal
    hs = np.zeros((n + 1, n), dtype=complex)
    ks = np.zeros((n + 1, n), dtype=complex)
    hs[0, 0] = 1.0
    hs[1, 0] = -hinv[0]
    if n >= 2:
        hs[2, 0] = hinv[0]
    for j in range(1, n):
        hs[j, j] = hinv[j - 1]
        hs[j + 1, j] = -hinv[j - 1] - hinv[j]
        if j + 2 <= n:
            hs[j + 2, j] = hinv[j]
    ks[np.arange(1, n + 1), np.arange(n)] = grid.dual
    return hs, ks


def rkfun_from_grid(grid: FdGrid) -> Rkfun:
    """Rebuild the grid's rational function in pencil form.

    Swapping the two leading rows of the grid pencil makes u_0 the leading
    basis entry (the normalization of the evaluation recurrences) and b
    the second, so the coefficient vector is the second unit vector.  The
    result is meant for evaluation and re-conversion; the swapped pencil is
    not upper Hessenberg, so evaluation runs through the pointwise solve.
    """
    hs, ks = grid_pencil(grid)
    hs[[0, 1]] = hs[[1, 0]]
    ks[[0, 1]] = ks[[1, 0]]
    coeffs = np.zeros(grid.order + 1, dtype=complex)
    coeffs[1] = 1.0
    return Rkfun(Pencil(hs, ks), coeffs, 1.0)


def cf_eval(grid: FdGrid, lam, near_pole_floor: float = 1e-300):
    """Evaluate the grid's rational function as a continued fraction.

    Bottom-up ladder evaluation: start at the Dirichlet termination 1/h_n
    and alternate dual (lam-dependent) and primal levels.  A denominator
    below ``near_pole_floor`` or a non-finite result raises NearPoleError,
    mirroring the analytic impedance functions.
    """
    z = np.asarray(lam, dtype=complex)
    scalar = z.ndim == 0
    z = np.atleast_1d(z).ravel()
    n = grid.order
    t = grid.dual[n - 1] * z + 1.0 / grid.primal[n - 1]
    for j in range(n - 1, 0, -1):
        if np.abs(t).min() <= near_pole_floor:
            raise NearPoleError("continued fraction hit a zero denominator")
        t = grid.primal[j - 1] + 1.0 / t
        if np.abs(t).min() <= near_pole_floor:
            raise NearPoleError("continued fraction hit a zero denominator")
        t = grid.dual[j - 1] * z + 1.0 / t
    if not np.all(np.isfinite(t)):
        raise NearPoleError("continued fraction value is non-finite (pole hit)")
    return complex(t[0]) if scalar else t


def eval_extended(r: Rkfun, lam, digits: int = 40):
    """Evaluate a rational function in extended precision.

    Solves the same defining relation as the double-precision evaluator,
    but in mpmath, rounding once at the end.  Meant as a reference when
    verifying conversions: for fits whose pencil entries span many orders
    of magnitude the double recurrence can lose digits to cancellation
    even where the function itself is perfectly well conditioned.

    Parameters
    ----------
    r : Rkfun
    lam : scalar or array_like
        Evaluation points.
    digits : int
        Working precision.  Inputs are double, so the default leaves a
        wide margin over the target accuracy of the reference.

    Raises
    ------
    NearPoleError
        If an evaluation point sits exactly on a pole of the basis.
    """
    z = np.asarray(lam, dtype=complex)
    scalar = z.ndim == 0
    pts = np.atleast_1d(z).ravel()
    n = r.pencil.order
    hs_d, ks_d = r.pencil.hs, r.pencil.ks
    hessenberg = not (np.any(np.tril(hs_d, -2)) or np.any(np.tril(ks_d, -2)))
    values = np.empty(pts.size, dtype=complex)
    with extended_precision(digits):
        hs = to_extended(hs_d)
        ks = to_extended(ks_d)
        coeffs = [mp.mpc(c) for c in r.coeffs]
        for idx, point in enumerate(pts):
            zp = mp.mpc(point)
            omega = [mp.mpc(1)] + [mp.mpc(0)] * n
            if hessenberg:
                for j in range(n):
                    den = hs[j + 1, j] - zp * ks[j + 1, j]
                    if den == 0:
                        raise NearPoleError(
                            f"evaluation point {point} sits on a pole of the basis"
                        )
                    acc = mp.mpc(0)
                    for i in range(j + 1):
                        acc += omega[i] * (hs[i, j] - zp * ks[i, j])
                    omega[j + 1] = -acc / den
            else:
                # Square system: omega_0 = 1 stacked on the defining relation.
                system = mp.matrix(n + 1, n + 1)
                system[0, 0] = mp.mpc(1)
                for i in range(n):
                    for j in range(n + 1):
                        system[i + 1, j] = hs[j, i] - zp * ks[j, i]
                rhs = mp.matrix(n + 1, 1)
                rhs[0, 0] = mp.mpc(1)
                try:
                    sol = mp.lu_solve(system, rhs)
                except ZeroDivisionError as exc:
                    raise NearPoleError(
                        f"evaluation point {point} sits on a pole of the basis"
                    ) from exc
                omega = [sol[i, 0] for i in range(n + 1)]
            values[idx] = complex(mp.fsum(w * c for w, c in zip(omega, coeffs)))
    if not np.all(np.isfinite(values)):
        raise NearPoleError("rational function value is non-finite (pole hit)")
    return complex(values[0]) if scalar else values


def fd_solve(grid: FdGrid, op, u0):
    """Drive the three-point scheme with boundary data and read the flux.

    Solves, in the spectral coordinates of ``op``, the interior relations

        hhat_j^{-1} [h_{j+1}^{-1}(u_{j+1} - u_j) - h_j^{-1}(u_j - u_{j-1})]
            = A u_j,     j = 1..n-1,  with u_n = 0,

    for given u_0, and returns the boundary flux b from the j = 0 relation,
    so that b = r(A) u_0 with r the grid's rational function.  Each
    eigenvalue decouples into an (n-1) x (n-1) tridiagonal system, solved
    by elimination vectorized across the spectrum.

    Returns
    -------
    b : (N,) ndarray
    interior : (n-1, N) ndarray
        The layer vectors u_1..u_{n-1} in physical coordinates.

    Raises
    ------
    NearPoleError
        If an elimination pivot vanishes (an eigenvalue of A sits on a
        resonance of the truncated grid).
    """
    n = grid.order
    lam = op.spectral_points
    u0 = np.asarray(u0, dtype=complex)
    u0_hat = op.to_spectral(u0)
    hinv = 1.0 / grid.primal

    if n == 1:
        interior_hat = np.zeros((0, lam.size), dtype=complex)
    else:
        m = n - 1
        diag = np.empty((m, lam.size), dtype=complex)
        rhs = np.zeros((m, lam.size), dtype=complex)
        for k in range(m):
            diag[k] = -(hinv[k] + hinv[k + 1] + lam * grid.dual[k + 1])
        rhs[0] = -hinv[0] * u0_hat
        # Elimination without pivoting; sub/super entries are the constant
        # reciprocals hinv, only the diagonal varies across the spectrum.
        for k in range(1, m):
            if np.abs(diag[k - 1]).min() <= 1e-250:
                raise NearPoleError("grid system is singular at an eigenvalue of A")
            w = hinv[k] / diag[k - 1]
            diag[k] -= w * hinv[k]
            rhs[k] -= w * rhs[k - 1]
        if np.abs(diag[m - 1]).min() <= 1e-250:
            raise NearPoleError("grid system is singular at an eigenvalue of A")
        interior_hat = np.empty((m, lam.size), dtype=complex)
        interior_hat[m - 1] = rhs[m - 1] / diag[m - 1]
        for k in range(m - 2, -1, -1):
            interior_hat[k] = (rhs[k] - hinv[k + 1] * interior_hat[k + 1]) / diag[k]

    u1_hat = interior_hat[0] if n > 1 else np.zeros_like(u0_hat)
    b_hat = grid.dual[0] * lam * u0_hat - hinv[0] * (u1_hat - u0_hat)
    b = op.from_spectral(b_hat)
    interior = np.array([op.from_spectral(row) for row in interior_hat]).reshape(
        n - 1, u0.size
    )
    return b, interior
