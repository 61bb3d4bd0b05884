"""Iterative rational approximation of matrix functions times a vector.

Finds a type (n, n-1) rational function r minimizing the relative misfit
||F v - r(A) v|| / ||F v|| for a Hermitian operator A and a black-box
matrix function F.  Each sweep expands a rational Krylov space with the
current pole guesses, projects F v onto it, and relocates the poles
through the small dense pencil of the space; starting all poles at
infinity makes the first sweep a polynomial fit.

The fitted function is kept in its rational Krylov representation (pencil
plus coefficient vector); evaluation runs the associated three-term-style
scalar recurrence rather than forming numerator and denominator, which is
the numerically safe form for the ill-separated poles these fits produce.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .errors import (
    ClusteredPolesError,
    EigenvalueCollisionError,
    LuckyBreakdownError,
    NearPoleError,
    NonFiniteMisfitError,
    ReduciblePencilError,
    SingularPencilError,
)
from .numerics import POLE_AT_INFINITY, finite_part, is_infinite, smallest_singular_vector
from .rkspace import Pencil, expand, read_poles, rotate_starting_vector, sort_poles


@dataclasses.dataclass(frozen=True)
class Rkfun:
    """A type (n, n-1) rational function in rational Krylov form.

    ``pencil`` is the (n+1) x n Hessenberg pair of the fitting space and
    ``coeffs`` the coordinates of the fitted vector in its orthonormal
    basis, taken against the normalized training vector; ``norm_v``
    records the training vector norm used at fit time.
    """

    pencil: Pencil
    coeffs: np.ndarray
    norm_v: float

    @property
    def order(self) -> int:
        return self.pencil.order

    def poles(self) -> np.ndarray:
        """All n poles; exactly one is the infinity marker for these fits."""
        return read_poles(self.pencil)

    def __call__(self, lam):
        return eval_rkfun(self, lam)


@dataclasses.dataclass
class FitReport:
    """Per-iteration record of one fit."""

    misfit_history: list
    best_misfit: float
    iterations: int
    final_poles: np.ndarray
    flags: list

    def converged_within(self, tol: float) -> bool:
        return self.best_misfit <= tol


def rkfit(op, apply_f, v, degree: int, maxit: int = 10, tol: float = 0.0,
          stagnation: float = 0.01):
    """Fit a type (degree, degree-1) rational function to F acting on v.

    Parameters
    ----------
    op : Operator
    apply_f : callable
        Black-box product w -> F @ w.
    v : array_like
        Training vector (nonzero); results are normalized against it.
    degree : int
        Rational type is (degree, degree-1); requires op.size >= degree+2.
    maxit : int
        Maximum pole-relocation sweeps.
    tol : float
        Early-out misfit target (0 disables).
    stagnation : float
        Stop when the relative misfit improvement falls below this.

    Returns
    -------
    (Rkfun, FitReport)
        The iterate of smallest misfit, never a later worse one.

    Raises
    ------
    NonFiniteMisfitError
        If a projection produces non-finite values (e.g., F overflowed).
    """
    if degree < 1:
        raise ValueError("degree must be at least 1")
    v = np.asarray(v, dtype=complex).ravel()
    norm_v = float(np.linalg.norm(v))
    if norm_v == 0:
        raise ValueError("training vector must be nonzero")
    g = np.asarray(apply_f(v), dtype=complex).ravel() / norm_v
    norm_g = float(np.linalg.norm(g))
    if not np.isfinite(norm_g) or norm_g == 0:
        raise NonFiniteMisfitError("F v is zero or non-finite; nothing to fit")

    poles = np.full(degree - 1, POLE_AT_INFINITY)
    history: list[float] = []
    flags: list[str] = []
    best = None

    for it in range(maxit):
        try:
            dec = expand(op, v, np.append(poles, POLE_AT_INFINITY))
        except (LuckyBreakdownError, EigenvalueCollisionError) as exc:
            flags.append(f"iteration {it + 1}: {exc}")
            break
        w = dec.basis
        proj = w.conj().T @ g
        misfit = float(np.linalg.norm(g - w @ proj)) / norm_g
        if not np.isfinite(misfit):
            raise NonFiniteMisfitError(f"misfit became non-finite at iteration {it + 1}")
        history.append(misfit)
        if best is None or misfit < best[0]:
            best = (misfit, dec.pencil, proj)
        if misfit <= tol:
            break
        if len(history) > 1 and history[-2] - misfit < stagnation * history[-2]:
            break
        if it == maxit - 1:
            break

        # Pole relocation: the space vector whose image is worst captured
        # determines the rotated pencil, whose lower part holds new poles.
        v_n, sub = dec.truncate()
        fv = np.column_stack([np.asarray(apply_f(v_n[:, j])).ravel() for j in range(degree)])
        outside = fv - w @ (w.conj().T @ fv)
        _, c = smallest_singular_vector(outside)
        try:
            rotated, _ = rotate_starting_vector(sub, c)
            poles = _nudge_off_spectrum(op, sort_poles(read_poles(rotated)))
        except (ReduciblePencilError, SingularPencilError) as exc:
            flags.append(f"iteration {it + 1} relocation: {exc}")
            break

    misfit, pencil, proj = best
    fun = Rkfun(pencil, proj, norm_v)
    report = FitReport(
        misfit_history=history,
        best_misfit=misfit,
        iterations=len(history),
        final_poles=fun.poles(),
        flags=flags,
    )
    return fun, report


def _nudge_off_spectrum(op, poles: np.ndarray) -> np.ndarray:
    """Push relocated poles a hair off eigenvalues they landed on.

    Once an eigenvalue is captured ("deflated") by the space, relocation
    parks a pole essentially on it, and the next sweep's shifted solve
    would be singular.  Displacing such a pole by 1e-10 of the spectral
    radius keeps the space unchanged for fitting purposes while leaving
    the solve two orders of magnitude clear of its collision guard.
    """
    out = poles.copy()
    guard = 1e-11 * op.spectral_radius
    bump = 1e-10 * op.spectral_radius
    for i, xi in enumerate(out):
        if not np.isfinite(xi):
            continue
        if np.abs(op.spectral_points - xi).min() < guard:
            shift = bump if xi.imag >= 0 else -bump
            out[i] = complex(xi.real, xi.imag + shift)
    return out


def eval_rkfun(r: Rkfun, lam):
    """Evaluate the rational function at scalar or array arguments.

    Runs the Hessenberg recurrence for the basis-function vector; columns
    whose recurrence denominator degenerates (evaluation on a pole of the
    basis) fall back to a least squares solve of the defining relation.
    Pencils with entries below the first subdiagonal (grid pencils are the
    one case in this package) skip the recurrence and solve the defining
    relation at every point.

    Raises
    ------
    NearPoleError
        If the value is non-finite or the defining relation is
        unsatisfiable at that point (exact pole hit).
    """
    hs, ks = r.pencil.hs, r.pencil.ks
    n = r.pencil.order
    z = np.asarray(lam, dtype=complex)
    scalar = z.ndim == 0
    z = np.atleast_1d(z).ravel()

    values = np.zeros(z.size, dtype=complex)
    needs_fallback = np.zeros(z.size, dtype=bool)
    if np.any(np.tril(hs, -2)) or np.any(np.tril(ks, -2)):
        needs_fallback[:] = True
    else:
        omega = np.zeros((n + 1, z.size), dtype=complex)
        omega[0] = 1.0
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            for j in range(n):
                col = hs[: j + 1, j, None] - z[None, :] * ks[: j + 1, j, None]
                num = -np.sum(omega[: j + 1] * col, axis=0)
                den = hs[j + 1, j] - z * ks[j + 1, j]
                den_scale = abs(hs[j + 1, j]) + np.abs(z) * abs(ks[j + 1, j])
                needs_fallback |= np.abs(den) <= 1e-13 * den_scale
                omega[j + 1] = num / den
            values = omega.T @ r.coeffs
        needs_fallback |= ~np.isfinite(values)

    for i in np.nonzero(needs_fallback)[0]:
        values[i] = _eval_least_squares(hs, ks, r.coeffs, z[i])
    if not np.all(np.isfinite(values)):
        raise NearPoleError("rational function value is non-finite (pole hit)")
    return complex(values[0]) if scalar else values


def _eval_least_squares(hs, ks, coeffs, z):
    n1 = hs.shape[0]
    system = np.vstack([np.eye(1, n1, dtype=complex), (hs - z * ks).T])
    rhs = np.zeros(system.shape[0], dtype=complex)
    rhs[0] = 1.0
    omega, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    if np.linalg.norm(system @ omega - rhs) > 1e-8:
        raise NearPoleError(f"evaluation point {z} sits on a pole")
    return omega @ coeffs


def poles_and_residues(r: Rkfun):
    """Finite poles with residues via tiny contour means.

    The residue at xi is the average of (z - xi) r(z) over 32 equispaced
    points on a circle of radius 1e-4 (1 + |xi|); for simple poles the
    equispaced mean is exponentially accurate in the point count.

    Raises
    ------
    ClusteredPolesError
        If two poles are closer than 10 contour radii, where the contour
        means stop isolating individual poles.
    """
    poles = finite_part(r.poles())
    radii = 1e-4 * (1.0 + np.abs(poles))
    for i in range(poles.size):
        for j in range(i + 1, poles.size):
            if abs(poles[i] - poles[j]) < 10.0 * max(radii[i], radii[j]):
                raise ClusteredPolesError(
                    f"poles {poles[i]} and {poles[j]} are too close for residue extraction"
                )
    angles = np.exp(2j * np.pi * np.arange(32) / 32)
    out = []
    for xi, rho in zip(poles, radii):
        zs = xi + rho * angles
        out.append((xi, np.mean((zs - xi) * eval_rkfun(r, zs))))
    return out
