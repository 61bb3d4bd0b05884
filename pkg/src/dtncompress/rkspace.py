"""Rational Krylov decompositions A V K = V H with prescribed poles.

A decomposition is held as an orthonormal basis V of N x (m+1) together
with an unreduced upper Hessenberg pencil (H, K) of size (m+1) x m.  The
poles of the underlying rational functions are the generalized eigenvalues
of the lower m x m part of the pencil; poles at infinity are ordinary
polynomial Krylov steps and carry the infinity marker.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .errors import LuckyBreakdownError, ReduciblePencilError
from .numerics import (
    POLE_AT_INFINITY,
    generalized_eigenvalues,
    is_infinite,
    orthonormalize,
    smallest_singular_vector,
)


@dataclasses.dataclass(frozen=True)
class Pencil:
    """Unreduced upper Hessenberg pencil (H, K) of size (m+1) x m."""

    hs: np.ndarray
    ks: np.ndarray

    def __post_init__(self):
        hs = np.atleast_2d(np.asarray(self.hs, dtype=complex))
        ks = np.atleast_2d(np.asarray(self.ks, dtype=complex))
        if hs.shape != ks.shape or hs.shape[0] != hs.shape[1] + 1:
            raise ValueError("pencil must be a matrix pair of shape (m+1, m)")
        object.__setattr__(self, "hs", hs)
        object.__setattr__(self, "ks", ks)
        for j in range(self.order):
            if abs(hs[j + 1, j]) == 0.0 and abs(ks[j + 1, j]) == 0.0:
                raise ReduciblePencilError(f"shared zero subdiagonal in column {j}")

    @property
    def order(self) -> int:
        return self.hs.shape[1]

    def lower(self):
        """The lower m x m submatrices whose generalized eigenvalues are the poles."""
        return self.hs[1:, :], self.ks[1:, :]


@dataclasses.dataclass(frozen=True)
class Decomposition:
    """Orthonormal basis plus pencil satisfying A V K = V H."""

    basis: np.ndarray
    pencil: Pencil
    poles: np.ndarray
    starting_vector: np.ndarray

    def residual(self, op) -> float:
        """Frobenius norm of A V K - V H (direct check of the defining relation)."""
        vk = self.basis @ self.pencil.ks
        avk = np.column_stack([op.apply(vk[:, j]) for j in range(vk.shape[1])]) if vk.shape[1] else vk
        return float(np.linalg.norm(avk - self.basis @ self.pencil.hs))

    def truncate(self):
        """Leading-n part: first n basis columns with the n x (n-1) subpencil.

        Valid because Hessenberg columns j < n-1 only touch basis columns
        up to j+1.
        """
        n = self.pencil.order
        return self.basis[:, :n], Pencil(self.pencil.hs[:n, : n - 1], self.pencil.ks[:n, : n - 1])


def sort_poles(poles) -> np.ndarray:
    """Canonical pole order: finite ones by (real, imag), infinities last."""
    poles = np.asarray(poles, dtype=complex)
    finite = np.sort_complex(poles[~is_infinite(poles)])
    n_inf = int(np.sum(is_infinite(poles)))
    return np.concatenate([finite, np.full(n_inf, POLE_AT_INFINITY)])


def expand(op, v: np.ndarray, poles) -> Decomposition:
    """Rational Krylov expansion (Ruhe's RKS recurrence) with given poles.

    Each infinite pole contributes a polynomial step A q_j, each finite
    pole a shifted solve (A - xi)^{-1} q_j, always continued from the last
    basis vector.  The resulting pencil columns encode the recurrence so
    that A V K = V H holds to working precision.

    Raises
    ------
    LuckyBreakdownError
        If the space saturates early (the new direction is dependent).
    EigenvalueCollisionError
        From shifted solves with a pole on the spectrum.
    """
    poles = np.asarray(poles, dtype=complex)
    m = poles.size
    v = np.asarray(v, dtype=complex).ravel()
    if v.size <= m + 1:
        raise ValueError("operator dimension must exceed the number of poles + 1")
    nrm = np.linalg.norm(v)
    if nrm == 0:
        raise ValueError("starting vector must be nonzero")

    basis = np.zeros((v.size, m + 1), dtype=complex)
    basis[:, 0] = v / nrm
    hs = np.zeros((m + 1, m), dtype=complex)
    ks = np.zeros((m + 1, m), dtype=complex)
    for j, pole in enumerate(poles):
        if is_infinite(pole):
            w = op.apply(basis[:, j])
        else:
            w = op.solve_shifted(pole, basis[:, j])
        q, coeffs, beta = orthonormalize(basis[:, : j + 1], w)
        basis[:, j + 1] = q
        if is_infinite(pole):
            # A q_j = V [coeffs; beta]
            ks[j, j] = 1.0
            hs[: j + 1, j] = coeffs
            hs[j + 1, j] = beta
        else:
            # (A - xi) V [coeffs; beta] = q_j
            ks[: j + 1, j] = coeffs
            ks[j + 1, j] = beta
            hs[: j + 2, j] = pole * ks[: j + 2, j]
            hs[j, j] += 1.0
    return Decomposition(basis, Pencil(hs, ks), poles.copy(), v)


def read_poles(pencil: Pencil) -> np.ndarray:
    """Poles of the decomposition: generalized eigenvalues of the lower part."""
    lo_h, lo_k = pencil.lower()
    if pencil.order == 0:
        return np.empty(0, dtype=complex)
    return generalized_eigenvalues(lo_h, lo_k)


def rotate_starting_vector(pencil: Pencil, c: np.ndarray):
    """Re-express a decomposition so its starting vector becomes V @ c.

    Given the n x (n-1) pencil of a decomposition A V K = V H and a unit
    vector c, returns a pencil (Hhat, Khat) and a unitary Q with Q e1 = c
    such that A (V Q) Khat = (V Q) Hhat.  The poles of the new pencil are
    the generalized eigenvalues of the c-orthogonal compression of (H, K);
    the pencil itself is rebuilt by running the rational Krylov recurrence
    in coordinate space, where shifted solves become consistent least
    squares problems with the rectangular pencil.

    Raises
    ------
    ReduciblePencilError
        If a rebuild step is inconsistent or the coordinate space
        saturates early (the rotated decomposition would be reducible).
    """
    hs, ks = pencil.hs, pencil.ks
    n = hs.shape[0]
    c = np.asarray(c, dtype=complex).ravel()
    if c.size != n:
        raise ValueError("rotation vector length must match the basis size")
    if abs(np.linalg.norm(c) - 1.0) > 1e-10:
        raise ValueError("rotation vector must have unit norm")

    # A starting vector that already is e1 (up to phase) needs only a
    # unimodular row scaling.
    if np.linalg.norm(c - c[0] * np.eye(n, 1).ravel()) <= 1e-14:
        q = np.eye(n, dtype=complex)
        q[0, 0] = c[0]
        return Pencil(q.conj().T @ hs, q.conj().T @ ks), q

    # Compression onto the orthogonal complement of c gives the new poles.
    full = np.linalg.qr(c.reshape(-1, 1), mode="complete")[0]
    comp = full[:, 1:]
    new_poles = sort_poles(generalized_eigenvalues(comp.conj().T @ hs, comp.conj().T @ ks)) if n > 1 else np.empty(0, complex)

    qs = [c]
    hhat = np.zeros((n, n - 1), dtype=complex)
    khat = np.zeros((n, n - 1), dtype=complex)
    for j, pole in enumerate(new_poles):
        built = np.column_stack(qs)
        rect = ks if is_infinite(pole) else hs - pole * ks
        # Consistency means the continuation vector lies in range(rect);
        # measure that distance directly.  The lstsq backward residual
        # grows with cond(rect) even for consistent steps (widely spread
        # relocated poles routinely push cond past 1e10).
        u, off_range = _continuation_vector(rect, built)
        if off_range > 1e-8:
            raise ReduciblePencilError(
                f"rotation step {j + 1} is inconsistent with the pencil range"
            )
        y, *_ = np.linalg.lstsq(rect, u, rcond=None)
        w = hs @ y if is_infinite(pole) else ks @ y
        try:
            qv, coeffs, beta = orthonormalize(built, w)
        except LuckyBreakdownError as exc:
            raise ReduciblePencilError(
                f"rotated coordinate space saturated at step {j + 1}"
            ) from exc
        qs.append(qv)
        u_proj = built.conj().T @ u
        if is_infinite(pole):
            khat[: j + 1, j] = u_proj
            hhat[: j + 1, j] = coeffs
            hhat[j + 1, j] = beta
        else:
            khat[: j + 1, j] = coeffs
            khat[j + 1, j] = beta
            hhat[: j + 2, j] = pole * khat[: j + 2, j]
            hhat[: j + 1, j] += u_proj
    q = np.column_stack(qs)
    return Pencil(hhat, khat), q


def _continuation_vector(rect, built):
    """A unit vector in the span of the built basis lying (as nearly as
    possible) in the range of the rectangular matrix ``rect``, together
    with its distance to that range.

    Prefers the last basis vector, the analogue of the standard rational
    Krylov continuation; otherwise picks the span direction closest to the
    range through a small SVD.  ``built`` has orthonormal columns, so the
    returned vector has unit norm and the distance is both absolute and
    relative.
    """
    range_basis = np.linalg.qr(rect, mode="reduced")[0]
    last = built[:, -1]
    resid = float(np.linalg.norm(last - range_basis @ (range_basis.conj().T @ last)))
    if resid <= 1e-10:
        return last.copy(), resid
    gap = built - range_basis @ (range_basis.conj().T @ built)
    sigma, direction = smallest_singular_vector(gap)
    return built @ direction, float(sigma)
