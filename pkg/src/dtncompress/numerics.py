"""Dense linear-algebra kernels and the extended-precision substrate.

The pencils and projected matrices in this package never exceed a few tens
of rows and columns, so every factorization is dense and direct.  Double
precision (LAPACK through numpy/scipy) is the default; the two-sided
Lanczos also accepts ``mpmath`` matrices so that the ill-conditioned grid
conversion can run at a configurable number of digits.
"""

from __future__ import annotations

import mpmath as mp
import numpy as np
import scipy.linalg as sla

from .errors import LuckyBreakdownError, SeriousBreakdownError, SingularPencilError

#: Marker for a pole / generalized eigenvalue at infinity.
POLE_AT_INFINITY = complex(np.inf, 0.0)


def is_infinite(values):
    """Elementwise test for the at-infinity marker (works on scalars too)."""
    return np.isinf(np.asarray(values, dtype=complex))


def finite_part(values: np.ndarray) -> np.ndarray:
    """The finite entries of ``values``, order preserved."""
    values = np.asarray(values, dtype=complex)
    return values[~np.isinf(values)]


def orthonormalize(basis, vector, breakdown_tol: float = 1e-14):
    """Orthonormalize ``vector`` against the orthonormal columns of ``basis``.

    Modified Gram-Schmidt with one full reorthogonalization pass, which keeps
    Krylov bases orthonormal to working precision even for the strongly
    graded vectors produced by shifted solves.

    Parameters
    ----------
    basis : (N, m) ndarray or None
        Matrix with orthonormal columns; ``m`` may be zero.
    vector : (N,) ndarray
    breakdown_tol : float
        Residual norm below ``breakdown_tol`` times the input norm is
        declared a linear dependence.

    Returns
    -------
    q : (N,) ndarray
        Unit-norm vector orthogonal to all basis columns.
    coeffs : (m,) ndarray
        Projection coefficients so that ``vector = basis @ coeffs + norm*q``.
    norm : float
        Norm of the orthogonal residual.

    Raises
    ------
    LuckyBreakdownError
        If ``vector`` already lies in the span of the basis.
    """
    w = np.asarray(vector, dtype=complex).ravel()
    scale = float(np.linalg.norm(w))
    if basis is None:
        basis = np.empty((w.size, 0), dtype=complex)
    m = basis.shape[1]
    coeffs = np.zeros(m, dtype=complex)
    r = w.astype(complex, copy=True)
    for _ in range(2):
        for j in range(m):
            cj = np.vdot(basis[:, j], r)
            r -= cj * basis[:, j]
            coeffs[j] += cj
    norm = float(np.linalg.norm(r))
    if norm <= breakdown_tol * max(scale, np.finfo(float).tiny):
        raise LuckyBreakdownError(
            f"new direction is linearly dependent on the basis "
            f"(residual {norm:.3e} against input norm {scale:.3e})"
        )
    return r / norm, coeffs, norm


def smallest_singular_vector(matrix):
    """Smallest singular value of ``matrix`` with a right singular vector.

    Ties are broken by taking the last right singular vector as produced by
    the factorization.  For a wide matrix the returned value is 0 and the
    vector spans the null space.

    Returns
    -------
    sigma : float
    right_vector : (n,) ndarray, unit norm, with ``norm(M @ v) == sigma``.
    """
    a = np.atleast_2d(np.asarray(matrix, dtype=complex))
    # Full factors only for wide input (null-space rows of vh); for tall
    # input the reduced form has the same s and vh without the m x m U.
    _, s, vh = np.linalg.svd(a, full_matrices=a.shape[1] > a.shape[0])
    v = vh[-1].conj()
    sigma = float(s[-1]) if a.shape[1] <= a.shape[0] else 0.0
    return sigma, v


def generalized_eigenvalues(hs, ks, inf_ratio: float = 1e12) -> np.ndarray:
    """Generalized eigenvalues of the square pencil ``(hs, ks)``.

    Eigenvalues at infinity (the pencil-sense null directions of ``ks``) are
    reported as :data:`POLE_AT_INFINITY` so downstream code can treat them
    as first-class values.

    Raises
    ------
    SingularPencilError
        If ``det(hs - t*ks)`` vanishes identically (detected through
        vanishing QZ weight pairs).
    """
    hs = np.atleast_2d(np.asarray(hs, dtype=complex))
    ks = np.atleast_2d(np.asarray(ks, dtype=complex))
    if hs.shape != ks.shape or hs.shape[0] != hs.shape[1]:
        raise ValueError("pencil matrices must be square and of equal shape")
    m = hs.shape[0]
    if m == 0:
        return np.empty(0, dtype=complex)
    alpha, beta = sla.eigvals(hs, ks, homogeneous_eigvals=True)
    weight = np.hypot(np.abs(alpha), np.abs(beta))
    bad = ~np.isfinite(weight) | (weight <= 1e-280 * max(1.0, np.abs(hs).max(), np.abs(ks).max()))
    if bad.any():
        raise SingularPencilError(
            "pencil is singular: QZ produced an indeterminate eigenvalue pair"
        )
    out = np.empty(m, dtype=complex)
    infinite = np.abs(beta) * inf_ratio <= np.abs(alpha)
    out[infinite] = POLE_AT_INFINITY
    with np.errstate(divide="ignore", invalid="ignore"):
        out[~infinite] = alpha[~infinite] / beta[~infinite]
    return out


# -- two-sided Lanczos, generic over numpy / mpmath operands -----------------


def _np_ops(matrix):
    mh = matrix.conj().T

    return dict(
        n=matrix.shape[0],
        matvec=lambda x: matrix @ x,
        matvec_adj=lambda x: mh @ x,
        dotc=lambda u, v: np.vdot(u, v),
        norm=lambda v: float(np.linalg.norm(v)),
        conj=np.conj,
        sqrt=lambda z: complex(np.sqrt(complex(z))),
        column=lambda v: np.asarray(v, dtype=complex).ravel().copy(),
    )


def _mp_conj_transpose(matrix):
    out = mp.matrix(matrix.cols, matrix.rows)
    for i in range(matrix.rows):
        for j in range(matrix.cols):
            out[j, i] = mp.conj(matrix[i, j])
    return out


def _mp_ops(matrix):
    mh = _mp_conj_transpose(matrix)

    def dotc(u, v):
        return mp.fsum(mp.conj(u[i]) * v[i] for i in range(u.rows))

    def norm(v):
        return mp.sqrt(mp.fsum(abs(v[i]) ** 2 for i in range(v.rows)))

    return dict(
        n=matrix.rows,
        matvec=lambda x: matrix * x,
        matvec_adj=lambda x: mh * x,
        dotc=dotc,
        norm=norm,
        conj=mp.conj,
        sqrt=mp.sqrt,
        column=lambda v: v.copy(),
    )


def two_sided_lanczos(matrix, left_start, right_start, breakdown_tol=None):
    """Biorthogonal (two-sided) Lanczos tridiagonalization.

    Runs the full ``n`` steps on a square ``matrix``, producing bases
    ``zl, zr`` with ``zl^H @ zr = I`` and ``zl^H @ matrix @ zr`` tridiagonal.
    Operands may be numpy arrays (double precision) or ``mpmath`` matrices,
    in which case the current mp context precision is used throughout.

    Parameters
    ----------
    matrix : (n, n) ndarray or mpmath.matrix
    left_start, right_start : length-n vectors
        Must satisfy ``left^H @ right != 0``.
    breakdown_tol : float, optional
        Relative threshold on the biorthogonality inner products; defaults
        to 1e-13 for numpy operands and 1e-30 for mpmath operands.

    Returns
    -------
    zl, zr : (n, n) matrices of the same kind as ``matrix``
    tri : (n, n) tridiagonal matrix of the same kind

    Raises
    ------
    SeriousBreakdownError
        When an inner product between the running left and right residuals
        collapses below the threshold (including the starting pair).
    """
    use_mp = isinstance(matrix, mp.matrix)
    ops = _mp_ops(matrix) if use_mp else _np_ops(matrix)
    if breakdown_tol is None:
        breakdown_tol = mp.mpf("1e-30") if use_mp else 1e-13
    n = ops["n"]
    dotc, norm, conj, sqrt = ops["dotc"], ops["norm"], ops["conj"], ops["sqrt"]

    left = ops["column"](left_start)
    right = ops["column"](right_start)
    d0 = dotc(left, right)
    if abs(d0) <= breakdown_tol * norm(left) * norm(right):
        raise SeriousBreakdownError("starting vectors are (nearly) biorthogonal")
    v = right / norm(right)
    w = left / conj(dotc(left, v))

    vs, ws = [v], [w]
    alphas, betas, deltas = [], [], []
    for j in range(n):
        z = ops["matvec"](vs[j])
        alpha = dotc(ws[j], z)
        alphas.append(alpha)
        if j == n - 1:
            break
        vh = z - alpha * vs[j]
        wh = ops["matvec_adj"](ws[j]) - conj(alpha) * ws[j]
        if j > 0:
            vh = vh - betas[j - 1] * vs[j - 1]
            wh = wh - conj(deltas[j - 1]) * ws[j - 1]
        d = dotc(wh, vh)
        if abs(d) <= breakdown_tol * norm(vh) * norm(wh) or norm(vh) == 0 or norm(wh) == 0:
            raise SeriousBreakdownError(
                f"biorthogonality collapsed at step {j + 1} of {n}"
            )
        delta = sqrt(d)
        beta = d / delta
        deltas.append(delta)
        betas.append(beta)
        vs.append(vh / delta)
        ws.append(wh / conj(beta))

    if use_mp:
        zl, zr, tri = mp.matrix(n, n), mp.matrix(n, n), mp.matrix(n, n)
        for j in range(n):
            for i in range(n):
                zl[i, j] = ws[j][i]
                zr[i, j] = vs[j][i]
            tri[j, j] = alphas[j]
            if j < n - 1:
                tri[j, j + 1] = betas[j]
                tri[j + 1, j] = deltas[j]
        return zl, zr, tri
    zl = np.column_stack(ws)
    zr = np.column_stack(vs)
    tri = np.zeros((n, n), dtype=complex)
    tri[np.arange(n), np.arange(n)] = alphas
    if n > 1:
        tri[np.arange(n - 1), np.arange(1, n)] = betas
        tri[np.arange(1, n), np.arange(n - 1)] = deltas
    return zl, zr, tri


# -- extended-precision helpers ----------------------------------------------


def extended_precision(digits: int):
    """Context manager setting the mpmath working precision in digits."""
    return mp.workdps(int(digits))


def to_extended(values) -> mp.matrix:
    """Lift a numpy array (or nested sequence) to an mpmath matrix, exactly."""
    a = np.atleast_2d(np.asarray(values, dtype=complex))
    out = mp.matrix(a.shape[0], a.shape[1])
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            out[i, j] = mp.mpc(a[i, j])
    return out


def from_extended(matrix: mp.matrix) -> np.ndarray:
    """Round an mpmath matrix to a complex double array."""
    out = np.empty((matrix.rows, matrix.cols), dtype=complex)
    for i in range(matrix.rows):
        for j in range(matrix.cols):
            out[i, j] = complex(matrix[i, j])
    return out
