"""Transverse operators and scalar DtN (impedance) functions.

The operators are Hermitian shifted Laplacians (1D stencils, their 2D
Kronecker sums, or explicit diagonals) stored through their spectral
decomposition, which is cheap at the sizes used here and makes matrix
functions and shifted solves exact up to the eigensolver.

The scalar DtN functions describe the half-line Helmholtz impedance for a
constant, piecewise-discrete, or single-layer coefficient profile.  All
square roots follow the outgoing-wave branch: analytic continuation from
the positive real axis through the upper half plane, so values land in the
closed upper half plane.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq

from .errors import (
    EigenvalueCollisionError,
    NearPoleError,
    PoleCountError,
    SemidefiniteOperatorError,
)


def branch_sqrt(z):
    """Square root continued through the upper half plane.

    Nonnegative reals map to nonnegative roots, negative reals to +i times
    the real root, and every other input to the root with nonnegative
    imaginary part.  Accepts scalars or arrays.
    """
    w = np.sqrt(np.asarray(z, dtype=complex))
    w = np.where(w.imag < 0.0, -w, w)
    return complex(w) if w.ndim == 0 else w


@dataclasses.dataclass(frozen=True)
class DtnSpec:
    """Parameters selecting one scalar DtN function.

    variant 'sqrt' is the continuum limit sqrt(lambda); 'discrete_const'
    the uniform-grid impedance with step ``h``; 'discrete_variable' the
    continued fraction over per-node coefficient offsets ``offsets`` (the
    coefficient vanishes beyond the last entry); 'continuous_layered' a
    single layer of given ``thickness`` and constant ``offset`` over the
    homogeneous exterior.
    """

    variant: str
    h: float | None = None
    offsets: tuple[float, ...] | None = None
    thickness: float | None = None
    offset: float | None = None

    def __post_init__(self):
        if self.variant not in {"sqrt", "discrete_const", "discrete_variable", "continuous_layered"}:
            raise ValueError(f"unknown DtN variant {self.variant!r}")
        if self.variant in {"discrete_const", "discrete_variable"}:
            if self.h is None or not self.h > 0:
                raise ValueError("discrete DtN variants need a positive step h")
        if self.variant == "discrete_variable":
            if self.offsets is None or len(self.offsets) == 0:
                raise ValueError("discrete_variable needs at least the boundary offset")
            object.__setattr__(self, "offsets", tuple(float(c) for c in self.offsets))
            if not all(math.isfinite(c) for c in self.offsets):
                raise ValueError("offsets must be finite")
        if self.variant == "continuous_layered":
            if self.thickness is None or not self.thickness > 0:
                raise ValueError("continuous_layered needs a positive thickness")
            if self.offset is None or not math.isfinite(self.offset):
                raise ValueError("continuous_layered needs a finite offset")


def dtn_scalar(spec: DtnSpec, lam, near_pole_floor: float = 1e-300):
    """Evaluate the scalar DtN function of ``spec`` at ``lam``.

    Vectorized over arrays of evaluation points.  A denominator magnitude
    below ``near_pole_floor`` (or a non-finite result) means the point sits
    on a pole of the impedance function.

    Raises
    ------
    NearPoleError
    """
    z = np.asarray(lam, dtype=complex)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)

    if spec.variant == "sqrt":
        f = branch_sqrt(z)
    elif spec.variant == "discrete_const":
        f = _dtn_const(spec.h, z)
    elif spec.variant == "discrete_variable":
        f = _dtn_variable(spec.h, spec.offsets, z, near_pole_floor)
    else:
        f = _dtn_layered(spec.thickness, spec.offset, z, near_pole_floor)

    if not np.all(np.isfinite(f)):
        raise NearPoleError("DtN evaluation hit a pole of the impedance function")
    return complex(f[0]) if scalar else f


def _dtn_const(h, z):
    # Factored form: the composite sqrt(z + h^2 z^2 / 4) would leave the
    # continuation branch on part of (-4/h^2, 0).
    return branch_sqrt(z) * branch_sqrt(1.0 + h * h * z / 4.0)


def _dtn_variable(h, offsets, z, floor):
    # Bottom-up continued fraction; the tail below the last varying node is
    # the constant-coefficient impedance.
    t = h * z / 2.0 + _dtn_const(h, z)
    if np.abs(t).min() <= floor:
        raise NearPoleError("DtN evaluation hit a pole of the impedance function")
    x = h + 1.0 / t
    for c in reversed(offsets[1:]):
        if np.abs(x).min() <= floor:
            raise NearPoleError("DtN evaluation hit a pole of the impedance function")
        t = h * (z + c) + 1.0 / x
        if np.abs(t).min() <= floor:
            raise NearPoleError("DtN evaluation hit a pole of the impedance function")
        x = h + 1.0 / t
    if np.abs(x).min() <= floor:
        raise NearPoleError("DtN evaluation hit a pole of the impedance function")
    return h * (z + offsets[0]) / 2.0 + 1.0 / x


def _dtn_layered(thickness, offset, z, floor):
    s = branch_sqrt(z + offset)
    rt = branch_sqrt(z)
    th = np.tanh(thickness * s)
    den = s + rt * th
    if np.abs(den).min() <= floor:
        raise NearPoleError("DtN evaluation hit a pole of the impedance function")
    return s * (s * th + rt) / den


# -- resonances of the single-layer impedance ---------------------------------


def _resonance_scan(thickness: float, offset: float):
    """Sign-change scan for real poles of the single-layer DtN function.

    On the relevant window the pole condition reduces to a real root
    problem for phi(y) = y cos(T y) + sqrt(-c - y^2) sin(T y) with
    y in (0, sqrt(-c)); each pole is lambda = -c - y^2.
    """
    if not thickness > 0:
        raise ValueError("thickness must be positive")
    if offset >= 0:
        return np.empty(0), 0
    t, c = float(thickness), float(offset)
    ymax = math.sqrt(-c)
    cells = int(t * ymax / math.pi)
    m = max(64 * (cells + 1), 256)
    ys = np.linspace(0.0, ymax, m + 2)[1:-1]

    def phi(y):
        return y * np.cos(t * y) + np.sqrt(np.maximum(-c - y * y, 0.0)) * np.sin(t * y)

    vals = phi(ys)
    signs = np.sign(vals)
    keep = signs != 0
    ys_k, signs_k = ys[keep], signs[keep]
    flips = np.nonzero(signs_k[:-1] * signs_k[1:] < 0)[0]
    roots = np.array([brentq(phi, ys_k[i], ys_k[i + 1], xtol=1e-14) for i in flips])
    count = len(flips)
    if count not in (cells, cells + 1):
        raise PoleCountError(
            f"found {count} real poles, expected {cells} or {cells + 1} "
            f"for thickness {t} and offset {c}"
        )
    return roots, count


def count_real_poles(thickness: float, offset: float) -> int:
    """Number of real poles of the single-layer DtN function.

    A nonnegative offset gives a pole-free real axis.  For negative offsets
    the count is floor(T*sqrt(-c)/pi) + q with q in {0, 1}; a scan result
    outside this bracket raises :class:`PoleCountError`.
    """
    _, count = _resonance_scan(thickness, offset)
    return count


def locate_resonances(thickness: float, offset: float) -> np.ndarray:
    """Real poles (as lambda values, ascending) of the single-layer DtN map.

    All poles lie strictly inside (0, -offset); an empty array for
    nonnegative offsets.
    """
    roots, _ = _resonance_scan(thickness, offset)
    lam = -float(offset) - roots**2
    return np.sort(lam)


# -- operators -----------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class SpectralIntervals:
    """Extreme negative and positive eigenvalues: a1 <= b1 < 0 < a2 <= b2."""

    a1: float
    b1: float
    a2: float
    b2: float

    def __post_init__(self):
        if not (self.a1 <= self.b1 < 0.0 < self.a2 <= self.b2):
            raise ValueError("interval endpoints must satisfy a1 <= b1 < 0 < a2 <= b2")


def _stencil_apply(x, corner):
    """Second-difference stencil along the first axis, with boundary weight
    ``corner`` (1 reflects, 2 pins) on the diagonal corners."""
    y = 2.0 * x
    y[0] = corner * x[0]
    y[-1] = corner * x[-1]
    y[1:] -= x[:-1]
    y[:-1] -= x[1:]
    return y


class Operator:
    """Hermitian transverse operator with explicit spectral structure.

    Not constructed directly; use :func:`build_operator`.  Matrix-vector
    products go through the stencil (or the diagonal), everything else
    through the stored eigendecomposition, so the two routes cross-check
    each other.
    """

    def __init__(self, kind, spectral_points, h, kinf, q1d=None, side=None, corner=None):
        self.kind = kind
        self.h = h
        self.kinf = kinf
        self._q1d = q1d
        self._side = side
        self._corner = corner
        #: Eigenvalues in spectral-coordinate order (C-flattened grid for kron2d).
        self.spectral_points = np.asarray(spectral_points, dtype=float)
        self.size = self.spectral_points.size
        self.eigenvalues = np.sort(self.spectral_points)
        self.spectral_radius = float(np.abs(self.spectral_points).max())
        self._dtn_cache: dict[DtnSpec, np.ndarray] = {}

    # spectral transforms ------------------------------------------------

    def to_spectral(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v)
        if self.kind == "diagonal":
            return v.copy()
        if self.kind == "kron2d":
            m = v.reshape(self._side, self._side)
            return (self._q1d.T @ m @ self._q1d).ravel()
        return self._q1d.T @ v

    def from_spectral(self, vhat: np.ndarray) -> np.ndarray:
        vhat = np.asarray(vhat)
        if self.kind == "diagonal":
            return vhat.copy()
        if self.kind == "kron2d":
            m = vhat.reshape(self._side, self._side)
            return (self._q1d @ m @ self._q1d.T).ravel()
        return self._q1d @ vhat

    # actions --------------------------------------------------------------

    def apply(self, v: np.ndarray) -> np.ndarray:
        """A @ v through the stencil route (no eigendecomposition)."""
        v = np.asarray(v)
        if self.kind == "diagonal":
            return self.spectral_points * v
        shift = self.kinf**2
        if self.kind == "kron2d":
            m = v.reshape(self._side, self._side)
            lap = _stencil_apply(m, self._corner) + _stencil_apply(m.T, self._corner).T
            return (lap / self.h**2 - shift * m).ravel()
        return _stencil_apply(v, self._corner) / self.h**2 - shift * v

    def apply_spectral_values(self, values: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Apply the matrix function whose eigenvalue-wise values (aligned
        with ``spectral_points``) are ``values``."""
        return self.from_spectral(np.asarray(values) * self.to_spectral(v))

    def apply_function(self, spec: DtnSpec, v: np.ndarray) -> np.ndarray:
        """F @ v for F = f(A), f the scalar DtN function of ``spec``.

        The eigenvalue-wise DtN values are cached per spec, so repeated
        products during a fit cost one transform pair each.
        """
        values = self._dtn_cache.get(spec)
        if values is None:
            values = dtn_scalar(spec, self.spectral_points)
            self._dtn_cache[spec] = values
        return self.apply_spectral_values(values, v)

    def solve_shifted(self, xi: complex, rhs: np.ndarray) -> np.ndarray:
        """(A - xi I)^{-1} rhs via the spectral structure.

        Raises
        ------
        EigenvalueCollisionError
            If ``xi`` is within 1e-12 of the spectrum relative to the
            spectral radius.
        """
        denom = self.spectral_points - complex(xi)
        if np.abs(denom).min() < 1e-12 * self.spectral_radius:
            raise EigenvalueCollisionError(f"shift {xi} collides with an eigenvalue")
        return self.from_spectral(self.to_spectral(rhs) / denom)

    def spectral_intervals(self) -> SpectralIntervals:
        """Extreme negative/positive eigenvalues as interval endpoints.

        Raises
        ------
        SemidefiniteOperatorError
            If the spectrum does not straddle zero.
        """
        neg = self.eigenvalues[self.eigenvalues < 0.0]
        pos = self.eigenvalues[self.eigenvalues > 0.0]
        if neg.size == 0 or pos.size == 0:
            raise SemidefiniteOperatorError("operator spectrum does not straddle zero")
        return SpectralIntervals(float(neg[0]), float(neg[-1]), float(pos[0]), float(pos[-1]))


def build_operator(kind: str, n: int | None = None, h: float | None = None,
                   kinf: float | None = None, diagonal=None) -> Operator:
    """Construct one of the supported transverse operators.

    Parameters
    ----------
    kind : {'neumann1d', 'dirichlet1d', 'kron2d', 'diagonal'}
        The 1D kinds are L/h^2 - kinf^2 I with the second-difference
        stencil whose corner entries are 1 (neumann) or 2 (dirichlet);
        kron2d is the 2D Kronecker-sum Laplacian built from the neumann
        stencil, and n must then be a perfect square.
    n : int
        Total size (ignored for 'diagonal').
    h, kinf : float
        Grid step and background wave number (stencil kinds only).
    diagonal : array_like
        Explicit eigenvalues for kind='diagonal'.
    """
    if kind == "diagonal":
        d = np.asarray(diagonal, dtype=float).ravel()
        if d.size < 2:
            raise ValueError("diagonal operator needs at least 2 entries")
        return Operator("diagonal", d, None, None)
    if kind not in {"neumann1d", "dirichlet1d", "kron2d"}:
        raise ValueError(f"unknown operator kind {kind!r}")
    if n is None or n < 2 or h is None or not h > 0 or kinf is None:
        raise ValueError("stencil kinds need n >= 2, h > 0 and kinf")

    if kind == "kron2d":
        side = math.isqrt(n)
        if side * side != n:
            raise ValueError("kron2d size must be a perfect square")
        corner = 1
        w, q = _stencil_eig(side, corner)
        grid = (w[:, None] + w[None, :]) / h**2 - kinf**2
        return Operator("kron2d", grid.ravel(), h, kinf, q1d=q, side=side, corner=corner)

    corner = 1 if kind == "neumann1d" else 2
    w, q = _stencil_eig(n, corner)
    return Operator(kind, w / h**2 - kinf**2, h, kinf, q1d=q, corner=corner)


def _stencil_eig(n, corner):
    d = np.full(n, 2.0)
    d[0] = d[-1] = float(corner)
    return eigh_tridiagonal(d, np.full(n - 1, -1.0))
