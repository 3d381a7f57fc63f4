"""Scalar phi-functions and spectral evaluation of matrix functions.

The integrators in this package propagate the linear oscillation q'' + M q = 0
exactly through the entire functions

    phi_j(v) = sum_k (-1)^k v^k / (2k + j)!          (phi0 = cos sqrt(v),
                                                      phi1 = sin sqrt(v)/sqrt(v))

applied to v = h^2 * (eigenvalues of M).  M is symmetric positive
semi-definite and constant along a trajectory, so every matrix function
f(s*M) x is evaluated once-and-for-all in the eigenbasis:

    f(s*M) x = B diag(f(s*lam_i)) B^T x

with B orthonormal from a cyclic Jacobi eigendecomposition.

All evaluators are deterministic (same input, bit-identical output) and accept
either plain floats or ``mpmath.mpf`` scalars; the mpf path recomputes the
series/trig in the active mpmath precision so that high-accuracy derivative
extraction can run through the exact same closures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "phi_scalar",
    "psi_scalar",
    "chi_scalar",
    "SpectralCache",
    "spectral_decompose",
    "apply_analytic",
]

PHI_MAX_ORDER = 6

# Series/closed-form crossover.  For j <= 1 the closed forms cos/sinc are
# full precision everywhere, so the series only needs to cover the sinc 0/0
# neighbourhood.  For j >= 2 the closed form is the recurrence
# phi_{j+2} = (1/j! - phi_j)/v seeded with cos/sinc; below v ~ 1 the
# subtraction 1/j! - phi_j cancels catastrophically (up to six digits lost at
# v = 0.01 for j = 6), so the series branch extends to v = 4 where both
# branches are accurate to full double precision.
_CROSSOVER_LOW = 1e-2
_CROSSOVER_HIGH = 4.0
_SERIES_TERMS_LOW = 12
_SERIES_TERMS_HIGH = 18

# _PHI_COEF[j][k] = (-1)^k / (2k+j)!
_PHI_COEF = [
    [(-1.0) ** k / math.factorial(2 * k + j) for k in range(_SERIES_TERMS_HIGH)]
    for j in range(PHI_MAX_ORDER + 1)
]
# (phi1 - phi0)(u)/u  and  (phi3 - 4 phi4)(v)/v, both entire
_PSI_COEF = [(-1.0) ** k * 2.0 * (k + 1) / math.factorial(2 * k + 3)
             for k in range(_SERIES_TERMS_HIGH)]
_CHI_COEF = [(-1.0) ** (k + 1) * 2.0 * (k + 1) / math.factorial(2 * k + 6)
             for k in range(_SERIES_TERMS_HIGH)]


def _is_plain_number(v) -> bool:
    return isinstance(v, (float, int, np.floating, np.integer))


def _horner(coef, v, n_terms):
    acc = coef[n_terms - 1]
    for k in range(n_terms - 2, -1, -1):
        acc = acc * v + coef[k]
    return acc


def _crossover(j: int) -> float:
    return _CROSSOVER_LOW if j <= 1 else _CROSSOVER_HIGH


def phi_scalar(j: int, v):
    """Evaluate phi_j(v) for j in 0..6 and v >= 0.

    Below the per-order crossover a truncated Taylor series of the defining
    alternating sum is used; above it, cos/sinc closed forms with the upward
    recurrence phi_{j+2}(v) = (1/j! - phi_j(v)) / v.
    """
    if not isinstance(j, (int, np.integer)) or not 0 <= j <= PHI_MAX_ORDER:
        raise ValueError(f"phi order must be an integer in 0..{PHI_MAX_ORDER}, got {j!r}")
    if v < 0:
        raise ValueError(f"phi_scalar requires v >= 0, got {v!r}")
    if _is_plain_number(v):
        v = float(v)
        if v < _crossover(j):
            n = _SERIES_TERMS_LOW if j <= 1 else _SERIES_TERMS_HIGH
            return _horner(_PHI_COEF[j], v, n)
        x = math.sqrt(v)
        if j == 0:
            return math.cos(x)
        if j == 1:
            return math.sin(x) / x
        lo = math.cos(x) if j % 2 == 0 else math.sin(x) / x
        for jj in range(j % 2, j, 2):
            lo = (1.0 / math.factorial(jj) - lo) / v
        return lo
    return _phi_mp(j, v)


def _phi_mp(j, v):
    import mpmath as mp

    if v < _crossover(j):
        s = mp.mpf(0)
        for k in range(_SERIES_TERMS_HIGH - 1, -1, -1):
            s = s * v + mp.mpf((-1) ** k) / mp.factorial(2 * k + j)
        return s
    x = mp.sqrt(v)
    if j == 0:
        return mp.cos(x)
    if j == 1:
        return mp.sin(x) / x
    lo = mp.cos(x) if j % 2 == 0 else mp.sin(x) / x
    for jj in range(j % 2, j, 2):
        lo = (1 / mp.factorial(jj) - lo) / v
    return lo


def psi_scalar(u):
    """(phi1(u) - phi0(u)) / u, continued analytically through u = 0.

    psi(0) = 1/3.  Used to pose the three-stage diagonal-coefficient system
    in a form that stays nonsingular at u = 0.
    """
    if u < 0:
        raise ValueError(f"psi_scalar requires u >= 0, got {u!r}")
    if _is_plain_number(u):
        u = float(u)
        if u < _CROSSOVER_HIGH:
            return _horner(_PSI_COEF, u, _SERIES_TERMS_HIGH)
        return (phi_scalar(1, u) - phi_scalar(0, u)) / u
    import mpmath as mp

    if u < _CROSSOVER_HIGH:
        s = mp.mpf(0)
        for k in range(_SERIES_TERMS_HIGH - 1, -1, -1):
            s = s * u + mp.mpf((-1) ** k * 2 * (k + 1)) / mp.factorial(2 * k + 3)
        return s
    return (_phi_mp(1, u) - _phi_mp(0, u)) / u


def chi_scalar(v):
    """(phi3(v) - 4 phi4(v)) / v, continued analytically through v = 0.

    chi(0) = -1/360.  Companion right-hand side of :func:`psi_scalar`.
    """
    if v < 0:
        raise ValueError(f"chi_scalar requires v >= 0, got {v!r}")
    if _is_plain_number(v):
        v = float(v)
        if v < _CROSSOVER_HIGH:
            return _horner(_CHI_COEF, v, _SERIES_TERMS_HIGH)
        return (phi_scalar(3, v) - 4.0 * phi_scalar(4, v)) / v
    import mpmath as mp

    if v < _CROSSOVER_HIGH:
        s = mp.mpf(0)
        for k in range(_SERIES_TERMS_HIGH - 1, -1, -1):
            s = s * v + mp.mpf((-1) ** (k + 1) * 2 * (k + 1)) / mp.factorial(2 * k + 6)
        return s
    return (_phi_mp(3, v) - 4 * _phi_mp(4, v)) / v


@dataclass(frozen=True)
class SpectralCache:
    """Eigendecomposition of a symmetric positive semi-definite matrix.

    ``basis`` columns are orthonormal eigenvectors, ``eigenvalues`` ascending
    and clamped to zero inside the PSD roundoff band.  Immutable; safe to
    share between concurrent evaluations.
    """

    dim: int
    eigenvalues: np.ndarray
    basis: np.ndarray

    def apply_diagonal(self, diag: np.ndarray, x: np.ndarray) -> np.ndarray:
        """basis @ diag(diag) @ basis.T @ x."""
        return self.basis @ (diag * (self.basis.T @ x))


def spectral_decompose(M: np.ndarray, off_tol: float = 1e-14,
                       max_sweeps: int = 64) -> SpectralCache:
    """Diagonalize a symmetric PSD matrix by cyclic Jacobi rotations.

    Sweeps (p, q) in row-major order until the off-diagonal Frobenius norm
    drops below ``off_tol * ||M||_F``.  Eigenvalues in
    [-1e-10*||M||_F, 0) are clamped to 0; anything below that band raises
    (matrix not PSD).
    """
    A = np.array(M, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    d = A.shape[0]
    scale = np.max(np.abs(A)) if d else 0.0
    if scale > 0 and np.max(np.abs(A - A.T)) > 1e-12 * scale:
        raise ValueError("matrix is not symmetric to 1e-12 entrywise relative")
    A = 0.5 * (A + A.T)

    norm = float(np.linalg.norm(A))
    V = np.eye(d)
    off_mask = ~np.eye(d, dtype=bool)
    if norm > 0.0:
        for _ in range(max_sweeps):
            off = math.sqrt(float(np.sum(A[off_mask] ** 2)))
            if off < off_tol * norm:
                break
            for p in range(d - 1):
                for q in range(p + 1, d):
                    apq = A[p, q]
                    if apq == 0.0:
                        continue
                    theta = 0.5 * (A[q, q] - A[p, p]) / apq
                    t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                    c = 1.0 / math.sqrt(t * t + 1.0)
                    s = t * c
                    rot_p = c * A[p, :] - s * A[q, :]
                    rot_q = s * A[p, :] + c * A[q, :]
                    A[p, :], A[q, :] = rot_p, rot_q
                    col_p = c * A[:, p] - s * A[:, q]
                    col_q = s * A[:, p] + c * A[:, q]
                    A[:, p], A[:, q] = col_p, col_q
                    A[p, q] = A[q, p] = 0.0
                    vp = c * V[:, p] - s * V[:, q]
                    vq = s * V[:, p] + c * V[:, q]
                    V[:, p], V[:, q] = vp, vq
        else:
            raise RuntimeError("Jacobi sweeps did not converge")

    eigs = np.diag(A).copy()
    order = np.argsort(eigs, kind="stable")
    eigs = eigs[order]
    V = V[:, order]

    band = 1e-10 * norm
    if np.any(eigs < -band):
        raise ValueError(
            f"matrix is not positive semi-definite: eigenvalue {eigs.min():.3e} "
            f"below the -{band:.3e} clamping band")
    eigs[eigs < 0.0] = 0.0

    # canonical column signs for reproducibility
    for k in range(d):
        col = V[:, k]
        lead = np.argmax(np.abs(col))
        if col[lead] < 0.0:
            V[:, k] = -col

    return SpectralCache(dim=d, eigenvalues=eigs, basis=V)


def apply_analytic(f, cache: SpectralCache, scale: float, x: np.ndarray) -> np.ndarray:
    """Evaluate f(scale*M) @ x in the eigenbasis of ``cache``.

    ``f`` maps a nonnegative scalar to a scalar; ``scale`` is typically h^2.
    Exactly linear in x.
    """
    if scale < 0:
        raise ValueError(f"scale must be >= 0, got {scale!r}")
    x = np.asarray(x, dtype=float)
    if x.shape != (cache.dim,):
        raise ValueError(f"vector has shape {x.shape}, expected ({cache.dim},)")
    diag = np.array([f(scale * lam) for lam in cache.eigenvalues])
    return cache.apply_diagonal(diag, x)
