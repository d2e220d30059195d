"""Small dense complex linear algebra used throughout the package.

Vectors are 1-D complex numpy arrays; matrices are 2-D.  Everything here is
pure and allocation-light because it sits in the Monte-Carlo inner loop.
"""
from __future__ import annotations

import numpy as np

from .errors import ContractError, SingularBasisError, SingularMatrixError

# Central tolerance table.
SOLVE_RESIDUAL_TOL = 1e-9
ORTHOGONALITY_TOL = 1e-10
NORM_TOL = 1e-12
UNIT_NORM_CONTRACT_TOL = 1e-9
PIVOT_REL_TOL = 1e-14
GRAM_COND_MAX = 1e12
ALIGN_FALLBACK_REL = 1e-14


def as_cvec(x) -> np.ndarray:
    v = np.asarray(x, dtype=complex)
    if v.ndim != 1:
        raise ContractError(f"expected a vector, got shape {v.shape}")
    return v


def solve_small(M, b) -> np.ndarray:
    """Solve ``M y = b`` by Gaussian elimination with partial pivoting.

    ``b`` may be a vector or a matrix of right-hand sides (one per column).
    Raises :class:`SingularMatrixError` when a pivot falls below
    ``1e-14 * max|M|``.
    """
    A = np.array(M, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ContractError(f"solve_small needs a square matrix, got {A.shape}")
    rhs = np.array(b, dtype=complex)
    vector_rhs = rhs.ndim == 1
    if vector_rhs:
        rhs = rhs[:, None]
    n = A.shape[0]
    if rhs.shape[0] != n:
        raise ContractError("right-hand side length does not match matrix")
    scale = np.max(np.abs(A)) if A.size else 0.0
    if scale == 0.0:
        raise SingularMatrixError("zero matrix")
    floor = PIVOT_REL_TOL * scale
    for col in range(n):
        piv = col + int(np.argmax(np.abs(A[col:, col])))
        if abs(A[piv, col]) < floor:
            raise SingularMatrixError(f"pivot {abs(A[piv, col]):.3e} below {floor:.3e}")
        if piv != col:
            A[[col, piv]] = A[[piv, col]]
            rhs[[col, piv]] = rhs[[piv, col]]
        factors = A[col + 1:, col] / A[col, col]
        A[col + 1:, col:] -= np.outer(factors, A[col, col:])
        rhs[col + 1:] -= np.outer(factors, rhs[col])
    y = np.empty_like(rhs)
    for row in range(n - 1, -1, -1):
        y[row] = (rhs[row] - A[row, row + 1:] @ y[row + 1:]) / A[row, row]
    return y[:, 0] if vector_rhs else y


def proj_perp(a, x) -> np.ndarray:
    """Project ``x`` onto the orthogonal complement of span(a).

    ``a`` is a single vector or a matrix whose columns span the subspace.
    Computes ``x - A (A^H A)^{-1} A^H x``.
    """
    x = as_cvec(x)
    A = np.asarray(a, dtype=complex)
    if A.ndim == 1:
        A = A[:, None]
    if A.shape[0] != x.shape[0]:
        raise ContractError("basis and vector dimensions differ")
    if A.shape[1] == 0:
        return x.copy()
    gram = A.conj().T @ A
    if A.shape[1] == 1:
        g = gram[0, 0].real
        if g <= 0.0:
            raise SingularBasisError("zero basis vector")
        return x - A[:, 0] * (np.vdot(A[:, 0], x) / g)
    if np.linalg.cond(gram) > GRAM_COND_MAX:
        raise SingularBasisError("basis vectors are (nearly) linearly dependent")
    coef = solve_small(gram, A.conj().T @ x)
    return x - A @ coef


def phase_align(x) -> np.ndarray:
    """Rotate ``x`` by a unit complex number so its first entry is real, >= 0.

    When the first entry is numerically zero the largest-magnitude entry is
    made real-positive instead, keeping the map deterministic.
    """
    x = as_cvec(x)
    nrm = np.linalg.norm(x)
    if nrm == 0.0:
        raise ContractError("cannot phase-align the zero vector")
    pos = 0
    if abs(x[0]) < ALIGN_FALLBACK_REL * nrm:
        pos = int(np.argmax(np.abs(x)))
    ref = x[pos]
    out = x * (np.conj(ref) / abs(ref))
    out[pos] = abs(ref)  # exactly real, no rounding residue
    return out


def align_rows(X: np.ndarray) -> np.ndarray:
    """Batched :func:`phase_align` over the last axis (no fallback branch)."""
    first = X[..., :1]
    mag = np.abs(first)
    rot = np.where(mag > 0, np.conj(first) / np.where(mag > 0, mag, 1.0), 1.0)
    out = X * rot
    out[..., :1] = np.where(mag > 0, mag, first)
    return out


def real_embedding(u: np.ndarray) -> np.ndarray:
    """Map aligned complex vectors (last axis K) into R^(2K-1)."""
    u = np.asarray(u)
    return np.concatenate([u.real, u[..., 1:].imag], axis=-1)


def _check_unit(v: np.ndarray, name: str) -> None:
    if abs(np.linalg.norm(v) - 1.0) > UNIT_NORM_CONTRACT_TOL:
        raise ContractError(f"{name} must be unit-norm (|norm - 1| <= 1e-9)")


def sin2_real_angle(u, v) -> float:
    """Squared sine of the angle between aligned unit vectors in R^(2K-1)."""
    u = as_cvec(u)
    v = as_cvec(v)
    if u.shape != v.shape:
        raise ContractError("dimension mismatch")
    _check_unit(u, "u")
    _check_unit(v, "v")
    c = float(np.dot(real_embedding(u), real_embedding(v)))
    return min(1.0, max(0.0, 1.0 - c * c))


def chordal_sin2(u, v) -> float:
    """Phase-invariant ``1 - |u^H v|^2`` for unit vectors.

    Unlike :func:`sin2_real_angle` this does not depend on how the vectors
    were phase-aligned, so small perturbations of a vector with a tiny
    first entry stay small.
    """
    u = as_cvec(u)
    v = as_cvec(v)
    if u.shape != v.shape:
        raise ContractError("dimension mismatch")
    _check_unit(u, "u")
    _check_unit(v, "v")
    return min(1.0, max(0.0, 1.0 - abs(np.vdot(u, v)) ** 2))
