"""Dense linear-algebra kernels shared by every other module.

Thin, contract-checked wrappers around numpy/scipy LAPACK routines.
Matrices are plain ``numpy.ndarray`` objects; ``as_matrix`` is the
validating constructor used at module boundaries.  Rank decisions are
made on singular values with a relative threshold ``tol * sigma_max``
(default ``1e-9``) so they are invariant to the overall data scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import DimensionError, NumericError, ValidationError

DEFAULT_RANK_TOL = 1e-9


def as_matrix(entries, name: str = "matrix") -> np.ndarray:
    """Validate and return a 2-D float or complex array.

    Rejects non-finite entries; accepts anything ``np.asarray`` can
    convert.  1-D input is promoted to a single-row matrix.
    """
    M = np.asarray(entries)
    if M.dtype.kind not in "fc":
        M = M.astype(float)
    if M.ndim == 1:
        M = M[None, :]
    if M.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValidationError(f"{name} contains NaN or Inf entries")
    return M


def require_square(M: np.ndarray, name: str = "matrix") -> np.ndarray:
    M = as_matrix(M, name)
    if M.shape[0] != M.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {M.shape}")
    return M


@dataclass(frozen=True)
class EigDecomp:
    """Eigenvalues and right eigenvectors, column-aligned."""

    values: np.ndarray
    vectors: np.ndarray

    def max_real_part(self) -> float:
        return float(self.values.real.max())


def eig(M) -> EigDecomp:
    """Eigendecomposition of a square matrix.

    For real input the eigenvalues are closed under conjugation (LAPACK
    guarantees exact conjugate pairing).
    """
    M = require_square(M, "eig input")
    try:
        values, vectors = np.linalg.eig(M)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigenvalue iteration failed for matrix of order {M.shape[0]}: {exc}")
    return EigDecomp(values=values, vectors=vectors)


def eigvals(M) -> np.ndarray:
    return eig(M).values


def is_hurwitz(M, margin: float = 0.0) -> bool:
    """True iff every eigenvalue of ``M`` has real part < -margin."""
    if margin < 0:
        raise ValidationError("margin must be >= 0")
    return bool(eig(M).values.real.max() < -margin)


def numerical_rank(M, tol: float = DEFAULT_RANK_TOL) -> int:
    """Rank by singular values above ``tol * sigma_max``."""
    M = as_matrix(M, "rank input")
    if min(M.shape) == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def null_space_basis(M, tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Orthonormal basis of the right null space of ``M``.

    Returns a ``cols(M) x (cols(M) - rank(M))`` matrix whose columns are
    orthonormal and satisfy ``M @ basis ~ 0`` within ``tol * sigma_max``.
    """
    if not 0.0 < tol < 1.0:
        raise ValidationError("tol must lie in (0, 1)")
    M = as_matrix(M, "null_space input")
    _, s, Vh = np.linalg.svd(M)
    if s.size and s[0] > 0.0:
        rank = int(np.sum(s > tol * s[0]))
    else:
        rank = 0
    return Vh[rank:].conj().T


def expm(M) -> np.ndarray:
    """Matrix exponential (scaling-and-squaring Pade approximation)."""
    M = require_square(M, "expm input")
    if np.iscomplexobj(M):
        E = sla.expm(M)
    else:
        E = sla.expm(M.astype(float))
    if not np.all(np.isfinite(E)):
        raise NumericError("expm overflowed: input entries too large")
    return E


def lstsq(A, B) -> np.ndarray:
    """Minimum-norm least-squares solution of ``A @ X = B``."""
    A = as_matrix(A, "lstsq A")
    B = np.asarray(B, dtype=A.dtype if A.dtype.kind == "c" else float)
    vec = B.ndim == 1
    if vec:
        B = B[:, None]
    if A.shape[0] != B.shape[0]:
        raise DimensionError(f"lstsq row mismatch: A has {A.shape[0]} rows, B has {B.shape[0]}")
    X, *_ = np.linalg.lstsq(A, B, rcond=None)
    return X[:, 0] if vec else X


def pinv_solve(A, B, tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Pseudoinverse solve with an explicit rank cutoff."""
    A = as_matrix(A, "pinv A")
    return np.linalg.pinv(A, rcond=tol) @ np.asarray(B)


def controllability_matrix(A, B) -> np.ndarray:
    A = require_square(A, "A")
    B = as_matrix(B, "B")
    if B.shape[0] != A.shape[0]:
        raise DimensionError("A and B row counts differ")
    n = A.shape[0]
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def is_controllable(A, B, tol: float = DEFAULT_RANK_TOL) -> bool:
    return numerical_rank(controllability_matrix(A, B), tol) == np.asarray(A).shape[0]
