"""Dense symmetric linear algebra shared by the rest of the package."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
import scipy.linalg as sla

SYM_RTOL = 1e-10
ZERO_RTOL = 1e-9
COND_CAP = 1e14


class NotSymmetric(ValueError):
    pass


class SingularBlock(np.linalg.LinAlgError):
    pass


class Unstable(ValueError):
    """Spectral radius is not below one."""


class NotPSD(ValueError):
    pass


class Inertia(NamedTuple):
    neg: int
    zero: int
    pos: int


def symmetrize(M, check=True) -> np.ndarray:
    """Return ``(M + M.T) / 2`` after checking ``M`` is symmetric up to ``1e-10 * ||M||_F``."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise NotSymmetric(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    if check:
        asym = np.linalg.norm(M - M.T)
        if asym > SYM_RTOL * max(np.linalg.norm(M), 1.0):
            raise NotSymmetric(f"asymmetry {asym:.3e} exceeds tolerance")
    return 0.5 * (M + M.T)


def eigvalsh(M) -> np.ndarray:
    return np.linalg.eigvalsh(symmetrize(M))


def inertia(M, zero_tol: float | None = None) -> Inertia:
    """Count negative, zero and positive eigenvalues of a symmetric matrix.

    The default zero band is ``1e-9 * ||M||_2``.
    """
    w = eigvalsh(M)
    if w.size == 0:
        return Inertia(0, 0, 0)
    if zero_tol is None:
        zero_tol = ZERO_RTOL * np.max(np.abs(w))
    neg = int(np.sum(w < -zero_tol))
    pos = int(np.sum(w > zero_tol))
    return Inertia(neg, w.size - neg - pos, pos)


def _solve_sym(M22: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    if M22.size == 0:
        return np.zeros_like(rhs)
    if np.linalg.cond(M22) > COND_CAP:
        raise SingularBlock("lower-right block is numerically singular")
    # LDL^T based solve; works for indefinite blocks
    return sla.solve(M22, rhs, assume_a="sym")


def schur_complement(M, split: int) -> np.ndarray:
    """Schur complement ``M11 - M12 M22^{-1} M12^T`` of the block below/right of ``split``."""
    M = symmetrize(M)
    M11, M12, M22 = M[:split, :split], M[:split, split:], M[split:, split:]
    return symmetrize(M11 - M12 @ _solve_sym(M22, M12.T), check=False)


def is_pos_def(M, margin: float = 0.0) -> bool:
    w = eigvalsh(M)
    return bool(w.size == 0 or w[0] > margin)


def sym_sqrt(M, tol: float = 1e-12) -> np.ndarray:
    """Symmetric PSD square root. Eigenvalues in ``[-tol*||M||, 0)`` are clipped to zero."""
    w, U = np.linalg.eigh(symmetrize(M))
    scale = max(np.max(np.abs(w)), 1.0) if w.size else 1.0
    if w.size and w[0] < -tol * scale:
        raise NotPSD(f"smallest eigenvalue {w[0]:.3e} is negative")
    w = np.clip(w, 0.0, None)
    return symmetrize((U * np.sqrt(w)) @ U.T, check=False)


def sym_inv_sqrt(M) -> np.ndarray:
    w, U = np.linalg.eigh(symmetrize(M))
    if w.size and w[0] <= 0:
        raise NotPSD("matrix is not positive definite")
    return symmetrize((U / np.sqrt(w)) @ U.T, check=False)


def spectral_radius(A) -> float:
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def orth_complement(W) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of ``range(W)`` (full QR)."""
    W = np.asarray(W, dtype=float)
    p, r = W.shape
    Q, _ = np.linalg.qr(W, mode="complete")
    return Q[:, r:]


def full_column_rank(W, rtol: float = 1e-10) -> bool:
    W = np.asarray(W, dtype=float)
    if W.shape[1] == 0:
        return True
    if W.shape[1] > W.shape[0]:
        return False
    s = np.linalg.svd(W, compute_uv=False)
    return bool(s[-1] > rtol * s[0])
