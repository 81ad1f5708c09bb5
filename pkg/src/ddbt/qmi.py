"""Solution sets of quadratic matrix inequalities.

A :class:`QmiSet` with ``psi`` of size ``(p+q) x (p+q)`` stands for the set of
``p x q`` matrices ``Z`` with ``[I; Z^T]^T psi [I; Z^T] >= 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg as la

MEMBER_RTOL = 1e-8


class SingularPsi(np.linalg.LinAlgError):
    pass


class NotRegular(ValueError):
    """Raised when a set is not bounded with nonempty interior."""


class RankDeficient(ValueError):
    pass


class NotAMember(ValueError):
    pass


class LiftDegenerate(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class QmiSet:
    psi: np.ndarray
    row_dim: int
    col_dim: int

    def __post_init__(self):
        psi = la.symmetrize(self.psi)
        if psi.shape[0] != self.row_dim + self.col_dim:
            raise ValueError(
                f"psi has size {psi.shape[0]}, expected {self.row_dim}+{self.col_dim}"
            )
        object.__setattr__(self, "psi", psi)

    @property
    def psi11(self):
        return self.psi[: self.row_dim, : self.row_dim]

    @property
    def psi12(self):
        return self.psi[: self.row_dim, self.row_dim :]

    @property
    def psi22(self):
        return self.psi[self.row_dim :, self.row_dim :]

    @property
    def dim(self) -> int:
        return self.row_dim + self.col_dim

    def schur(self) -> np.ndarray:
        """``psi | psi22``."""
        return la.schur_complement(self.psi, self.row_dim)

    def scaled(self, c: float) -> "QmiSet":
        return QmiSet(c * self.psi, self.row_dim, self.col_dim)

    def normalized(self) -> "QmiSet":
        """Same member set, ``psi`` rescaled to unit spectral norm."""
        return self.scaled(1.0 / np.linalg.norm(self.psi, 2))


@dataclass(frozen=True)
class ProjectionPair:
    W: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.W, dtype=float))
        V = np.atleast_2d(np.asarray(self.V, dtype=float))
        if not (la.full_column_rank(W) and la.full_column_rank(V)):
            raise RankDeficient("projection matrices must have full column rank")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "V", V)


def member_tolerance(qset: QmiSet) -> float:
    return MEMBER_RTOL * (1.0 + np.linalg.norm(qset.psi, 2))


def member_residual(qset: QmiSet, Z) -> np.ndarray:
    """``psi11 + psi12 Z^T + Z psi12^T + Z psi22 Z^T``."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if Z.shape != (qset.row_dim, qset.col_dim):
        raise ValueError(f"Z has shape {Z.shape}, expected {(qset.row_dim, qset.col_dim)}")
    R = qset.psi11 + qset.psi12 @ Z.T + Z @ qset.psi12.T + Z @ qset.psi22 @ Z.T
    return 0.5 * (R + R.T)


def is_member(qset: QmiSet, Z, tol: float | None = None) -> bool:
    if tol is None:
        tol = member_tolerance(qset)
    return bool(np.linalg.eigvalsh(member_residual(qset, Z))[0] >= -tol)


def check_regularity(qset: QmiSet) -> bool:
    """``psi22 < 0`` and ``psi | psi22 > 0``; the set is then bounded with nonempty interior."""
    if not la.is_pos_def(-qset.psi22):
        return False
    try:
        return la.is_pos_def(qset.schur())
    except la.SingularBlock:
        return False


def block_inertia(qset: QmiSet) -> la.Inertia:
    """Inertia of ``psi``.

    When ``psi22`` is invertible the count is taken blockwise through the
    congruence ``psi ~ blkdiag(psi | psi22, psi22)``, which keeps the small
    eigenvalues of badly scaled data matrices resolvable.
    """
    try:
        S = qset.schur()
    except la.SingularBlock:
        return la.inertia(qset.psi)
    a, b = la.inertia(S), la.inertia(qset.psi22)
    return la.Inertia(a.neg + b.neg, a.zero + b.zero, a.pos + b.pos)


def check_slater_by_inertia(qset: QmiSet) -> bool:
    return tuple(block_inertia(qset)) == (qset.col_dim, 0, qset.row_dim)


def require_regular(qset: QmiSet) -> None:
    if not check_regularity(qset):
        raise NotRegular("QMI set is not regular (need psi22 < 0 and psi|psi22 > 0)")


def _sym_inv(M: np.ndarray) -> np.ndarray:
    X = np.linalg.inv(M)
    return 0.5 * (X + X.T)


def dual(qset: QmiSet) -> QmiSet:
    """Dual set whose members are the transposes of the members of ``qset``.

    Its matrix is ``[[0, -I], [I, 0]] psi^-1 [[0, -I], [I, 0]]``. When
    ``psi22`` is invertible this is assembled blockwise from the center ``Zc``
    and the Schur complement ``S``, which avoids inverting ``psi`` as a whole:
    ``[[-psi22^-1 - Zc^T S^-1 Zc, Zc^T S^-1], [S^-1 Zc, -S^-1]]``.
    """
    p, q = qset.row_dim, qset.col_dim
    if block_inertia(qset).zero:
        raise SingularPsi("psi is singular")
    try:
        S = qset.schur()
    except la.SingularBlock:
        J = np.block([[np.zeros((q, p)), -np.eye(q)], [np.eye(p), np.zeros((p, q))]])
        D = -J @ np.linalg.solve(qset.psi, J.T)
        return QmiSet(0.5 * (D + D.T), q, p)
    Si = _sym_inv(S)
    Zc = -np.linalg.solve(qset.psi22, qset.psi12.T).T
    top_left = -_sym_inv(qset.psi22) - Zc.T @ Si @ Zc
    off = Zc.T @ Si
    return QmiSet(np.block([[top_left, off], [off.T, -Si]]), q, p)


def project_rows(qset: QmiSet, W) -> QmiSet:
    """Keep ``psi22``, compress the row side: ``psi11 -> W^T psi11 W``, ``psi12 -> W^T psi12``."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if W.shape[0] != qset.row_dim:
        raise ValueError("W has the wrong number of rows")
    if not la.full_column_rank(W):
        raise RankDeficient("W must have full column rank")
    top = np.hstack([W.T @ qset.psi11 @ W, W.T @ qset.psi12])
    bottom = np.hstack([qset.psi12.T @ W, qset.psi22])
    return QmiSet(np.vstack([top, bottom]), W.shape[1], qset.col_dim)


def reduce(qset: QmiSet, proj: ProjectionPair) -> QmiSet:
    """QMI set of all ``W^T Z V`` with ``Z`` in ``qset``."""
    require_regular(qset)
    W, V = proj.W, proj.V
    if W.shape[0] != qset.row_dim or V.shape[0] != qset.col_dim:
        raise ValueError("projection sizes do not match the set")
    S = qset.schur()
    P12, P22 = qset.psi12, qset.psi22
    iP22_V = np.linalg.solve(P22, V)  # psi22^{-1} V
    M = np.linalg.inv(V.T @ iP22_V)  # (V^T psi22^{-1} V)^{-1}
    M = 0.5 * (M + M.T)
    G = P12 @ iP22_V  # psi12 psi22^{-1} V
    top_left = W.T @ (S + G @ M @ G.T) @ W
    top_right = W.T @ G @ M
    psi = np.block([[top_left, top_right], [top_right.T, M]])
    return QmiSet(psi, W.shape[1], V.shape[1])


def center(qset: QmiSet) -> np.ndarray:
    """``-psi12 psi22^{-1}``; the residual there equals ``psi | psi22``."""
    require_regular(qset)
    return -np.linalg.solve(qset.psi22, qset.psi12.T).T


def sample_members(qset: QmiSet, count: int, rng=None, boundary: bool = False) -> list[np.ndarray]:
    """Members ``Zc + (psi|psi22)^{1/2} S (-psi22)^{-1/2}`` for random contractions ``S``.

    With ``boundary=True`` every ``S`` has unit spectral norm.
    """
    require_regular(qset)
    rng = np.random.default_rng(rng)
    Zc = center(qset)
    left = la.sym_sqrt(qset.schur())
    right = la.sym_inv_sqrt(-qset.psi22)
    out = []
    for _ in range(count):
        S = rng.standard_normal((qset.row_dim, qset.col_dim))
        S /= np.linalg.norm(S, 2)
        if not boundary:
            S *= rng.uniform() ** (1.0 / S.size)
        out.append(Zc + left @ S @ right)
    return out


def _lift_rows(qset: QmiSet, W: np.ndarray, Zw: np.ndarray) -> np.ndarray:
    """Given ``Zw`` in ``project_rows(qset, W)``, return ``Z`` in ``qset`` with ``W^T Z = Zw``."""
    p, q = qset.row_dim, qset.col_dim
    r = W.shape[1]
    S = qset.schur()
    P22 = qset.psi22
    iP22 = np.linalg.inv(P22)
    Zbar = Zw + W.T @ qset.psi12 @ iP22  # r x q
    WSW = W.T @ S @ W
    Qw = WSW + Zbar @ P22 @ Zbar.T
    G = 0.5 * ((WSW - Qw) + (WSW - Qw).T)  # = Zbar (-psi22) Zbar^T >= 0
    if r == p:
        Tinv = np.linalg.inv(W)
        M1 = Tinv
        Wt = np.zeros((p, 0))
    else:
        Wt = la.orth_complement(W)
        T = np.hstack([W, Wt])
        Tinv = np.linalg.inv(T)
        # F = [[I, (W^T S W)^{-1} W^T S Wt], [0, I]]; only its top block row matters:
        # with the maximal free block, S - Q = M1^T G M1 where M1 = [I, F12] T^{-1}
        F12 = np.linalg.solve(WSW, W.T @ S @ Wt)
        M1 = np.hstack([np.eye(r), F12]) @ Tinv
    # G = L^T L with L of k = min(r, q) rows
    k = min(r, q)
    w, E = np.linalg.eigh(G)
    w, E = w[::-1][:k], E[:, ::-1][:, :k]
    L = (E * np.sqrt(np.clip(w, 0.0, None))).T  # k x r
    R = L @ M1  # k x p, R W = L
    Y = la.sym_sqrt(-P22) @ Zbar.T  # q x r, Y^T Y = G
    # orthogonal Procrustes: U (q x k, orthonormal columns) with U L = Y
    A, _, Bt = np.linalg.svd(Y @ L.T, full_matrices=False)
    U = A @ Bt
    if not np.allclose(U @ L, Y, atol=1e-7 * (1.0 + np.linalg.norm(Y))):
        raise LiftDegenerate("Procrustes factor does not reproduce the projected block")
    iSqrt = la.sym_inv_sqrt(-P22)
    Zt_T = iSqrt @ U @ R @ Wt  # q x (p - r)
    ZT = np.hstack([Zbar.T, Zt_T]) @ (Tinv if r < p else M1) - iP22 @ qset.psi12.T
    return ZT.T


def lift(qset: QmiSet, proj: ProjectionPair, Zhat, reduced: QmiSet | None = None) -> np.ndarray:
    """Constructive preimage: a member ``Z`` of ``qset`` with ``W^T Z V = Zhat``.

    The row side is completed first on the column-reduced set, then the column
    side on the dual of ``qset``.
    """
    require_regular(qset)
    Zhat = np.atleast_2d(np.asarray(Zhat, dtype=float))
    if reduced is None:
        reduced = reduce(qset, proj)
    if not is_member(reduced, Zhat):
        raise NotAMember("Zhat does not satisfy the reduced QMI")
    W, V = proj.W, proj.V
    col_reduced = reduce(qset, ProjectionPair(np.eye(qset.row_dim), V))
    Zv = _lift_rows(col_reduced, W, Zhat)  # p x qhat, W^T Zv = Zhat
    Zt = _lift_rows(dual(qset), V, Zv.T)  # q x p, V^T Zt = Zv^T
    return Zt.T
