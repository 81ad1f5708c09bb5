"""Simultaneous diagonalization of Gramian pairs and truncation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import linalg as la
from .data import StateSpaceModel
from .qmi import ProjectionPair, QmiSet, reduce

GROUP_RTOL = 1e-8


class NotPD(ValueError):
    pass


class MultiplicitySplit(ValueError):
    """Requested order cuts through a group of equal singular values."""

    def __init__(self, r: int, admissible: list[int]):
        self.r = r
        self.admissible = admissible
        below = [a for a in admissible if a < r]
        above = [a for a in admissible if a > r]
        near = ([below[-1]] if below else []) + ([above[0]] if above else [])
        super().__init__(f"order {r} splits a multiplicity group; nearest admissible orders: {near}")


@dataclass(frozen=True)
class BalancingResult:
    T: np.ndarray
    Tinv: np.ndarray
    hsv: np.ndarray  # with multiplicity, descending
    multiplicities: tuple[int, ...]

    @property
    def kappa(self) -> int:
        return len(self.multiplicities)

    @property
    def n(self) -> int:
        return self.T.shape[0]

    def boundaries(self) -> list[int]:
        """Orders ``r`` that end on a group boundary, including ``n``."""
        return [int(b) for b in np.cumsum(self.multiplicities)]

    def check_order(self, r: int) -> int:
        """Index of the last kept group, or raise :class:`MultiplicitySplit`."""
        if r == 0 or r not in self.boundaries():
            raise MultiplicitySplit(r, self.boundaries())
        return self.boundaries().index(r) + 1

    def to_dict(self) -> dict:
        return {"T": self.T.tolist(), "hsv": self.hsv.tolist(), "multiplicities": list(self.multiplicities)}


@dataclass(frozen=True)
class ReductionSetup:
    r: int
    ell: int
    proj: ProjectionPair
    Nred: QmiSet
    What: np.ndarray
    Vhat: np.ndarray


def _chol(M: np.ndarray, name: str) -> np.ndarray:
    M = la.symmetrize(M)
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise NotPD(f"{name} is not positive definite") from exc


def group_multiplicities(s: np.ndarray, rtol: float = GROUP_RTOL) -> tuple[int, ...]:
    if s.size == 0:
        return ()
    groups = [1]
    for a, b in zip(s[:-1], s[1:]):
        if (a - b) / s[0] < rtol:
            groups[-1] += 1
        else:
            groups.append(1)
    return tuple(groups)


def balance_from_gramians(P, Q) -> BalancingResult:
    """Square-root balancing: ``T P T^T = T^-T Q T^-1 = diag(hsv)``."""
    Lp = _chol(P, "P")
    Lq = _chol(Q, "Q")
    U, s, Vt = scipy.linalg.svd(Lq.T @ Lp)
    # fix signs so the first nonzero entry of each right singular vector is positive
    for i in range(len(s)):
        v = Vt[i]
        j = np.flatnonzero(np.abs(v) > 1e-14 * np.abs(v).max())[0]
        if v[j] < 0:
            Vt[i] *= -1
            U[:, i] *= -1
    isq = 1.0 / np.sqrt(s)
    T = isq[:, None] * (U.T @ Lq.T)
    Tinv = (Lp @ Vt.T) * isq[None, :]
    return BalancingResult(T, Tinv, s, group_multiplicities(s))


def _pi(n: int, r: int) -> np.ndarray:
    return np.eye(n)[:, :r]


def truncate_model(model: StateSpaceModel, bal: BalancingResult, r: int) -> StateSpaceModel:
    """Petrov-Galerkin projection onto the ``r`` dominant balanced states."""
    if model.n != bal.n:
        raise ValueError("model order does not match the balancing transform")
    bal.check_order(r)
    Wh = bal.T.T[:, :r]
    Vh = bal.Tinv[:, :r]
    return StateSpaceModel(Wh.T @ model.A @ Vh, Wh.T @ model.B, model.C @ Vh, model.D)


def build_reduction_setup(N: QmiSet, bal: BalancingResult, r: int, dims: tuple[int, int, int]) -> ReductionSetup:
    """Projectors ``W = blkdiag(T^T Pi, I_p)``, ``V = blkdiag(T^-1 Pi, I_m)`` and the reduced set."""
    n, m, p = dims
    ell = bal.check_order(r)
    Wh = bal.T.T @ _pi(n, r)
    Vh = bal.Tinv @ _pi(n, r)
    W = scipy.linalg.block_diag(Wh, np.eye(p))
    V = scipy.linalg.block_diag(Vh, np.eye(m))
    proj = ProjectionPair(W, V)
    return ReductionSetup(r, ell, proj, reduce(N, proj), Wh, Vh)


def classical_bound(bal: BalancingResult, r: int) -> float:
    """Twice the sum of the discarded singular values, counted with multiplicity."""
    if r != bal.n:
        bal.check_order(r)
    return float(2.0 * bal.hsv[r:].sum())
