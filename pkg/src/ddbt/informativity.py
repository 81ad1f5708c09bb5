"""Certificates that every system consistent with the data admits common Gramians."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import linalg as la
from .qmi import QmiSet, check_slater_by_inertia, dual, project_rows
from .sdp import Infeasible, SdpProblem, solve

MARGIN_RTOL = 1e-6


class PreconditionFailed(ValueError):
    pass


def lmi_margin(psi: QmiSet) -> float:
    """Strictness margin used for LMIs built on ``psi``."""
    return MARGIN_RTOL * (1.0 + np.linalg.norm(psi.psi, 2))


def controllability_set(N: QmiSet, n: int) -> QmiSet:
    """Row projection of the data set onto the state equation: members ``[A, B]``."""
    return project_rows(N, np.eye(N.row_dim)[:, :n])


def observability_set(N: QmiSet, n: int) -> QmiSet:
    """Row projection of the dual set: members ``[A^T, C^T]``."""
    Nd = dual(N)
    return project_rows(Nd, np.eye(Nd.row_dim)[:, :n])


@dataclass
class InformativityCertificate:
    P: np.ndarray
    Q: np.ndarray
    alpha: float
    beta: float
    margins: dict = field(default_factory=dict)
    solver_status: str = ""

    @property
    def trace_P(self) -> float:
        return float(np.trace(self.P))

    @property
    def trace_Q(self) -> float:
        return float(np.trace(self.Q))

    def to_dict(self) -> dict:
        return {
            "P": self.P.tolist(),
            "Q": self.Q.tolist(),
            "alpha": self.alpha,
            "beta": self.beta,
            "margins": self.margins,
            "solver_status": self.solver_status,
            "trace_P": self.trace_P,
            "trace_Q": self.trace_Q,
        }


def gramian_lmi(X: np.ndarray, mult: float, S: QmiSet) -> np.ndarray:
    """``blkdiag(X, -X, -I) - mult * S.psi`` for a projected set ``S`` with row dimension ``n``."""
    n = X.shape[0]
    k = S.col_dim - n
    return scipy.linalg.block_diag(X, -X, -np.eye(k)) - mult * S.psi


def _solve_gramian(S: QmiSet, minimize_trace: bool, backend: str | None, label: str):
    n = S.row_dim
    scale = np.linalg.norm(S.psi, 2)
    Sn = S.scaled(1.0 / scale)
    eps = lmi_margin(Sn)
    prob = SdpProblem()
    prob.sym("X", n)
    prob.scalar("a")
    prob.lmi("gramian", lambda v: gramian_lmi(v["X"], v["a"], Sn))
    prob.lmi("pos", lambda v: v["X"])
    prob.lmi("mult", lambda v: np.array([[v["a"]]]))
    if minimize_trace:
        prob.minimize(lambda v: np.trace(v["X"]))
    try:
        sol = solve(prob, eps, backend)
    except Infeasible as exc:
        raise Infeasible(f"{label}: {exc}", exc.best_margin) from None
    X = la.symmetrize(sol.values["X"])
    margins = {f"{label}_{k}": v for k, v in sol.margins.items()}
    margins[f"{label}_epsilon"] = eps
    # multiplier in the units of the unnormalized set
    return X, sol.values["a"] / scale, margins, sol.status


def check_informativity(
    N: QmiSet,
    dims: tuple[int, int, int],
    minimize_trace: bool = True,
    backend: str | None = None,
    check_slater: bool = True,
) -> InformativityCertificate:
    """Search for generalized Gramians ``P``, ``Q`` valid for every system in ``N``.

    Parameters
    ----------
    N : QmiSet
        Data QMI with row dimension ``n + p`` and column dimension ``n + m``.
    dims : (n, m, p)
    minimize_trace : bool
        Minimize ``trace(P)`` and ``trace(Q)``, which tends to give tighter
        reduced models.

    Raises
    ------
    PreconditionFailed
        When ``N`` does not have the inertia of a regular data set.
    Infeasible
        When the data are not informative at the solver margin.
    """
    n, m, p = dims
    if (N.row_dim, N.col_dim) != (n + p, n + m):
        raise ValueError("data QMI does not match dims")
    if check_slater and not check_slater_by_inertia(N):
        raise PreconditionFailed("data QMI fails the Slater/inertia condition")
    P, alpha, mP, sP = _solve_gramian(controllability_set(N, n), minimize_trace, backend, "ctrb")
    Q, beta, mQ, sQ = _solve_gramian(observability_set(N, n), minimize_trace, backend, "obsv")
    status = sP if sP == sQ else f"{sP}/{sQ}"
    return InformativityCertificate(P, Q, float(alpha), float(beta), {**mP, **mQ}, status)


def gramian_dominance(P, Pref) -> bool:
    """Strict Loewner order ``P > Pref``."""
    D = la.symmetrize(np.asarray(P) - np.asarray(Pref))
    return bool(np.linalg.eigvalsh(D)[0] > 0)
