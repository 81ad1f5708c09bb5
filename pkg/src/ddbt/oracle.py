"""Model-based reference computations for a known system."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg as la
from .balancing import BalancingResult, balance_from_gramians, truncate_model
from .data import StateSpaceModel
from .linalg import Unstable

LYAP_RTOL = 1e-10


class ResidualTooLarge(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class OrdinaryGramians:
    P0: np.ndarray
    Q0: np.ndarray


def solve_discrete_lyapunov(A, Wrhs) -> np.ndarray:
    """Solve ``A X A^T - X + W = 0`` by the vectorized linear system.

    Raises
    ------
    Unstable
        If the spectral radius of ``A`` is not below one.
    ResidualTooLarge
        If the solution fails the relative residual gate.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    W = la.symmetrize(Wrhs)
    if la.spectral_radius(A) >= 1.0:
        raise Unstable(f"spectral radius {la.spectral_radius(A):.6g} >= 1")
    n = A.shape[0]
    # vec(A X A^T) = (A kron A) vec(X)
    K = np.eye(n * n) - np.kron(A, A)
    X = np.linalg.solve(K, W.reshape(-1)).reshape(n, n)
    X = 0.5 * (X + X.T)
    res = np.linalg.norm(A @ X @ A.T - X + W)
    if res >= LYAP_RTOL * (np.linalg.norm(X) + np.linalg.norm(W)) and res > 0:
        raise ResidualTooLarge(f"Lyapunov residual {res:.3g} above gate")
    return X


def ordinary_gramians(model: StateSpaceModel) -> OrdinaryGramians:
    P0 = solve_discrete_lyapunov(model.A, model.B @ model.B.T)
    Q0 = solve_discrete_lyapunov(model.A.T, model.C.T @ model.C)
    return OrdinaryGramians(P0, Q0)


def ordinary_hsv(model: StateSpaceModel) -> np.ndarray:
    g = ordinary_gramians(model)
    return balance_from_gramians(g.P0, g.Q0).hsv


def ordinary_balanced_truncation(model: StateSpaceModel, r: int) -> tuple[StateSpaceModel, BalancingResult]:
    g = ordinary_gramians(model)
    bal = balance_from_gramians(g.P0, g.Q0)
    return truncate_model(model, bal, r), bal


def builtin_true_system() -> StateSpaceModel:
    """Six-state cart with double pendulum, single input and output."""
    A = np.array(
        [
            [0.9299, 0.4160, 0.7447, 0.2291, 0.2452, 0.0592],
            [-0.1869, 0.7430, 0.3318, 0.7617, 1.0859, 0.3560],
            [0.0380, 0.0477, -0.3644, 0.0647, 0.1370, 0.0766],
            [0.0169, 0.0549, -0.0972, -0.3693, -0.8685, 0.0484],
            [0.0250, 0.0285, 0.2741, 0.1393, -0.0474, 0.1615],
            [0.1108, 0.1358, -1.7370, 0.1855, -1.8002, -0.2311],
        ]
    )
    B = np.array([[0.0701], [0.1869], [-0.0380], [-0.0169], [-0.0250], [-0.1108]])
    C = np.array([[1.0, 0, 0, 0, 0, 0]])
    D = np.zeros((1, 1))
    return StateSpaceModel(A, B, C, D)
