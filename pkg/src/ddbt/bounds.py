"""Uniform and model-specific H-infinity error bounds, and the H-infinity norm."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import linalg as la
from .data import StateSpaceModel
from .linalg import Unstable
from .qmi import QmiSet
from .sdp import SdpProblem, solve

MARGIN_RTOL = 1e-6


# error system and H-infinity norm -------------------------------------------

def assemble_error_system(full: StateSpaceModel, rom: StateSpaceModel) -> StateSpaceModel:
    """Realization of ``full - rom`` (sign-irrelevant for the norm)."""
    if (full.m, full.p) != (rom.m, rom.p):
        raise ValueError("input/output dimensions differ")
    return StateSpaceModel(
        scipy.linalg.block_diag(full.A, rom.A),
        np.vstack([full.B, rom.B]),
        np.hstack([full.C, -rom.C]),
        full.D - rom.D,
    )


@dataclass(frozen=True)
class HinfResult:
    norm: float
    certified: bool
    tolerance: float
    peak_frequency: float = 0.0
    lower: float = 0.0
    upper: float = 0.0


def freq_response(model: StateSpaceModel, theta: float) -> np.ndarray:
    """``C (e^{i theta} I - A)^{-1} B + D``."""
    z = np.exp(1j * theta)
    return model.C @ np.linalg.solve(z * np.eye(model.n) - model.A, model.B) + model.D


def _gain(model: StateSpaceModel, theta: float) -> float:
    return float(np.linalg.norm(freq_response(model, theta), 2))


def _bilinear(model: StateSpaceModel):
    """Continuous-time realization with the same frequency response on ``s = i tan(theta/2)``."""
    n = model.n
    Ai = np.linalg.inv(model.A + np.eye(n))
    Ac = Ai @ (model.A - np.eye(n))
    Bc = np.sqrt(2.0) * Ai @ model.B
    Cc = np.sqrt(2.0) * model.C @ Ai
    Dc = model.D - model.C @ Ai @ model.B
    return Ac, Bc, Cc, Dc


def _crossings(cont, gamma: float, axis_tol: float) -> tuple[np.ndarray, bool]:
    """Frequencies where some singular value equals ``gamma``.

    Returns the continuous-time crossing frequencies and whether any eigenvalue
    landed in the ambiguous band around the imaginary axis.
    """
    Ac, Bc, Cc, Dc = cont
    m = Bc.shape[1]
    R = gamma**2 * np.eye(m) - Dc.T @ Dc
    Ri = np.linalg.inv(R)
    F = Ac + Bc @ Ri @ Dc.T @ Cc
    H = np.block(
        [
            [F, Bc @ Ri @ Bc.T],
            [-Cc.T @ (np.eye(Cc.shape[0]) + Dc @ Ri @ Dc.T) @ Cc, -F.T],
        ]
    )
    ev = np.linalg.eigvals(H)
    scale = 1.0 + np.abs(ev)
    on_axis = np.abs(ev.real) < axis_tol * scale
    ambiguous = bool(np.any((np.abs(ev.real) >= axis_tol * scale) & (np.abs(ev.real) < 1e3 * axis_tol * scale)))
    w = np.abs(ev.imag[on_axis])
    return np.unique(np.round(w, 12)), ambiguous


def hinf_norm(model: StateSpaceModel, tol: float = 1e-8, max_iter: int = 200) -> HinfResult:
    """H-infinity norm of a stable discrete-time system by bracketed bisection.

    A level ``gamma`` is an upper bound exactly when the bounded-real
    inequality is strictly feasible. That is decided without an SDP, from the
    absence of imaginary-axis eigenvalues of the Hamiltonian of the
    bilinear-transformed system. Crossing frequencies found on the way lift
    the lower bound to attained gains.

    Raises
    ------
    Unstable
        If the spectral radius of ``A`` is at least one.
    """
    rho = la.spectral_radius(model.A) if model.n else 0.0
    if rho >= 1.0:
        raise Unstable(f"spectral radius {rho:.6g} >= 1")
    if model.n == 0 or not np.any(model.B) or not np.any(model.C):
        d = float(np.linalg.norm(model.D, 2))
        return HinfResult(d, True, tol, 0.0, d, d)
    cont = _bilinear(model)
    axis_tol = 1e-9
    # lower bound from D and a few probe frequencies
    probes = [0.0, np.pi] + list(np.linspace(0, np.pi, 33)[1:-1])
    gains = [(_gain(model, th), th) for th in probes]
    lower, peak = max(gains)
    lower = max(lower, float(np.linalg.norm(model.D, 2)))
    upper = (
        np.linalg.norm(model.C, 2) * np.linalg.norm(model.B, 2) / (1.0 - rho)
        + np.linalg.norm(model.D, 2)
    )
    certified = True
    # double until the upper end verifies
    for _ in range(200):
        if upper > lower:
            w, amb = _crossings(cont, upper, axis_tol)
            if w.size == 0:
                certified &= not amb
                break
        upper *= 2.0
    else:
        raise RuntimeError("could not bracket the H-infinity norm")
    for _ in range(max_iter):
        if upper - lower < tol * (1.0 + lower):
            break
        gamma = 0.5 * (lower + upper)
        w, amb = _crossings(cont, gamma, axis_tol)
        if w.size == 0:
            upper = gamma
            certified &= not amb
            continue
        # attained gains at (and between) crossings are valid lower bounds
        th = 2.0 * np.arctan(w)
        cand = list(th)
        if th.size > 1:
            ths = np.sort(th)
            cand += list(0.5 * (ths[:-1] + ths[1:]))
        best = max((_gain(model, t), t) for t in cand)
        # a crossing at gamma means the norm is at least gamma; the attained
        # gain should confirm it, otherwise the crossing was spurious
        certified &= best[0] >= gamma * (1.0 - 1e-6)
        if best[0] > lower:
            lower, peak = best
        lower = max(lower, gamma)
    return HinfResult(float(0.5 * (lower + upper)), bool(certified), tol, float(peak), float(lower), float(upper))


def brl_matrix(model: StateSpaceModel, K: np.ndarray, gamma: float) -> np.ndarray:
    """``blkdiag(K, I) - [A B; C D] blkdiag(K, gamma^-2 I) [A B; C D]^T``.

    Positive definite for some ``K > 0`` exactly when the norm is below ``gamma``.
    """
    M = model.stack()
    mid = scipy.linalg.block_diag(K, np.eye(model.m) / gamma**2)
    return scipy.linalg.block_diag(K, np.eye(model.p)) - M @ mid @ M.T


def brl_certificate(model: StateSpaceModel, gamma: float, slack: float = 1e-8) -> np.ndarray:
    """A ``K > 0`` making :func:`brl_matrix` positive definite.

    Iterates the bounded-real Riccati map with an extra ``slack * I`` term, so
    the Schur complement of the result equals ``slack * I``. Raises
    ``ValueError`` if the iteration breaks down, which happens when ``gamma``
    does not exceed the norm.
    """
    A, B, C, D = model.A, model.B, model.C, model.D
    g2 = 1.0 / gamma**2
    K = np.zeros_like(A)
    for _ in range(100000):
        S = np.eye(model.p) - C @ K @ C.T - g2 * D @ D.T
        if np.linalg.eigvalsh(S)[0] <= 0:
            raise ValueError("gamma does not bound the norm")
        G = A @ K @ C.T + g2 * B @ D.T
        Kn = A @ K @ A.T + g2 * B @ B.T + G @ np.linalg.solve(S, G.T) + slack * np.eye(model.n)
        Kn = 0.5 * (Kn + Kn.T)
        if not np.all(np.isfinite(Kn)) or np.linalg.norm(Kn) > 1e12:
            raise ValueError("gamma does not bound the norm")
        done = np.linalg.norm(Kn - K) < 1e-14 * np.linalg.norm(Kn)
        K = Kn
        if done:
            return K
    raise ValueError("gamma does not bound the norm")


# a priori bound ----------------------------------------------------------------

def _margin(*sets: QmiSet) -> float:
    return MARGIN_RTOL * (1.0 + max(np.linalg.norm(s.psi, 2) for s in sets))


def apriori_lmi(
    K: np.ndarray, tau: float, mu: float, delta: float, eta: float,
    N: QmiSet, Nred: QmiSet, dims: tuple[int, int, int, int],
) -> np.ndarray:
    """Block matrix whose positivity certifies ``||full - rom|| < tau^-1/2`` for all pairs."""
    n, r, m, p = dims
    K11, K12, K22 = K[:n, :n], K[:n, n:], K[n:, n:]
    Ip, Im = np.eye(p), np.eye(m)
    bd = scipy.linalg.block_diag
    T11 = bd(K11, (0.5 - mu) * Ip, -K11, -tau * Im)
    T12 = bd(K12, -mu * Ip, -K12, -tau * Im)
    T22 = bd(K22, (0.5 - mu) * Ip, -K22, -tau * Im)
    return np.block([[T11 - delta * N.psi, T12], [T12.T, T22 - eta * Nred.psi]])


@dataclass
class AprioriBound:
    gamma: float
    K: np.ndarray
    delta: float
    eta: float
    mu: float
    margins: dict = field(default_factory=dict)
    solver_status: str = ""

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma, "K": self.K.tolist(), "delta": self.delta, "eta": self.eta,
            "mu": self.mu, "solver_status": self.solver_status, "margins": self.margins,
        }


def apriori_bound(N: QmiSet, Nred: QmiSet, dims: tuple[int, int, int, int], backend: str | None = None) -> AprioriBound:
    """Smallest ``gamma`` bounding the error between every system and every reduced model.

    Parameters
    ----------
    N, Nred : QmiSet
        Full and reduced data sets.
    dims : (n, r, m, p)
    """
    n, r, m, p = dims
    if (N.row_dim, N.col_dim) != (n + p, n + m) or (Nred.row_dim, Nred.col_dim) != (r + p, r + m):
        raise ValueError("set dimensions do not match dims")
    sN, sR = np.linalg.norm(N.psi, 2), np.linalg.norm(Nred.psi, 2)
    Nn, Rn = N.scaled(1 / sN), Nred.scaled(1 / sR)
    eps = _margin(Nn, Rn)
    prob = SdpProblem()
    prob.sym("K", n + r)
    for s in ("tau", "mu", "delta", "eta"):
        prob.scalar(s)
    prob.lmi("bound", lambda v: apriori_lmi(v["K"], v["tau"], v["mu"], v["delta"], v["eta"], Nn, Rn, dims))
    prob.lmi("K", lambda v: v["K"])
    prob.lmi("delta", lambda v: np.array([[v["delta"]]]))
    prob.lmi("eta", lambda v: np.array([[v["eta"]]]))
    prob.lmi("tau", lambda v: np.array([[v["tau"]]]))
    prob.maximize(lambda v: v["tau"])
    sol = solve(prob, eps, backend)
    v = sol.values
    margins = dict(sol.margins, epsilon=eps)
    return AprioriBound(float(v["tau"] ** -0.5), v["K"], v["delta"] / sN, v["eta"] / sR, v["mu"], margins, sol.status)


# a posteriori bound ------------------------------------------------------------

def aposteriori_lmi(K: np.ndarray, tau: float, delta: float, N: QmiSet, rom: StateSpaceModel, n: int) -> np.ndarray:
    """Block matrix whose positivity certifies ``||full - rom|| < tau^-1/2`` for every full system in ``N``."""
    A0, B0, C0, D0 = rom.A, rom.B, rom.C, rom.D
    r, m, p = rom.n, rom.m, rom.p
    K11, K12, K22 = K[:n, :n], K[:n, n:], K[n:, n:]
    Z = np.zeros
    rows = [
        [K11, Z((n, p)), Z((n, n)), Z((n, m)), K12],
        [Z((p, n)), np.eye(p) - C0 @ K22 @ C0.T - tau * D0 @ D0.T, C0 @ K12.T, tau * D0,
         C0 @ K22 @ A0.T + tau * D0 @ B0.T],
        [Z((n, n)), K12 @ C0.T, -K11, Z((n, m)), -K12 @ A0.T],
        [Z((m, n)), tau * D0.T, Z((m, n)), -tau * np.eye(m), -tau * B0.T],
        [K12.T, A0 @ K22 @ C0.T + tau * B0 @ D0.T, -A0 @ K12.T, -tau * B0,
         K22 - A0 @ K22 @ A0.T - tau * B0 @ B0.T],
    ]
    M = np.block(rows)
    return M - scipy.linalg.block_diag(delta * N.psi, np.zeros((r, r)))


@dataclass
class AposterioriBound:
    gamma0: float
    K: np.ndarray
    delta: float
    margins: dict = field(default_factory=dict)
    solver_status: str = ""

    def to_dict(self) -> dict:
        return {
            "gamma0": self.gamma0, "K": self.K.tolist(), "delta": self.delta,
            "solver_status": self.solver_status, "margins": self.margins,
        }


def aposteriori_bound(N: QmiSet, rom: StateSpaceModel, dims: tuple[int, int, int], backend: str | None = None) -> AposterioriBound:
    """Smallest ``gamma0`` bounding the error between ``rom`` and every system in ``N``.

    Parameters
    ----------
    dims : (n, m, p)
    """
    n, m, p = dims
    if (N.row_dim, N.col_dim) != (n + p, n + m) or (rom.m, rom.p) != (m, p):
        raise ValueError("dimensions do not match")
    r = rom.n
    sN = np.linalg.norm(N.psi, 2)
    Nn = N.scaled(1 / sN)
    eps = _margin(Nn)
    prob = SdpProblem()
    prob.sym("K", n + r)
    prob.scalar("tau")
    prob.scalar("delta")
    prob.lmi("bound", lambda v: aposteriori_lmi(v["K"], v["tau"], v["delta"], Nn, rom, n))
    prob.lmi("K", lambda v: v["K"])
    prob.lmi("delta", lambda v: np.array([[v["delta"]]]))
    prob.lmi("tau", lambda v: np.array([[v["tau"]]]))
    prob.maximize(lambda v: v["tau"])
    sol = solve(prob, eps, backend)
    v = sol.values
    return AposterioriBound(float(v["tau"] ** -0.5), v["K"], v["delta"] / sN, dict(sol.margins, epsilon=eps), sol.status)
