"""Small linear-matrix-inequality problems with interchangeable solvers.

Constraints are given as Python callables that build a symmetric matrix from
a dictionary of decision values. The callables must be affine; their
coefficients are recovered by evaluating them at basis points, so the same
assembly code serves for solving and for checking a candidate solution.

Two backends are available: ``"cvxpy"`` (interior-point solvers through
cvxpy) and ``"barrier"`` (a self-contained log-det barrier method). The
default comes from the ``DDBT_SDP_BACKEND`` environment variable, falling
back to ``"cvxpy"``.

Every solve runs a max-margin feasibility phase first. It is always strictly
feasible, so infeasibility is detected from its optimal margin rather than
from solver status codes.
"""

from __future__ import annotations

import logging
import os
import threading
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)

BOX = 1e8
MARGIN_CAP = 1.0
AFFINE_RTOL = 1e-9
ESCALATIONS = 6


class Infeasible(RuntimeError):
    """No point satisfies the constraints with the requested margin."""

    def __init__(self, message: str, best_margin: float):
        super().__init__(message)
        self.best_margin = best_margin


class SolverError(RuntimeError):
    pass


class NotAffine(ValueError):
    pass


@dataclass
class _Slot:
    name: str
    kind: str  # "sym" or "scalar"
    size: int
    offset: int

    @property
    def width(self) -> int:
        return self.size * (self.size + 1) // 2 if self.kind == "sym" else 1


@dataclass
class Lmi:
    name: str
    fn: Callable[[dict], np.ndarray]
    F0: np.ndarray = field(repr=False, default=None)
    F: np.ndarray = field(repr=False, default=None)  # (d, k, k)

    @property
    def size(self) -> int:
        return self.F0.shape[0]

    def at(self, x: np.ndarray) -> np.ndarray:
        return self.F0 + np.tensordot(x, self.F, axes=1)


@dataclass
class SdpSolution:
    values: dict
    x: np.ndarray
    objective: float | None
    margins: dict
    feasibility_margin: float
    backend: str
    status: str

    def min_margin(self) -> float:
        return min(self.margins.values())


class SdpProblem:
    """Decision variables, affine LMI constraints and a linear objective."""

    def __init__(self):
        self._slots: dict[str, _Slot] = {}
        self._dim = 0
        self.lmis: list[Lmi] = []
        self._objective: Callable[[dict], float] | None = None
        self._sense = 1.0
        self._compiled = False

    # declaration ---------------------------------------------------------
    def sym(self, name: str, n: int) -> None:
        self._add(_Slot(name, "sym", n, self._dim))

    def scalar(self, name: str) -> None:
        self._add(_Slot(name, "scalar", 1, self._dim))

    def _add(self, slot: _Slot) -> None:
        if slot.name in self._slots:
            raise ValueError(f"duplicate variable {slot.name}")
        self._slots[slot.name] = slot
        self._dim += slot.width
        self._compiled = False

    def lmi(self, name: str, fn: Callable[[dict], np.ndarray]) -> None:
        """Require ``fn(values)`` to be positive definite (with the solve margin)."""
        self.lmis.append(Lmi(name, fn))
        self._compiled = False

    def minimize(self, fn: Callable[[dict], float]) -> None:
        self._objective, self._sense = fn, 1.0
        self._compiled = False

    def maximize(self, fn: Callable[[dict], float]) -> None:
        self._objective, self._sense = fn, -1.0
        self._compiled = False

    @property
    def dim(self) -> int:
        return self._dim

    # packing -------------------------------------------------------------
    def unpack(self, x: np.ndarray) -> dict:
        out = {}
        for s in self._slots.values():
            seg = x[s.offset : s.offset + s.width]
            if s.kind == "scalar":
                out[s.name] = float(seg[0])
            else:
                M = np.zeros((s.size, s.size))
                iu = np.triu_indices(s.size)
                M[iu] = seg
                M = M + M.T - np.diag(np.diag(M))
                out[s.name] = M
        return out

    def pack(self, values: dict) -> np.ndarray:
        x = np.zeros(self._dim)
        for s in self._slots.values():
            v = values[s.name]
            if s.kind == "scalar":
                x[s.offset] = float(v)
            else:
                x[s.offset : s.offset + s.width] = np.asarray(v)[np.triu_indices(s.size)]
        return x

    # compilation ---------------------------------------------------------
    def compile(self, check_rng: int = 0) -> None:
        if self._compiled:
            return
        d = self._dim
        zero = self.unpack(np.zeros(d))
        basis = [self.unpack(np.eye(d)[i]) for i in range(d)]
        for lmi in self.lmis:
            F0 = np.asarray(lmi.fn(zero), dtype=float)
            if F0.ndim != 2 or F0.shape[0] != F0.shape[1]:
                raise ValueError(f"constraint {lmi.name} is not square")
            lmi.F0 = 0.5 * (F0 + F0.T)
            F = np.empty((d,) + F0.shape)
            for i, b in enumerate(basis):
                Fi = np.asarray(lmi.fn(b), dtype=float) - F0
                F[i] = 0.5 * (Fi + Fi.T)
            lmi.F = F
        self.c = np.zeros(d)
        if self._objective is not None:
            f0 = float(self._objective(zero))
            self.c = self._sense * np.array([float(self._objective(b)) - f0 for b in basis])
        self._compiled = True
        self._check_affine(np.random.default_rng(check_rng).standard_normal(d))

    def _check_affine(self, x: np.ndarray) -> None:
        vals = self.unpack(x)
        for lmi in self.lmis:
            direct = np.asarray(lmi.fn(vals), dtype=float)
            direct = 0.5 * (direct + direct.T)
            ref = lmi.at(x)
            scale = 1.0 + np.abs(lmi.F0).max() + np.abs(lmi.F).max() * np.abs(x).sum()
            if np.abs(direct - ref).max() > AFFINE_RTOL * scale:
                raise NotAffine(f"constraint {lmi.name} is not affine in the declared variables")

    # evaluation ----------------------------------------------------------
    def margins(self, x: np.ndarray) -> dict:
        self.compile()
        return {l.name: float(np.linalg.eigvalsh(l.at(x))[0]) for l in self.lmis}

    def objective_value(self, x: np.ndarray) -> float | None:
        if self._objective is None:
            return None
        return float(self._objective(self.unpack(x)))


# backends ------------------------------------------------------------------

_cvxpy_lock = threading.Lock()
_CVXPY_SOLVERS = ("CLARABEL", "CVXOPT")


def _cvxpy_solve(prob: SdpProblem, margin: float | None, phase1: bool) -> tuple[np.ndarray, float | None]:
    """One cvxpy solve. Phase one maximizes a common margin ``t``."""
    import cvxpy as cp

    d = prob.dim
    x = cp.Variable(d)
    t = cp.Variable() if phase1 else None
    cons = [cp.norm(x, "inf") <= BOX]
    for lmi in prob.lmis:
        k = lmi.size
        shift = t if phase1 else margin
        if k == 1:
            cons.append(lmi.F0[0, 0] + lmi.F[:, 0, 0] @ x >= shift)
            continue
        Fmat = lmi.F.reshape(d, k * k).T
        expr = cp.reshape(Fmat @ x, (k, k), order="C") + lmi.F0
        cons.append(0.5 * (expr + expr.T) - shift * np.eye(k) >> 0)
    if phase1:
        cons.append(t <= MARGIN_CAP)
        obj = cp.Maximize(t)
    else:
        obj = cp.Minimize(prob.c @ x) if np.any(prob.c) else cp.Minimize(0)
    problem = cp.Problem(obj, cons)
    last = None
    with _cvxpy_lock:
        for solver in _CVXPY_SOLVERS:
            if solver not in cp.installed_solvers():
                continue
            try:
                with warnings.catch_warnings():
                    # accuracy is judged by re-evaluating the constraints
                    warnings.simplefilter("ignore", UserWarning)
                    problem.solve(solver=solver)
            except cp.error.SolverError as exc:
                last = f"{solver}: {exc}"
                continue
            log.debug("%s phase1=%s status=%s", solver, phase1, problem.status)
            if problem.status in ("optimal", "optimal_inaccurate") and x.value is not None:
                return np.asarray(x.value), (float(t.value) if phase1 else None)
            last = f"{solver}: {problem.status}"
    raise SolverError(f"all cvxpy solvers failed ({last})")


def _barrier_terms(prob: SdpProblem, x: np.ndarray, shift: float, value_only: bool = False):
    """Value, gradient and Hessian of ``-sum log det(F_j(x) - shift I)`` plus the box barrier."""
    d = prob.dim
    val, g, H = 0.0, np.zeros(d), np.zeros((d, d))
    for lmi in prob.lmis:
        M = lmi.at(x) - shift * np.eye(lmi.size)
        try:
            Lc = np.linalg.cholesky(M)
        except np.linalg.LinAlgError:
            return np.inf, None, None
        val -= 2.0 * np.log(np.diag(Lc)).sum()
        if value_only:
            continue
        Li = np.linalg.inv(Lc)
        G = Li @ lmi.F @ Li.T  # L^-1 F_i L^-T for every i
        g -= np.trace(G, axis1=1, axis2=2)
        Gf = G.reshape(d, -1)
        H += Gf @ Gf.T
    s = BOX**2 - x**2
    if np.any(s <= 0):
        return np.inf, None, None
    val -= np.log(s).sum()
    if value_only:
        return val, np.zeros(0), None
    g += 2 * x / s
    H += np.diag(2 / s + 4 * x**2 / s**2)
    return val, g, H


def _newton(prob, x, t, weight_c, shift_fn, tol=1e-9, max_iter=100):
    """Damped Newton minimization of ``weight_c . z + barrier`` over ``z = (x, t)`` or ``x``."""
    for _ in range(max_iter):
        f, g, H = shift_fn(x, t)
        if g is None:
            raise SolverError("barrier iterate left the domain")
        f += weight_c @ (x if t is None else np.append(x, t))
        g = g + weight_c
        try:
            step = -np.linalg.solve(H + 1e-14 * np.eye(len(g)) * np.abs(np.diag(H)).max(), g)
        except np.linalg.LinAlgError as exc:
            raise SolverError("singular Newton system") from exc
        dec = -g @ step
        if dec / 2 < tol:
            break
        a = 1.0
        while a > 1e-12:
            z = (x if t is None else np.append(x, t)) + a * step
            xn, tn = (z, None) if t is None else (z[:-1], z[-1])
            fn, gn, _ = shift_fn(xn, tn, True)
            if gn is not None and fn + weight_c @ z <= f - 0.25 * a * dec:
                break
            a *= 0.5
        else:
            break
        x, t = xn, tn
    return x, t


def _barrier_phase1(prob: SdpProblem, target: float) -> tuple[np.ndarray, float]:
    d = prob.dim
    x = np.zeros(d)
    t = min(np.linalg.eigvalsh(l.at(x))[0] for l in prob.lmis) - 1.0

    def fun(x, t, value_only=False):
        if t >= MARGIN_CAP:
            return np.inf, None, None
        val, g, H = _barrier_terms(prob, x, t, value_only)
        if g is None:
            return np.inf, None, None
        if value_only:
            return val - np.log(MARGIN_CAP - t), g, None
        # the margin enters every LMI with coefficient -I
        gt, Htt, Hxt = 0.0, 0.0, np.zeros(d)
        for lmi in prob.lmis:
            Mi = np.linalg.inv(lmi.at(x) - t * np.eye(lmi.size))
            gt += np.trace(Mi)
            Htt += np.sum(Mi * Mi)
            Hxt -= np.einsum("ab,iba->i", Mi @ Mi, lmi.F)
        val -= np.log(MARGIN_CAP - t)
        gt += 1.0 / (MARGIN_CAP - t)
        Htt += 1.0 / (MARGIN_CAP - t) ** 2
        Hf = np.block([[H, Hxt[:, None]], [Hxt[None, :], np.array([[Htt]])]])
        return val, np.append(g, gt), Hf

    s = 1.0
    nbar = sum(l.size for l in prob.lmis) + 2 * d + 1
    while True:
        c = np.zeros(d + 1)
        c[-1] = -s
        x, t = _newton(prob, x, t, c, fun)
        if t > target or nbar / s < 1e-10:
            return x, t
        s *= 10.0


def _barrier_phase2(prob: SdpProblem, x: np.ndarray, margin: float) -> np.ndarray:
    if not np.any(prob.c):
        return x
    nbar = sum(l.size for l in prob.lmis) + 2 * prob.dim
    s = 1.0

    def fun(x, _t, value_only=False):
        return _barrier_terms(prob, x, margin, value_only)

    while True:
        x, _ = _newton(prob, x, None, s * prob.c, fun)
        if nbar / s < 1e-9 * (1.0 + abs(prob.c @ x)):
            return x
        s *= 10.0


def default_backend() -> str:
    return os.environ.get("DDBT_SDP_BACKEND", "cvxpy")


def solve(prob: SdpProblem, margin: float, backend: str | None = None) -> SdpSolution:
    """Optimize subject to every constraint having minimum eigenvalue at least ``margin``.

    Raises
    ------
    Infeasible
        If the best achievable common margin does not exceed ``margin``.
    SolverError
        If the backend fails on a problem known to be feasible.
    """
    backend = backend or default_backend()
    prob.compile()
    if backend == "cvxpy":
        try:
            x1 = _cvxpy_solve(prob, None, phase1=True)[0]
        except SolverError as exc:
            log.info("interior-point feasibility phase failed (%s); using the barrier method", exc)
            x1 = _barrier_phase1(prob, 2.0 * margin)[0]
        t = min(prob.margins(x1).values())  # measured, not reported
    elif backend == "barrier":
        x1, t = _barrier_phase1(prob, 2.0 * margin)
        t = min(prob.margins(x1).values())
    else:
        raise ValueError(f"unknown SDP backend {backend!r}")
    if t <= margin:
        raise Infeasible(f"best common margin {t:.3g} does not exceed {margin:.3g}", t)
    status = "optimal"
    if backend == "cvxpy":
        # solver residuals scale with the problem data; escalate the requested
        # margin until the returned point verifies at ``margin``
        target = margin
        for _ in range(ESCALATIONS):
            try:
                x = _cvxpy_solve(prob, target, phase1=False)[0]
            except SolverError as exc:
                log.warning("optimization phase failed (%s)", exc)
                x = None
                break
            deficit = margin - min(prob.margins(x).values())
            if deficit <= 0:
                break
            target += 2.0 * deficit
        else:
            x = None
        if x is None or min(prob.margins(x).values()) < margin:
            # the phase-one point is strictly inside; continue with the barrier method from there
            log.info("interior-point optimization not verified; switching to the barrier method")
            try:
                x, status = _barrier_phase2(prob, x1, margin), "optimal_barrier"
            except SolverError as exc:
                log.warning("barrier optimization failed (%s); keeping the feasibility point", exc)
                x, status = x1, "feasible_only"
    else:
        x = _barrier_phase2(prob, x1, margin)
    m = prob.margins(x)
    if np.abs(x).max() > 0.9 * BOX:
        status += "_box_active"
    return SdpSolution(prob.unpack(x), x, prob.objective_value(x), m, t, backend, status)
