"""Trajectory generation, noise model checks and the data QMI."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from . import linalg as la
from .qmi import QmiSet, is_member

log = logging.getLogger(__name__)

RANK_RTOL = 1e-8
BUILTIN_ALIAS = "builtin:cart_double_pendulum"


@dataclass(frozen=True)
class StateSpaceModel:
    """Discrete-time realization ``x+ = A x + B u``, ``y = C x + D u``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        mats = [np.atleast_2d(np.asarray(M, dtype=float)) for M in (self.A, self.B, self.C, self.D)]
        A, B, C, D = mats
        n = A.shape[0]
        if (
            A.shape != (n, n)
            or B.shape[0] != n
            or C.shape[1] != n
            or D.shape != (C.shape[0], B.shape[1])
        ):
            raise ValueError(
                f"inconsistent shapes A{A.shape} B{B.shape} C{C.shape} D{D.shape}"
            )
        if not all(np.all(np.isfinite(M)) for M in mats):
            raise ValueError("model has non-finite entries")
        for name, M in zip("ABCD", mats):
            object.__setattr__(self, name, M)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    def stack(self) -> np.ndarray:
        """``[[A, B], [C, D]]``, the matrix variable of the data QMI."""
        return np.block([[self.A, self.B], [self.C, self.D]])

    @classmethod
    def from_stack(cls, Z: np.ndarray, n: int, m: int) -> "StateSpaceModel":
        return cls(Z[:n, :n], Z[:n, n : n + m], Z[n:, :n], Z[n:, n : n + m])

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in "ABCD"}


@dataclass(frozen=True)
class NoiseModel:
    """Quadratic bound on the stacked noise ``[w; z]`` over all samples."""

    phi11: np.ndarray
    phi12: np.ndarray
    phi22: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "phi11", la.symmetrize(self.phi11))
        object.__setattr__(self, "phi22", la.symmetrize(self.phi22))
        object.__setattr__(self, "phi12", np.atleast_2d(np.asarray(self.phi12, dtype=float)))
        k, L = self.phi11.shape[0], self.phi22.shape[0]
        if self.phi12.shape != (k, L):
            raise ValueError("phi12 shape does not match phi11/phi22")

    @classmethod
    def energy_bound(cls, bound: float, k: int, L: int) -> "NoiseModel":
        """``Phi11 = bound I``, ``Phi12 = 0``, ``Phi22 = -I``: ``Z Z^T <= bound I``."""
        return cls(bound * np.eye(k), np.zeros((k, L)), -np.eye(L))

    def as_qmi(self) -> QmiSet:
        k = self.phi11.shape[0]
        return QmiSet(np.block([[self.phi11, self.phi12], [self.phi12.T, self.phi22]]), k, self.phi22.shape[0])

    def is_valid(self) -> bool:
        q = self.as_qmi()
        return la.is_pos_def(-q.psi22) and la.is_pos_def(q.schur())


@dataclass(frozen=True)
class TrajectoryData:
    Uminus: np.ndarray
    Xfull: np.ndarray
    Yminus: np.ndarray

    def __post_init__(self):
        U, X, Y = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (self.Uminus, self.Xfull, self.Yminus))
        L = U.shape[1]
        if X.shape[1] != L + 1 or Y.shape[1] != L:
            raise ValueError("trajectory column counts are inconsistent")
        if not all(np.all(np.isfinite(M)) for M in (U, X, Y)):
            raise ValueError("trajectory has non-finite entries")
        object.__setattr__(self, "Uminus", U)
        object.__setattr__(self, "Xfull", X)
        object.__setattr__(self, "Yminus", Y)

    @property
    def L(self) -> int:
        return self.Uminus.shape[1]

    @property
    def Xminus(self) -> np.ndarray:
        return self.Xfull[:, :-1]

    @property
    def Xplus(self) -> np.ndarray:
        return self.Xfull[:, 1:]

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.Xfull.shape[0], self.Uminus.shape[0], self.Yminus.shape[0]


def simulate(model: StateSpaceModel, u, x0, w=None, z=None) -> TrajectoryData:
    """Run ``x(k+1) = A x + B u + w``, ``y = C x + D u + z`` for ``L = len(u)`` steps."""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    if u.shape[0] != model.m and u.shape[1] == model.m:
        u = u.T
    L = u.shape[1]
    w = np.zeros((model.n, L)) if w is None else np.atleast_2d(np.asarray(w, dtype=float))
    z = np.zeros((model.p, L)) if z is None else np.atleast_2d(np.asarray(z, dtype=float))
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if u.shape[0] != model.m or w.shape != (model.n, L) or z.shape != (model.p, L) or x0.size != model.n:
        raise ValueError("simulation inputs have inconsistent dimensions")
    X = np.empty((model.n, L + 1))
    Y = np.empty((model.p, L))
    X[:, 0] = x0
    for k in range(L):
        X[:, k + 1] = model.A @ X[:, k] + model.B @ u[:, k] + w[:, k]
        Y[:, k] = model.C @ X[:, k] + model.D @ u[:, k] + z[:, k]
    return TrajectoryData(u, X, Y)


def validate_noise(noise: NoiseModel, w, z) -> bool:
    """Whether ``[w; z]`` satisfies the noise QMI within membership tolerance."""
    Z = np.vstack([np.atleast_2d(w), np.atleast_2d(z)])
    q = noise.as_qmi()
    if Z.shape != (q.row_dim, q.col_dim):
        raise ValueError("noise samples do not match the noise model size")
    return is_member(q, Z)


def build_n(traj: TrajectoryData, noise: NoiseModel) -> QmiSet:
    """Data QMI whose members are all ``[[A, B], [C, D]]`` consistent with the data and noise bound."""
    n, m, p = traj.dims
    L = traj.L
    if noise.phi11.shape[0] != n + p or noise.phi22.shape[0] != L:
        raise ValueError("noise model does not match the trajectory dimensions")
    M = np.block(
        [
            [np.eye(n), np.zeros((n, p)), traj.Xplus],
            [np.zeros((p, n)), np.eye(p), traj.Yminus],
            [np.zeros((n, n + p)), -traj.Xminus],
            [np.zeros((m, n + p)), -traj.Uminus],
        ]
    )
    Phi = noise.as_qmi().psi
    return QmiSet(M @ Phi @ M.T, n + p, n + m)


def full_row_rank_check(traj: TrajectoryData) -> bool:
    H = np.vstack([traj.Xminus, traj.Uminus])
    if H.shape[1] < H.shape[0]:
        return False
    s = np.linalg.svd(H, compute_uv=False)
    return bool(s[0] > 0 and s[-1] > RANK_RTOL * s[0])


def paper_input(L: int) -> np.ndarray:
    """Two-tone excitation ``2 sin k + cos(k/2)``, shape ``(1, L)``."""
    k = np.arange(L)
    return (2.0 * np.sin(k) + np.cos(0.5 * k))[None, :]


@dataclass(frozen=True)
class Experiment:
    model: StateSpaceModel
    traj: TrajectoryData
    noise: NoiseModel
    w: np.ndarray
    z: np.ndarray
    x0: np.ndarray
    seed: int
    draws: int
    rescaled: bool


def draw_noise(
    rng: np.random.Generator, sigma: float, n: int, p: int, L: int, bound: float, max_draws: int = 1000
) -> tuple[np.ndarray, np.ndarray, int, bool]:
    """Gaussian ``(w, z)`` with ``[w; z][w; z]^T <= bound I``, redrawn on violation.

    Returns the noise, the number of draws used and whether the cap was hit,
    in which case the last draw is returned regardless.
    """
    for draw in range(1, max_draws + 1):
        W = sigma * rng.standard_normal((n + p, L))
        if np.linalg.eigvalsh(W @ W.T)[-1] <= bound:
            return W[:n], W[n:], draw, False
    return W[:n], W[n:], max_draws, True


def make_experiment(
    model: StateSpaceModel,
    u: np.ndarray,
    sigma: float,
    seed: int,
    phi_scale: float = 1.35,
    sigma_floor: float = 1e-5,
    max_draws: int = 1000,
) -> Experiment:
    """Simulate one noisy trajectory with an energy-type noise bound.

    The bound is ``phi_scale * L * s^2`` with ``s = max(sigma, sigma_floor)``,
    so noise-free runs still get a regular data QMI.
    """
    n, p = model.n, model.p
    L = u.shape[1]
    rng = np.random.default_rng(seed)
    x0 = rng.standard_normal(n)
    s = max(sigma, sigma_floor)
    bound = phi_scale * L * s**2
    if sigma > 0:
        w, z, draws, capped = draw_noise(rng, sigma, n, p, L, bound, max_draws)
    else:
        w, z, draws, capped = np.zeros((n, L)), np.zeros((p, L)), 0, False
    rescaled = False
    if capped:
        W = np.vstack([w, z])
        bound = 1.01 * np.linalg.eigvalsh(W @ W.T)[-1]
        rescaled = True
        log.warning("noise draw cap hit at sigma=%g; bound rescaled to %g", sigma, bound)
    noise = NoiseModel.energy_bound(bound, n + p, L)
    traj = simulate(model, u, x0, w, z)
    return Experiment(model, traj, noise, w, z, x0, seed, draws, rescaled)


# configuration -----------------------------------------------------------

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["system", "L", "noise", "seed", "order_r"],
    "properties": {
        "system": {
            "oneOf": [
                {"type": "string", "enum": [BUILTIN_ALIAS]},
                {
                    "type": "object",
                    "required": ["A", "B", "C", "D"],
                    "properties": {k: {"type": "string"} for k in "ABCD"},
                },
            ]
        },
        "L": {"type": "integer", "minimum": 1},
        "input": {
            "type": "object",
            "properties": {"type": {"enum": ["paper", "file"]}, "path": {"type": "string"}},
            "required": ["type"],
        },
        "noise": {
            "type": "object",
            "required": ["sigma"],
            "properties": {
                "sigma": {"type": "number", "minimum": 0},
                "phi_scale": {"type": "number", "exclusiveMinimum": 0},
                "sigma_floor": {"type": "number", "exclusiveMinimum": 0},
                "max_draws": {"type": "integer", "minimum": 1},
            },
        },
        "seed": {"type": "integer", "minimum": 0},
        "order_r": {"type": "integer", "minimum": 1},
        "solver": {"enum": ["cvxpy", "barrier"]},
        "data_dir": {"type": "string"},
    },
}


class ConfigError(ValueError):
    pass


def load_config(path) -> dict:
    path = Path(path)
    try:
        cfg = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    validate_config(cfg)
    cfg.setdefault("_base", str(path.parent.resolve()))
    return cfg


def validate_config(cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid config: {exc.message}") from exc
    inp = cfg.get("input", {"type": "paper"})
    if inp["type"] == "file" and "path" not in inp:
        raise ConfigError("input.type 'file' needs input.path")


def _resolve(cfg: dict, rel: str) -> Path:
    p = Path(rel)
    return p if p.is_absolute() else Path(cfg.get("_base", ".")) / p


def resolve_system(cfg: dict) -> StateSpaceModel:
    sysdef = cfg["system"]
    if sysdef == BUILTIN_ALIAS:
        from .oracle import builtin_true_system

        return builtin_true_system()
    try:
        return StateSpaceModel(*(read_matrix(_resolve(cfg, sysdef[k])) for k in "ABCD"))
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot load system matrices: {exc}") from exc


def resolve_input(cfg: dict, m: int) -> np.ndarray:
    L = cfg["L"]
    inp = cfg.get("input", {"type": "paper"})
    if inp["type"] == "paper":
        if m != 1:
            raise ConfigError("the built-in input signal is single-channel")
        return paper_input(L)
    try:
        u = read_matrix(_resolve(cfg, inp["path"]))
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot load input: {exc}") from exc
    if u.shape[0] != m and u.shape[1] == m:
        u = u.T
    if u.shape != (m, L):
        raise ConfigError(f"input has shape {u.shape}, expected {(m, L)}")
    return u


def experiment_from_config(cfg: dict) -> Experiment:
    model = resolve_system(cfg)
    u = resolve_input(cfg, model.m)
    noise = cfg["noise"]
    return make_experiment(
        model,
        u,
        sigma=float(noise["sigma"]),
        seed=int(cfg["seed"]),
        phi_scale=float(noise.get("phi_scale", 1.35)),
        sigma_floor=float(noise.get("sigma_floor", 1e-5)),
        max_draws=int(noise.get("max_draws", 1000)),
    )


# matrix files ------------------------------------------------------------

def write_matrix(path, M) -> None:
    np.savetxt(path, np.atleast_2d(M), fmt="%.17g", delimiter=",")


def read_matrix(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=",", ndmin=2))


def write_trajectory(out_dir, traj: TrajectoryData, noise: NoiseModel | None = None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_matrix(out / "U_minus.csv", traj.Uminus)
    write_matrix(out / "X.csv", traj.Xfull)
    write_matrix(out / "Y_minus.csv", traj.Yminus)
    if noise is not None:
        write_matrix(out / "Phi11.csv", noise.phi11)
        write_matrix(out / "Phi12.csv", noise.phi12)
        write_matrix(out / "Phi22.csv", noise.phi22)


def read_trajectory(in_dir) -> tuple[TrajectoryData, NoiseModel | None]:
    d = Path(in_dir)
    traj = TrajectoryData(read_matrix(d / "U_minus.csv"), read_matrix(d / "X.csv"), read_matrix(d / "Y_minus.csv"))
    noise = None
    if (d / "Phi11.csv").exists():
        noise = NoiseModel(read_matrix(d / "Phi11.csv"), read_matrix(d / "Phi12.csv"), read_matrix(d / "Phi22.csv"))
    return traj, noise


__all__ = [
    "StateSpaceModel",
    "NoiseModel",
    "TrajectoryData",
    "Experiment",
    "simulate",
    "validate_noise",
    "build_n",
    "full_row_rank_check",
    "paper_input",
    "make_experiment",
    "load_config",
    "ConfigError",
]
