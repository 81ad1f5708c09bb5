"""Staged experiment runner shared by the command-line subcommands."""

from __future__ import annotations

import csv
import json
import math
import time
from functools import cached_property
from pathlib import Path

import numpy as np

from . import bounds, data, informativity, oracle, qmi
from .balancing import MultiplicitySplit, balance_from_gramians, build_reduction_setup, classical_bound
from .data import ConfigError, StateSpaceModel
from .informativity import PreconditionFailed
from .sdp import Infeasible

CHAIN_SLACK = 1e-6


class Stages:
    """Lazily evaluated stages of one experiment; each stage is timed once."""

    def __init__(self, cfg: dict, backend: str | None = None):
        self.cfg = cfg
        self.backend = backend or cfg.get("solver")
        self.timings: dict[str, float] = {}

    def _timed(self, name, fn):
        t = time.perf_counter()
        out = fn()
        self.timings[name] = round(time.perf_counter() - t, 6)
        return out

    @property
    def sigma(self) -> float:
        return float(self.cfg["noise"]["sigma"])

    @property
    def r(self) -> int:
        return int(self.cfg["order_r"])

    @cached_property
    def model(self) -> StateSpaceModel:
        return data.resolve_system(self.cfg)

    @cached_property
    def experiment(self):
        return self._timed("simulate", self._load_or_simulate)

    def _load_or_simulate(self):
        if "data_dir" in self.cfg:
            traj, noise = data.read_trajectory(data._resolve(self.cfg, self.cfg["data_dir"]))
            if noise is None:
                raise ConfigError("data_dir must contain Phi11.csv, Phi12.csv and Phi22.csv")
            return {"traj": traj, "noise": noise, "seed": None, "draws": None, "rescaled": False}
        e = data.experiment_from_config(self.cfg)
        return {"traj": e.traj, "noise": e.noise, "seed": e.seed, "draws": e.draws, "rescaled": e.rescaled,
                "noise_valid": data.validate_noise(e.noise, e.w, e.z)}

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.experiment["traj"].dims

    @cached_property
    def N(self) -> qmi.QmiSet:
        return self._timed("build_qmi", lambda: data.build_n(self.experiment["traj"], self.experiment["noise"]))

    @cached_property
    def qmi_report(self) -> dict:
        inert = qmi.block_inertia(self.N)
        return {
            "slater": qmi.check_slater_by_inertia(self.N),
            "regular": qmi.check_regularity(self.N),
            "inertia": list(map(int, inert)),
            "full_row_rank": data.full_row_rank_check(self.experiment["traj"]),
            "size": self.N.dim,
        }

    def require_preconditions(self) -> None:
        rep = self.qmi_report
        if not rep["slater"]:
            raise PreconditionFailed(f"Slater condition fails: inertia {rep['inertia']}")
        if not rep["full_row_rank"]:
            raise PreconditionFailed("[X-; U-] does not have full row rank")

    @cached_property
    def certificate(self) -> informativity.InformativityCertificate:
        self.require_preconditions()
        return self._timed(
            "informativity",
            lambda: informativity.check_informativity(self.N, self.dims, True, self.backend, check_slater=False),
        )

    @cached_property
    def balancing(self):
        c = self.certificate
        return self._timed("balance", lambda: balance_from_gramians(c.P, c.Q))

    @cached_property
    def setup(self):
        bal = self.balancing
        if self.r >= bal.n:
            raise PreconditionFailed(f"order {self.r} is not below the state dimension {bal.n}")
        return self._timed("reduce", lambda: build_reduction_setup(self.N, bal, self.r, self.dims))

    @cached_property
    def rom(self) -> StateSpaceModel:
        _, m, _ = self.dims
        return StateSpaceModel.from_stack(qmi.center(self.setup.Nred), self.r, m)

    @cached_property
    def apriori(self) -> bounds.AprioriBound:
        n, m, p = self.dims
        return self._timed("bound_apriori", lambda: bounds.apriori_bound(self.N, self.setup.Nred, (n, self.r, m, p), self.backend))

    @cached_property
    def aposteriori(self) -> bounds.AposterioriBound:
        return self._timed("bound_aposteriori", lambda: bounds.aposteriori_bound(self.N, self.rom, self.dims, self.backend))

    @cached_property
    def oracle(self) -> dict:
        def run():
            M = self.model
            bt, bal = oracle.ordinary_balanced_truncation(M, self.r)
            err = bounds.hinf_norm(bounds.assemble_error_system(M, bt))
            return {"hsv_true": bal.hsv.tolist(), "ordinary_bt_error": err.norm,
                    "classical_bound_true": classical_bound(bal, self.r)}
        return self._timed("oracle", run)

    def actual_error(self) -> float:
        return self._timed(
            "actual_error", lambda: bounds.hinf_norm(bounds.assemble_error_system(self.model, self.rom)).norm
        )


def echo_config(cfg: dict) -> dict:
    return {k: v for k, v in cfg.items() if not k.startswith("_")}


def run_pipeline(cfg: dict, backend: str | None = None) -> dict:
    """All stages for one noise level.

    Returns a report; negative outcomes (failed preconditions, infeasible
    LMIs) are recorded in ``status`` and ``error`` rather than raised.
    """
    st = Stages(cfg, backend)
    rep: dict = {"config": echo_config(cfg), "seed": cfg.get("seed"), "sigma": st.sigma, "r": st.r}
    try:
        exp = st.experiment
        rep.update(noise_draws=exp["draws"], noise_bound_rescaled=exp["rescaled"],
                   noise_valid=exp.get("noise_valid"))
        rep.update(st.qmi_report)
        rep["oracle"] = st.oracle
        try:
            cert = st.certificate
        except Infeasible:
            rep["informative"] = False
            raise
        rep["informative"] = True
        rep["certificate"] = {"alpha": cert.alpha, "beta": cert.beta, "trace_P": cert.trace_P,
                              "trace_Q": cert.trace_Q, "solver_status": cert.solver_status}
        rep["dominates_true_hsv"] = bool(np.all(st.balancing.hsv > np.asarray(rep["oracle"]["hsv_true"])))
        rep["hsv"] = st.balancing.hsv.tolist()
        rep["multiplicities"] = list(st.balancing.multiplicities)
        rep["classical_bound"] = classical_bound(st.balancing, st.r)
        rep["rom_spectral_radius"] = float(np.max(np.abs(np.linalg.eigvals(st.rom.A))))
        rep["actual_error_center_rom"] = st.actual_error()
        rep["gamma0"] = st.aposteriori.gamma0
        rep["gamma"] = st.apriori.gamma
        rep["status"] = "ok"
    except (PreconditionFailed, MultiplicitySplit, qmi.NotRegular) as exc:
        rep.update(status="precondition_failed", error=str(exc))
    except Infeasible as exc:
        rep.update(status="infeasible", error=str(exc), best_margin=exc.best_margin)
    rep["timings"] = st.timings
    rep["consistency"] = consistency(rep)
    return rep


def consistency(rep: dict) -> dict:
    """Internal cross-checks on a report; every value should be true."""
    out = {}
    if "slater" in rep:
        out["slater_implies_regular"] = (not rep["slater"]) or rep["regular"]
    g, g0, act = rep.get("gamma"), rep.get("gamma0"), rep.get("actual_error_center_rom")
    if g is not None and g0 is not None:
        out["gamma0_le_gamma"] = g0 <= g * (1 + CHAIN_SLACK) + CHAIN_SLACK
    if g0 is not None and act is not None:
        out["actual_le_gamma0"] = act <= g0 * (1 + CHAIN_SLACK) + CHAIN_SLACK
    return out


def exit_status(rep: dict) -> int:
    return {"ok": 0, "precondition_failed": 2, "infeasible": 3}[rep["status"]]


# outputs ---------------------------------------------------------------------

def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "nan"
    return repr(float(x))  # shortest round-trip form


def write_figure_csvs(out_dir, reports: list[dict]) -> None:
    """``hsv.csv``, ``bounds.csv`` and ``hsv_true.csv`` for a list of per-noise-level reports."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "hsv.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["index", "sigma", "value"])
        for rep in reports:
            for i, v in enumerate(rep.get("hsv", []), start=1):
                w.writerow([i, _fmt(rep["sigma"]), _fmt(v)])
    with open(out / "bounds.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["sigma", "gamma", "gamma0", "actual_error", "ordinary_bt_error"])
        for rep in reports:
            orc = rep.get("oracle", {})
            w.writerow([_fmt(rep["sigma"]), _fmt(rep.get("gamma")), _fmt(rep.get("gamma0")),
                        _fmt(rep.get("actual_error_center_rom")), _fmt(orc.get("ordinary_bt_error"))])
    true = next((r["oracle"]["hsv_true"] for r in reports if "oracle" in r), None)
    if true is not None:
        write_hsv_true(out, true)


def write_hsv_true(out_dir, hsv) -> None:
    with open(Path(out_dir) / "hsv_true.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["index", "value"])
        for i, v in enumerate(hsv, start=1):
            w.writerow([i, _fmt(v)])


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n", encoding="utf-8")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not serializable: {type(o)}")
