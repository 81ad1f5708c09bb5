"""Command-line driver.

Every subcommand reads an experiment config, runs the stages it needs and
writes artifacts to ``--out``. A one-line JSON summary goes to stdout.

Exit codes: 0 success, 1 invalid config, 2 failed precondition,
3 infeasible LMI (a valid negative answer), 4 internal error.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path


from . import data, pipeline
from .balancing import MultiplicitySplit
from .data import ConfigError
from .informativity import PreconditionFailed
from .pipeline import Stages, write_json
from .qmi import NotRegular
from .sdp import Infeasible

EXIT_OK, EXIT_CONFIG, EXIT_PRECONDITION, EXIT_INFEASIBLE, EXIT_INTERNAL = 0, 1, 2, 3, 4

SUBCOMMANDS = (
    "simulate", "build-qmi", "check-informativity", "balance", "reduce",
    "bound-apriori", "bound-aposteriori", "oracle", "pipeline",
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ddbt", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="experiment config (JSON)")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--sigma", type=float, help="override the noise level")
    common.add_argument("--order", type=int, help="override the reduced order")
    common.add_argument("--backend", choices=["cvxpy", "barrier"], help="SDP backend")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "pipeline":
            p.add_argument("--sweep", help="noise levels, e.g. sigma=0.002,0.01")
            p.add_argument("--jobs", type=int, default=1, help="parallel noise levels in sweep mode")
    return parser


def parse_sweep(spec: str) -> list[float]:
    key, _, values = spec.partition("=")
    if key.strip() != "sigma" or not values:
        raise ConfigError(f"sweep must look like sigma=a,b,c, got {spec!r}")
    try:
        sig = [float(v) for v in values.split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad sweep value: {exc}") from exc
    if any(s < 0 for s in sig):
        raise ConfigError("noise levels must be non-negative")
    return sorted(set(sig))


def load(args) -> dict:
    cfg = data.load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.sigma is not None:
        cfg["noise"]["sigma"] = args.sigma
    if args.order is not None:
        cfg["order_r"] = args.order
    if args.backend is not None:
        cfg["solver"] = args.backend
    data.validate_config({k: v for k, v in cfg.items() if not k.startswith("_")})
    return cfg


def _write_model(out: Path, prefix: str, model) -> None:
    for k in "ABCD":
        data.write_matrix(out / f"{prefix}{k}.csv", getattr(model, k))


def _stage(command: str, st: Stages, out: Path) -> dict:
    """Run one stage subcommand and write its artifacts; returns the summary."""
    summary: dict = {"command": command, "seed": st.cfg.get("seed"), "sigma": st.sigma}
    if command == "oracle":
        o = st.oracle
        pipeline.write_hsv_true(out, o["hsv_true"])
        write_json(out / "oracle.json", o)
        return {**summary, **o}
    exp = st.experiment
    if command == "simulate":
        data.write_trajectory(out, exp["traj"], exp["noise"])
        meta = {"seed": exp["seed"], "draws": exp["draws"], "noise_bound_rescaled": exp["rescaled"],
                "noise_valid": exp.get("noise_valid")}
        write_json(out / "simulate.json", meta)
        return {**summary, **meta}
    if command == "build-qmi":
        data.write_matrix(out / "N.csv", st.N.psi)
        write_json(out / "qmi.json", st.qmi_report)
        st.require_preconditions()
        return {**summary, **st.qmi_report}
    if command == "check-informativity":
        cert = st.certificate
        write_json(out / "certificate.json", cert.to_dict())
        return {**summary, "informative": True, "trace_P": cert.trace_P, "trace_Q": cert.trace_Q}
    if command == "balance":
        bal = st.balancing
        setup = st.setup
        data.write_matrix(out / "T.csv", bal.T)
        data.write_matrix(out / "N_VW.csv", setup.Nred.psi)
        pipeline.write_figure_csvs(out, [{"sigma": st.sigma, "hsv": bal.hsv.tolist()}])
        (out / "bounds.csv").unlink()
        write_json(out / "balancing.json", bal.to_dict())
        return {**summary, "hsv": bal.hsv.tolist()}
    if command == "reduce":
        from .balancing import classical_bound

        _write_model(out, "rom_", st.rom)
        meta = {"r": st.r, "ell": st.setup.ell, "classical_bound": classical_bound(st.balancing, st.r)}
        write_json(out / "rom.json", meta)
        return {**summary, **meta}
    if command == "bound-apriori":
        b = st.apriori
        write_json(out / "apriori.json", b.to_dict())
        return {**summary, "gamma": b.gamma}
    if command == "bound-aposteriori":
        b = st.aposteriori
        _write_model(out, "rom_", st.rom)
        write_json(out / "aposteriori.json", b.to_dict())
        return {**summary, "gamma0": b.gamma0}
    raise ValueError(command)


def _run_one(cfg: dict) -> dict:
    return pipeline.run_pipeline(cfg)


def _pipeline(args, cfg: dict, out: Path) -> tuple[int, dict]:
    sigmas = parse_sweep(args.sweep) if args.sweep else [float(cfg["noise"]["sigma"])]
    cfgs = []
    for s in sigmas:
        c = copy.deepcopy(cfg)
        c["noise"]["sigma"] = s
        cfgs.append(c)
    if args.jobs > 1 and len(cfgs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            reports = list(ex.map(_run_one, cfgs))
    else:
        reports = [_run_one(c) for c in cfgs]
    pipeline.write_figure_csvs(out, reports)
    if len(reports) == 1:
        write_json(out / "report.json", reports[0])
        rep = reports[0]
        summary = {k: rep.get(k) for k in ("status", "seed", "sigma", "slater", "informative", "gamma", "gamma0",
                                           "actual_error_center_rom")}
        return pipeline.exit_status(rep), summary
    write_json(out / "report.json", {"sweep": sigmas, "reports": reports})
    codes = [pipeline.exit_status(r) for r in reports]
    summary = {"sweep": sigmas, "status": [r["status"] for r in reports],
               "gamma": [r.get("gamma") for r in reports]}
    return max(codes), summary


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    code, summary = EXIT_INTERNAL, {}
    try:
        cfg = load(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "pipeline":
            code, summary = _pipeline(args, cfg, out)
        else:
            summary = _stage(args.command, Stages(cfg), out)
            code = EXIT_OK
    except ConfigError as exc:
        code, summary = EXIT_CONFIG, {"status": "config_error", "error": str(exc)}
    except (PreconditionFailed, MultiplicitySplit, NotRegular) as exc:
        code, summary = EXIT_PRECONDITION, {"status": "precondition_failed", "error": str(exc)}
    except Infeasible as exc:
        code, summary = EXIT_INFEASIBLE, {"status": "infeasible", "error": str(exc), "best_margin": exc.best_margin}
    except Exception as exc:  # noqa: BLE001 - mapped to the internal-error exit code
        logging.getLogger(__name__).exception("internal error")
        code, summary = EXIT_INTERNAL, {"status": "internal_error", "error": f"{type(exc).__name__}: {exc}"}
    summary.setdefault("command", args.command)
    print(json.dumps(summary, sort_keys=True, default=pipeline._json_default))
    return code


if __name__ == "__main__":
    sys.exit(main())
