"""Command line entry point: ``contagion-lab <subcommand> --config <path>``.

Exit codes: 0 success, 2 configuration error, 3 numerical error.  The run
manifest is written only after every artifact of the run has been written.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Callable, Dict, List

import numpy as np

from . import __version__
from . import config as cfgmod
from . import fluctuation as fl
from . import io
from . import meanfield as mf
from . import portfolio as pf
from .errors import ContagionError, ValidationError
from .model import regime
from .particles import ensemble, fluctuation_path

log = logging.getLogger("contagion_lab")

OUT_ENV = "CONTAGION_LAB_OUT"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_FAILED = 0, 2, 3, 1


def _file(out: Path, base: str, run, cfg) -> Path:
    return out / (f"{base}.csv" if len(cfg.runs) == 1 else f"{base}_{run.label}.csv")


def _flow(cfg, run):
    m0 = cfg.initial_moments(run.params)
    law = cfg.law(run.params)
    return fl.integrate_covariance(run.params, m0, fl.initial_covariance(law), cfg.T, cfg.step)


def cmd_equilibria(cfg, out: Path) -> List[Path]:
    files = []
    for run in cfg.runs:
        files.append(io.write_equilibria(_file(out, "equilibria", run, cfg),
                                         mf.solve_equilibria(run.params), regime(run.params)))
    return files


def cmd_ode(cfg, out: Path) -> List[Path]:
    files = []
    for run in cfg.runs:
        sol = mf.integrate(run.params, cfg.initial_moments(run.params), cfg.T, cfg.step)
        files.append(io.write_ode(_file(out, "ode", run, cfg), _thin(sol, cfg)))
    return files


def _thin(sol, cfg):
    """Restrict an ODE solution to the configured output grid."""
    states = sol.at(cfg.grid)
    return mf.OdeSolution(cfg.grid, states, sol.params, sol.step_size)


def cmd_cov(cfg, out: Path) -> List[Path]:
    files = []
    for run in cfg.runs:
        flow = _flow(cfg, run)
        g = cfg.grid
        thin = fl.CovarianceFlow(g, np.array([flow.moments_at(t) for t in g]),
                                 np.array([flow.covariance_at(t) for t in g]), run.params, flow.step_size)
        files.append(io.write_covariance(_file(out, "covariance", run, cfg), thin))
        files.append(io.write_ode(_file(out, "ode", run, cfg),
                                  mf.OdeSolution(g, thin.moments, run.params, flow.step_size)))
    return files


def cmd_phase(cfg, out: Path) -> List[Path]:
    files = []
    opt = cfg.phase
    rng = np.random.default_rng(cfg.seed)
    for run in cfg.runs:
        curve = mf.stable_manifold(run.params, opt.arc_step, opt.max_len)
        files.append(io.write_manifold(_file(out, "manifold", run, cfg), curve))
        if opt.basin_samples:
            pts = rng.uniform(-1, 1, size=(opt.basin_samples, 2))
            rows = []
            for x, y in pts:
                b = mf.basin_of(run.params, (x, y), opt.basin_T_max)
                rows.append([x, y, b.value, mf.side_of_curve(curve, (x, y))])
            files.append(io.write_csv(_file(out, "basins", run, cfg), ["x", "y", "basin", "side"], rows))
        if cfg.initial["kind"] != "uniform":
            sol = mf.integrate(run.params, cfg.initial_moments(run.params), cfg.T, cfg.step)
            files.append(io.write_ode(_file(out, "trajectory", run, cfg), _thin(sol, cfg)))
    return files


def cmd_simulate(cfg, out: Path) -> List[Path]:
    files = []
    for run in cfg.runs:
        law = cfg.law(run.params)
        m0 = cfg.initial_moments(run.params)
        ode = mf.integrate(run.params, m0, cfg.T, cfg.step)
        if cfg.replicas < 2:
            from .particles import reduced_simulate, simulate

            sim = reduced_simulate if cfg.method == "reduced" else simulate
            traj = sim(run.params, law, cfg.N, cfg.T, cfg.grid, cfg.seed)
            fl_path = fluctuation_path(traj, ode)[:, 1:]
            files.append(io.write_trajectory(_file(out, "trajectory", run, cfg), traj, fl_path))
            continue
        ens = ensemble(run.params, law, cfg.N, cfg.T, cfg.grid, cfg.replicas, cfg.seed,
                       reference=ode, method=cfg.method, threads=cfg.threads)
        header = ["t", "mean_m_sigma", "mean_m_omega", "mean_m_sigma_omega",
                  "var_m_sigma", "var_m_omega", "var_m_sigma_omega",
                  "fluct_mean_x", "fluct_mean_y", "fluct_mean_z",
                  "fluct_var_x", "fluct_var_y", "fluct_var_z", "mean_events"]
        body = np.column_stack([ens.grid, ens.mean, ens.var, ens.fluct_mean, ens.fluct_var,
                                np.full(len(ens.grid), ens.events.mean())])
        files.append(io.write_csv(_file(out, "ensemble", run, cfg), header, body))
        first = ens.samples[0]
        rows = np.column_stack([ens.grid, first, ens.fluctuations[0]])
        files.append(io.write_csv(_file(out, "trajectory", run, cfg),
                                  io.MOMENT_COLUMNS + ["x_N", "y_N", "z_N"], rows))
    return files


def _alphas(cfg, N):
    a = cfg.losses.alpha_over_N or {"start": 0.0, "stop": 1.0, "points": 201}
    return np.linspace(a["start"], a["stop"], a["points"]) * N


def cmd_losses(cfg, out: Path) -> List[Path]:
    opt = cfg.losses
    if opt.at_equilibrium and opt.mc_replicas:
        raise ValidationError("Monte Carlo loss curves need a finite horizon, not at_equilibrium")
    files = []
    alphas = _alphas(cfg, cfg.N)
    for run in cfg.runs:
        model = run.loss
        if model is None:
            raise ValidationError(f"run {run.label!r} has no loss model")
        if opt.at_equilibrium:
            eq = mf.stable_equilibrium(run.params, cfg.initial.get("sign", 1))
            V = float(fl.asymptotic_covariance(run.params, eq)[0, 0])
            points = [("eq", None, eq.m.m_sigma, V)]
        else:
            m0 = cfg.initial_moments(run.params)
            flow = fl.integrate_covariance(run.params, m0, fl.initial_covariance(cfg.law(run.params)),
                                           max(opt.horizons), cfg.step)
            points = [(f"t{t:g}", t, float(flow.moments_at(t)[0]), fl.variance_sigma(flow, t))
                      for t in opt.horizons]
        for tag, t, m, V in points:
            curve = pf.loss_curve(model, cfg.N, m, V, alphas, quad_nodes=opt.quad_nodes)
            mc = None
            if opt.mc_replicas:
                mc = pf.monte_carlo_loss(run.params, cfg.law(run.params), model, cfg.N, t,
                                         alphas, opt.mc_replicas, cfg.seed)
            name = f"losses_{tag}" if len(cfg.runs) == 1 else f"losses_{run.label}_{tag}"
            files.append(io.write_loss_curve(out / f"{name}.csv", curve, mc))
    return files


def cmd_validate(cfg, out: Path) -> List[Path]:
    from . import acceptance

    unknown = sorted(set(cfg.criteria or []) - set(acceptance.names()))
    if unknown:
        raise ValidationError(f"unknown criteria {unknown}; known: {acceptance.names()}")
    results = acceptance.run(cfg.criteria)
    rows = [[c.name, "PASS" if c.passed else "FAIL", c.seconds, json.dumps(c.measured, default=float)]
            for c in results]
    path = io.write_csv(out / "validate.csv", ["criterion", "status", "seconds", "measured"], rows)
    if not all(c.passed for c in results):
        raise _CriteriaFailed([path])
    return [path]


class _CriteriaFailed(Exception):
    def __init__(self, files):
        self.files = files


COMMANDS: Dict[str, Callable] = {
    "equilibria": cmd_equilibria,
    "ode": cmd_ode,
    "cov": cmd_cov,
    "phase": cmd_phase,
    "simulate": cmd_simulate,
    "losses": cmd_losses,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="contagion-lab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        src = sp.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", help="path to a JSON experiment config")
        src.add_argument("--preset", help="name of a bundled preset (see `contagion-lab presets`)")
        sp.add_argument("--out", help=f"output directory (default: ${OUT_ENV}, then the config's out)")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--threads", type=int, help="worker threads for ensembles")
        sp.add_argument("-v", "--verbose", action="store_true")
    sub.add_parser("presets", help="list bundled presets")
    return ap


def _resolve_raw(args) -> dict:
    raw = cfgmod.preset(args.preset) if args.preset else cfgmod.read_raw(args.config)
    raw = copy.deepcopy(raw)
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.threads is not None:
        raw["threads"] = args.threads
    return raw


def _out_dir(args, raw: dict) -> Path:
    if args.out:
        return Path(args.out)
    if os.environ.get(OUT_ENV):
        return Path(os.environ[OUT_ENV])
    if raw.get("out"):
        return Path(raw["out"])
    return Path("results") / raw.get("name", args.command)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "presets":
        for name in cfgmod.preset_names():
            print(name, "-", cfgmod.preset(name).get("description", ""))
        return EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        raw = _resolve_raw(args)
        cfg = cfgmod.resolve(raw)
    except (ContagionError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = _out_dir(args, raw)
    t0 = time.perf_counter()
    status = EXIT_OK
    try:
        files = COMMANDS[args.command](cfg, out)
    except _CriteriaFailed as exc:
        files, status = exc.files, EXIT_FAILED
    except ValidationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ContagionError, ArithmeticError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if status == EXIT_OK:
        hashed = {k: v for k, v in raw.items() if k != "out"}
        io.write_manifest(out, raw, files, time.perf_counter() - t0, __version__,
                          extra={"command": args.command, "config_sha256": io.config_hash(hashed)})
    log.info("wrote %d files to %s", len(files), out)
    return status


if __name__ == "__main__":
    sys.exit(main())
