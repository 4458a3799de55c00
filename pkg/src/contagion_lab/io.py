"""CSV and JSON writers for experiment artifacts.

Floats are written with 17 significant digits so every double round-trips.
Files are written to a temporary sibling and moved into place, so a reader
never sees a half-written artifact.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, List, Sequence

import numpy as np

from .fluctuation import CovarianceFlow
from .meanfield import Equilibrium, ManifoldCurve, OdeSolution
from .model import Regime
from .particles import TrajectorySample
from .portfolio import LossCurve

MOMENT_COLUMNS = ["t", "m_sigma", "m_omega", "m_sigma_omega"]
COV_COLUMNS = ["t", "s11", "s12", "s13", "s22", "s23", "s33", "V"]
_UPPER = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def atomic_write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return atomic_write_text(path, buf.getvalue())


def read_csv(path) -> tuple[List[str], np.ndarray]:
    """Header and float body of a numeric CSV written by this module."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        body = [[float(v) for v in row] for row in r]
    return header, np.array(body, dtype=float).reshape(len(body), len(header))


def write_ode(path, sol: OdeSolution) -> Path:
    return write_csv(path, MOMENT_COLUMNS, (np.r_[t, m] for t, m in zip(sol.grid, sol.states)))


def write_trajectory(path, traj: TrajectorySample, fluctuations: np.ndarray | None = None) -> Path:
    header = list(MOMENT_COLUMNS)
    body = np.column_stack([traj.grid, traj.moments])
    if fluctuations is not None:
        header += ["x_N", "y_N", "z_N"]
        body = np.column_stack([body, fluctuations])
    return write_csv(path, header, body)


def write_covariance(path, flow: CovarianceFlow) -> Path:
    def rows():
        for t, S in zip(flow.grid, flow.covariances):
            yield [t] + [S[i, j] for i, j in _UPPER] + [S[0, 0]]

    return write_csv(path, COV_COLUMNS, rows())


def write_manifold(path, curve: ManifoldCurve) -> Path:
    return write_csv(path, ["x", "y"], curve.points)


def write_equilibria(path, eqs: Sequence[Equilibrium], reg: Regime) -> Path:
    def rows():
        for e in eqs:
            ev = np.asarray(e.eigenvalues)
            yield [e.m.m_sigma, e.m.m_omega, e.m.m_sigma_omega, e.stability.value,
                   reg.tag.value, reg.critical_gamma,
                   ev[0].real, ev[0].imag, ev[1].real, ev[1].imag]

    header = ["m_sigma", "m_omega", "m_sigma_omega", "stability", "regime", "critical_gamma",
              "eig1_re", "eig1_im", "eig2_re", "eig2_im"]
    return write_csv(path, header, rows())


def write_loss_curve(path, analytic: LossCurve, mc: LossCurve | None = None) -> Path:
    n = len(analytic.thresholds)
    nan = np.full(n, np.nan)
    mc_p = mc.mc_probs if mc is not None else nan
    mc_se = mc.mc_stderr if mc is not None else nan
    return write_csv(path, ["alpha", "prob_analytic", "prob_mc", "mc_stderr"],
                     zip(analytic.thresholds, analytic.probs, mc_p, mc_se))


def config_hash(config: dict) -> str:
    """sha256 of the canonical JSON form (sorted keys, compact separators)."""
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def write_json(path, obj) -> Path:
    return atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_manifest(out_dir, config: dict, files: Sequence[Path], duration_s: float,
                   version: str, extra: dict | None = None) -> Path:
    out_dir = Path(out_dir)
    listing = [{"path": str(Path(f).relative_to(out_dir)) if Path(f).is_relative_to(out_dir) else str(f),
                "bytes": Path(f).stat().st_size} for f in files]
    manifest = {
        "config": config,
        "config_sha256": config_hash(config),
        "tool_version": version,
        "duration_s": duration_s,
        "files": listing,
    }
    if extra:
        manifest.update(extra)
    return write_json(out_dir / "manifest.json", manifest)
