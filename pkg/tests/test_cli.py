import json

import numpy as np
import pytest

from contagion_lab import cli, io
from contagion_lab.config import preset


def _write(tmp_path, raw, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(raw))
    return str(p)


BASE = {"schema_version": 1, "params": {"beta": 1.0, "gamma": 2.3}, "T": 2.0, "grid_points": 11,
        "step": 1e-3, "N": 200, "replicas": 20, "seed": 4}


def test_ode_run_writes_csv_and_manifest(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["ode", "--config", _write(tmp_path, BASE), "--out", str(out)]) == 0
    header, body = io.read_csv(out / "ode.csv")
    assert header == io.MOMENT_COLUMNS and body.shape == (11, 4)
    man = json.loads((out / "manifest.json").read_text())
    assert man["config_sha256"] == io.config_hash(BASE)
    assert [f["path"] for f in man["files"]] == ["ode.csv"]


def test_hash_ignores_output_location(tmp_path):
    raw = dict(BASE, out=str(tmp_path / "elsewhere"))
    cli.main(["equilibria", "--config", _write(tmp_path, raw), "--out", str(tmp_path / "a")])
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["config_sha256"] == io.config_hash(BASE)


def test_config_error_exit_code(tmp_path, capsys):
    raw = dict(BASE, N=-1)
    out = tmp_path / "o"
    assert cli.main(["ode", "--config", _write(tmp_path, raw), "--out", str(out)]) == 2
    assert not out.exists()
    assert "config error" in capsys.readouterr().err


def test_infeasible_moments_exit_code(tmp_path):
    raw = dict(BASE, initial={"kind": "moments", "m": [0.9, 0.9, -0.9]})
    assert cli.main(["ode", "--config", _write(tmp_path, raw), "--out", str(tmp_path / "o")]) == 2


def test_numeric_error_exit_code(tmp_path):
    raw = dict(BASE, params={"beta": 1.0, "gamma": 0.8})
    out = tmp_path / "o"
    assert cli.main(["phase", "--config", _write(tmp_path, raw), "--out", str(out)]) == 3
    assert not (out / "manifest.json").exists()


def test_simulate_is_thread_independent(tmp_path):
    cfg = _write(tmp_path, BASE)
    cli.main(["simulate", "--config", cfg, "--out", str(tmp_path / "a"), "--threads", "1"])
    cli.main(["simulate", "--config", cfg, "--out", str(tmp_path / "b"), "--threads", "3"])
    for name in ("ensemble.csv", "trajectory.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_override_changes_output(tmp_path):
    cfg = _write(tmp_path, BASE)
    cli.main(["simulate", "--config", cfg, "--out", str(tmp_path / "a")])
    cli.main(["simulate", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "5"])
    assert (tmp_path / "a" / "ensemble.csv").read_bytes() != (tmp_path / "b" / "ensemble.csv").read_bytes()


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    assert cli.main(["equilibria", "--config", _write(tmp_path, BASE)]) == 0
    lines = (tmp_path / "env" / "equilibria.csv").read_text().splitlines()
    assert len(lines) == 4 and "Saddle" in lines[1]


def test_multi_run_file_naming(tmp_path):
    raw = dict(BASE, runs=[{"beta": 1.5, "gamma": 2.1, "label": "strong"}])
    cli.main(["ode", "--config", _write(tmp_path, raw), "--out", str(tmp_path / "o")])
    assert {p.name for p in (tmp_path / "o").iterdir()} == {"ode_base.csv", "ode_strong.csv", "manifest.json"}


def test_presets_listing(capsys):
    assert cli.main(["presets"]) == 0
    assert "crisis" in capsys.readouterr().out


def test_unknown_criterion_is_config_error(tmp_path):
    raw = dict(BASE, validate={"criteria": ["NOPE-1"]})
    assert cli.main(["validate", "--config", _write(tmp_path, raw), "--out", str(tmp_path / "o")]) == 2


def test_validate_subset(tmp_path):
    raw = dict(BASE, validate={"criteria": ["EQ-1", "CRIT-1"]})
    out = tmp_path / "o"
    assert cli.main(["validate", "--config", _write(tmp_path, raw), "--out", str(out)]) == 0
    text = (out / "validate.csv").read_text()
    assert "EQ-1,PASS" in text and "CRIT-1,PASS" in text


def test_separatrix_sweep_manifolds_are_odd_and_nest(tmp_path):
    out = tmp_path / "f3"
    assert cli.main(["phase", "--preset", "separatrix-sweep", "--out", str(out)]) == 0
    for f in out.glob("manifold_*.csv"):
        _, xy = io.read_csv(f)
        assert np.min(np.abs(xy).sum(axis=1)) == 0
        assert np.max(np.abs(xy)) <= 1 + 1e-9


def test_crisis_crisis_shapes(tmp_path):
    out = tmp_path / "f5"
    assert cli.main(["cov", "--preset", "crisis", "--out", str(out)]) == 0
    _, ode = io.read_csv(out / "ode.csv")
    _, cov = io.read_csv(out / "covariance.csv")
    ms, V = ode[:, 1], cov[:, -1]
    assert ms[0] < 0 < ms[-1] or ms[-1] < 0 < ms[0] or np.min(np.abs(ms)) < 0.1
    k = int(np.argmax(V))
    assert 0 < k < len(V) - 1


def test_mixture_losses(tmp_path):
    out = tmp_path / "f2"
    assert cli.main(["losses", "--preset", "loss-mixture", "--out", str(out)]) == 0
    curves = {f.name: io.read_csv(f)[1] for f in out.glob("losses_*.csv")}
    assert len(curves) == 3
    for body in curves.values():
        assert np.all(np.diff(body[:, 1]) <= 1e-15)
