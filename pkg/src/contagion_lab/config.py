"""Experiment configuration: JSON schema, resolution into typed objects, presets.

A config is a JSON object.  It is validated against ``SCHEMA`` before
anything is computed, then resolved into an :class:`ExperimentConfig`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import List, Optional, Union

import jsonschema
import numpy as np

from .errors import ValidationError
from .model import InitialLaw, ModelParams, MomentVector, law_from_moments
from .portfolio import GammaFactor, LossModel, MixtureSpec, PointMass

SCHEMA_VERSION = 1

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}

LOSS_SCHEMA = {
    "oneOf": [
        {"type": "object", "required": ["kind", "l1", "l_minus1"], "additionalProperties": False,
         "properties": {"kind": {"const": "conditional"}, "l1": _num, "l_minus1": _num,
                        "v1": _nonneg, "v_minus1": _nonneg}},
        {"type": "object", "required": ["kind", "a", "b1", "b2", "psi"], "additionalProperties": False,
         "properties": {
             "kind": {"const": "mixture"}, "a": _nonneg, "b1": _pos, "b2": _nonneg,
             "psi": {"oneOf": [
                 {"type": "object", "required": ["kind", "value"], "additionalProperties": False,
                  "properties": {"kind": {"const": "point"}, "value": _nonneg}},
                 {"type": "object", "required": ["kind", "shape", "scale"], "additionalProperties": False,
                  "properties": {"kind": {"const": "gamma"}, "shape": _pos, "scale": _pos,
                                 "convention": {"enum": ["shape-scale", "shape-rate"]}}},
             ]},
         }},
    ]
}

SCHEMA = {
    "type": "object",
    "required": ["schema_version", "params"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "description": {"type": "string"},
        "params": {
            "type": "object",
            "required": ["beta", "gamma"],
            "additionalProperties": False,
            "properties": {
                "beta": _nonneg,
                "gamma": {"oneOf": [_nonneg, {"const": "critical"}]},
                "label": {"type": "string"},
            },
        },
        "runs": {
            "description": "extra (beta, gamma) pairs for sweeps; each run shares the rest of the config",
            "type": "array",
            "items": {
                "type": "object",
                "required": ["beta", "gamma"],
                "additionalProperties": False,
                "properties": {"beta": _nonneg, "gamma": {"oneOf": [_nonneg, {"const": "critical"}]},
                               "label": {"type": "string"}, "loss": LOSS_SCHEMA},
            },
        },
        "initial": {
            "oneOf": [
                {"type": "object", "required": ["kind"], "additionalProperties": False,
                 "properties": {"kind": {"const": "uniform"}}},
                {"type": "object", "required": ["kind", "probs"], "additionalProperties": False,
                 "properties": {"kind": {"const": "cells"},
                                "probs": {"type": "array", "items": _nonneg, "minItems": 4, "maxItems": 4}}},
                {"type": "object", "required": ["kind", "m"], "additionalProperties": False,
                 "properties": {"kind": {"const": "moments"},
                                "m": {"type": "array", "items": {"type": "number", "minimum": -1, "maximum": 1},
                                      "minItems": 2, "maxItems": 3}}},
                {"type": "object", "required": ["kind"], "additionalProperties": False,
                 "properties": {"kind": {"const": "equilibrium"},
                                "sign": {"enum": [-1, 1]}}},
            ]
        },
        "N": {"type": "integer", "minimum": 1},
        "T": _nonneg,
        "grid_points": {"type": "integer", "minimum": 1},
        "step": _pos,
        "replicas": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "threads": {"type": "integer", "minimum": 1},
        "method": {"enum": ["reduced", "full"]},
        "out": {"type": "string"},
        "loss": LOSS_SCHEMA,
        "losses": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "horizons": {"type": "array", "items": _nonneg, "minItems": 1},
                "at_equilibrium": {"type": "boolean"},
                "alpha_over_N": {"type": "object", "required": ["start", "stop", "points"],
                                 "additionalProperties": False,
                                 "properties": {"start": _num, "stop": _num,
                                                "points": {"type": "integer", "minimum": 2}}},
                "mc_replicas": {"type": "integer", "minimum": 0},
                "quad_nodes": {"type": "integer", "minimum": 16},
            },
        },
        "phase": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "arc_step": _pos,
                "max_len": _pos,
                "basin_samples": {"type": "integer", "minimum": 0},
                "basin_T_max": _pos,
            },
        },
        "validate": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "criteria": {"type": "array", "items": {"type": "string"}},
            },
        },
    },
}


@dataclass(frozen=True)
class LossOptions:
    horizons: List[float] = field(default_factory=lambda: [1.0])
    at_equilibrium: bool = False
    alpha_over_N: Optional[dict] = None
    mc_replicas: int = 0
    quad_nodes: int = 64


@dataclass(frozen=True)
class PhaseOptions:
    arc_step: float = 5e-3
    max_len: float = 6.0
    basin_samples: int = 200
    basin_T_max: float = 200.0


@dataclass(frozen=True)
class Run:
    params: ModelParams
    label: str
    loss: Union[LossModel, MixtureSpec, None] = None


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict
    runs: List[Run]
    initial: dict
    N: int = 1000
    T: float = 10.0
    grid_points: int = 101
    step: float = 1e-3
    replicas: int = 1
    seed: int = 0
    threads: int = 1
    method: str = "reduced"
    out: Optional[str] = None
    loss: Union[LossModel, MixtureSpec, None] = None
    losses: LossOptions = field(default_factory=LossOptions)
    phase: PhaseOptions = field(default_factory=PhaseOptions)
    criteria: Optional[List[str]] = None

    @property
    def params(self) -> ModelParams:
        return self.runs[0].params

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.grid_points) if self.grid_points > 1 else np.array([self.T])

    def initial_moments(self, params: ModelParams) -> MomentVector:
        from .meanfield import stable_equilibrium
        from .model import moments_from_law

        kind = self.initial["kind"]
        if kind == "equilibrium":
            return stable_equilibrium(params, self.initial.get("sign", 1)).m
        if kind == "moments":
            m = list(self.initial["m"])
            if len(m) == 2:
                m.append(m[0] * m[1])  # product law by default
            return MomentVector(*m)
        return moments_from_law(self.law(params))

    def law(self, params: ModelParams) -> InitialLaw:
        kind = self.initial["kind"]
        if kind == "uniform":
            return InitialLaw.uniform()
        if kind == "cells":
            return InitialLaw(tuple(self.initial["probs"]))
        return law_from_moments(self.initial_moments(params))


def _params(entry: dict) -> ModelParams:
    from .model import critical_gamma

    g = entry["gamma"]
    if g == "critical":
        g = critical_gamma(entry["beta"])
    return ModelParams(entry["beta"], g)


def _loss(d: Optional[dict]):
    if d is None:
        return None
    if d["kind"] == "conditional":
        return LossModel(d["l1"], d["l_minus1"], d.get("v1", 0.0), d.get("v_minus1", 0.0))
    p = d["psi"]
    if p["kind"] == "point":
        psi = PointMass(p["value"])
    elif p.get("convention", "shape-scale") == "shape-rate":
        psi = GammaFactor.from_shape_rate(p["shape"], p["scale"])
    else:
        psi = GammaFactor(p["shape"], p["scale"])
    return MixtureSpec(d["a"], d["b1"], d["b2"], psi)


def validate(raw: dict):
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ValidationError(f"config invalid at {where}: {exc.message}") from None


def resolve(raw: dict) -> ExperimentConfig:
    """Validate ``raw`` and build the typed configuration."""
    validate(raw)
    default_loss = _loss(raw.get("loss"))
    runs = [Run(_params(raw["params"]), raw["params"].get("label", "base"), default_loss)]
    for i, r in enumerate(raw.get("runs", [])):
        loss = _loss(r["loss"]) if "loss" in r else default_loss
        runs.append(Run(_params(r), r.get("label", f"run{i + 1}"), loss))
    keys = ("N", "T", "grid_points", "step", "replicas", "seed", "threads", "method", "out")
    kw = {k: raw[k] for k in keys if k in raw}
    if "T" in kw:
        kw["T"] = float(kw["T"])
    cfg = ExperimentConfig(
        raw=raw,
        runs=runs,
        initial=raw.get("initial", {"kind": "uniform"}),
        loss=default_loss,
        losses=LossOptions(**raw.get("losses", {})),
        phase=PhaseOptions(**raw.get("phase", {})),
        criteria=raw.get("validate", {}).get("criteria"),
        **kw,
    )
    for run in cfg.runs:
        if cfg.initial["kind"] != "equilibrium":
            cfg.law(run.params)  # surfaces infeasible moment triples before any work
    if not math.isfinite(cfg.T):
        raise ValidationError("T must be finite")
    return cfg


def load(path) -> ExperimentConfig:
    return resolve(read_raw(path))


def read_raw(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path} is not valid JSON: {exc}") from None


def preset_names() -> List[str]:
    root = resources.files("contagion_lab") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def preset(name: str) -> dict:
    root = resources.files("contagion_lab") / "presets"
    f = root / f"{name}.json"
    if not f.is_file():
        raise ValidationError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return json.loads(f.read_text())
