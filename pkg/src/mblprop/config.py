"""Experiment configuration: YAML file, embedded defaults, strict validation."""
from __future__ import annotations

import copy
from dataclasses import dataclass

import yaml

from .errors import ConfigError

SCHEMA_VERSION = 1

KINDS = (
    "lemma1",
    "corollary_flocal",
    "corollary_strict",
    "theorem1",
    "signalling",
    "spectral_tn",
    "equilibration",
)

DEFAULTS = {
    "experiment": {"kind": None, "seed": 0},
    "lattice": {"num_sites": 10, "local_dim": 2, "max_qubits": 14},
    "disorder": {
        "field_width": 1.0,
        "coupling_scale": 0.3,
        "decay_length": 1.0,
        "interaction_order": 2,
        "fields": None,
        "couplings": None,
    },
    "dressing": {"layers": 4, "angle_decay": 1.5, "theta0": 1.0, "seed": None},
    "regions": {
        "site": None,
        "S": None,
        "S_size": 2,
        "l": 2,
        "l_target": 0.05,
        "separation": 0,
        "selection": None,
        "svd_tol": 1e-12,
    },
    "sampling": {
        "num_samples": 500,
        "t_max_multiplier": 1000.0,
        "kind": "uniform",
        "seed": None,
        "candidates": 64,
        "signal_tolerance": 0.05,
    },
    "output": {"dir": "out", "csv": True},
}


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key '{where}'")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"'{where}' must be a mapping")
            out[key] = _merge(base[key], val, where)
        else:
            out[key] = val
    return out


def _require(cond: bool, msg: str):
    if not cond:
        raise ConfigError(msg)


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


@dataclass
class ExperimentConfig:
    """Validated configuration tree; ``data`` holds every value, defaults included."""

    data: dict

    @property
    def kind(self) -> str:
        return self.data["experiment"]["kind"]

    @property
    def seed(self) -> int:
        return int(self.data["experiment"]["seed"])

    @property
    def num_sites(self) -> int:
        return int(self.data["lattice"]["num_sites"])

    def section(self, name: str) -> dict:
        return self.data[name]

    def with_overrides(self, **paths) -> "ExperimentConfig":
        """Copy with dotted-path overrides, e.g. ``{"regions.l": 3}``."""
        data = copy.deepcopy(self.data)
        for dotted, val in paths.items():
            sec, key = dotted.split(".")
            data[sec][key] = val
        return validate(data)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)


def validate(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    data = _merge(DEFAULTS, raw)
    exp, lat, dis = data["experiment"], data["lattice"], data["disorder"]
    dres, reg, smp = data["dressing"], data["regions"], data["sampling"]
    _require(exp["kind"] in KINDS, f"experiment.kind must be one of {', '.join(KINDS)}; got {exp['kind']!r}")
    _require(_is_int(exp["seed"]) and exp["seed"] >= 0, "experiment.seed must be a non-negative integer")
    _require(_is_int(lat["num_sites"]) and lat["num_sites"] >= 2, "lattice.num_sites must be an integer >= 2")
    _require(_is_int(lat["local_dim"]) and lat["local_dim"] >= 2, "lattice.local_dim must be an integer >= 2")
    _require(_is_num(lat["max_qubits"]) and lat["max_qubits"] > 0, "lattice.max_qubits must be positive")
    for key in ("field_width", "coupling_scale", "decay_length"):
        _require(_is_num(dis[key]), f"disorder.{key} must be a number")
    n = lat["num_sites"]
    if dis["fields"] is not None:
        _require(isinstance(dis["fields"], list) and len(dis["fields"]) == n
                 and all(_is_num(x) for x in dis["fields"]), f"disorder.fields must list {n} numbers")
    if dis["couplings"] is not None:
        c = dis["couplings"]
        if _is_num(c):
            pass
        else:
            _require(isinstance(c, list) and len(c) == n and all(isinstance(r, list) and len(r) == n for r in c),
                     f"disorder.couplings must be a number or an {n}x{n} list")
    _require(_is_int(dres["layers"]) and dres["layers"] >= 0, "dressing.layers must be a non-negative integer")
    _require(_is_num(dres["angle_decay"]) and dres["angle_decay"] > 0, "dressing.angle_decay must be positive")
    _require(_is_num(dres["theta0"]), "dressing.theta0 must be a number")
    _require(dres["seed"] is None or _is_int(dres["seed"]), "dressing.seed must be an integer or null")
    if reg["site"] is not None:
        _require(_is_int(reg["site"]) and 0 <= reg["site"] < n, f"regions.site must lie in [0, {n})")
    if reg["S"] is not None:
        _require(isinstance(reg["S"], list) and all(_is_int(s) and 0 <= s < n for s in reg["S"]),
                 f"regions.S must list sites in [0, {n})")
    _require(_is_int(reg["S_size"]) and 1 <= reg["S_size"] <= n, f"regions.S_size must lie in [1, {n}]")
    _require(reg["l"] == "auto" or (_is_int(reg["l"]) and reg["l"] >= 0), "regions.l must be 'auto' or >= 0")
    _require(_is_num(reg["l_target"]) and reg["l_target"] > 0, "regions.l_target must be positive")
    _require(_is_int(reg["separation"]) and reg["separation"] >= 0, "regions.separation must be >= 0")
    if reg["selection"] is not None:
        _require(isinstance(reg["selection"], list) and len(reg["selection"]) == n
                 and all(x in (0, 1) for x in reg["selection"]), f"regions.selection must list {n} values in {{0, 1}}")
    _require(_is_num(reg["svd_tol"]) and reg["svd_tol"] >= 0, "regions.svd_tol must be >= 0")
    _require(_is_int(smp["num_samples"]) and smp["num_samples"] >= 2, "sampling.num_samples must be >= 2")
    _require(_is_num(smp["t_max_multiplier"]) and smp["t_max_multiplier"] > 0, "sampling.t_max_multiplier must be positive")
    _require(smp["kind"] in ("uniform", "golden"), "sampling.kind must be 'uniform' or 'golden'")
    _require(smp["seed"] is None or _is_int(smp["seed"]), "sampling.seed must be an integer or null")
    _require(_is_int(smp["candidates"]) and smp["candidates"] >= 1, "sampling.candidates must be >= 1")
    _require(_is_num(smp["signal_tolerance"]) and smp["signal_tolerance"] >= 0, "sampling.signal_tolerance must be >= 0")
    return ExperimentConfig(data)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if raw is None:
        raise ConfigError(f"config {path} is empty")
    return validate(raw)
