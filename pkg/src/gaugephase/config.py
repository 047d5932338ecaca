"""Experiment configuration: YAML files, presets and resolution of defaults.

Schema (all sections optional)::

    preset: paper-dephasing        # or paper-pi-pulse
    model:    {mu_b: 1.0, lambda: 0.5, theta: 1.0471975511965976}
    gauges:   [0.0, 0.7853981633974483, 1.5707963267948966]   # radians
    sde:      {dt: 0.001, t_final: 2.0, record_stride: 1, renormalize: true}
    ensemble: {n_traj: 10000, master_seed: 12345, equation: nonlinear_P, chunk_size: 4096}
    output:   {directory: results, formats: [csv, json]}
    trajectories: {dump: 0, dump_stride: 10}
    interference: {chi_points: 73, lambdas: []}
    verify:   {n_paths: 100}
"""
from __future__ import annotations

import copy
from pathlib import Path

import numpy as np
import yaml

from .ensemble import DEFAULT_CHUNK, DEFAULT_SEED
from .lindblad import n_steps


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "preset": None,
    "model": {"mu_b": 1.0, "lambda": 0.5, "theta": float(np.pi / 3)},
    "gauges": [0.0, float(np.pi / 4), float(np.pi / 2)],
    "sde": {"dt": 1e-3, "t_final": 2.0, "record_stride": 1, "renormalize": True},
    "ensemble": {"n_traj": 10_000, "master_seed": DEFAULT_SEED, "equation": "nonlinear_P",
                 "chunk_size": DEFAULT_CHUNK, "threads": 1},
    "output": {"directory": "results", "formats": ["csv"]},
    "trajectories": {"dump": 0, "dump_stride": 10},
    "interference": {"chi_points": 73, "lambdas": []},
    "verify": {"n_paths": 100},
}

PRESETS = {
    "paper-dephasing": {
        "model": {"mu_b": 1.0, "lambda": 0.5, "theta": float(np.pi / 3)},
        "sde": {"dt": 1e-3, "t_final": 2.0},
        "ensemble": {"n_traj": 10_000},
    },
    "paper-pi-pulse": {
        "model": {"mu_b": 1.0, "lambda": 0.5, "theta": float(np.pi / 3)},
        # dt is snapped to pi / 3142 so the horizon is a whole number of steps
        "sde": {"dt": 1e-3, "t_final": float(np.pi)},
        "ensemble": {"n_traj": 10_000},
    },
}


def _merge(base: dict, update: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in update.items():
        name = f"{where}{key}"
        if key not in base:
            raise ConfigError(f"unknown configuration key {name!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{name!r} must be a mapping")
            out[key] = _merge(base[key], value, name + ".")
        else:
            out[key] = value
    return out


def resolve(raw: dict | None = None, preset: str | None = None) -> dict:
    """Defaults, then the preset, then ``raw``; unknown keys are rejected."""
    raw = dict(raw or {})
    preset = raw.get("preset") or preset
    cfg = copy.deepcopy(DEFAULTS)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        cfg = _merge(cfg, PRESETS[preset])
        cfg["preset"] = preset
    cfg = _merge(cfg, {k: v for k, v in raw.items() if k != "preset"})
    _validate(cfg)
    cfg["sde"]["dt"] = snap_dt(cfg["sde"]["dt"], cfg["sde"]["t_final"])
    return cfg


def snap_dt(dt: float, t_final: float) -> float:
    """Step closest to ``dt`` that divides ``t_final`` into a whole number of steps."""
    try:
        n_steps(t_final, dt)
        return float(dt)
    except ValueError:
        return float(t_final / max(1, round(t_final / dt)))


def _validate(cfg: dict) -> None:
    m = cfg["model"]
    if not 0 <= m["theta"] <= np.pi:
        raise ConfigError("model.theta must lie in [0, pi]")
    if m["lambda"] < 0:
        raise ConfigError("model.lambda must be non-negative")
    if cfg["sde"]["dt"] <= 0 or cfg["sde"]["t_final"] < 0:
        raise ConfigError("sde.dt must be positive and sde.t_final non-negative")
    if cfg["ensemble"]["n_traj"] < 1:
        raise ConfigError("ensemble.n_traj must be >= 1")
    for fmt in cfg["output"]["formats"]:
        if fmt not in ("csv", "json"):
            raise ConfigError(f"unknown output format {fmt!r}")
    if not cfg["gauges"]:
        raise ConfigError("at least one gauge angle is required")


def load(path) -> dict:
    text = Path(path).read_text()
    raw = yaml.safe_load(text) or {}
    if not isinstance(raw, dict):
        raise ConfigError("configuration file must hold a mapping")
    return raw


def dump(cfg: dict, path) -> Path:
    path = Path(path)
    path.write_text(yaml.safe_dump(cfg, sort_keys=False))
    return path
