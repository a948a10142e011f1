"""Run configuration: YAML file, environment overrides, defaults.

Precedence is flag > environment > file > default.  Unknown keys are
rejected; keys the file omits fall back to defaults with a logged notice.
Environment overrides use the prefix ``UNO_`` plus the uppercased key path,
e.g. ``UNO_TRAIN_BATCH_SIZE=10`` sets ``train.batch_size``.
"""

from __future__ import annotations

import copy
import logging
import os

import yaml

from .errors import DataError
from .models import Model, build_model, make_config_2d, make_config_3d
from .training import TrainConfig, canonical_problem

log = logging.getLogger("uno")

DEFAULTS = {
    "model": {
        "variant": "uno",
        "ndim": 2,
        "d0": 32,
        "depth": 7,
        "modes": None,
        "domain": None,  # resolved by problem: box for darcy, torus for ns
        "ref_resolution": 64,
        "seed": 0,
    },
    "train": {
        "epochs": 100,
        "batch_size": 20,
        "lr": 1e-3,
        "lr_decay": 0.5,
        "lr_step": 100,
        "seed": 0,
        "problem": "darcy",
        "splits": None,
        "t_in": 10,
        "t_total": 50,
        "normalize_inputs": True,
    },
    "generate": {
        "kind": "darcy",
        "samples": 200,
        "grid": 85,
        "target_grid": None,
        "seed": 0,
        "nu": 1e-3,
        "dt": 1e-4,
        "t_final": 50.0,
        "workers": 1,
    },
}

ENV_PREFIX = "UNO_"


def _check_keys(loaded: dict, schema: dict, path: str = ""):
    for key, value in loaded.items():
        if key not in schema:
            raise DataError(f"unknown config key {path}{key!r}")
        if isinstance(schema[key], dict) and schema[key] and isinstance(value, dict):
            _check_keys(value, schema[key], f"{path}{key}.")


def _merge(base: dict, update: dict, path: str = "") -> list:
    defaulted = []
    for key, default in base.items():
        if isinstance(default, dict) and default:
            sub = update.get(key, {})
            if sub is None:
                sub = {}
            defaulted += _merge(base[key], sub, f"{path}{key}.")
        elif key in update:
            base[key] = update[key]
        else:
            defaulted.append(f"{path}{key}")
    return defaulted


def _match_env_path(tokens, schema):
    """Greedy-longest match of underscore-joined tokens against nested keys."""
    if not tokens:
        return []
    for take in range(len(tokens), 0, -1):
        candidate = "_".join(tokens[:take])
        if candidate in schema:
            rest = tokens[take:]
            sub = schema[candidate]
            if not rest:
                return [candidate] if not isinstance(sub, dict) or not sub else None
            if isinstance(sub, dict):
                tail = _match_env_path(rest, sub)
                if tail is not None:
                    return [candidate] + tail
    return None


def apply_env_overrides(cfg: dict, environ=None) -> dict:
    environ = os.environ if environ is None else environ
    for name, raw in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        tokens = name[len(ENV_PREFIX) :].lower().split("_")
        path = _match_env_path(tokens, cfg)
        if path is None:
            raise DataError(f"environment override {name} matches no config key")
        node = cfg
        for key in path[:-1]:
            node = node[key]
        node[path[-1]] = yaml.safe_load(raw)
        log.info("config %s = %r from %s", ".".join(path), node[path[-1]], name)
    return cfg


def load_config(path=None, environ=None) -> dict:
    """Defaults, overlaid by the YAML file, overlaid by UNO_* environment."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        with open(path) as fh:
            loaded = yaml.safe_load(fh) or {}
        if not isinstance(loaded, dict):
            raise DataError(f"{path}: top level must be a mapping")
        _check_keys(loaded, DEFAULTS)
        defaulted = _merge(cfg, loaded)
        if defaulted:
            log.info("config keys defaulted: %s", ", ".join(defaulted))
    return apply_env_overrides(cfg, environ)


def train_config(cfg: dict) -> TrainConfig:
    t = cfg["train"]
    splits = t["splits"]
    return TrainConfig(
        epochs=int(t["epochs"]),
        batch_size=int(t["batch_size"]),
        lr=float(t["lr"]),
        lr_decay=float(t["lr_decay"]),
        lr_step=int(t["lr_step"]),
        seed=int(t["seed"]),
        problem=t["problem"],
        splits=tuple(int(s) for s in splits) if splits else None,
        t_in=int(t["t_in"]),
        t_total=int(t["t_total"]),
        normalize_inputs=bool(t["normalize_inputs"]),
    )


def model_from_config(cfg: dict) -> Model:
    """Build the configured architecture for the configured problem."""
    m, t = cfg["model"], cfg["train"]
    problem = canonical_problem(t["problem"])
    modes = m["modes"]
    if isinstance(modes, list):
        modes = tuple(int(k) for k in modes)
    common = dict(
        d0=int(m["d0"]),
        variant=m["variant"],
        depth=int(m["depth"]),
        ref_resolution=int(m["ref_resolution"]),
        base_modes=modes,
    )
    domain = m["domain"] or ("box" if problem == "darcy" else "torus")
    if problem == "ns3d" or int(m["ndim"]) == 3:
        config = make_config_3d(
            t_in=int(t["t_in"]),
            t_total=int(t["t_total"]),
            in_channels=1,
            out_channels=1,
            domain_kind=domain,
            **common,
        )
    else:
        in_channels = int(t["t_in"]) if problem == "ns2d" else 1
        config = make_config_2d(
            in_channels=in_channels,
            out_channels=1,
            domain_kind=domain,
            **common,
        )
    return build_model(config, seed=int(m["seed"]))
