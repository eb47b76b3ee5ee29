"""Run configuration: schema, defaults, validation, stable hashing.

The configuration is a nested mapping with five sections. Every key below
is optional in a user file; omitted keys take these defaults. Unknown keys
are rejected with an error naming the offending path.

    game:    lambda (5.0, > 0), T (20, >= 1 integer)
    service: family ("deterministic" | "geometric" | "geom_mixture"),
             beta (3), cv (mixture CV target, required for geom_mixture)
    solver:  mode ("bisection" | "grid"), epsilon (1e-4), delta (1e-3)
    abm:     N (100), eta (30.0), days (20000), seed (12345),
             checkpoints ([200, 2000, 20000]), argmin_visited_only (false)
    output:  directory ("out"), formats (["csv", "json"])
"""
from __future__ import annotations

import copy
import hashlib
import json

from .errors import ConfigError

DEFAULTS: dict = {
    "game": {"lambda": 5.0, "T": 20},
    "service": {"family": "deterministic", "beta": 3, "cv": None},
    "solver": {"mode": "bisection", "epsilon": 1e-4, "delta": 1e-3},
    "abm": {
        "N": 100,
        "eta": 30.0,
        "days": 20_000,
        "seed": 12345,
        "checkpoints": [200, 2_000, 20_000],
        "argmin_visited_only": False,
    },
    "output": {"directory": "out", "formats": ["csv", "json"]},
}

_FAMILIES = ("deterministic", "geometric", "geom_mixture")
_MODES = ("grid", "bisection")
_FORMATS = ("csv", "json")


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        here = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key: {here}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {here} must be a mapping")
            out[key] = _merge(base[key], value, here)
        else:
            out[key] = value
    return out


def _require(cond: bool, message: str):
    if not cond:
        raise ConfigError(message)


def validate(cfg: dict) -> dict:
    """Type- and range-check a merged configuration; returns it unchanged."""
    game = cfg["game"]
    _require(isinstance(game["lambda"], (int, float)) and game["lambda"] > 0,
             f"game.lambda must be > 0, got {game['lambda']!r}")
    _require(isinstance(game["T"], int) and game["T"] >= 1,
             f"game.T must be an integer >= 1, got {game['T']!r}")

    service = cfg["service"]
    _require(service["family"] in _FAMILIES,
             f"service.family must be one of {_FAMILIES}, got {service['family']!r}")
    _require(isinstance(service["beta"], (int, float)) and service["beta"] >= 1,
             f"service.beta must be >= 1, got {service['beta']!r}")
    if service["family"] == "geom_mixture":
        _require(isinstance(service["cv"], (int, float)),
                 "service.cv is required for geom_mixture")

    solver = cfg["solver"]
    _require(solver["mode"] in _MODES,
             f"solver.mode must be one of {_MODES}, got {solver['mode']!r}")
    for key in ("epsilon", "delta"):
        _require(isinstance(solver[key], float) and 0 < solver[key] < 1,
                 f"solver.{key} must be a float in (0, 1), got {solver[key]!r}")

    abm = cfg["abm"]
    _require(isinstance(abm["N"], int) and abm["N"] >= 1,
             f"abm.N must be an integer >= 1, got {abm['N']!r}")
    _require(isinstance(abm["eta"], (int, float)) and abm["eta"] > 0,
             f"abm.eta must be > 0, got {abm['eta']!r}")
    _require(isinstance(abm["days"], int) and abm["days"] >= 1,
             f"abm.days must be an integer >= 1, got {abm['days']!r}")
    _require(isinstance(abm["seed"], int) and abm["seed"] >= 0,
             f"abm.seed must be a nonnegative integer, got {abm['seed']!r}")
    _require(isinstance(abm["checkpoints"], (list, tuple))
             and all(isinstance(c, int) and c >= 1 for c in abm["checkpoints"]),
             f"abm.checkpoints must be a list of integers >= 1, got {abm['checkpoints']!r}")
    _require(isinstance(abm["argmin_visited_only"], bool),
             "abm.argmin_visited_only must be a boolean")

    output = cfg["output"]
    _require(isinstance(output["directory"], str) and output["directory"],
             "output.directory must be a nonempty string")
    _require(isinstance(output["formats"], (list, tuple))
             and all(f in _FORMATS for f in output["formats"]),
             f"output.formats entries must be from {_FORMATS}, got {output['formats']!r}")
    return cfg


def load_config(path: str | None = None, overrides: dict | None = None) -> dict:
    """Defaults, then the JSON file at ``path``, then flag overrides."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path) as fh:
                user = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config file must contain a JSON object")
        cfg = _merge(cfg, user)
    if overrides:
        cfg = _merge(cfg, overrides)
    return validate(cfg)


def config_hash(cfg: dict) -> str:
    """Short stable digest of the fully-resolved configuration."""
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]
