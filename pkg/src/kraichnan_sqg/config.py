"""
Run configuration: a flat TOML document with [datum], [experiment] and
[output] tables. Unknown keys are rejected; the loaded config serializes back
to the same document.
"""

from __future__ import annotations

import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .params import ModelParams

FORMAT_VERSION = 1


class ConfigError(ValueError):
    """Invalid or unreadable configuration."""


_EXPERIMENT_KEYS = {
    "ensemble": int,
    "every": int,
    "batch": int,
    "noise": bool,
    "ladder": list,
    "corrector": str,
    "multiplier": str,
    "checkpoint_every": int,
    "radius_min": float,
    "radius_max": float,
    "radius_count": int,
    "deltas": list,
    "tol": float,
    "budget": int,
    "isotropy": bool,
    "samples": int,
    "draws": int,
    "perturbation": str,
    "perturbation_amplitude": float,
    "perturbation_k_max": float,
    "svg": bool,
}

_OUTPUT_KEYS = {"dir": str, "svg": bool}


@dataclass
class RunConfig:
    alpha: float = 0.5
    beta: float = 0.0
    p: float = 2.0
    nu: float = 0.0
    L: float = 2 * math.pi
    N: int = 64
    seed: int = 0
    t_end: float = 0.5
    dt: float = 1e-3
    modes_cutoff: float | None = None
    cfl_max: float = 0.5
    datum: dict = field(default_factory=lambda: {"kind": "band_limited"})
    experiment: dict = field(default_factory=dict)
    output: dict = field(default_factory=lambda: {"dir": "out"})

    @property
    def params(self) -> ModelParams:
        return ModelParams(self.alpha, self.beta, self.p, self.nu, self.L, self.N)

    @property
    def out_dir(self) -> Path:
        return Path(self.output.get("dir", "out"))

    def exp(self, key, default=None):
        return self.experiment.get(key, default)

    def to_dict(self) -> dict:
        doc = asdict(self)
        if doc["modes_cutoff"] is None:
            del doc["modes_cutoff"]
        return doc

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())


def _check_type(where, key, value, kind):
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if kind is int and isinstance(value, bool):
        raise ConfigError(f"{where}{key} must be an integer")
    if not isinstance(value, kind):
        raise ConfigError(f"{where}{key} must be of type {kind.__name__}, got {value!r}")
    return value


def from_dict(doc: dict) -> RunConfig:
    """Validate a parsed document and build a RunConfig."""
    known = {f.name: f for f in fields(RunConfig)}
    unknown = sorted(set(doc) - set(known))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    kwargs = {}
    scalar_types = {"alpha": float, "beta": float, "p": float, "nu": float, "L": float, "N": int,
                    "seed": int, "t_end": float, "dt": float, "modes_cutoff": float, "cfl_max": float}
    for key, value in doc.items():
        if key in scalar_types:
            kwargs[key] = _check_type("", key, value, scalar_types[key])
        else:
            if not isinstance(value, dict):
                raise ConfigError(f"[{key}] must be a table")
            kwargs[key] = dict(value)
    cfg = RunConfig(**kwargs)
    for key, value in list(cfg.experiment.items()):
        if key not in _EXPERIMENT_KEYS:
            raise ConfigError(f"unknown key [experiment].{key}")
        cfg.experiment[key] = _check_type("[experiment].", key, value, _EXPERIMENT_KEYS[key])
    for key, value in list(cfg.output.items()):
        if key not in _OUTPUT_KEYS:
            raise ConfigError(f"unknown key [output].{key}")
        cfg.output[key] = _check_type("[output].", key, value, _OUTPUT_KEYS[key])
    if "kind" not in cfg.datum:
        raise ConfigError("[datum] needs a 'kind'")
    if cfg.seed < 0 or cfg.seed >= 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if not cfg.dt > 0:
        raise ConfigError("dt must be positive")
    if cfg.t_end < 0:
        raise ConfigError("t_end must be >= 0")
    try:
        cfg.params
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return from_dict(doc)


def header_block(cfg: RunConfig, comment: str = "# ") -> str:
    """Config echo with the format version, one comment-prefixed line each."""
    lines = [
        f"kgsq format_version = {FORMAT_VERSION}",
        "domain: periodic torus [0, L)^2 standing in for the plane",
    ] + cfg.to_toml().splitlines()
    return "".join(f"{comment}{line}".rstrip() + "\n" for line in lines)
