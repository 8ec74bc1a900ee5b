"""Run configuration: JSON file, then ``PIDENET_*`` environment variables, then flags.

Schema (every key optional; defaults in brackets)::

    preset        name of a registered problem          ["heat"]
    d             state dimension                        [1]
    overrides     extra preset parameters, e.g. {"T": 2} [{}]
    seed          master seed                            [0]
    delta         target accuracy for plan and build     [0.1]
    out           output directory                       ["pidenet-out"]
    threads       worker threads (null = all cores)      [null]
    t, x          evaluation point for ``solve``         [0.0, zeros]
    M, N_euler    sample and step counts for ``solve``   [10000, 32]
    mode          "shifted" or "compensator"             ["shifted"]
    alpha, beta, beta_c, T     exponents for ``plan``    [from preset]
    C, C_b, C_prime            plan constants            [1.0]
    scale         suite scale, "quick" or "full"         ["quick"]
    studies       subset of suite studies                [null = all]
    jump_end_to_end  add the jump presets to end-to-end  [false]
    samples       error-metric samples for ``build``     [0 = skip]
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

ENV_PREFIX = "PIDENET_"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    preset: str = "heat"
    d: int = 1
    overrides: dict = field(default_factory=dict)
    seed: int = 0
    delta: float = 0.1
    out: str = "pidenet-out"
    threads: int | None = None
    t: float = 0.0
    x: list | None = None
    M: int = 10_000
    N_euler: int = 32
    mode: str = "shifted"
    alpha: float | None = None
    beta: float | None = None
    beta_c: float | None = None
    T: float | None = None
    C: float = 1.0
    C_b: float = 1.0
    C_prime: float = 1.0
    scale: str = "quick"
    studies: list | None = None
    jump_end_to_end: bool = False
    samples: int = 0

    def __post_init__(self):
        if self.scale not in ("quick", "full"):
            raise ConfigError(f"scale must be 'quick' or 'full', got {self.scale!r}")
        if self.mode not in ("shifted", "compensator"):
            raise ConfigError(f"mode must be 'shifted' or 'compensator', got {self.mode!r}")
        if self.d < 1:
            raise ConfigError("d must be >= 1")
        if not self.delta > 0:
            raise ConfigError("delta must be positive")

    @classmethod
    def keys(cls) -> tuple:
        return tuple(f.name for f in dataclasses.fields(cls))

    def updated(self, values: dict, source: str) -> "RunConfig":
        unknown = sorted(set(values) - set(self.keys()))
        if unknown:
            raise ConfigError(f"unknown key(s) in {source}: {', '.join(unknown)}")
        try:
            return dataclasses.replace(self, **values)
        except TypeError as exc:
            raise ConfigError(f"bad value in {source}: {exc}") from exc


# environment variables mirror the command-line flags
ENV_KEYS = {"SEED": ("seed", int), "DELTA": ("delta", float), "OUT": ("out", str),
            "THREADS": ("threads", int)}


def load_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return data


def env_values(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = {}
    for suffix, (key, conv) in ENV_KEYS.items():
        raw = environ.get(ENV_PREFIX + suffix)
        if raw is None or raw == "":
            continue
        try:
            out[key] = conv(raw)
        except ValueError as exc:
            raise ConfigError(f"{ENV_PREFIX}{suffix}: {exc}") from exc
    return out


def resolve(config_path: str | None = None, flags: dict | None = None, environ=None) -> RunConfig:
    """Layer file, environment and flags (later wins) over the defaults."""
    environ = os.environ if environ is None else environ
    cfg = RunConfig()
    path = config_path or environ.get(ENV_PREFIX + "CONFIG") or None
    if path:
        cfg = cfg.updated(load_file(path), path)
    cfg = cfg.updated(env_values(environ), "environment")
    if flags:
        cfg = cfg.updated({k: v for k, v in flags.items() if v is not None}, "flags")
    return cfg
