"""Strict TOML config parsing for the ``train2d`` and ``dirac`` commands."""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, fields

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..dirac_lab import DEFAULT_INIT, DIRAC_TAGS
from ..errors import ConfigError
from ..trainer import TrainConfig

# expected python type per TrainConfig field, for strict type checks
_TRAIN_TYPES = {
    "dataset": str, "loss": str, "batch_size": int, "d_steps_per_g_step": int,
    "iterations": int, "lr_g": float, "lr_d": float, "beta1": float, "beta2": float,
    "adam_eps": float, "latent_dim": int, "eval_every": int, "eval_samples": int,
    "k_sigma": float, "seed": int, "em_hidden": list, "rm_hidden": list,
    "gen_hidden": list, "leaky_alpha": float, "gp_lambda": float, "xr2": str,
    "checkpoint": bool,
}


@dataclass(frozen=True)
class DiracConfig:
    init: tuple = DEFAULT_INIT
    h: float = 0.05
    steps: int = 10_000
    losses: tuple = ("relation_triplet", "wgan", "vanilla_ns", "wgan_gp")
    tol: float = 1e-2
    window_frac: float = 0.2
    seed: int = 0
    # "fixed" uses the documented defaults; "random" draws from the seed
    disc_init: str = "fixed"

    def __post_init__(self):
        object.__setattr__(self, "init", tuple(float(v) for v in self.init))
        object.__setattr__(self, "losses", tuple(self.losses))
        if len(self.init) != 2:
            raise ConfigError("init: must be a 2-D point")
        checks = [
            ("h", self.h > 0, "must be > 0"),
            ("steps", self.steps >= 1, "must be >= 1"),
            ("tol", self.tol > 0, "must be > 0"),
            ("window_frac", 0 < self.window_frac <= 1, "must lie in (0, 1]"),
            ("seed", self.seed >= 0, "must be >= 0"),
            ("disc_init", self.disc_init in ("fixed", "random"), "must be 'fixed' or 'random'"),
            ("losses", len(self.losses) >= 1, "must name at least one loss"),
        ]
        for key, ok, msg in checks:
            if not ok:
                raise ConfigError(f"{key}: {msg} (got {getattr(self, key)!r})")
        for tag in self.losses:
            if tag not in DIRAC_TAGS:
                raise ConfigError(f"losses: unsupported Dirac loss {tag!r}; expected one of {', '.join(DIRAC_TAGS)}")

    def to_dict(self):
        d = asdict(self)
        d["init"] = list(d["init"])
        d["losses"] = list(d["losses"])
        return d


_DIRAC_TYPES = {"init": list, "h": float, "steps": int, "losses": list, "tol": float,
                "window_frac": float, "seed": int, "disc_init": str}

COMMAND_CONFIGS = {"train2d": (TrainConfig, _TRAIN_TYPES), "dirac": (DiracConfig, _DIRAC_TYPES)}


def _coerce(key, value, want):
    if want is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if want is bool:
        ok = isinstance(value, bool)
    elif want is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    else:
        ok = isinstance(value, want)
    if not ok:
        raise ConfigError(f"{key}: expected {want.__name__}, got {type(value).__name__} ({value!r})")
    return value


def config_from_mapping(command, mapping):
    """Build the command's config from a plain mapping, rejecting unknown keys."""
    try:
        cls, types = COMMAND_CONFIGS[command]
    except KeyError:
        raise ConfigError(f"no config schema for command {command!r}") from None
    kwargs = {}
    for key, value in mapping.items():
        if key not in types:
            raise ConfigError(f"{key}: unknown key for {command} (allowed: {', '.join(sorted(types))})")
        kwargs[key] = _coerce(key, value, types[key])
    return cls(**kwargs)


def parse_config(text, command):
    """Parse a TOML document into a TrainConfig or DiracConfig."""
    try:
        mapping = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    return config_from_mapping(command, mapping)


def serialize_config(config):
    return tomli_w.dumps(config.to_dict())


def with_overrides(config, **overrides):
    """Return a copy with non-None overrides applied (re-validated)."""
    d = config.to_dict()
    d.update({k: v for k, v in overrides.items() if v is not None})
    return type(config)(**d)


def config_field_names(command):
    cls, _ = COMMAND_CONFIGS[command]
    return [f.name for f in fields(cls)]
