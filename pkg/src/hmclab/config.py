"""Key/value config files: target construction and experiment configs.

The format is flat text, one `key = value` per line, with `#` comments.
Values parse as int, float, bool, a comma-separated list of those, or a
bare string.  Target files name a family plus family-specific parameters:

    family = logistic
    alpha2 = 1.0
    data = path/to/rows.csv      # rows are x_1..x_d,y

    family = gaussian
    dim = 16
    precision = 2.0, 3.0, 0.5    # diagonal; omit for identity

Experiment files add experiment-level keys (experiment, dims, seeds,
schedule) next to `target.`-prefixed target keys.
"""

from __future__ import annotations

import numpy as np

from .bench import ExperimentConfig
from .targets import (
    GaussianTarget,
    LogisticPosteriorTarget,
    RidgeSeparableTarget,
    TargetDensity,
    TwoLayerNetTarget,
    named_potential,
    random_unit_rows,
)


def _parse_scalar(text: str):
    text = text.strip()
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    for kind in (int, float):
        try:
            return kind(text)
        except ValueError:
            continue
    return text


def parse_kv(path: str) -> dict:
    out: dict = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if "," in value:
                out[key] = [_parse_scalar(v) for v in value.split(",") if v.strip()]
            else:
                out[key] = _parse_scalar(value)
    return out


def build_target(cfg: dict) -> TargetDensity:
    """Construct a built-in target family from parsed key/value pairs."""
    family = str(cfg.get("family", "gaussian")).lower()
    if family == "gaussian":
        dim = int(cfg.get("dim", 2))
        precision = cfg.get("precision")
        if precision is None:
            return GaussianTarget.standard(dim)
        if isinstance(precision, str):
            return GaussianTarget(np.loadtxt(precision, delimiter=",", ndmin=2))
        values = np.atleast_1d(np.asarray(precision, dtype=float))
        if values.size == 1:
            return GaussianTarget(float(values[0]) * np.eye(dim))
        return GaussianTarget.diagonal(values)
    if family == "ridge":
        dim = int(cfg.get("dim", 4))
        n = int(cfg.get("n", 4))
        rng = np.random.default_rng(int(cfg.get("directions_seed", 0)))
        potential = named_potential(str(cfg.get("potential", "logcosh")))
        return RidgeSeparableTarget(random_unit_rows(n, dim, rng), potential)
    if family == "logistic":
        alpha2 = float(cfg.get("alpha2", 1.0))
        if "data" in cfg:
            return LogisticPosteriorTarget.from_csv(str(cfg["data"]), alpha2)
        rng = np.random.default_rng(int(cfg.get("data_seed", 0)))
        return LogisticPosteriorTarget.synthetic(
            int(cfg.get("n", 8)), int(cfg.get("dim", 4)), alpha2, rng
        )
    if family in ("two-layer", "twolayer"):
        rng = np.random.default_rng(int(cfg.get("data_seed", 0)))
        return TwoLayerNetTarget.synthetic(
            int(cfg.get("m", 3)), int(cfg.get("n", 4)), int(cfg.get("dprime", 3)), rng
        )
    raise ValueError(f"unknown target family {family!r}")


def target_from_file(path: str) -> TargetDensity:
    return build_target(parse_kv(path))


_EXPERIMENT_KEYS = ("experiment", "dims", "seeds", "schedule")


def experiment_from_file(path: str, seed: int | None = None) -> ExperimentConfig:
    """Split a flat config into experiment fields, target.* keys and options."""
    raw = parse_kv(path)
    target = {k[len("target."):]: v for k, v in raw.items() if k.startswith("target.")}
    options = {
        k: v for k, v in raw.items()
        if not k.startswith("target.") and k not in _EXPERIMENT_KEYS
    }
    dims = raw.get("dims", [16])
    dims = tuple(int(d) for d in (dims if isinstance(dims, list) else [dims]))
    seeds = raw.get("seeds", [0])
    seeds = tuple(int(s) for s in (seeds if isinstance(seeds, list) else [seeds]))
    if seed is not None:
        seeds = (int(seed),) + tuple(s for s in seeds if s != seed)
    return ExperimentConfig(
        name=str(raw.get("experiment", "acceptance-scaling")),
        dims=dims,
        seeds=seeds,
        schedule=str(raw.get("schedule", "corollary-hmc")),
        target=target or {"family": "gaussian"},
        options=options,
    )
