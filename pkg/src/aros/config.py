"""Configuration defaults and TOML overrides for training, indexing, and placement."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .ibs import IbsConfig


@dataclass
class TrainConfig:
    """One-shot training parameters; None thresholds auto-calibrate."""

    label: str = "interaction"
    num_pv: int = 512
    num_cv: int = 256
    d_max: float = 0.05
    contact_eps: float = 0.02
    rho_n: float = math.pi / 3
    n_phi: int = 8
    max_kappa: Optional[float] = None       # default: 3x the self alignment score
    max_missings: Optional[int] = None      # default: 10% of num_pv
    max_collisions: Optional[int] = None    # default: 5% of num_cv
    ibs: IbsConfig = field(default_factory=IbsConfig)


@dataclass
class IndexConfig:
    """Scene preparation parameters."""

    filler_radii: tuple = (0.07, 0.03)
    base_filler_radius: float = 0.12
    base_plane_drop: float = 0.40
    sphere_subdivisions: int = 2
    use_fillers: bool = True
    sdf_dims: tuple = (64, 64, 64)
    sdf_padding: float = 0.5


@dataclass
class PlacementConfig:
    """Shared optimizer knobs (interpreted per optimizer kind)."""

    max_iters: int = 60
    step_size: float = 0.02
    collision_weight: float = 1.0
    contact_weight: float = 1.0
    convergence_eps: float = 1e-6


def _apply(cfg, table: dict):
    valid = {f.name: f for f in fields(cfg)}
    updates = {}
    for key, value in table.items():
        if key not in valid:
            raise KeyError(f"unknown config key {key!r} for {type(cfg).__name__}")
        if key == "ibs" and isinstance(value, dict):
            updates[key] = _apply(cfg.ibs, value)
        elif isinstance(value, list):
            updates[key] = tuple(value)
        else:
            updates[key] = value
    return replace(cfg, **updates)


def load_config(path=None):
    """Read a TOML file with [train], [train.ibs], [index], [placement] tables.

    Returns (TrainConfig, IndexConfig, PlacementConfig) with file values
    overriding the defaults.
    """
    train = TrainConfig()
    index = IndexConfig()
    placement = PlacementConfig()
    if path is None:
        return train, index, placement
    with Path(path).open("rb") as fh:
        doc = tomllib.load(fh)
    if "train" in doc:
        train = _apply(train, doc["train"])
    if "index" in doc:
        index = _apply(index, doc["index"])
    if "placement" in doc:
        placement = _apply(placement, doc["placement"])
    return train, index, placement
