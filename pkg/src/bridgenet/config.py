"""Layered run configuration: defaults < YAML file < command-line flags.

Config file keys (all optional)::

    dataset: middlebury          # or nyu_v2
    data_root: /data/middlebury  # falls back to $BRIDGENET_DATA_ROOT
    cache: cache/x8              # patch cache directory
    out: runs/x8                 # output directory
    checkpoint_every: 1          # epochs between periodic checkpoints
    train:                       # TrainConfig fields
      scale: 8
      seed: 0
      variant: full
      batch_size: 8
      lr0: 1.0e-4
      betas: [0.9, 0.99]
      eps: 1.0e-8
      decay_every: 100
      decay_factor: 0.1
      epochs: 300
      max_steps: null
      shared_gradients: false
      mde_loss_weight: 1.0
      model: {dsr_channels: 32, mde_channels: 16, pyramid_channels: 32,
              transform_blocks: 4, bottleneck_blocks: 4, mde_stage_blocks: 2,
              global_residual: true}
"""

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import __version__
from .checkpoint import VERSION as CHECKPOINT_VERSION
from .errors import ConfigError
from .training import TrainConfig

DATA_ROOT_ENV = "BRIDGENET_DATA_ROOT"


@dataclass
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    dataset: str = "middlebury"
    data_root: str = None
    cache: str = None
    out: str = None
    checkpoint_every: int = 1

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["train"]["betas"] = list(d["train"]["betas"])
        d["version"] = {"package": __version__, "checkpoint_format": CHECKPOINT_VERSION}
        return d

    def resolved_data_root(self):
        root = self.data_root or os.environ.get(DATA_ROOT_ENV)
        if not root:
            raise ConfigError(f"no dataset root: pass --data-root or set ${DATA_ROOT_ENV}")
        if not Path(root).is_dir():
            raise ConfigError(f"dataset root {root} does not exist")
        return Path(root)


def _merge(base, override):
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_run_config(path=None, overrides=None):
    """Resolve a RunConfig from defaults, an optional YAML file and flag overrides.

    ``overrides`` uses the file's nesting; ``None`` values are ignored.
    """
    d = RunConfig().to_dict()
    d.pop("version")
    if path is not None:
        try:
            loaded = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError(f"config {path} must be a mapping")
        loaded.pop("version", None)
        d = _merge(d, loaded)
    if overrides:
        d = _merge(d, _drop_none(overrides))

    unknown = set(d) - {f.name for f in dataclasses.fields(RunConfig)}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    train = d.pop("train")
    model = train.pop("model", {})
    try:
        train_cfg = TrainConfig.from_dict({**train, "model": model})
    except TypeError as exc:
        raise ConfigError(f"bad model config: {exc}") from exc
    return RunConfig(train=train_cfg, **d)


def _drop_none(d):
    out = {}
    for k, v in d.items():
        if isinstance(v, dict):
            v = _drop_none(v)
            if v:
                out[k] = v
        elif v is not None:
            out[k] = v
    return out


def write_run_config(cfg, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))
