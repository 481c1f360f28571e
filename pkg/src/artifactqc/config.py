"""Run configuration: JSON file plus dotted-key command-line overrides."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

from .encoder import EncoderConfig
from .errors import TauOutOfRange
from .seeds import derive_seed


@dataclass
class SimulateConfig:
    count: int = 200
    corrupt_fraction: float = 0.15
    depth: int = 32
    seed: int = 101


@dataclass
class EncoderTrainConfig:
    steps: int = 2000
    lr: float = 3e-4
    seed: int = 202


@dataclass
class FlowTrainConfig:
    steps: int = 3000
    lr: float = 2e-3
    batch_size: int = 128
    seed: int = 303


@dataclass
class PathsConfig:
    train_dir: str = "data/train"
    eval_dir: str = "data/eval"
    out_dir: str = "out"


@dataclass
class RunConfig:
    image_size: tuple[int, int] = (64, 64)
    slice_count: int = 20
    tau: float = 0.05
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    encoder_train: EncoderTrainConfig = field(default_factory=EncoderTrainConfig)
    flow_train: FlowTrainConfig = field(default_factory=FlowTrainConfig)
    simulate: SimulateConfig = field(default_factory=SimulateConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def __post_init__(self) -> None:
        self.image_size = tuple(self.image_size)
        if not 0.0 < self.tau < 1.0:
            raise TauOutOfRange(f"tau must be in (0, 1), got {self.tau}")
        if self.encoder.input_size != self.image_size:
            self.encoder = dataclasses.replace(self.encoder, input_size=self.image_size)
        outs = [os.path.abspath(self.paths.out_dir)]
        for d in (self.paths.train_dir, self.paths.eval_dir):
            if os.path.abspath(d) in outs:
                raise ValueError(f"output dir {self.paths.out_dir!r} collides with data dir {d!r}")

    def reseed(self, master_seed: int) -> None:
        """Derive all stage seeds from one master seed."""
        self.simulate.seed = derive_seed(master_seed, 1)
        self.encoder_train.seed = derive_seed(master_seed, 2)
        self.flow_train.seed = derive_seed(master_seed, 3)


_SECTIONS = {
    "encoder": EncoderConfig,
    "encoder_train": EncoderTrainConfig,
    "flow_train": FlowTrainConfig,
    "simulate": SimulateConfig,
    "paths": PathsConfig,
}


def _build_section(cls, data: dict):
    valid = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - valid
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**data)


def config_from_dict(data: dict) -> RunConfig:
    data = dict(data)
    kwargs = {}
    for key, cls in _SECTIONS.items():
        if key in data:
            section = data.pop(key)
            if not isinstance(section, dict):
                raise ValueError(f"config section {key!r} must be an object")
            kwargs[key] = _build_section(cls, section)
    valid = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(data) - valid
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    kwargs.update(data)
    return RunConfig(**kwargs)


def load_config(path: str | os.PathLike | None) -> RunConfig:
    if path is None:
        return RunConfig()
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))


def _convert(raw: str, current) -> object:
    if isinstance(current, bool):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"cannot parse boolean from {raw!r}")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if isinstance(current, tuple):
        return tuple(int(p) for p in raw.replace("x", ",").split(","))
    return raw


def apply_override(config: RunConfig, dotted_key: str, raw_value: str) -> None:
    """Set e.g. ``flow_train.steps`` or ``tau`` from its string form."""
    parts = dotted_key.split(".")
    target = config
    for part in parts[:-1]:
        if not hasattr(target, part):
            raise ValueError(f"unknown config section {part!r} in {dotted_key!r}")
        target = getattr(target, part)
    leaf = parts[-1]
    if not hasattr(target, leaf):
        raise ValueError(f"unknown config key {dotted_key!r}")
    current = getattr(target, leaf)
    value = _convert(raw_value, current)
    if dataclasses.is_dataclass(target) and getattr(type(target), "__dataclass_params__").frozen:
        replaced = dataclasses.replace(target, **{leaf: value})
        # frozen sections hang off RunConfig directly
        for f in dataclasses.fields(config):
            if getattr(config, f.name) is target:
                setattr(config, f.name, replaced)
                return
        raise ValueError(f"cannot locate frozen section for {dotted_key!r}")
    setattr(target, leaf, value)


def finalize(config: RunConfig) -> RunConfig:
    """Re-run validation after overrides."""
    return config_from_dict(config_to_dict(config))


def config_to_dict(config: RunConfig) -> dict:
    out = dataclasses.asdict(config)
    out["image_size"] = list(config.image_size)
    out["encoder"]["input_size"] = list(config.encoder.input_size)
    return out
