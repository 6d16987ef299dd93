"""JSON run configuration for the command-line interface.

Every key has a default; unknown keys are rejected so typos never pass
silently.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .bench import ModelConfig, get_target
from .train import TrainConfig

MODEL_KEYS = ("model", "basis", "shape", "G", "k", "c", "h", "d_hidden", "C", "prompt_dim")


class ConfigError(ValueError):
    pass


@dataclass
class CliConfig:
    target: str = "product2"
    target_dim: int | None = None
    model: str = "metakan"
    basis: str = "bspline"
    shape: list = None
    G: int = 5
    k: int = 3
    c: int | None = None
    h: float | None = None
    d_hidden: int = 16
    C: int = 1
    prompt_dim: int = 1
    steps: int = 5000
    batch_size: int = 256
    seed: int = 0
    lr_prompts: float = 1e-2
    lr_meta: float = 1e-3
    lr_kan: float = 1e-3
    weight_decay: float = 0.0
    lr_schedule: str = "constant"
    gamma: float = 0.999
    n_train: int = 3000
    n_test: int = 1000
    out_dir: str = "out"
    timing: bool = False
    sweep: list | None = None

    def __post_init__(self):
        if self.shape is None:
            self.shape = [2, 2, 1]

    def model_config(self, **overrides) -> ModelConfig:
        params = {k: getattr(self, k) for k in MODEL_KEYS}
        params.update(overrides)
        params["shape"] = tuple(params["shape"])
        return ModelConfig(**params)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            steps=self.steps, batch_size=self.batch_size, seed=self.seed,
            lr_prompts=self.lr_prompts, lr_meta=self.lr_meta, lr_kan=self.lr_kan,
            weight_decay=self.weight_decay, lr_schedule=self.lr_schedule, gamma=self.gamma,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["sweep"] is None:
            del d["sweep"]
        return d


_TYPES = {
    "target": str, "target_dim": (int, type(None)), "model": str, "basis": str, "shape": list,
    "G": int, "k": int, "c": (int, type(None)), "h": (float, int, type(None)), "d_hidden": int,
    "C": int, "prompt_dim": int, "steps": int, "batch_size": int, "seed": int,
    "lr_prompts": (float, int), "lr_meta": (float, int), "lr_kan": (float, int),
    "weight_decay": (float, int), "lr_schedule": str, "gamma": (float, int), "n_train": int,
    "n_test": int, "out_dir": str, "timing": bool, "sweep": (list, type(None)),
}


def _check_types(d: dict, where: str):
    for key, value in d.items():
        expected = _TYPES[key]
        ok = isinstance(value, expected)
        if isinstance(value, bool) and expected is not bool:
            ok = False
        if not ok:
            raise ConfigError(f"{where}key {key!r} has invalid value {value!r}")


def from_dict(d: dict) -> CliConfig:
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    known = {f.name for f in fields(CliConfig)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(map(repr, unknown))}")
    _check_types(d, "")
    cfg = CliConfig(**d)
    for i, override in enumerate(cfg.sweep or []):
        if not isinstance(override, dict):
            raise ConfigError(f"sweep entry {i} must be an object")
        bad = sorted(set(override) - set(MODEL_KEYS))
        if bad:
            raise ConfigError(f"sweep entry {i}: unknown key(s): {', '.join(map(repr, bad))}")
        _check_types(override, f"sweep entry {i}: ")
    try:
        get_target(cfg.target, cfg.target_dim)
        cfg.train_config()
        cfg.model_config()
        for override in cfg.sweep or []:
            cfg.model_config(**override)
    except (KeyError, ValueError) as exc:
        raise ConfigError(str(exc).strip('"')) from None
    if cfg.n_train < 1 or cfg.n_test < 1:
        raise ConfigError("n_train and n_test must be >= 1")
    return cfg


def load(path) -> CliConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return from_dict(d)
