"""Losses, AdamW with per-group learning rates, and minibatch training loops."""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import asdict, dataclass
from typing import Iterable, NamedTuple

import numpy as np

from . import autograd as ag
from .network import KanNetwork, MetaKanNetwork

SCHEDULES = ("constant", "cosine", "exponential")
LOSSES = ("mse", "cross_entropy")


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, detail: str = ""):
        self.step = step
        super().__init__(f"non-finite loss at step {step}" + (f": {detail}" if detail else ""))


@dataclass
class TrainConfig:
    steps: int = 1000
    batch_size: int = 256
    seed: int = 0
    lr_prompts: float = 1e-2
    lr_meta: float = 1e-3
    lr_kan: float = 1e-3
    weight_decay: float = 0.0
    lr_schedule: str = "constant"
    gamma: float = 0.999

    def __post_init__(self):
        if int(self.steps) != self.steps or self.steps < 0:
            raise ValueError("steps must be a non-negative integer")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise ValueError("batch_size must be a positive integer")
        for name in ("lr_prompts", "lr_meta", "lr_kan"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")
        if not self.weight_decay >= 0:
            raise ValueError("weight_decay must be non-negative")
        if self.lr_schedule not in SCHEDULES:
            raise ValueError(f"lr_schedule must be one of {SCHEDULES}")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")

    def lr_multiplier(self, step: int) -> float:
        if self.lr_schedule == "cosine":
            return 0.5 * (1.0 + math.cos(math.pi * step / max(self.steps, 1)))
        if self.lr_schedule == "exponential":
            return self.gamma**step
        return 1.0

    def group_rates(self) -> dict[str, float]:
        return {"prompts": self.lr_prompts, "meta-learner": self.lr_meta, "kan-weights": self.lr_kan}

    def to_dict(self) -> dict:
        return asdict(self)


# ------------------------------------------------------------------- losses

def mse_loss(pred, target) -> ag.Tensor:
    pred, target = ag.as_tensor(pred), ag.as_tensor(target)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    if pred.data.size == 0:
        raise ValueError("empty batch")
    return ag.mean(ag.square(pred - target))


def cross_entropy_loss(logits, labels) -> ag.Tensor:
    logits = ag.as_tensor(logits)
    labels = np.asarray(labels)
    m, K = logits.shape
    if labels.shape != (m,) or not np.issubdtype(labels.dtype, np.integer):
        raise ValueError("labels must be an integer vector with one entry per row")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= K:
        raise ValueError(f"labels must lie in [0, {K})")
    picked = logits[np.arange(m), labels]
    return ag.mean(ag.logsumexp(logits, axis=-1) - picked)


# ------------------------------------------------------------------- AdamW

class AdamW:
    """Decoupled weight decay Adam; the learning rate is chosen by each parameter's group."""

    def __init__(self, params: Iterable[ag.Parameter], lr: dict[str, float],
                 weight_decay: float = 0.0, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = dict(lr)
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = {p: np.zeros(p.shape) for p in self.params}
        self.v = {p: np.zeros(p.shape) for p in self.params}

    def step(self, grads: dict[ag.Parameter, np.ndarray], lr_scale: float = 1.0):
        for p in grads:
            if p not in self.m:
                raise KeyError(f"no optimizer state for {p!r}")
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p in self.params:
            g = grads.get(p)
            if g is None:
                g = np.zeros(p.shape)
            lr = self.lr[p.group] * lr_scale
            if self.weight_decay:
                p.data -= lr * self.weight_decay * p.data
            m = self.m[p] = self.beta1 * self.m[p] + (1.0 - self.beta1) * g
            v = self.v[p] = self.beta2 * self.v[p] + (1.0 - self.beta2) * g * g
            p.data -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adamw_step(opt: AdamW, grads, lr_scale: float = 1.0):
    opt.step(grads, lr_scale)


# ------------------------------------------------------------------ batching

def epoch_permutation(seed: int, epoch: int, n: int) -> np.ndarray:
    """Shuffled indices for one epoch from a counter-based generator keyed by ``(seed, epoch)``."""
    bitgen = np.random.Philox(np.random.SeedSequence([int(seed) & (2**64 - 1), int(epoch)]))
    return np.random.Generator(bitgen).permutation(n)


def minibatches(seed: int, n: int, batch_size: int):
    batch_size = min(batch_size, n)
    epoch = 0
    while True:
        perm = epoch_permutation(seed, epoch, n)
        for start in range(0, n - batch_size + 1, batch_size):
            yield perm[start : start + batch_size]
        epoch += 1


# ------------------------------------------------------------------ training

class TraceRow(NamedTuple):
    step: int
    loss: float
    lr_meta: float | None
    lr_prompts: float | None
    wall_ms: float | None


def _loss_fn(kind: str):
    if kind == "mse":
        return mse_loss
    if kind == "cross_entropy":
        return cross_entropy_loss
    raise ValueError(f"unknown loss {kind!r}; expected one of {LOSSES}")


def _prepare(net, X, y, loss_kind):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("dataset must be a non-empty 2-D array")
    if X.shape[1] != net.shape.widths[0]:
        raise ValueError(f"network expects {net.shape.widths[0]} inputs, data has {X.shape[1]}")
    if loss_kind == "cross_entropy":
        y = np.asarray(y).astype(int)
    else:
        y = np.asarray(y, dtype=np.float64)
        if y.ndim == 1:
            y = y[:, None]
        if y.shape != (X.shape[0], net.shape.widths[-1]):
            raise ValueError(f"targets of shape {y.shape} do not match network output width")
    return X, y


def _run(net, X, y, config: TrainConfig, loss_kind: str, is_meta: bool, timing: bool):
    loss_fn = _loss_fn(loss_kind)
    X, y = _prepare(net, X, y, loss_kind)
    opt = AdamW(net.parameters(), config.group_rates(), config.weight_decay)
    trace: list[TraceRow] = []
    batches = minibatches(config.seed, X.shape[0], config.batch_size)
    t0 = time.perf_counter()
    for step in range(config.steps):
        idx = next(batches)
        scale = config.lr_multiplier(step)
        try:
            loss = loss_fn(net.forward(X[idx]), y[idx])
        except ag.NonFiniteError as exc:
            raise TrainingDiverged(step, str(exc)) from None
        value = loss.item()
        if not math.isfinite(value):
            raise TrainingDiverged(step)
        opt.step(ag.backward(loss), scale)
        trace.append(TraceRow(
            step,
            value,
            config.lr_meta * scale if is_meta else None,
            config.lr_prompts * scale if is_meta else None,
            (time.perf_counter() - t0) * 1e3 if timing else None,
        ))
    return net, trace


def train_kan(net: KanNetwork, X, y, config: TrainConfig, loss_kind: str = "mse",
              timing: bool = False):
    """Train a plain KAN in place; returns ``(net, trace)``."""
    return _run(net, X, y, config, loss_kind, False, timing)


def train_metakan(meta: MetaKanNetwork, X, y, config: TrainConfig, loss_kind: str = "mse",
                  timing: bool = False):
    """Train prompts and every cluster's meta-learner jointly; returns ``(meta, trace)``.

    The cluster plan is fixed on the network before training starts.
    """
    return _run(meta, X, y, config, loss_kind, True, timing)


def train(net, X, y, config: TrainConfig, loss_kind: str = "mse", timing: bool = False):
    if isinstance(net, MetaKanNetwork):
        return train_metakan(net, X, y, config, loss_kind, timing)
    return train_kan(net, X, y, config, loss_kind, timing)


def evaluate_mse(net, X, y) -> float:
    y = np.asarray(y, dtype=np.float64)
    pred = net.forward(ag.Tensor(np.asarray(X, dtype=np.float64))).data
    return float(np.mean((pred - y.reshape(pred.shape)) ** 2))


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def trace_to_csv(trace: Iterable[TraceRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "loss", "lr_meta", "lr_prompts", "wall_ms"])
    for row in trace:
        w.writerow([row.step, _fmt(row.loss), _fmt(row.lr_meta), _fmt(row.lr_prompts), _fmt(row.wall_ms)])
    return buf.getvalue()
