"""Target functions, datasets and fitting experiments for KAN vs MetaKAN comparisons."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .network import (
    KanNetwork,
    MetaKanNetwork,
    NetworkShape,
    count_params,
    enumerate_params,
    make_kind,
)
from .train import TrainConfig, TrainingDiverged, evaluate_mse, train


# ------------------------------------------------------------------ targets

@dataclass(frozen=True)
class TargetFunction:
    name: str
    input_dim: int
    evaluator: Callable[[np.ndarray], np.ndarray]
    domain: tuple[float, float] = (-1.0, 1.0)

    def __call__(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.input_dim:
            raise ValueError(f"{self.name} takes {self.input_dim} inputs, got {X.shape[1]}")
        y = self.evaluator(X)
        return y[0] if single else y


def _product2(X):
    return X[:, 0] * X[:, 1]


def _sinsq_exp4(X):
    r1 = X[:, 0] ** 2 + X[:, 1] ** 2
    r2 = X[:, 2] ** 2 + X[:, 3] ** 2
    return np.exp(0.5 * (np.sin(np.pi * r1) + np.sin(np.pi * r2)))


def _f1_mean_sinsq(X):
    return np.exp(np.mean(np.sin(np.pi * X / 2.0) ** 2, axis=1))


def _f2_poly(X):
    return np.sum(X**2 + X**3, axis=1)


def _f3_gauss(X):
    return np.exp(-np.mean(X**2, axis=1))


# name -> factory(n) ; fixed-arity factories ignore n unless it contradicts
_REGISTRY: dict[str, Callable[[int | None], TargetFunction]] = {}


def register(name: str, factory: Callable[[int | None], TargetFunction]) -> None:
    _REGISTRY[name] = factory


def _fixed(name, n, fn):
    def factory(dim=None):
        if dim is not None and dim != n:
            raise ValueError(f"{name} has fixed input dimension {n}")
        return TargetFunction(name, n, fn)
    return factory


def _scalable(name, fn):
    def factory(dim=None):
        if dim is None or int(dim) < 1:
            raise ValueError(f"{name} needs a positive input dimension")
        return TargetFunction(f"{name}({int(dim)})", int(dim), fn)
    return factory


register("product2", _fixed("product2", 2, _product2))
register("sinsq_exp4", _fixed("sinsq_exp4", 4, _sinsq_exp4))
register("f1_mean_sinsq", _scalable("f1_mean_sinsq", _f1_mean_sinsq))
register("f2_poly", _scalable("f2_poly", _f2_poly))
register("f3_gauss", _scalable("f3_gauss", _f3_gauss))


def registry() -> dict[str, Callable[[int | None], TargetFunction]]:
    return dict(_REGISTRY)


def get_target(name: str, n: int | None = None) -> TargetFunction:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown target {name!r}; known: {sorted(_REGISTRY)}") from None
    return factory(n)


# ----------------------------------------------------------------- datasets

@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    provenance: tuple[str, int, int]

    def __len__(self):
        return self.X.shape[0]

    def split(self, n_train: int) -> tuple["Dataset", "Dataset"]:
        """First ``n_train`` rows train, the rest test."""
        if not 0 <= n_train <= len(self):
            raise ValueError("n_train out of range")
        return (Dataset(self.X[:n_train], self.y[:n_train], self.provenance),
                Dataset(self.X[n_train:], self.y[n_train:], self.provenance))


def generate(fn: TargetFunction, m: int, seed: int) -> Dataset:
    if m < 1:
        raise ValueError("m must be >= 1")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed) & (2**64 - 1))))
    a, b = fn.domain
    X = rng.uniform(a, b, size=(m, fn.input_dim))
    return Dataset(X, fn(X), (fn.name, int(seed), int(m)))


# ------------------------------------------------------------------ configs

@dataclass
class ModelConfig:
    model: str = "metakan"
    basis: str = "bspline"
    shape: tuple[int, ...] = (2, 2, 1)
    G: int = 5
    k: int = 3
    c: int | None = None
    h: float | None = None
    d_hidden: int = 16
    C: int = 1
    prompt_dim: int = 1

    def __post_init__(self):
        if self.model not in ("kan", "metakan"):
            raise ValueError(f"model must be 'kan' or 'metakan', got {self.model!r}")
        self.shape = NetworkShape(tuple(self.shape)).widths
        make_kind(self.basis, self.G, self.k, self.c, self.h)

    @property
    def count_kind(self) -> str:
        base = {"bspline": "KAN", "rbf": "FastKAN", "wavelet": "WavKAN"}[self.basis]
        return ("Meta" if self.model == "metakan" else "") + base

    @property
    def dim_c(self) -> int | None:
        if self.basis != "rbf":
            return None
        return self.G + self.k if self.c is None else self.c

    def build(self, seed: int):
        kind = make_kind(self.basis, self.G, self.k, self.c, self.h)
        if self.model == "kan":
            return KanNetwork.init(self.shape, kind, seed=seed)
        return MetaKanNetwork.init(self.shape, kind, d_hidden=self.d_hidden, C=self.C,
                                   prompt_dim=self.prompt_dim, seed=seed)

    def param_count(self):
        return count_params(self.count_kind, self.shape, self.G, self.k, self.dim_c,
                            self.d_hidden, self.C, self.prompt_dim)


# ------------------------------------------------------------------ reports

SUMMARY_COLUMNS = ("name", "model", "shape", "G", "k", "c", "d_hidden", "C", "prompt_dim",
                   "params_formula", "params_exact", "train_mse", "test_mse", "steps", "seed",
                   "wall_ms", "diverged")


@dataclass
class RunReport:
    name: str
    model: str
    shape: list[int]
    basis: str
    G: int | None
    k: int | None
    c: int | None
    d_hidden: int | None
    C: int | None
    prompt_dim: int | None
    params_formula: int
    params_exact: int
    train_mse: float | None
    test_mse: float | None
    steps: int
    seed: int
    wall_ms: float | None = None
    diverged: bool = False
    error: str | None = None
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "RunReport":
        return cls(**json.loads(line))


def _finite_or_none(v: float) -> float | None:
    return v if math.isfinite(v) else None


def fit_model(fn: TargetFunction, model_cfg: ModelConfig, train_cfg: TrainConfig,
              n_train: int = 3000, n_test: int = 1000, timing: bool = False):
    """Train one model on a fresh dataset; returns ``(report, network, trace)``.

    Divergence is recorded in the report instead of raised.
    """
    if n_test < 1:
        raise ValueError("test set must be non-empty")
    if n_train < 1:
        raise ValueError("training set must be non-empty")
    if model_cfg.shape[0] != fn.input_dim or model_cfg.shape[-1] != 1:
        raise ValueError(f"shape {list(model_cfg.shape)} does not fit {fn.name} "
                         f"({fn.input_dim} inputs, 1 output)")
    train_set, test_set = generate(fn, n_train + n_test, train_cfg.seed).split(n_train)
    net = model_cfg.build(train_cfg.seed)
    counts = model_cfg.param_count()
    exact = enumerate_params(net)
    if exact != counts.exact:
        raise AssertionError(f"enumerated {exact} parameters, formula says {counts.exact}")
    meta = model_cfg.model == "metakan"
    linear = model_cfg.basis != "wavelet"
    report = RunReport(
        name=fn.name,
        model=model_cfg.count_kind,
        shape=list(model_cfg.shape),
        basis=model_cfg.basis,
        G=model_cfg.G if linear else None,
        k=model_cfg.k if model_cfg.basis == "bspline" else None,
        c=model_cfg.dim_c,
        d_hidden=model_cfg.d_hidden if meta else None,
        C=model_cfg.C if meta else None,
        prompt_dim=model_cfg.prompt_dim if meta else None,
        params_formula=counts.formula,
        params_exact=exact,
        train_mse=None,
        test_mse=None,
        steps=train_cfg.steps,
        seed=train_cfg.seed,
    )
    t0 = time.perf_counter()
    trace = []
    try:
        _, trace = train(net, train_set.X, train_set.y, train_cfg, timing=timing)
        report.train_mse = _finite_or_none(evaluate_mse(net, train_set.X, train_set.y))
        report.test_mse = _finite_or_none(evaluate_mse(net, test_set.X, test_set.y))
        if report.test_mse is None or report.train_mse is None:
            report.diverged = True
            report.error = "non-finite evaluation"
    except (TrainingDiverged, FloatingPointError) as exc:
        report.diverged = True
        report.error = str(exc)
    if timing:
        report.wall_ms = (time.perf_counter() - t0) * 1e3
    return report, net, trace


def run_experiment(fn: TargetFunction, model_cfg: ModelConfig, train_cfg: TrainConfig,
                   n_train: int = 3000, n_test: int = 1000, timing: bool = False) -> RunReport:
    return fit_model(fn, model_cfg, train_cfg, n_train, n_test, timing)[0]


def _rank_key(r: RunReport):
    mse = r.test_mse if r.test_mse is not None else math.inf
    return (r.params_formula, mse)


def compare_sweep(fn: TargetFunction, configs: Sequence[ModelConfig], train_cfg: TrainConfig,
                  n_train: int = 3000, n_test: int = 1000, timing: bool = False):
    """Run every config; returns ``(reports_in_input_order, summary_rows_ranked)``."""
    if len(configs) < 2:
        raise ValueError("a sweep needs at least two configurations")
    if n_test < 1:
        raise ValueError("test set must be non-empty")
    reports = [run_experiment(fn, cfg, train_cfg, n_train, n_test, timing) for cfg in configs]
    ranked = sorted(reports, key=_rank_key)
    return reports, [summary_row(r) for r in ranked]


def summary_row(r: RunReport) -> dict:
    row = {k: getattr(r, k) for k in SUMMARY_COLUMNS}
    row["shape"] = "[" + ",".join(map(str, r.shape)) + "]"
    return row


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def summary_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for row in rows:
        w.writerow([_cell(row[c]) for c in SUMMARY_COLUMNS])
    return buf.getvalue()


def reports_jsonl(reports: Sequence[RunReport]) -> str:
    return "".join(r.to_json() + "\n" for r in reports)


def format_table(rows: Sequence[dict]) -> str:
    cols = ("model", "shape", "params_formula", "params_exact", "train_mse", "test_mse", "diverged")
    cells = [list(cols)]
    for row in rows:
        cells.append([
            f"{row[c]:.3e}" if isinstance(row[c], float) else _cell(row[c]) for c in cols
        ])
    widths = [max(len(r[i]) for r in cells) for i in range(len(cols))]
    return "\n".join("  ".join(v.ljust(w) for v, w in zip(r, widths)) for r in cells)
