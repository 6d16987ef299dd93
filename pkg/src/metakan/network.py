"""KAN and MetaKAN networks.

A KAN layer maps ``x in R^{n_in}`` to ``y in R^{n_out}`` with
``y_j = sum_i phi(x_i; w_ij)``; weights for a layer are stored as one
``(n_out, n_in, dim(w))`` array. A MetaKAN stores a learnable prompt per edge
instead and generates ``w_ij`` with a small MLP, one MLP per layer cluster.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import autograd as ag
from .basis import (
    RbfSpec,
    SplineSpec,
    basis_vector,
    basis_vector_tensor,
    inverse_softplus,
    mexican_hat,
    mexican_hat_tensor,
    rbf_tensor,
    rbf_vector,
    softplus,
)


# --------------------------------------------------------------------- shape

@dataclass(frozen=True)
class NetworkShape:
    widths: tuple[int, ...]

    def __post_init__(self):
        widths = tuple(int(n) for n in self.widths)
        if len(widths) < 2:
            raise ValueError("shape needs >= 2 widths")
        if any(n < 1 for n in widths):
            raise ValueError(f"widths must be positive, got {widths}")
        object.__setattr__(self, "widths", widths)

    @classmethod
    def parse(cls, text: str) -> "NetworkShape":
        try:
            widths = [int(s) for s in text.replace(" ", "").strip("[]").split(",") if s]
        except ValueError:
            raise ValueError(f"invalid shape string {text!r}") from None
        return cls(tuple(widths))

    @property
    def n_layers(self) -> int:
        return len(self.widths) - 1

    def layer_dims(self, l: int) -> tuple[int, int]:
        """``(n_in, n_out)`` of layer ``l``."""
        return self.widths[l], self.widths[l + 1]

    def edges(self, l: int) -> int:
        return self.widths[l] * self.widths[l + 1]

    @property
    def total_edges(self) -> int:
        return sum(self.edges(l) for l in range(self.n_layers))

    def __iter__(self):
        return iter(self.widths)

    def __str__(self):
        return "[" + ",".join(map(str, self.widths)) + "]"


def as_shape(shape) -> NetworkShape:
    return shape if isinstance(shape, NetworkShape) else NetworkShape(tuple(shape))


def ka_shape(n: int) -> NetworkShape:
    """Two-layer shape ``[n, 2n+1, 1]`` of the Kolmogorov-Arnold decomposition."""
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    return NetworkShape((n, 2 * n + 1, 1))


# ---------------------------------------------------------- activation kinds

class ActivationKind:
    """Basis family of every edge in a network."""

    name: str
    dim: int

    def layer(self, x: ag.Tensor, W: ag.Tensor) -> ag.Tensor:
        """Batched layer: ``x`` is ``(m, n_in)``, ``W`` is ``(n_out, n_in, dim)``."""
        raise NotImplementedError

    def eval_scalar(self, w: np.ndarray, t: float) -> float:
        raise NotImplementedError

    def init_weights(self, rng: np.random.Generator, n_out: int, n_in: int) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    @staticmethod
    def from_dict(d: dict) -> "ActivationKind":
        kind = d.get("kind")
        if kind == "bspline":
            return BSplineSilu(SplineSpec(int(d["G"]), int(d["k"]), tuple(d["domain"])))
        if kind == "rbf":
            return GaussianRbf(RbfSpec(int(d["c"]), tuple(d["domain"]), float(d["h"])))
        if kind == "wavelet":
            return MexicanHatWavelet()
        raise ValueError(f"unknown activation kind {kind!r}")


class _LinearBasisKind(ActivationKind):
    """Kinds where ``phi(t; w) = w . basis(t)``."""

    def _basis(self, t):
        raise NotImplementedError

    def _basis_tensor(self, x):
        raise NotImplementedError

    def layer(self, x, W):
        m, n_in = x.shape
        n_out = W.shape[0]
        B = self._basis_tensor(x).reshape(m, n_in * self.dim)
        return ag.matmul(B, W.reshape(n_out, n_in * self.dim).T)

    def eval_scalar(self, w, t):
        w = np.asarray(w, dtype=np.float64)
        if w.shape != (self.dim,):
            raise ValueError(f"weight vector must have length {self.dim}, got {w.shape}")
        return float(w @ self._basis(t))


class BSplineSilu(_LinearBasisKind):
    name = "bspline"

    def __init__(self, spec: SplineSpec | None = None):
        self.spec = spec or SplineSpec()
        self.dim = self.spec.dim

    def _basis(self, t):
        return basis_vector(self.spec, t)

    def _basis_tensor(self, x):
        return basis_vector_tensor(self.spec, x)

    def init_weights(self, rng, n_out, n_in):
        w = rng.normal(0.0, 0.1, size=(n_out, n_in, self.dim))
        w[..., 0] = 1.0
        return w

    def to_dict(self):
        s = self.spec
        return {"kind": "bspline", "G": s.G, "k": s.k, "domain": list(s.domain)}

    def __repr__(self):
        return f"BSplineSilu(G={self.spec.G}, k={self.spec.k}, domain={self.spec.domain})"


class GaussianRbf(_LinearBasisKind):
    name = "rbf"

    def __init__(self, spec: RbfSpec | None = None):
        self.spec = spec or RbfSpec()
        self.dim = self.spec.dim

    def _basis(self, t):
        return rbf_vector(self.spec, t)

    def _basis_tensor(self, x):
        return rbf_tensor(self.spec, x)

    def init_weights(self, rng, n_out, n_in):
        return rng.normal(0.0, 0.1, size=(n_out, n_in, self.dim))

    def to_dict(self):
        s = self.spec
        return {"kind": "rbf", "c": s.c, "domain": list(s.domain), "h": s.h}

    def __repr__(self):
        return f"GaussianRbf(c={self.spec.c}, h={self.spec.h:g})"


class MexicanHatWavelet(ActivationKind):
    """Weights per edge are ``(amplitude, translation, raw_sigma)``."""

    name = "wavelet"
    dim = 3

    def layer(self, x, W):
        m, n_in = x.shape
        n_out = W.shape[0]
        amp, mu, raw = W[..., 0], W[..., 1], W[..., 2]
        t = x.reshape(m, 1, n_in) - mu.reshape(1, n_out, n_in)
        psi = mexican_hat_tensor(t, ag.softplus(raw))
        return ag.tsum(amp * psi, axis=-1)

    def eval_scalar(self, w, t):
        w = np.asarray(w, dtype=np.float64)
        if w.shape != (3,):
            raise ValueError(f"weight vector must have length 3, got {w.shape}")
        return float(w[0] * mexican_hat(t - w[1], softplus(w[2])))

    def init_weights(self, rng, n_out, n_in):
        w = np.empty((n_out, n_in, 3))
        w[..., 0] = rng.normal(0.0, 1.0 / np.sqrt(n_in), size=(n_out, n_in))
        w[..., 1] = rng.uniform(-1.0, 1.0, size=(n_out, n_in))
        w[..., 2] = inverse_softplus(1.0)
        return w

    def to_dict(self):
        return {"kind": "wavelet"}

    def __repr__(self):
        return "MexicanHatWavelet()"


def make_kind(basis: str = "bspline", G: int = 5, k: int = 3, c: int | None = None,
              h: float | None = None, domain=(-1.0, 1.0)) -> ActivationKind:
    if basis == "bspline":
        return BSplineSilu(SplineSpec(G, k, tuple(domain)))
    if basis == "rbf":
        return GaussianRbf(RbfSpec(G + k if c is None else c, tuple(domain), h))
    if basis == "wavelet":
        return MexicanHatWavelet()
    raise ValueError(f"unknown basis {basis!r}; expected bspline, rbf or wavelet")


def activation_eval(kind: ActivationKind, w, t: float) -> float:
    return kind.eval_scalar(w, t)


# ------------------------------------------------------------------------ KAN

def _as_batch(x, n_in: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != n_in:
        raise ValueError(f"expected input with {n_in} features, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains non-finite values")
    return x, single


class KanNetwork:
    def __init__(self, shape, kind: ActivationKind, weights: Sequence):
        self.shape = as_shape(shape)
        self.kind = kind
        self.weights = [
            w if isinstance(w, ag.Parameter) else ag.Parameter(w, "kan-weights", f"W{l}")
            for l, w in enumerate(weights)
        ]
        for l, w in enumerate(self.weights):
            n_in, n_out = self.shape.layer_dims(l)
            if w.shape != (n_out, n_in, kind.dim):
                raise ValueError(
                    f"layer {l} weights have shape {w.shape}, expected {(n_out, n_in, kind.dim)}"
                )
        if len(self.weights) != self.shape.n_layers:
            raise ValueError("one weight array per layer is required")

    @classmethod
    def init(cls, shape, kind: ActivationKind, seed: int = 0) -> "KanNetwork":
        shape = as_shape(shape)
        rng = np.random.default_rng(seed)
        weights = []
        for l in range(shape.n_layers):
            n_in, n_out = shape.layer_dims(l)
            weights.append(kind.init_weights(rng, n_out, n_in))
        return cls(shape, kind, weights)

    @classmethod
    def zeros(cls, shape, kind: ActivationKind) -> "KanNetwork":
        shape = as_shape(shape)
        return cls(
            shape,
            kind,
            [np.zeros((shape.widths[l + 1], shape.widths[l], kind.dim)) for l in range(shape.n_layers)],
        )

    def parameters(self) -> list[ag.Parameter]:
        return list(self.weights)

    def forward(self, X) -> ag.Tensor:
        x = ag.as_tensor(X)
        for W in self.weights:
            x = self.kind.layer(x, W)
        return x

    def __call__(self, X) -> np.ndarray:
        return kan_forward(self, X)

    def __repr__(self):
        return f"KanNetwork(shape={self.shape}, kind={self.kind!r})"


def kan_layer_forward(kind: ActivationKind, W, x) -> np.ndarray:
    """One layer on a single input vector or an ``(m, n_in)`` batch."""
    W = np.asarray(W.data if isinstance(W, ag.Tensor) else W, dtype=np.float64)
    X, single = _as_batch(x, W.shape[1])
    y = kind.layer(ag.Tensor(X), ag.Tensor(W)).data
    return y[0] if single else y


def kan_forward(net: KanNetwork, x) -> np.ndarray:
    X, single = _as_batch(x, net.shape.widths[0])
    y = net.forward(ag.Tensor(X)).data
    return y[0] if single else y


# ---------------------------------------------------------------- meta-learner

class MetaLearner:
    """Two-layer MLP ``z -> W2 silu(W1 z + b1) + b2`` producing one edge's weights."""

    def __init__(self, prompt_dim: int, d_hidden: int, out_dim: int,
                 seed: int | np.random.Generator | None = 0, tag: str = ""):
        self.prompt_dim = int(prompt_dim)
        self.d_hidden = int(d_hidden)
        self.out_dim = int(out_dim)
        if min(self.prompt_dim, self.d_hidden, self.out_dim) < 1:
            raise ValueError("prompt_dim, d_hidden and out_dim must be positive")
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        b_in = 1.0 / np.sqrt(self.prompt_dim)
        b_out = 1.0 / np.sqrt(self.d_hidden)
        self.W1 = ag.Parameter(rng.uniform(-b_in, b_in, (self.d_hidden, self.prompt_dim)),
                               "meta-learner", f"{tag}W1")
        self.b1 = ag.Parameter(rng.uniform(-b_in, b_in, self.d_hidden), "meta-learner", f"{tag}b1")
        self.W2 = ag.Parameter(rng.uniform(-b_out, b_out, (self.out_dim, self.d_hidden)),
                               "meta-learner", f"{tag}W2")
        self.b2 = ag.Parameter(rng.uniform(-b_out, b_out, self.out_dim), "meta-learner", f"{tag}b2")

    def parameters(self) -> list[ag.Parameter]:
        return [self.W1, self.b1, self.W2, self.b2]

    @property
    def n_params(self) -> int:
        return (self.prompt_dim + 1) * self.d_hidden + (self.d_hidden + 1) * self.out_dim

    def generate(self, Z: ag.Tensor) -> ag.Tensor:
        """``Z`` is ``(E, prompt_dim)``; returns ``(E, out_dim)``."""
        hidden = ag.silu(ag.matmul(Z, self.W1.T) + self.b1)
        return ag.matmul(hidden, self.W2.T) + self.b2

    def zero_(self) -> "MetaLearner":
        for p in self.parameters():
            p.data[...] = 0.0
        return self


def meta_generate(learner: MetaLearner, z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    if z.shape != (learner.prompt_dim,):
        raise ValueError(f"prompt must have length {learner.prompt_dim}")
    return learner.generate(ag.Tensor(z[None, :])).data[0]


# ------------------------------------------------------------------ clustering

@dataclass(frozen=True)
class ClusterPlan:
    intervals: tuple[tuple[int, int], ...]

    def __post_init__(self):
        intervals = tuple((int(a), int(b)) for a, b in self.intervals)
        if not intervals:
            raise ValueError("a cluster plan needs at least one interval")
        expected = 0
        for a, b in intervals:
            if a != expected or b < a:
                raise ValueError(f"intervals must be sorted, contiguous and disjoint: {intervals}")
            expected = b + 1
        object.__setattr__(self, "intervals", intervals)

    @property
    def C(self) -> int:
        return len(self.intervals)

    @property
    def n_layers(self) -> int:
        return self.intervals[-1][1] + 1

    def cluster_of(self, layer: int) -> int:
        for c, (a, b) in enumerate(self.intervals):
            if a <= layer <= b:
                return c
        raise IndexError(f"layer {layer} is not covered by {self.intervals}")

    @classmethod
    def single(cls, n_layers: int) -> "ClusterPlan":
        return cls(((0, n_layers - 1),))


def cluster_layers(channels: Sequence[float], C: int) -> ClusterPlan:
    """Optimal contiguous partition of ``channels`` into ``C`` groups.

    Minimises the total within-group sum of squared deviations (1-D k-means
    restricted to contiguous groups) by dynamic programming. Ties resolve to
    the earliest split point, so the result is deterministic.
    """
    x = np.asarray(channels, dtype=np.float64)
    n = x.size
    if int(C) != C or not 1 <= C <= n:
        raise ValueError(f"C must be in [1, {n}], got {C}")
    s1 = np.concatenate([[0.0], np.cumsum(x)])
    s2 = np.concatenate([[0.0], np.cumsum(x * x)])

    def sse(i, j):  # items i..j-1
        m = j - i
        return s2[j] - s2[i] - (s1[j] - s1[i]) ** 2 / m

    cost = np.full((C + 1, n + 1), np.inf)
    split = np.zeros((C + 1, n + 1), dtype=int)
    cost[0, 0] = 0.0
    for c in range(1, C + 1):
        for j in range(c, n + 1):
            for i in range(c - 1, j):
                v = cost[c - 1, i] + sse(i, j)
                if v < cost[c, j]:
                    cost[c, j] = v
                    split[c, j] = i
    bounds, j = [], n
    for c in range(C, 0, -1):
        i = split[c, j]
        bounds.append((i, j - 1))
        j = i
    return ClusterPlan(tuple(reversed(bounds)))


def plan_for_shape(shape, C: int) -> ClusterPlan:
    """Cluster the layers of ``shape`` by their output widths."""
    shape = as_shape(shape)
    return cluster_layers(shape.widths[1:], C)


# --------------------------------------------------------------------- MetaKAN

class MetaKanNetwork:
    def __init__(self, shape, kind: ActivationKind, prompts: Sequence, plan: ClusterPlan,
                 learners: Sequence[MetaLearner]):
        self.shape = as_shape(shape)
        self.kind = kind
        self.plan = plan
        self.learners = list(learners)
        if plan.n_layers != self.shape.n_layers:
            raise ValueError("cluster plan does not cover the network's layers")
        if len(self.learners) != plan.C:
            raise ValueError(f"need {plan.C} meta-learners, got {len(self.learners)}")
        p = self.learners[0].prompt_dim
        for lrn in self.learners:
            if lrn.out_dim != kind.dim:
                raise ValueError(f"learner out_dim {lrn.out_dim} != dim(w) {kind.dim}")
            if (lrn.prompt_dim, lrn.d_hidden) != (p, self.learners[0].d_hidden):
                raise ValueError("all meta-learners must share one architecture")
        self.prompts = [
            z if isinstance(z, ag.Parameter) else ag.Parameter(z, "prompts", f"Z{l}")
            for l, z in enumerate(prompts)
        ]
        for l, z in enumerate(self.prompts):
            n_in, n_out = self.shape.layer_dims(l)
            if z.shape != (n_out, n_in, p):
                raise ValueError(f"layer {l} prompts have shape {z.shape}, expected {(n_out, n_in, p)}")

    @classmethod
    def init(cls, shape, kind: ActivationKind, d_hidden: int = 32, C: int = 1,
             prompt_dim: int = 1, seed: int = 0, plan: ClusterPlan | None = None) -> "MetaKanNetwork":
        shape = as_shape(shape)
        plan = plan or plan_for_shape(shape, C)
        rng = np.random.default_rng(seed)
        prompts = [
            rng.normal(0.0, 1.0, size=(shape.widths[l + 1], shape.widths[l], prompt_dim))
            for l in range(shape.n_layers)
        ]
        learners = [MetaLearner(prompt_dim, d_hidden, kind.dim, rng, tag=f"c{c}.") for c in range(plan.C)]
        return cls(shape, kind, prompts, plan, learners)

    @property
    def prompt_dim(self) -> int:
        return self.learners[0].prompt_dim

    @property
    def d_hidden(self) -> int:
        return self.learners[0].d_hidden

    def parameters(self) -> list[ag.Parameter]:
        params = list(self.prompts)
        for lrn in self.learners:
            params.extend(lrn.parameters())
        return params

    def layer_weights(self, l: int) -> ag.Tensor:
        n_in, n_out = self.shape.layer_dims(l)
        lrn = self.learners[self.plan.cluster_of(l)]
        Z = self.prompts[l].reshape(n_out * n_in, self.prompt_dim)
        return lrn.generate(Z).reshape(n_out, n_in, self.kind.dim)

    def forward(self, X) -> ag.Tensor:
        x = ag.as_tensor(X)
        for l in range(self.shape.n_layers):
            x = self.kind.layer(x, self.layer_weights(l))
        return x

    def __call__(self, X) -> np.ndarray:
        return metakan_forward(self, X)

    def __repr__(self):
        return (f"MetaKanNetwork(shape={self.shape}, kind={self.kind!r}, d_hidden={self.d_hidden}, "
                f"C={self.plan.C}, prompt_dim={self.prompt_dim})")


def metakan_forward(meta: MetaKanNetwork, x) -> np.ndarray:
    X, single = _as_batch(x, meta.shape.widths[0])
    y = meta.forward(ag.Tensor(X)).data
    return y[0] if single else y


def materialize(meta: MetaKanNetwork) -> KanNetwork:
    """Expand generated weights into a plain KAN with identical outputs."""
    weights = [meta.layer_weights(l).data.copy() for l in range(meta.shape.n_layers)]
    return KanNetwork(meta.shape, meta.kind, weights)


# ---------------------------------------------------------------- param count

MODEL_KINDS = ("MLP", "KAN", "FastKAN", "WavKAN", "MetaKAN", "MetaFastKAN", "MetaWavKAN")


class ParamCount(NamedTuple):
    formula: int
    exact: int


def _dim_for(model: str, G: int, k: int, c: int | None) -> int:
    base = model.removeprefix("Meta")
    if base == "KAN":
        return G + k + 1
    if base == "FastKAN":
        return G + k if c is None else c
    if base == "WavKAN":
        return 3
    raise ValueError(f"unknown model kind {model!r}")


def count_params(model: str, shape, G: int = 5, k: int = 3, c: int | None = None,
                 d_hidden: int = 32, C: int = 1, prompt_dim: int = 1) -> ParamCount:
    """Trainable parameter count as ``(formula, exact)``.

    ``formula`` follows the closed-form table; ``exact`` enumerates every stored
    scalar, which for meta variants adds the learner's input layer.
    """
    if model not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {model!r}; expected one of {MODEL_KINDS}")
    edges = as_shape(shape).total_edges
    if model == "MLP":
        return ParamCount(edges, edges)
    dim = _dim_for(model, G, k, c)
    if not model.startswith("Meta"):
        return ParamCount(edges * dim, edges * dim)
    formula = prompt_dim * edges + C * (d_hidden + 1) * dim
    return ParamCount(formula, formula + C * (prompt_dim + 1) * d_hidden)


def enumerate_params(net) -> int:
    """Count every scalar in a constructed network's trainable parameters."""
    return sum(p.data.size for p in net.parameters())


def model_name(net) -> str:
    prefix = "Meta" if isinstance(net, MetaKanNetwork) else ""
    base = {"bspline": "KAN", "rbf": "FastKAN", "wavelet": "WavKAN"}[net.kind.name]
    return prefix + base


def memory_efficient(shape, G: int = 5, k: int = 3, d_hidden: int = 32, C: int = 1,
                     prompt_dim: int = 1, model: str = "KAN", c: int | None = None) -> tuple[bool, int]:
    """Whether the meta variant of ``model`` has fewer formula parameters; returns ``(ok, margin)``."""
    base = model.removeprefix("Meta")
    kan = count_params(base, shape, G, k, c).formula
    meta = count_params("Meta" + base, shape, G, k, c, d_hidden, C, prompt_dim).formula
    return meta < kan, kan - meta


# ----------------------------------------------------------------- similarity

def prompt_distance_matrix(prompts) -> np.ndarray:
    """Pairwise Euclidean (absolute, for scalar prompts) distances between edge prompts."""
    z = np.asarray(prompts.data if isinstance(prompts, ag.Tensor) else prompts, dtype=np.float64)
    if z.size == 0:
        raise ValueError("empty prompt set")
    if z.ndim == 3:
        z = z.reshape(-1, z.shape[-1])
    elif z.ndim == 1:
        z = z[:, None]
    diff = z[:, None, :] - z[None, :, :]
    return np.sqrt((diff**2).sum(axis=-1))


def coeff_cosine_matrix(weights) -> np.ndarray:
    """Cosine similarity between edge weight vectors; zero vectors score 0 everywhere."""
    w = np.asarray(weights.data if isinstance(weights, ag.Tensor) else weights, dtype=np.float64)
    if w.ndim == 3:
        w = w.reshape(-1, w.shape[-1])
    norms = np.linalg.norm(w, axis=1)
    nonzero = norms > 0
    unit = np.zeros_like(w)
    unit[nonzero] = w[nonzero] / norms[nonzero, None]
    M = np.clip(unit @ unit.T, -1.0, 1.0)
    M = 0.5 * (M + M.T)
    idx = np.flatnonzero(nonzero)
    M[idx, idx] = 1.0
    return M
