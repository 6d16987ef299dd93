"""Univariate basis families for KAN activations.

Scalar helpers (``bspline_basis``, ``rbf_vector``, ...) evaluate a single
point and return plain numpy arrays. The ``*_tensor`` variants operate on
batched :class:`~metakan.autograd.Tensor` inputs and participate in
differentiation, including with respect to the input itself so that deep
networks can backpropagate through earlier layers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import autograd as ag


@dataclass(frozen=True)
class SplineSpec:
    """Uniform B-spline grid with ``G`` intervals of order ``k`` over ``domain``.

    The knot vector extends ``k`` knots past each end of the domain, giving
    ``G + 2k + 1`` knots and ``G + k`` basis functions.
    """

    G: int = 5
    k: int = 3
    domain: tuple[float, float] = (-1.0, 1.0)
    knots: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.G) != self.G or self.G < 1:
            raise ValueError(f"G must be a positive integer, got {self.G}")
        if int(self.k) != self.k or self.k < 0:
            raise ValueError(f"k must be a non-negative integer, got {self.k}")
        a, b = map(float, self.domain)
        if not a < b:
            raise ValueError(f"domain must satisfy a < b, got {self.domain}")
        object.__setattr__(self, "domain", (a, b))
        h = (b - a) / self.G
        knots = a + h * np.arange(-self.k, self.G + self.k + 1, dtype=np.float64)
        knots.setflags(write=False)
        object.__setattr__(self, "knots", knots)

    @property
    def n_basis(self) -> int:
        return self.G + self.k

    @property
    def dim(self) -> int:
        return self.G + self.k + 1

    @property
    def spacing(self) -> float:
        return (self.domain[1] - self.domain[0]) / self.G


@dataclass(frozen=True)
class RbfSpec:
    """Gaussian radial basis with ``c`` uniform centers across ``domain``.

    ``h`` defaults to the center spacing.
    """

    c: int = 8
    domain: tuple[float, float] = (-1.0, 1.0)
    h: float | None = None
    centers: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.c) != self.c or self.c < 2:
            raise ValueError(f"c must be an integer >= 2, got {self.c}")
        a, b = map(float, self.domain)
        if not a < b:
            raise ValueError(f"domain must satisfy a < b, got {self.domain}")
        object.__setattr__(self, "domain", (a, b))
        centers = np.linspace(a, b, self.c)
        centers.setflags(write=False)
        object.__setattr__(self, "centers", centers)
        h = (b - a) / (self.c - 1) if self.h is None else float(self.h)
        if h <= 0:
            raise ValueError(f"bandwidth h must be positive, got {h}")
        object.__setattr__(self, "h", h)

    @property
    def dim(self) -> int:
        return self.c


@dataclass(frozen=True)
class WaveletActivation:
    """Mexican-hat activation ``w * psi(t - mu; sigma)``.

    ``raw_sigma`` is the stored parameter; ``sigma = softplus(raw_sigma)``.
    """

    w: float
    mu: float
    raw_sigma: float

    dim = 3

    @property
    def sigma(self) -> float:
        return softplus(self.raw_sigma)

    @classmethod
    def from_sigma(cls, w: float, mu: float, sigma: float) -> "WaveletActivation":
        return cls(w, mu, inverse_softplus(sigma))


def softplus(x):
    return np.logaddexp(0.0, x)


def inverse_softplus(y: float) -> float:
    if y <= 0:
        raise ValueError(f"softplus output must be positive, got {y}")
    return float(y + np.log(-np.expm1(-y)))


def silu(t):
    t = ag.real_array(t)
    return t * expit(t)


# ------------------------------------------------------------------ B-spline

def _cox_de_boor(knots: np.ndarray, k: int, t: np.ndarray, order: int | None = None):
    """Basis values of every order up to ``order`` (default ``k``) at points ``t``.

    Returns a list whose entry ``p`` has shape ``t.shape + (len(knots) - 1 - p,)``.
    """
    order = k if order is None else order
    t = ag.real_array(t)[..., None]
    left, right = knots[:-1], knots[1:]
    levels = [((t >= left) & (t < right)).astype(np.float64)]
    for p in range(1, order + 1):
        prev = levels[-1]
        lo, hi = knots[: -p - 1], knots[p:-1]
        lo2, hi2 = knots[1:-p], knots[p + 1 :]
        levels.append(
            (t - lo) / (hi - lo) * prev[..., :-1] + (hi2 - t) / (hi2 - lo2) * prev[..., 1:]
        )
    return levels


def bspline_basis(spec: SplineSpec, t) -> np.ndarray:
    """The ``G + k`` B-spline values at ``t`` (scalar or array; basis on the last axis)."""
    return _cox_de_boor(spec.knots, spec.k, t)[-1]


def bspline_derivative(spec: SplineSpec, t) -> np.ndarray:
    """d/dt of every basis function at ``t``."""
    t = ag.real_array(t)
    if spec.k == 0:
        return np.zeros(t.shape + (spec.n_basis,))
    lower = _cox_de_boor(spec.knots, spec.k, t, order=spec.k - 1)[-1]
    # uniform knots: k / (t_{j+k} - t_j) == 1 / spacing
    return (lower[..., :-1] - lower[..., 1:]) / spec.spacing


def basis_vector(spec: SplineSpec, t) -> np.ndarray:
    """``[SiLU(t), B_1(t), ..., B_{G+k}(t)]``."""
    t = ag.real_array(t)
    return np.concatenate([silu(t)[..., None], bspline_basis(spec, t)], axis=-1)


def bspline_tensor(spec: SplineSpec, x: ag.Tensor) -> ag.Tensor:
    x = ag.as_tensor(x)
    value = bspline_basis(spec, x.data)
    deriv = bspline_derivative(spec, x.data)
    return ag.custom(value, (x,), lambda g: ((g * deriv).sum(axis=-1),), "bspline")


def basis_vector_tensor(spec: SplineSpec, x: ag.Tensor) -> ag.Tensor:
    x = ag.as_tensor(x)
    return ag.concat([ag.silu(x).reshape(x.shape + (1,)), bspline_tensor(spec, x)], axis=-1)


# ----------------------------------------------------------------------- RBF

def rbf_vector(spec: RbfSpec, t) -> np.ndarray:
    t = ag.real_array(t)[..., None]
    return np.exp(-((t - spec.centers) ** 2) / (2.0 * spec.h**2))


def rbf_tensor(spec: RbfSpec, x: ag.Tensor) -> ag.Tensor:
    x = ag.as_tensor(x)
    value = rbf_vector(spec, x.data)
    deriv = -(x.data[..., None] - spec.centers) / spec.h**2 * value
    return ag.custom(value, (x,), lambda g: ((g * deriv).sum(axis=-1),), "rbf")


# ------------------------------------------------------------------- wavelet

_HAT_NORM = 2.0 / (math.pi**0.25 * math.sqrt(3.0))


def mexican_hat(t, sigma):
    """``2 / (pi^(1/4) sqrt(3 sigma)) * (t^2/sigma^2 - 1) * exp(-t^2 / (2 sigma^2))``.

    The sign of the polynomial factor is kept as ``t^2/sigma^2 - 1``; a learned
    amplitude absorbs it.
    """
    sigma = ag.real_array(sigma)
    if np.any(sigma <= 0):
        raise ValueError("sigma must be positive")
    t = ag.real_array(t)
    u = (t / sigma) ** 2
    return _HAT_NORM / np.sqrt(sigma) * (u - 1.0) * np.exp(-0.5 * u)


def wavelet_activation(act: WaveletActivation, t):
    return act.w * mexican_hat(ag.real_array(t) - act.mu, act.sigma)


def mexican_hat_tensor(t: ag.Tensor, sigma: ag.Tensor) -> ag.Tensor:
    """Differentiable in both ``t`` and ``sigma``; built from primitive ops."""
    u = ag.square(ag.div(t, sigma))
    norm = ag.scale(ag.div(1.0, ag.sqrt(sigma)), _HAT_NORM)
    return norm * (u - 1.0) * ag.exp(ag.scale(u, -0.5))
