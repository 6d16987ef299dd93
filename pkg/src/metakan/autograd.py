"""Dense real tensors with a recorded-operation tape for reverse-mode gradients.

Every operation returns a new :class:`Tensor` holding the parents it was built
from and a closure that maps the output adjoint onto parent adjoints.
:func:`backward` walks that graph in reverse topological order.

Broadcasting follows numpy rules; adjoints of broadcast operands are summed
back down to the operand's shape.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import expit

GROUPS = ("prompts", "meta-learner", "kan-weights")


def real_array(x) -> np.ndarray:
    """``x`` as a float64 array, or as a wider float if it already is one."""
    a = np.asarray(x)
    return a.astype(np.result_type(a.dtype, np.float64), copy=False)


class NonFiniteError(FloatingPointError):
    """Raised when an operation produces NaN or Inf."""


class Tensor:
    __slots__ = ("data", "_parents", "_adjoint", "op")
    # make ndarray defer to our reflected operators
    __array_ufunc__ = None

    def __init__(self, data, _parents=(), _adjoint=None, op=""):
        self.data = real_array(data)
        self._parents = _parents
        self._adjoint = _adjoint
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def requires_grad(self) -> bool:
        return bool(self._parents)

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op!r})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self):
        return mean(self)


class Parameter(Tensor):
    """A trainable leaf. Its ``data`` is updated in place by optimizers."""

    __slots__ = ("group", "name")

    def __init__(self, data, group: str = "kan-weights", name: str = ""):
        if group not in GROUPS:
            raise ValueError(f"unknown parameter group {group!r}; expected one of {GROUPS}")
        super().__init__(np.array(data, dtype=np.float64, copy=True))
        self.group = group
        self.name = name

    @property
    def requires_grad(self) -> bool:
        return True

    def __repr__(self):
        return f"Parameter({self.name or '?'}, group={self.group!r}, shape={self.shape})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _make(value: np.ndarray, parents: tuple, adjoint: Callable, op: str) -> Tensor:
    value = real_array(value)
    if not np.all(np.isfinite(value)):
        raise NonFiniteError(f"non-finite result from {op!r}")
    if not any(isinstance(p, Parameter) or p._parents for p in parents):
        return Tensor(value, op=op)
    return Tensor(value, parents, adjoint, op)


# Test-only hook: names of ops whose adjoint is deliberately scaled wrong.
_FAULTY: set[str] = set()


@contextlib.contextmanager
def faulty_adjoint(*ops: str):
    """Corrupt the adjoint of the named ops (negative controls for gradcheck)."""
    _FAULTY.update(ops)
    try:
        yield
    finally:
        _FAULTY.difference_update(ops)


def _fault(op: str) -> float:
    return 1.5 if op in _FAULTY else 1.0


# ---------------------------------------------------------------- binary ops

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        "add",
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        "sub",
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        "mul",
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def adjoint(g):
        return (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * out / b.data, b.shape),
        )

    return _make(out, (a, b), adjoint, "div")


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return _make(
        a.data @ b.data,
        (a, b),
        lambda g: (g @ b.data.T, a.data.T @ g),
        "matmul",
    )


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)
    return _make(a.data * c, (a,), lambda g: (g * c,), "scale")


# ----------------------------------------------------------- elementwise ops

def _unary(a, value, deriv, op) -> Tensor:
    a = as_tensor(a)
    k = _fault(op)
    return _make(value, (a,), lambda g: (k * g * deriv,), op)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    s = expit(a.data)
    return _unary(a, s, s * (1.0 - s), "sigmoid")


def silu(a) -> Tensor:
    a = as_tensor(a)
    s = expit(a.data)
    return _unary(a, a.data * s, s * (1.0 + a.data * (1.0 - s)), "silu")


def softplus(a) -> Tensor:
    a = as_tensor(a)
    return _unary(a, np.logaddexp(0.0, a.data), expit(a.data), "softplus")


def exp(a) -> Tensor:
    a = as_tensor(a)
    e = np.exp(a.data)
    return _unary(a, e, e, "exp")


def sin(a) -> Tensor:
    a = as_tensor(a)
    return _unary(a, np.sin(a.data), np.cos(a.data), "sin")


def square(a) -> Tensor:
    a = as_tensor(a)
    return _unary(a, a.data**2, 2.0 * a.data, "square")


def cube(a) -> Tensor:
    a = as_tensor(a)
    return _unary(a, a.data**3, 3.0 * a.data**2, "cube")


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    r = np.sqrt(a.data)
    return _unary(a, r, 0.5 / r, "sqrt")


def log(a) -> Tensor:
    a = as_tensor(a)
    return _unary(a, np.log(a.data), 1.0 / a.data, "log")


# ---------------------------------------------------------------- reductions

def tsum(a, axis=None) -> Tensor:
    a = as_tensor(a)

    def adjoint(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(a.data.sum(axis=axis), (a,), adjoint, "sum")


def mean(a) -> Tensor:
    a = as_tensor(a)
    n = a.data.size
    return _make(a.data.mean(), (a,), lambda g: (np.full(a.shape, g / n),), "mean")


def logsumexp(a, axis: int = -1) -> Tensor:
    """Row-wise log-sum-exp with max-shift stabilisation."""
    a = as_tensor(a)
    m = a.data.max(axis=axis, keepdims=True)
    e = np.exp(a.data - m)
    s = e.sum(axis=axis, keepdims=True)
    out = (np.log(s) + m).squeeze(axis)
    soft = e / s
    return _make(out, (a,), lambda g: (np.expand_dims(g, axis) * soft,), "logsumexp")


# ------------------------------------------------------------ shape handling

def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    inv = None if axes is None else np.argsort(axes)
    return _make(
        np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),), "transpose"
    )


def getitem(a, index) -> Tensor:
    a = as_tensor(a)

    def adjoint(g):
        out = np.zeros(a.shape)
        np.add.at(out, index, g)
        return (out,)

    return _make(a.data[index], (a,), adjoint, "getitem")


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def adjoint(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(
        np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), adjoint, "concat"
    )


def custom(value: np.ndarray, parents: Sequence[Tensor], adjoint: Callable, op: str) -> Tensor:
    """Build a node with a hand-written adjoint (used by composite basis ops)."""
    k = _fault(op)
    if k != 1.0:
        inner = adjoint
        adjoint = lambda g: tuple(k * x for x in inner(g))  # noqa: E731
    return _make(value, tuple(parents), adjoint, op)


# ---------------------------------------------------------------- gradients

def _topo_order(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> dict[Parameter, np.ndarray]:
    """Gradients of a scalar ``loss`` with respect to every Parameter it depends on.

    Parameters not reachable from ``loss`` are absent from the result; consumers
    treat absence as a zero gradient.
    """
    if not isinstance(loss, Tensor) or loss.data.size != 1 or loss.ndim > 1:
        raise ValueError("backward() needs a scalar loss tensor")
    if isinstance(loss, Parameter):
        return {loss: np.ones(loss.shape)}
    if not loss._parents:
        raise ValueError("loss is not connected to any Parameter")

    grads: dict[int, np.ndarray] = {id(loss): np.ones(loss.shape)}
    record: dict[Parameter, np.ndarray] = {}
    for node in reversed(_topo_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if isinstance(node, Parameter):
            record[node] = record.get(node, 0.0) + g
            continue
        if node._adjoint is None:
            continue
        for parent, pg in zip(node._parents, node._adjoint(g)):
            if not (isinstance(parent, Parameter) or parent._parents):
                continue
            pid = id(parent)
            grads[pid] = grads[pid] + pg if pid in grads else np.asarray(pg, dtype=np.float64)
    return record


def gradcheck(
    build: Callable[[], Tensor],
    params: Iterable[Parameter],
    fd_step: float = 1e-5,
    rel_tol: float = 1e-4,
) -> "GradcheckReport":
    """Compare :func:`backward` against central finite differences.

    ``build`` must rebuild the loss from the current parameter values each
    time it is called. The per-coordinate error is
    ``|analytic - fd| / max(|analytic|, |fd|, 1e-8)``.

    The finite-difference evaluations run with the parameters widened to
    ``np.longdouble``. In plain float64 one ulp of an O(1) loss already moves
    the central difference by ~1e-11, which exceeds the tolerance on any
    coordinate whose true gradient sits near the 1e-8 floor. Where
    ``longdouble`` is just float64 this degrades gracefully to float64.
    """
    if fd_step <= 0 or rel_tol <= 0:
        raise ValueError("fd_step and rel_tol must be positive")
    params = list(params)
    analytic = backward(build())
    errors = {}
    for p in params:
        a = analytic.get(p, np.zeros(p.shape))
        fd = np.zeros(p.shape)
        saved = p.data
        p.data = saved.astype(np.longdouble)
        flat = p.data.reshape(-1)
        try:
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + fd_step
                up = build().data
                flat[i] = orig - fd_step
                down = build().data
                flat[i] = orig
                fd.reshape(-1)[i] = (up - down) / (2 * np.longdouble(fd_step))
        finally:
            p.data = saved
        denom = np.maximum(np.maximum(np.abs(a), np.abs(fd)), 1e-8)
        errors[p] = float(np.max(np.abs(a - fd) / denom)) if p.data.size else 0.0
    return GradcheckReport(errors, rel_tol)


class GradcheckReport:
    def __init__(self, errors: dict[Parameter, float], rel_tol: float):
        self.errors = errors
        self.rel_tol = rel_tol

    @property
    def passed(self) -> bool:
        return all(e <= self.rel_tol for e in self.errors.values())

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    def by_group(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for p, e in self.errors.items():
            out[p.group] = max(out.get(p.group, 0.0), e)
        return out

    def __repr__(self):
        status = "pass" if self.passed else "FAIL"
        return f"GradcheckReport({status}, max_rel_err={self.max_error:.3e})"
