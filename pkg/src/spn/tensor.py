"""Minimal dense-tensor compute core with reverse-mode autodiff and Adam.

Values are float64 numpy arrays. The tape is define-by-run: every op returns
a fresh Tensor holding references to its inputs and a closure implementing
the local backward rule, so each forward pass builds its own DAG and
`backward` releases it. Leaf tensors created with requires_grad=True are the
trainable parameters; everything else is treated as a constant.
"""

from __future__ import annotations

from typing import Callable, Iterable, Mapping, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when an op receives incompatible operand shapes."""


def _shape_error(op: str, *shapes) -> ShapeError:
    return ShapeError(f"{op}: incompatible shapes {' and '.join(str(tuple(s)) for s in shapes)}")


class Tensor:
    """A float64 array plus the tape bookkeeping needed for backward."""

    __slots__ = ("values", "requires_grad", "name", "_parents", "_backward_rule", "_op")

    def __init__(self, values, requires_grad: bool = False, name: str | None = None):
        self.values = np.asarray(values, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward_rule: Callable[[np.ndarray], tuple] | None = None
        self._op: str | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def is_leaf(self) -> bool:
        return self._backward_rule is None

    def __repr__(self) -> str:
        tag = self.name or self._op or "const"
        return f"Tensor({tag}, shape={self.values.shape})"

    # Operator sugar; keeps loss expressions readable.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, scalar_scale(_as_tensor(other), -1.0))

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scalar_scale(self, -1.0)


def parameter(values, name: str | None = None) -> Tensor:
    return Tensor(values, requires_grad=True, name=name)


def constant(values, name: str | None = None) -> Tensor:
    return Tensor(values, requires_grad=False, name=name)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(values: np.ndarray, op: str, parents: tuple[Tensor, ...], rule) -> Tensor:
    assert np.all(np.isfinite(values)), f"{op}: non-finite values in forward result"
    out = Tensor(values)
    out._parents = parents
    out._backward_rule = rule
    out._op = op
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient down to `shape` after numpy broadcasting in the forward op."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# core ops
# ---------------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.values.ndim != 2 or b.values.ndim != 2 or a.values.shape[1] != b.values.shape[0]:
        raise _shape_error("matmul", a.values.shape, b.values.shape)
    av, bv = a.values, b.values

    def rule(g):
        return g @ bv.T, av.T @ g

    return _make(av @ bv, "matmul", (a, b), rule)


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        values = a.values + b.values
    except ValueError:
        raise _shape_error("add", a.values.shape, b.values.shape) from None
    ash, bsh = a.values.shape, b.values.shape

    def rule(g):
        return _unbroadcast(g, ash), _unbroadcast(g, bsh)

    return _make(values, "add", (a, b), rule)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        values = a.values * b.values
    except ValueError:
        raise _shape_error("mul", a.values.shape, b.values.shape) from None
    av, bv = a.values, b.values

    def rule(g):
        return _unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)

    return _make(values, "mul", (a, b), rule)


def relu(a) -> Tensor:
    a = _as_tensor(a)
    mask = a.values > 0.0

    def rule(g):
        return (g * mask,)

    return _make(np.where(mask, a.values, 0.0), "relu", (a,), rule)


def concat(a, b, axis: int = 1) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.values.ndim != b.values.ndim:
        raise _shape_error("concat", a.values.shape, b.values.shape)
    split = a.values.shape[axis]

    def rule(g):
        ga, gb = np.split(g, [split], axis=axis)
        return ga, gb

    try:
        values = np.concatenate([a.values, b.values], axis=axis)
    except ValueError:
        raise _shape_error("concat", a.values.shape, b.values.shape) from None
    return _make(values, "concat", (a, b), rule)


def row_gather(a, indices) -> Tensor:
    """Select rows of a 2-D tensor; duplicate indices accumulate in backward."""
    a = _as_tensor(a)
    if a.values.ndim != 2:
        raise _shape_error("row_gather", a.values.shape)
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1:
        raise ShapeError(f"row_gather: index array must be 1-D, got shape {idx.shape}")
    av = a.values

    def rule(g):
        out = np.zeros_like(av)
        np.add.at(out, idx, g)
        return (out,)

    return _make(av[idx], "row_gather", (a,), rule)


def reduce_sum(a, axis: int | None = None) -> Tensor:
    a = _as_tensor(a)
    ash = a.values.shape

    if axis is None:
        def rule(g):
            return (np.broadcast_to(g, ash).copy(),)

        return _make(np.asarray(a.values.sum()), "reduce_sum", (a,), rule)

    def rule(g):
        return (np.broadcast_to(np.expand_dims(g, axis), ash).copy(),)

    return _make(a.values.sum(axis=axis), "reduce_sum", (a,), rule)


def log(a) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.values <= 0.0):
        raise ValueError("log: requires strictly positive input")
    av = a.values

    def rule(g):
        return (g / av,)

    return _make(np.log(av), "log", (a,), rule)


def exp(a) -> Tensor:
    a = _as_tensor(a)
    values = np.exp(a.values)

    def rule(g):
        return (g * values,)

    return _make(values, "exp", (a,), rule)


def _softmax(values: np.ndarray) -> np.ndarray:
    # max-subtraction keeps exp() in range for the near-indicator logits
    # produced by converged training
    shifted = values - values.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows(a) -> Tensor:
    a = _as_tensor(a)
    if a.values.ndim != 2:
        raise _shape_error("softmax_rows", a.values.shape)
    y = _softmax(a.values)

    def rule(g):
        dot = (g * y).sum(axis=1, keepdims=True)
        return (y * (g - dot),)

    return _make(y, "softmax_rows", (a,), rule)


def log_softmax_rows(a) -> Tensor:
    a = _as_tensor(a)
    if a.values.ndim != 2:
        raise _shape_error("log_softmax_rows", a.values.shape)
    shifted = a.values - a.values.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    y = np.exp(shifted - log_z)

    def rule(g):
        return (g - y * g.sum(axis=1, keepdims=True),)

    return _make(shifted - log_z, "log_softmax_rows", (a,), rule)


def scalar_scale(a, c: float) -> Tensor:
    a = _as_tensor(a)
    c = float(c)

    def rule(g):
        return (g * c,)

    return _make(a.values * c, "scalar_scale", (a,), rule)


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    ash = a.values.shape

    def rule(g):
        return (g.reshape(ash),)

    try:
        values = a.values.reshape(shape)
    except ValueError:
        raise _shape_error("reshape", ash, shape) from None
    return _make(values, "reshape", (a,), rule)


# ---------------------------------------------------------------------------
# backward
# ---------------------------------------------------------------------------

def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
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


def backward(loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Reverse-mode sweep from a scalar loss.

    Returns a map from every requires_grad leaf reachable on the tape to its
    gradient array (same shape as the leaf).
    """
    if loss.values.size != 1:
        raise ValueError(f"backward: loss must be a scalar, got shape {loss.values.shape}")
    if loss.is_leaf() and not loss.requires_grad:
        raise ValueError("backward: loss is detached from the tape (constant leaf)")

    order = _topo_order(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.values)}
    result: dict[Tensor, np.ndarray] = {}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf():
            if node.requires_grad:
                prev = result.get(node)
                result[node] = g if prev is None else prev + g
            continue
        for p, pg in zip(node._parents, node._backward_rule(g)):
            if pg is None:
                continue
            acc = grads.get(id(p))
            grads[id(p)] = pg if acc is None else acc + pg
    return result


# ---------------------------------------------------------------------------
# initialization and optimizer
# ---------------------------------------------------------------------------

def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int,
                   shape: Sequence[int] | None = None) -> np.ndarray:
    """Uniform init in [-a, a], a = sqrt(6 / (fan_in + fan_out))."""
    a = np.sqrt(6.0 / (fan_in + fan_out))
    if shape is None:
        shape = (fan_in, fan_out)
    return rng.uniform(-a, a, size=tuple(shape))


class Adam:
    """Bias-corrected Adam over a fixed set of parameters.

    Holds the step count and first/second-moment accumulators; `step` expects
    a gradient for every registered parameter.
    """

    def __init__(self, params: Iterable[Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = [np.zeros_like(p.values) for p in self.params]
        self.v = [np.zeros_like(p.values) for p in self.params]

    def step(self, grads: Mapping[Tensor, np.ndarray]) -> None:
        for p in self.params:
            if p not in grads:
                raise ValueError(f"Adam.step: missing gradient for parameter {p.name or p}")
            if np.shape(grads[p]) != p.values.shape:
                raise _shape_error("Adam.step", np.shape(grads[p]), p.values.shape)
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for i, p in enumerate(self.params):
            g = np.asarray(grads[p], dtype=np.float64)
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / b1t
            v_hat = self.v[i] / b2t
            # new array on purpose: forward closures may still reference the
            # old values until their tape is released
            p.values = p.values - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
