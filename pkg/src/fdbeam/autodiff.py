"""Reverse-mode differentiation over float64 numpy arrays, plus Adam.

Complex quantities travel as real tensors whose last axis has length 2
holding (re, im). Only real leaves are differentiated, which is all the
training problem needs: every trainable weight is real.

Typical use::

    x = Tensor(np.ones(3), requires_grad=True)
    loss = sum_(mul(x, x))
    backward(loss)
    x.grad  # -> array([2., 2., 2.])
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

_LN2 = math.log(2.0)


class Tensor:
    """A node in the compute graph.

    Args:
        data: Array-like value, stored as float64.
        requires_grad: Whether gradients should flow to this tensor.
        name: Optional label used in error messages and checkpoints.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _node(a.data - b.data, (a, b), backward)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _node(-a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _node(a.data * b.data, (a, b), backward)


def div(a, b) -> Tensor:
    """Elementwise a / b. A zero anywhere in ``b`` raises FloatingPointError."""
    a, b = as_tensor(a), as_tensor(b)
    if np.any(b.data == 0):
        raise FloatingPointError("division by zero in div()")
    out = a.data / b.data

    def backward(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _node(out, (a, b), backward)


def relu(a) -> Tensor:
    """max(a, 0); the subgradient at 0 is taken as 0."""
    a = as_tensor(a)
    mask = a.data > 0
    return _node(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def log2_1p(a) -> Tensor:
    """log2(1 + a), defined for a > -1."""
    a = as_tensor(a)
    if np.any(a.data <= -1):
        raise FloatingPointError("log2_1p() argument must exceed -1")
    return _node(np.log1p(a.data) / _LN2, (a,), lambda g: (g / ((1 + a.data) * _LN2),))


# ---------------------------------------------------------------------------
# shape manipulation and reductions


def matmul(a, b) -> Tensor:
    """Matrix product with numpy's batching rules (both operands >= 2-D)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul() operands must be at least 2-D")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul() shape mismatch: {a.shape} @ {b.shape}")

    def backward(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape) if a.requires_grad else None
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape) if b.requires_grad else None
        return ga, gb

    return _node(a.data @ b.data, (a, b), backward)


def transpose(a, axes: Sequence[int] | None = None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inverse = np.argsort(axes)
    return _node(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inverse),))


def reshape(a, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ValueError("concat() needs at least one tensor")
    data = np.concatenate([t.data for t in ts], axis=axis)
    ax = axis % data.ndim
    bounds = np.cumsum([t.shape[ax] for t in ts])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _node(data, ts, backward)


def take(a, idx) -> Tensor:
    """Basic (slice/integer) indexing."""
    a = as_tensor(a)

    def backward(g):
        out = np.zeros_like(a.data)
        out[idx] += g
        return (out,)

    return _node(a.data[idx], (a,), backward)


def sum_(a, axis=None) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _node(np.sum(a.data, axis=axis), (a,), backward)


def mean(a, axis=None) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum_(a, axis), 1.0 / n)


# ---------------------------------------------------------------------------
# complex-pair operations (trailing axis of length 2)


def _c(x: np.ndarray) -> np.ndarray:
    return x[..., 0] + 1j * x[..., 1]


def _pair(z: np.ndarray) -> np.ndarray:
    return np.stack([z.real, z.imag], axis=-1)


def _check_pair(*ts: Tensor):
    for t in ts:
        if t.ndim < 1 or t.shape[-1] != 2:
            raise ValueError(f"expected a complex pair with trailing axis 2, got shape {t.shape}")


def cabs2(a) -> Tensor:
    """|a|^2 of a complex pair, dropping the trailing axis."""
    a = as_tensor(a)
    _check_pair(a)
    return _node(np.sum(a.data**2, axis=-1), (a,), lambda g: (2 * a.data * g[..., None],))


def cinner(a, b) -> Tensor:
    """a^* b over the vector axis (-2) of two complex pairs."""
    a, b = as_tensor(a), as_tensor(b)
    _check_pair(a, b)
    if a.shape[-2] != b.shape[-2]:
        raise ValueError(f"cinner() length mismatch: {a.shape} vs {b.shape}")
    ca, cb = _c(a.data), _c(b.data)
    s = np.sum(np.conj(ca) * cb, axis=-1)

    def backward(g):
        G = _c(g)[..., None]
        # for a real loss L, dL/d(re) + j dL/d(im) of each input
        ga = _unbroadcast(_pair(np.conj(G) * cb), a.shape) if a.requires_grad else None
        gb = _unbroadcast(_pair(G * ca), b.shape) if b.requires_grad else None
        return ga, gb

    return _node(_pair(s), (a, b), backward)


def cbilinear(w, H, f) -> Tensor:
    """w^* H f for complex pairs w (..., Nr, 2), H (..., Nr, Nt, 2), f (..., Nt, 2).

    Leading dimensions broadcast, so one call covers both a per-sample
    serving-beam product and every (sample, probe) combination.
    """
    w, H, f = as_tensor(w), as_tensor(H), as_tensor(f)
    _check_pair(w, H, f)
    if H.ndim < 3 or H.shape[-3] != w.shape[-2] or H.shape[-2] != f.shape[-2]:
        raise ValueError(f"cbilinear() shape mismatch: w {w.shape}, H {H.shape}, f {f.shape}")
    cw, cH, cf = _c(w.data), _c(H.data), _c(f.data)
    Hf = np.einsum("...ij,...j->...i", cH, cf)
    s = np.sum(np.conj(cw) * Hf, axis=-1)

    def backward(g):
        G = _c(g)
        gw = gH = gf = None
        if w.requires_grad:
            gw = _unbroadcast(_pair(np.conj(G)[..., None] * Hf), w.shape)
        if f.requires_grad:
            HHw = np.einsum("...ij,...i->...j", np.conj(cH), cw)
            gf = _unbroadcast(_pair(G[..., None] * HHw), f.shape)
        if H.requires_grad:
            outer = cw[..., :, None] * np.conj(cf)[..., None, :]
            gH = _unbroadcast(_pair(G[..., None, None] * outer), H.shape)
        return gw, gH, gf

    return _node(_pair(s), (w, H, f), backward)


def project_disk(a) -> Tensor:
    """Project each complex pair onto the closed unit disk: z / max(1, |z|)."""
    a = as_tensor(a)
    _check_pair(a)
    r = np.sqrt(np.sum(a.data**2, axis=-1, keepdims=True))
    outside = r > 1
    scale = np.where(outside, r, 1.0)
    out = a.data / scale

    def backward(g):
        # outside the disk: Jacobian (I - u u^T) / r with u the unit direction
        radial = np.sum(out * g, axis=-1, keepdims=True)
        return (np.where(outside, (g - radial * out) / scale, g),)

    return _node(out, (a,), backward)


# ---------------------------------------------------------------------------
# backward pass


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
        for p in reversed(node._parents):
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> list[Tensor]:
    """Fill ``.grad`` on every differentiable leaf reachable from ``loss``.

    Leaf gradients are overwritten, not accumulated across calls. Returns
    the leaves in a deterministic order.

    Raises:
        ValueError: if ``loss`` is not a scalar.
    """
    if loss.data.size != 1 or loss.ndim > 1:
        raise ValueError(f"backward() needs a scalar loss, got shape {loss.shape}")
    order = _topo_order(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves = []
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if node._backward is None:
            if node.requires_grad:
                node.grad = np.zeros_like(node.data) if g is None else g
                leaves.append(node)
            continue
        if g is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg
    return leaves


# ---------------------------------------------------------------------------
# optimization


@dataclass
class LrSchedule:
    """Constant or cosine-annealed learning rate, restarting every ``period`` batches."""

    base: float
    min: float | None = None
    period: int = 1
    kind: str = "constant"

    def __post_init__(self):
        if self.kind not in ("constant", "cosine"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.min is None:
            self.min = self.base
        if self.base < 0:
            raise ValueError("learning rate must be >= 0")
        if self.kind == "cosine" and not 0 < self.min <= self.base:
            raise ValueError("cosine schedule needs 0 < min <= base")
        if self.period <= 0:
            raise ValueError("period must be positive")


def lr_at(schedule: LrSchedule, t: int) -> float:
    """Learning rate for batch index ``t`` (0-based).

    The cosine kind decays from ``base`` to ``min`` over one period. At
    t = period the decay is complete; the next batch starts a fresh cycle.
    """
    if t < 0:
        raise ValueError("batch index must be >= 0")
    if schedule.kind == "constant":
        return schedule.base
    phase = t % schedule.period
    if phase == 0 and t > 0:
        phase = schedule.period
    return schedule.min + (schedule.base - schedule.min) * (1 + math.cos(math.pi * phase / schedule.period)) / 2


@dataclass
class OptimizerState:
    """Adam moment accumulators for one parameter group."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], **kwargs) -> "OptimizerState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **kwargs)


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: OptimizerState, lr: float) -> None:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state differ in length")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1 - b1**state.step
    c2 = 1 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch in adam_step: {p.shape} vs {g.shape}")
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


@dataclass
class Adam:
    """Adam over a list of leaf tensors, with a learning-rate schedule."""

    params: list[Tensor]
    schedule: LrSchedule
    state: OptimizerState = field(init=False)

    def __post_init__(self):
        self.state = OptimizerState.for_params([p.data for p in self.params])

    def step(self) -> float:
        """Apply one update from the params' current ``.grad``; returns the lr used."""
        lr = lr_at(self.schedule, self.state.step)
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        adam_step([p.data for p in self.params], grads, self.state, lr)
        return lr
