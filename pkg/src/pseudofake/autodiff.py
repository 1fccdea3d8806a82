"""Tape-based reverse-mode automatic differentiation over float64 numpy arrays.

Operations are recorded on the innermost active :class:`Tape` whenever at
least one input requires a gradient.  Outside a tape every op is a plain
numpy computation, which is what the evaluation path uses.

>>> x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
>>> with Tape() as tape:
...     loss = sum_all(x)
>>> tape.backward(loss)
>>> x.grad
array([1., 1., 1.])
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

PROB_FLOOR = 1e-12
SIMPLEX_TOL = 1e-9


class ShapeError(ValueError):
    """Operand shapes are incompatible with an operation."""


class TapeStateError(RuntimeError):
    """A tape was used after it had already been replayed."""


class Tensor:
    """Dense float64 array with an optional gradient buffer."""

    __slots__ = ("values", "requires_grad", "grad")

    def __init__(self, values, requires_grad: bool = False):
        arr = np.array(values, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        self.values = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size

    def item(self) -> float:
        if self.values.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.values.reshape(-1)[0])

    def detach(self) -> "Tensor":
        """Share values, drop gradient tracking."""
        t = Tensor.__new__(Tensor)
        t.values = self.values
        t.requires_grad = False
        t.grad = None
        return t

    def zero_grad(self) -> None:
        self.grad = None

    def numpy(self) -> np.ndarray:
        return self.values.copy()

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


@dataclass
class _Node:
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass
class Tape:
    """Ordered record of executed primitives.

    Use as a context manager; ops executed inside are appended in execution
    order and :meth:`backward` replays them once in reverse.
    """

    nodes: list[_Node] = field(default_factory=list)
    consumed: bool = False
    _owned: set = field(default_factory=set)

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPES.remove(self)

    def record(self, inputs, output, backward) -> None:
        if self.consumed:
            raise TapeStateError("cannot record on a tape that has been replayed")
        self.nodes.append(_Node(tuple(inputs), output, backward))
        self._owned.add(id(output))

    def backward(self, loss: Tensor) -> None:
        """Populate ``grad`` on every requires_grad tensor reachable from ``loss``.

        Gradients accumulate into existing ``grad`` buffers, so several losses
        may be backpropagated into the same parameters from separate tapes.
        """
        if loss.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        if self.consumed:
            raise TapeStateError("tape already replayed; record a new tape")
        if id(loss) not in self._owned:
            raise TapeStateError("loss was not produced on this tape")
        self.consumed = True

        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.values)}
        leaves: dict[int, Tensor] = {}
        for node in reversed(self.nodes):
            g_out = grads.get(id(node.output))
            if g_out is None:
                continue
            for inp, g in zip(node.inputs, node.backward(g_out)):
                if g is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + g
                else:
                    grads[key] = g
                if key not in self._owned:
                    leaves[key] = inp
        for key, leaf in leaves.items():
            g = grads.get(key)
            if g is None:
                continue
            leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g
        for node in self.nodes:
            if id(node.output) in grads:
                node.output.grad = grads[id(node.output)]
            # leaves recorded on the tape but unreachable from the loss get zeros
            for inp in node.inputs:
                if inp.requires_grad and id(inp) not in self._owned and inp.grad is None:
                    inp.grad = np.zeros_like(inp.values)


_TAPES: list[Tape] = []


def backward(loss: Tensor, tape: Tape) -> None:
    tape.backward(loss)


def _emit(values: np.ndarray, inputs: Sequence[Tensor], backward_fn) -> Tensor:
    needs = any(t.requires_grad for t in inputs)
    out = Tensor.__new__(Tensor)
    out.values = values
    out.grad = None
    out.requires_grad = needs and bool(_TAPES)
    if out.requires_grad:
        _TAPES[-1].record(inputs, out, backward_fn)
    return out


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _require_nonempty(t: Tensor, op: str) -> None:
    if t.size == 0:
        raise ShapeError(f"{op}: empty tensor of shape {t.shape}")


# ---------------------------------------------------------------- primitives


def conv1d(x: Tensor, kernels: Tensor, stride: int = 1) -> Tensor:
    """Multi-channel 1-D cross-correlation (no kernel flip, no padding).

    ``x`` is (channels_in, length), ``kernels`` is (channels_out, channels_in, k).
    """
    x, kernels = _as_tensor(x), _as_tensor(kernels)
    if stride < 1 or int(stride) != stride:
        raise ShapeError(f"conv1d: stride must be a positive integer, got {stride}")
    stride = int(stride)
    if x.values.ndim != 2 or kernels.values.ndim != 3 or kernels.shape[1] != x.shape[0]:
        raise ShapeError(f"conv1d: input shape {x.shape} incompatible with kernel shape {kernels.shape}")
    c_in, length = x.shape
    c_out, _, k = kernels.shape
    if length < k:
        raise ShapeError(f"conv1d: input shape {x.shape} shorter than kernel shape {kernels.shape}")
    n_out = (length - k) // stride + 1

    windows = sliding_window_view(x.values, k, axis=1)[:, ::stride, :]  # c_in, n_out, k
    cols = np.ascontiguousarray(windows.transpose(1, 0, 2)).reshape(n_out, c_in * k)
    w2 = kernels.values.reshape(c_out, c_in * k)
    out = w2 @ cols.T

    def back(g):
        gw = (g @ cols).reshape(kernels.shape) if kernels.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = (g.T @ w2).reshape(n_out, c_in, k)
            gx = np.zeros_like(x.values)
            span = stride * (n_out - 1) + 1
            for j in range(k):
                gx[:, j:j + span:stride] += gcols[:, :, j].T
        return gx, gw

    return _emit(out, (x, kernels), back)


def dense(x: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    x, weights, bias = _as_tensor(x), _as_tensor(weights), _as_tensor(bias)
    if (x.values.ndim != 1 or weights.values.ndim != 2 or bias.values.ndim != 1
            or weights.shape[1] != x.shape[0] or weights.shape[0] != bias.shape[0]):
        raise ShapeError(
            f"dense: input {x.shape}, weights {weights.shape}, bias {bias.shape} do not agree")
    out = weights.values @ x.values + bias.values

    def back(g):
        gx = weights.values.T @ g if x.requires_grad else None
        gw = np.outer(g, x.values) if weights.requires_grad else None
        return gx, gw, g.copy()

    return _emit(out, (x, weights, bias), back)


def relu(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    _require_nonempty(x, "relu")
    mask = x.values > 0  # relu'(0) = 0
    return _emit(np.where(mask, x.values, 0.0), (x,), lambda g: (g * mask,))


def mean_pool(x: Tensor) -> Tensor:
    """Mean over the last axis: (C, L) -> (C,), (L,) -> (1,)."""
    x = _as_tensor(x)
    _require_nonempty(x, "mean_pool")
    n = x.shape[-1]
    out = x.values.mean(axis=-1).reshape(-1)

    def back(g):
        return (np.repeat(g.reshape(x.shape[:-1] + (1,)), n, axis=-1) / n,)

    return _emit(out, (x,), back)


def max_pool_global(x: Tensor) -> Tensor:
    """Max over the last axis; the gradient goes to the first maximal element."""
    x = _as_tensor(x)
    _require_nonempty(x, "max_pool_global")
    v2 = x.values.reshape(-1, x.shape[-1])
    idx = np.argmax(v2, axis=1)
    rows = np.arange(v2.shape[0])
    out = v2[rows, idx]

    def back(g):
        gx = np.zeros_like(v2)
        gx[rows, idx] = g
        return (gx.reshape(x.shape),)

    return _emit(out, (x,), back)


def concat(*parts: Tensor) -> Tensor:
    parts = tuple(_as_tensor(p) for p in parts)
    for p in parts:
        if p.values.ndim != 1:
            raise ShapeError(f"concat: expects 1-D tensors, got shape {p.shape}")
    out = np.concatenate([p.values for p in parts])
    bounds = np.cumsum([0] + [p.size for p in parts])

    def back(g):
        return tuple(g[bounds[i]:bounds[i + 1]] for i in range(len(parts)))

    return _emit(out, parts, back)


def softmax(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    if x.values.ndim != 1 or x.size < 2:
        raise ShapeError(f"softmax: needs a 1-D tensor of length >= 2, got shape {x.shape}")
    z = x.values - x.values.max()
    e = np.exp(z)
    s = e / e.sum()

    def back(g):
        return (s * (g - np.dot(g, s)),)

    return _emit(s, (x,), back)


def cross_entropy(prediction: Tensor, target) -> Tensor:
    """``-sum(target * log(prediction))`` with the prediction floored at 1e-12.

    Both arguments must be probability pairs; soft targets such as (0.5, 0.5)
    are allowed.  The target is treated as a constant.
    """
    prediction = _as_tensor(prediction)
    y = np.asarray(target.values if isinstance(target, Tensor) else target, dtype=np.float64)
    p = prediction.values
    for name, v in (("prediction", p), ("target", y)):
        if v.shape != (2,):
            raise ShapeError(f"cross_entropy: {name} must have shape (2,), got {v.shape}")
        if np.any(v < 0) or abs(v.sum() - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"cross_entropy: {name} {v.tolist()} is not a probability vector")
    clamped = np.clip(p, PROB_FLOOR, 1.0)
    loss = -float(np.dot(y, np.log(clamped)))

    def back(g):
        inside = (p >= PROB_FLOOR) & (p <= 1.0)
        return (g[0] * np.where(inside, -y / clamped, 0.0),)

    return _emit(np.array([loss]), (prediction,), back)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    x = _as_tensor(x)
    if int(np.prod(shape)) != x.size:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}")
    out = x.values.reshape(shape)
    return _emit(out, (x,), lambda g: (g.reshape(x.shape),))


def sum_all(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    return _emit(np.array([x.values.sum()]), (x,), lambda g: (np.full(x.shape, g[0]),))


def mean_of(scalars: Sequence[Tensor]) -> Tensor:
    """Average of scalar tensors (used for batch-mean losses)."""
    if not scalars:
        raise ShapeError("mean_of: no tensors given")
    for s in scalars:
        if s.size != 1:
            raise ShapeError(f"mean_of: expects scalars, got shape {s.shape}")
    n = len(scalars)
    out = np.array([sum(float(s.values[0]) for s in scalars) / n])
    return _emit(out, tuple(scalars), lambda g: tuple(g / n for _ in range(n)))


# ---------------------------------------------------------------- optimizer


@dataclass
class AdamState:
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray], state: AdamState,
              lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8, weight_decay: float = 1e-4) -> AdamState:
    """One Adam update with decoupled weight decay, in place on ``params``.

    Decay is applied first as ``w <- w - lr * weight_decay * w``; the
    bias-corrected Adam step follows.
    """
    if len(params) != len(grads):
        raise ShapeError(f"adam_step: {len(params)} params but {len(grads)} grads")
    if not state.m:
        state.m = [np.zeros_like(p.values) for p in params]
        state.v = [np.zeros_like(p.values) for p in params]
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for i, (p, g) in enumerate(zip(params, grads)):
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.shape:
            raise ShapeError(f"adam_step: param shape {p.shape} vs grad shape {g.shape}")
        m = beta1 * state.m[i] + (1.0 - beta1) * g
        v = beta2 * state.v[i] + (1.0 - beta2) * g * g
        state.m[i], state.v[i] = m, v
        w = p.values - lr * weight_decay * p.values
        p.values = w - lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return state
