"""Dense float64 tensors with reverse-mode differentiation on an explicit tape.

Every operation runs eagerly on numpy arrays. When a Tape is active and an
input requires gradients, the op appends a (inputs, output, vjp) entry; a
single reverse sweep over the recorded list implements backpropagation.
Without an active tape the same functions are plain numpy forward passes,
which is how evaluation and dataset generation run.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "as_tensor",
    "add",
    "sub",
    "mul",
    "neg",
    "scale",
    "shift",
    "matmul",
    "relu",
    "tanh",
    "exp",
    "sin",
    "cos",
    "sqrt",
    "absolute",
    "concat",
    "slice_axis",
    "reshape",
    "broadcast_to",
    "transpose_last2",
    "tsum",
    "tmean",
    "l2norm_rows",
    "normalize_rows",
    "layer_normalize",
]


class Tensor:
    """A dense float64 array plus gradient bookkeeping."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() requires a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# One active tape at a time; training steps are single-threaded by contract.
_ACTIVE: "Tape | None" = None

# (inputs-with-vjps, output) pairs; vjp maps the output gradient to one
# input's gradient contribution.
_TapeEntry = tuple[tuple[tuple[Tensor, Callable[[np.ndarray], np.ndarray]], ...], Tensor]


class Tape:
    """Ordered record of one forward pass.

    Eager execution guarantees that every entry's inputs were produced
    earlier on the tape, so reverse iteration is a valid topological order
    and visits each recorded operation exactly once.
    """

    def __init__(self, check_finite: bool = False):
        self._ops: list[_TapeEntry] = []
        self._produced: set[int] = set()
        self.check_finite = check_finite

    def __enter__(self) -> "Tape":
        global _ACTIVE
        if _ACTIVE is not None:
            raise RuntimeError("a tape is already active; tapes do not nest")
        _ACTIVE = self
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        global _ACTIVE
        _ACTIVE = None

    def __len__(self) -> int:
        return len(self._ops)

    def backward(self, loss: Tensor) -> None:
        """Populate .grad of every requires_grad tensor reachable from loss."""
        if loss.data.size != 1:
            raise ValueError(f"backward requires a scalar loss, got shape {loss.shape}")
        if id(loss) not in self._produced:
            raise ValueError("loss was not produced on this tape")
        loss.grad = np.ones_like(loss.data)
        for pairs, out in reversed(self._ops):
            g = out.grad
            if g is None:
                continue
            for t, vjp in pairs:
                contrib = vjp(g)
                if t.grad is None:
                    # vjps may return the upstream gradient itself (e.g. add);
                    # copy so later accumulation cannot alias it.
                    t.grad = contrib.copy() if contrib is g else contrib
                else:
                    t.grad = t.grad + contrib
        if self.check_finite:
            for pairs, _ in self._ops:
                for t, _ in pairs:
                    if t.grad is not None and not np.all(np.isfinite(t.grad)):
                        raise FloatingPointError("non-finite gradient produced during backward")


def _record(out_data: np.ndarray, pairs) -> Tensor:
    """Wrap out_data; record vjps for the inputs that require gradients."""
    tape = _ACTIVE
    if tape is not None:
        live = tuple((t, fn) for t, fn in pairs if t.requires_grad)
        if live:
            out = Tensor(out_data, requires_grad=True)
            if tape.check_finite and not np.all(np.isfinite(out_data)):
                raise FloatingPointError("non-finite value produced during forward")
            tape._ops.append((live, out))
            tape._produced.add(id(out))
            return out
    return Tensor(out_data)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _swap(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, -1, -2)


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data
    ash, bsh = a.data.shape, b.data.shape
    return _record(out, ((a, lambda g: _unbroadcast(g, ash)),
                         (b, lambda g: _unbroadcast(g, bsh))))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data
    ash, bsh = a.data.shape, b.data.shape
    return _record(out, ((a, lambda g: _unbroadcast(g, ash)),
                         (b, lambda g: _unbroadcast(-g, bsh))))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data
    ad, bd = a.data, b.data
    return _record(out, ((a, lambda g: _unbroadcast(g * bd, ad.shape)),
                         (b, lambda g: _unbroadcast(g * ad, bd.shape))))


def neg(x) -> Tensor:
    x = as_tensor(x)
    return _record(-x.data, ((x, lambda g: -g),))


def scale(x, c: float) -> Tensor:
    """Multiply by a python constant; the constant never receives gradient."""
    x = as_tensor(x)
    c = float(c)
    return _record(x.data * c, ((x, lambda g: g * c),))


def shift(x, c: float) -> Tensor:
    """Add a python constant."""
    x = as_tensor(x)
    return _record(x.data + float(c), ((x, lambda g: g),))


# ---------------------------------------------------------------------------
# matrix product


def matmul(a, b) -> Tensor:
    """Matrix product with numpy broadcasting over leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError(f"matmul operands must be at least 2-d, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul inner extents disagree: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    if bd.ndim == 2 and ad.ndim > 2:
        # batched-times-weight: collapse the batch into one BLAS call
        k, n = bd.shape
        out = (ad.reshape(-1, k) @ bd).reshape(ad.shape[:-1] + (n,))

        def vjp_a(g: np.ndarray) -> np.ndarray:
            return (g.reshape(-1, n) @ bd.T).reshape(ad.shape)

        def vjp_b(g: np.ndarray) -> np.ndarray:
            return ad.reshape(-1, k).T @ g.reshape(-1, n)

        return _record(out, ((a, vjp_a), (b, vjp_b)))
    out = ad @ bd
    return _record(out, ((a, lambda g: _unbroadcast(g @ _swap(bd), ad.shape)),
                         (b, lambda g: _unbroadcast(_swap(ad) @ g, bd.shape))))


# ---------------------------------------------------------------------------
# nonlinearities


def relu(x) -> Tensor:
    x = as_tensor(x)
    out = np.maximum(x.data, 0.0)
    xd = x.data
    return _record(out, ((x, lambda g: g * (xd > 0.0)),))


def tanh(x) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)
    return _record(out, ((x, lambda g: g * (1.0 - out * out)),))


def exp(x) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)
    return _record(out, ((x, lambda g: g * out),))


def sin(x) -> Tensor:
    x = as_tensor(x)
    xd = x.data
    return _record(np.sin(xd), ((x, lambda g: g * np.cos(xd)),))


def cos(x) -> Tensor:
    x = as_tensor(x)
    xd = x.data
    return _record(np.cos(xd), ((x, lambda g: -g * np.sin(xd)),))


def sqrt(x) -> Tensor:
    x = as_tensor(x)
    out = np.sqrt(x.data)
    return _record(out, ((x, lambda g: g * (0.5 / out)),))


def absolute(x) -> Tensor:
    """|x| with subgradient 0 at exactly zero."""
    x = as_tensor(x)
    xd = x.data
    return _record(np.abs(xd), ((x, lambda g: g * np.sign(xd)),))


# ---------------------------------------------------------------------------
# shape manipulation


def _axis_slice(g: np.ndarray, axis: int, start: int, stop: int) -> np.ndarray:
    index = [slice(None)] * g.ndim
    index[axis] = slice(start, stop)
    return g[tuple(index)]


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    """Concatenate along one axis; operands must agree on every other axis."""
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ValueError("concat requires at least one operand")
    ax = axis % ts[0].ndim
    ref = list(ts[0].shape)
    for t in ts[1:]:
        other = list(t.shape)
        if len(other) != len(ref) or any(o != r for i, (o, r) in enumerate(zip(other, ref)) if i != ax):
            raise ValueError(f"concat shapes incompatible off axis {ax}: {[t.shape for t in ts]}")
    out = np.concatenate([t.data for t in ts], axis=ax)
    pairs = []
    offset = 0
    for t in ts:
        start, stop = offset, offset + t.shape[ax]
        pairs.append((t, lambda g, s=start, e=stop: _axis_slice(g, ax, s, e)))
        offset = stop
    return _record(out, tuple(pairs))


def slice_axis(x, start: int, stop: int, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    ax = axis % x.ndim
    out = _axis_slice(x.data, ax, start, stop)
    xsh = x.data.shape

    def vjp(g: np.ndarray) -> np.ndarray:
        full = np.zeros(xsh)
        index = [slice(None)] * len(xsh)
        index[ax] = slice(start, stop)
        full[tuple(index)] = g
        return full

    return _record(out, ((x, vjp),))


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    xsh = x.data.shape
    out = x.data.reshape(shape)
    return _record(out, ((x, lambda g: g.reshape(xsh)),))


def broadcast_to(x, shape) -> Tensor:
    x = as_tensor(x)
    xsh = x.data.shape
    out = np.broadcast_to(x.data, shape)
    # materialize so downstream in-place consumers cannot alias the view
    out = np.ascontiguousarray(out)
    return _record(out, ((x, lambda g: _unbroadcast(g, xsh)),))


def transpose_last2(x) -> Tensor:
    x = as_tensor(x)
    return _record(_swap(x.data).copy(), ((x, lambda g: _swap(g)),))


# ---------------------------------------------------------------------------
# reductions


def tsum(x, axis: int | None = None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)
    xsh = x.data.shape

    def vjp(g: np.ndarray) -> np.ndarray:
        if axis is None:
            return np.full(xsh, float(g.reshape(())))
        gg = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(gg, xsh).copy()

    return _record(out, ((x, vjp),))


def tmean(x, axis: int | None = None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    out = x.data.mean(axis=axis, keepdims=keepdims)
    xsh = x.data.shape
    count = x.data.size if axis is None else x.data.shape[axis]

    def vjp(g: np.ndarray) -> np.ndarray:
        if axis is None:
            return np.full(xsh, float(g.reshape(())) / count)
        gg = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(gg, xsh).copy() / count

    return _record(out, ((x, vjp),))


# ---------------------------------------------------------------------------
# row-norm primitives (rows = last axis)


def l2norm_rows(x, grad_floor: float | None = None) -> Tensor:
    """Euclidean norm of each row (last axis); output drops that axis.

    Backward divides by the row norm. A zero row makes that gradient
    undefined: with grad_floor=None it raises, otherwise the denominator is
    floored at grad_floor (the forward value is exact either way).
    """
    x = as_tensor(x)
    xd = x.data
    norms = np.sqrt((xd * xd).sum(axis=-1))

    def vjp(g: np.ndarray) -> np.ndarray:
        denom = norms
        if grad_floor is None:
            if np.any(denom == 0.0):
                raise FloatingPointError("l2norm_rows backward hit a zero row; caller must guard")
        else:
            denom = np.maximum(denom, grad_floor)
        return g[..., None] * xd / denom[..., None]

    return _record(norms, ((x, vjp),))


def normalize_rows(x, grad_floor: float | None = None) -> Tensor:
    """Scale each row (last axis) to unit Euclidean norm."""
    x = as_tensor(x)
    xd = x.data
    norms = np.sqrt((xd * xd).sum(axis=-1, keepdims=True))
    if np.any(norms == 0.0):
        raise FloatingPointError("normalize_rows received a zero row")
    out = xd / norms

    def vjp(g: np.ndarray) -> np.ndarray:
        denom = norms if grad_floor is None else np.maximum(norms, grad_floor)
        return (g - out * (g * out).sum(axis=-1, keepdims=True)) / denom

    return _record(out, ((x, vjp),))


# ---------------------------------------------------------------------------
# layer normalization


def layer_normalize(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Standardize each row (last axis) to zero mean/unit variance, then
    apply a learned per-feature affine transform. Variance is stabilized by
    a fixed eps added before the square root."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    d = x.shape[-1]
    if d < 2:
        raise ValueError(f"layer_normalize requires at least 2 features per row, got {d}")
    if gain.shape != (d,) or bias.shape != (d,):
        raise ValueError(f"gain/bias must have shape ({d},), got {gain.shape} and {bias.shape}")
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    centered = xd - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_sigma = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_sigma
    out = xhat * gain.data + bias.data
    gd = gain.data
    lead_axes = tuple(range(xd.ndim - 1))

    def vjp_x(g: np.ndarray) -> np.ndarray:
        dxhat = g * gd
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        return inv_sigma * (dxhat - m1 - xhat * m2)

    return _record(out, (
        (x, vjp_x),
        (gain, lambda g: (g * xhat).sum(axis=lead_axes)),
        (bias, lambda g: g.sum(axis=lead_axes)),
    ))
