"""Dense tensor engine with reverse-mode differentiation.

Covers exactly the operation set the recognition pipeline needs: matmul with
broadcast batch dims, pointwise arithmetic with singleton-axis broadcasting,
leaky ReLU, row softmax, fully connected layers, strided 2D convolution,
2x2 max pooling, frame-difference velocity, shape plumbing (reshape,
transpose, concat), and a fused softmax cross-entropy loss.

Tensors hold 32-bit values for training and inference.  A parallel 64-bit
mode (pass ``dtype=np.float64`` when building parameters) exists solely for
finite-difference verification via :func:`grad_check`.

The tape is define-by-run: activate one with ``with Tape():`` around the
forward pass, call :func:`backward` on the scalar loss, and rebuild a fresh
tape next step.  With no tape active every op is pure forward computation.
Broadcasting follows the singleton-axis rule only: an axis of extent 1
stretches, shorter ranks are left-padded with 1s, and nothing else aligns.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, UsageError

REAL = np.float32

_DEBUG_CHECKS = False


def set_debug_checks(enabled: bool) -> None:
    """Toggle post-op finiteness assertions (off by default for speed)."""
    global _DEBUG_CHECKS
    _DEBUG_CHECKS = bool(enabled)


class Tensor:
    """A dense array participating in automatic differentiation.

    ``data`` is a row-major numpy array (float32 unless ``dtype`` is given
    explicitly).  ``grad`` is populated by :func:`backward` and accumulates
    across calls; callers zero it between optimizer steps.
    """

    __slots__ = ("data", "requires_grad", "grad", "_tape")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=REAL if dtype is None else dtype)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._tape: "Tape | None" = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, delta: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(np.broadcast_to(delta, self.data.shape), dtype=self.data.dtype)
        else:
            self.grad += delta

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, dtype=self.data.dtype)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; scalars are allowed on either side of + - *.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


class _Node:
    __slots__ = ("output", "inputs", "backward_fn")

    def __init__(self, output: Tensor, inputs: tuple[Tensor, ...], backward_fn):
        self.output = output
        self.inputs = inputs
        self.backward_fn = backward_fn


class Tape:
    """Append-only record of ops in execution (hence topological) order."""

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _TAPE_STACK.pop()
        assert popped is self


_TAPE_STACK: list[Tape] = []


def _active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _wrap(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=like.data.dtype))


def _finish(out_data: np.ndarray, inputs: tuple[Tensor, ...], backward_fn, op: str) -> Tensor:
    if _DEBUG_CHECKS and not np.all(np.isfinite(out_data)):
        raise ArithmeticError(f"non-finite values produced by {op}")
    out = Tensor(out_data, dtype=out_data.dtype)
    tape = _active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._tape = tape
        tape.nodes.append(_Node(out, inputs, backward_fn))
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape``, undoing singleton-axis broadcasting."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _broadcast_check(a_shape, b_shape, op: str) -> None:
    try:
        np.broadcast_shapes(a_shape, b_shape)
    except ValueError:
        raise DimensionError(f"{op}: cannot broadcast shapes {a_shape} and {b_shape}") from None


# ---------------------------------------------------------------------------
# pointwise arithmetic


def add(a: Tensor, b) -> Tensor:
    if isinstance(b, (int, float)):
        out = a.data + b

        def back(d):
            return (d,)

        return _finish(out, (a,), back, "add")
    b = _wrap(b, a)
    _broadcast_check(a.shape, b.shape, "add")
    out = a.data + b.data

    def back(d):
        return _unbroadcast(d, a.shape), _unbroadcast(d, b.shape)

    return _finish(out, (a, b), back, "add")


def sub(a: Tensor, b) -> Tensor:
    if isinstance(b, (int, float)):
        out = a.data - b

        def back(d):
            return (d,)

        return _finish(out, (a,), back, "sub")
    b = _wrap(b, a)
    _broadcast_check(a.shape, b.shape, "sub")
    out = a.data - b.data

    def back(d):
        return _unbroadcast(d, a.shape), _unbroadcast(-d, b.shape)

    return _finish(out, (a, b), back, "sub")


def mul(a: Tensor, b) -> Tensor:
    if isinstance(b, (int, float)):
        return scale(a, float(b))
    b = _wrap(b, a)
    _broadcast_check(a.shape, b.shape, "mul")
    out = a.data * b.data
    a_data, b_data = a.data, b.data

    def back(d):
        return _unbroadcast(d * b_data, a.shape), _unbroadcast(d * a_data, b.shape)

    return _finish(out, (a, b), back, "mul")


def scale(a: Tensor, s: float) -> Tensor:
    out = a.data * a.data.dtype.type(s)

    def back(d):
        return (d * s,)

    return _finish(out, (a,), back, "scale")


def elementwise(op: str, a: Tensor, b) -> Tensor:
    """Dispatch table over the pointwise op set."""
    table = {"add": add, "sub": sub, "mul": mul, "scale": scale}
    if op not in table:
        raise UsageError(f"unknown elementwise op {op!r}")
    return table[op](a, b)


# ---------------------------------------------------------------------------
# matrix products


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise DimensionError(f"matmul needs rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner dims disagree: {a.shape} x {b.shape}")
    _broadcast_check(a.shape[:-2], b.shape[:-2], "matmul batch dims")
    out = a.data @ b.data
    a_data, b_data = a.data, b.data

    def back(d):
        da = _unbroadcast(d @ np.swapaxes(b_data, -1, -2), a.shape)
        db = _unbroadcast(np.swapaxes(a_data, -1, -2) @ d, b.shape)
        return da, db

    return _finish(out, (a, b), back, "matmul")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """y = x . weight^T + bias, over the trailing axis of x."""
    n_in = weight.shape[1]
    if x.shape[-1] != n_in:
        raise DimensionError(f"linear: input extent {x.shape} does not match weight {weight.shape}")
    out = x.data @ weight.data.T
    if bias is not None:
        if bias.shape != (weight.shape[0],):
            raise DimensionError(f"linear: bias {bias.shape} does not match weight {weight.shape}")
        out = out + bias.data
    x_data, w_data = x.data, weight.data

    def back(d):
        d2 = d.reshape(-1, d.shape[-1])
        x2 = x_data.reshape(-1, n_in)
        dx = (d @ w_data).reshape(x_data.shape)
        dw = d2.T @ x2
        if bias is None:
            return dx, dw
        return dx, dw, d2.sum(axis=0)

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return _finish(out, inputs, back, "linear")


# ---------------------------------------------------------------------------
# activations and normalization


def leaky_relu(x: Tensor, slope: float = 0.01) -> Tensor:
    if not 0.0 < slope < 1.0:
        raise UsageError(f"leaky_relu slope must lie in (0, 1), got {slope}")
    mask = x.data >= 0
    out = np.where(mask, x.data, x.data * x.data.dtype.type(slope))

    def back(d):
        return (np.where(mask, d, d * slope),)

    return _finish(out, (x,), back, "leaky_relu")


def softmax_rows(x: Tensor) -> Tensor:
    """Softmax along the last axis, max-subtracted for stability."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def back(d):
        inner = (d * out).sum(axis=-1, keepdims=True)
        return ((d - inner) * out,)

    return _finish(out, (x,), back, "softmax_rows")


# ---------------------------------------------------------------------------
# convolution and pooling


def conv2d(x: Tensor, kernels: Tensor, bias: Tensor, stride: int = 2, padding: int = 1) -> Tensor:
    """Strided cross-correlation of a (C,H,W) or (B,C,H,W) input.

    Output extent per spatial axis is floor((n + 2*padding - k) / stride) + 1.
    """
    squeeze = x.data.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 4:
        raise DimensionError(f"conv2d expects (C,H,W) or (B,C,H,W), got {x.shape}")
    c_out, c_in, kh, kw = kernels.shape
    batch, c_x, h, w = xd.shape
    if c_x != c_in:
        raise DimensionError(f"conv2d channel mismatch: input {x.shape} vs kernels {kernels.shape}")
    if bias.shape != (c_out,):
        raise DimensionError(f"conv2d bias {bias.shape} does not match kernels {kernels.shape}")
    h_out = (h + 2 * padding - kh) // stride + 1
    w_out = (w + 2 * padding - kw) // stride + 1
    if h_out < 1 or w_out < 1:
        raise DimensionError(f"conv2d output extent < 1 for input {x.shape} with k={kh}, stride={stride}, padding={padding}")

    xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else xd
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride]
    cols = np.ascontiguousarray(windows.transpose(0, 2, 3, 1, 4, 5)).reshape(batch * h_out * w_out, c_in * kh * kw)
    kmat = kernels.data.reshape(c_out, -1)
    out = (cols @ kmat.T + bias.data).reshape(batch, h_out, w_out, c_out).transpose(0, 3, 1, 2)
    if squeeze:
        out = out[0]

    def back(d):
        dd = d[None] if squeeze else d
        d2 = np.ascontiguousarray(dd.transpose(0, 2, 3, 1)).reshape(-1, c_out)
        dk = (d2.T @ cols).reshape(kernels.shape)
        db = d2.sum(axis=0)
        dcols = (d2 @ kmat).reshape(batch, h_out, w_out, c_in, kh, kw)
        hp, wp = h + 2 * padding, w + 2 * padding
        dxp = np.zeros((batch, c_in, hp, wp), dtype=dd.dtype)
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i : i + stride * h_out : stride, j : j + stride * w_out : stride] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        dx = dxp[:, :, padding : padding + h, padding : padding + w] if padding else dxp
        return (dx[0] if squeeze else dx), dk, db

    return _finish(out, (x, kernels, bias), back, "conv2d")


def maxpool2d(x: Tensor) -> Tensor:
    """2x2 max pool with stride 2; gradient routes to the first max per window."""
    squeeze = x.data.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 4:
        raise DimensionError(f"maxpool2d expects (C,H,W) or (B,C,H,W), got {x.shape}")
    b, c, h, w = xd.shape
    if h % 2 or w % 2:
        raise DimensionError(f"maxpool2d requires even spatial extents, got {x.shape}")
    h2, w2 = h // 2, w // 2
    windows = xd.reshape(b, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h2, w2, 4)
    idx = windows.argmax(axis=-1)  # first occurrence wins ties (row-major window order)
    out = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
    if squeeze:
        out = out[0]

    def back(d):
        dd = d[None] if squeeze else d
        dwin = np.zeros((b, c, h2, w2, 4), dtype=dd.dtype)
        np.put_along_axis(dwin, idx[..., None], dd[..., None], axis=-1)
        dx = dwin.reshape(b, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h, w)
        return (dx[0] if squeeze else dx,)

    return _finish(out, (x,), back, "maxpool2d")


# ---------------------------------------------------------------------------
# shape plumbing


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    old = x.data.shape
    out = x.data.reshape(shape)

    def back(d):
        return (d.reshape(old),)

    return _finish(out, (x,), back, "reshape")


def transpose_last2(x: Tensor) -> Tensor:
    if x.data.ndim < 2:
        raise DimensionError(f"transpose_last2 needs rank >= 2, got {x.shape}")
    out = np.swapaxes(x.data, -1, -2)

    def back(d):
        return (np.swapaxes(d, -1, -2),)

    return _finish(out, (x,), back, "transpose_last2")


def permute(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    if sorted(axes) != list(range(x.data.ndim)):
        raise DimensionError(f"permute axes {axes} invalid for rank {x.data.ndim}")
    out = np.transpose(x.data, axes)
    inverse = tuple(np.argsort(axes))

    def back(d):
        return (np.transpose(d, inverse),)

    return _finish(out, (x,), back, "permute")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not tensors:
        raise UsageError("concat of zero tensors")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def back(d):
        return tuple(np.split(d, splits, axis=axis))

    return _finish(out, tuple(tensors), back, "concat")


def frame_velocity(x: Tensor, dt: float = 1.0) -> Tensor:
    """Difference quotient along the last (time) axis, zero-padded at the end.

    out[..., t] = (x[..., t+1] - x[..., t]) / dt for t < T-1; final column 0.
    """
    if dt <= 0:
        raise UsageError(f"frame_velocity dt must be positive, got {dt}")
    if x.shape[-1] < 2:
        raise DimensionError(f"frame_velocity needs at least 2 frames, got {x.shape}")
    out = np.zeros_like(x.data)
    out[..., :-1] = (x.data[..., 1:] - x.data[..., :-1]) / x.data.dtype.type(dt)

    def back(d):
        dx = np.zeros_like(d)
        dx[..., :-1] -= d[..., :-1] / dt
        dx[..., 1:] += d[..., :-1] / dt
        return (dx,)

    return _finish(out, (x,), back, "frame_velocity")


def sum_all(x: Tensor) -> Tensor:
    out = np.asarray(x.data.sum(), dtype=x.data.dtype)
    shape = x.data.shape

    def back(d):
        return (np.full(shape, d, dtype=d.dtype),)

    return _finish(out, (x,), back, "sum_all")


# ---------------------------------------------------------------------------
# loss


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean NLL of integer labels under row softmax, fused for stability."""
    labels = np.asarray(labels)
    if logits.data.ndim != 2:
        raise DimensionError(f"cross_entropy expects (batch, classes) logits, got {logits.shape}")
    batch, classes = logits.shape
    if labels.shape != (batch,):
        raise DimensionError(f"cross_entropy labels {labels.shape} do not match logits {logits.shape}")
    if labels.min() < 0 or labels.max() >= classes:
        raise UsageError(f"cross_entropy label out of range [0, {classes})")
    shifted = logits.data - logits.data.max(axis=-1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=-1))
    nll = log_z - shifted[np.arange(batch), labels]
    out = np.asarray(nll.mean(), dtype=logits.data.dtype)
    soft = np.exp(shifted) / np.exp(shifted).sum(axis=-1, keepdims=True)

    def back(d):
        dlogits = soft.copy()
        dlogits[np.arange(batch), labels] -= 1.0
        return (dlogits * (d / batch),)

    return _finish(out, (logits,), back, "cross_entropy")


# ---------------------------------------------------------------------------
# reverse pass


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(t) into ``t.grad`` for every requires_grad tensor
    reachable from ``loss`` on its tape."""
    if loss.data.size != 1:
        raise UsageError(f"backward requires a scalar loss, got shape {loss.shape}")
    tape = loss._tape
    if tape is None:
        if loss.requires_grad:
            loss.accumulate_grad(np.ones_like(loss.data))
        return
    pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    holders: dict[int, Tensor] = {id(loss): loss}
    for node in reversed(tape.nodes):
        d_out = pending.pop(id(node.output), None)
        if d_out is None:
            continue
        node.output.accumulate_grad(d_out)
        d_inputs = node.backward_fn(d_out)
        for t, d in zip(node.inputs, d_inputs):
            if d is None or not t.requires_grad:
                continue
            key = id(t)
            if key in pending:
                pending[key] = pending[key] + d
            else:
                pending[key] = d
                holders[key] = t
    for key, d in pending.items():  # leaves: tensors never produced by a node
        holders[key].accumulate_grad(d)


def zero_grads(tensors: Sequence[Tensor]) -> None:
    for t in tensors:
        t.zero_grad()


# ---------------------------------------------------------------------------
# finite-difference verification


def grad_check(
    fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    samples: int = 100,
    h: float = 1e-5,
    seed: int = 0,
    points: Sequence[tuple[int, int]] | None = None,
) -> float:
    """Max relative error between tape gradients and central differences.

    ``fn`` must be a pure scalar function of ``params``, which must be
    float64 (the 64-bit verification mode).  ``points`` optionally pins the
    sampled (param_index, flat_index) coordinates; otherwise ``samples``
    coordinates are drawn uniformly with the given seed.  The error at one
    coordinate is |analytic - numeric| / max(1, |analytic|).
    """
    for p in params:
        if p.data.dtype != np.float64:
            raise UsageError("grad_check requires float64 parameters")
    zero_grads(params)
    with Tape():
        loss = fn()
    backward(loss)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    zero_grads(params)

    if points is None:
        rng = np.random.default_rng(seed)
        points = []
        for _ in range(samples):
            pi = int(rng.integers(len(params)))
            fi = int(rng.integers(params[pi].data.size))
            points.append((pi, fi))

    worst = 0.0
    for pi, fi in points:
        flat = params[pi].data.reshape(-1)
        saved = flat[fi]
        flat[fi] = saved + h
        f_plus = fn().item()
        flat[fi] = saved - h
        f_minus = fn().item()
        flat[fi] = saved
        numeric = (f_plus - f_minus) / (2.0 * h)
        a = float(analytic[pi].reshape(-1)[fi])
        err = abs(a - numeric) / max(1.0, abs(a))
        worst = max(worst, err)
    return worst
