"""Dense float32 tensors with reverse-mode automatic differentiation.

The design is a recording tape: while a :class:`Tape` is active, every
operation appends one record (inputs, output, backward closure) in
execution order, which is already a topological order.  ``backward(loss)``
replays the tape once in reverse, accumulating gradients keyed by tensor
identity.  With no active tape, operations run as plain numpy with zero
recording overhead (the inference path).

Conventions, fixed across the project:

* float32 data, C-contiguous, row-major;
* no broadcasting except tensor-with-python-scalar (reshape explicitly);
* images are NCHW, convolution weights OIHW;
* a "scalar" tensor has shape ().
"""

from __future__ import annotations

import threading
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels


class ShapeError(ValueError):
    """An operation rejected its operands' shapes."""


class GraphError(RuntimeError):
    """Misuse of the recording tape (non-scalar loss, empty graph, ...)."""


def _as_f32(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float32)
    return np.ascontiguousarray(arr)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_f32(data)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def tensor(data, requires_grad=False) -> Tensor:
    return Tensor(data, requires_grad)


def param(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def zeros(shape, requires_grad=False) -> Tensor:
    return Tensor(np.zeros(shape, np.float32), requires_grad)


# ---------------------------------------------------------------------------
# Tape

class _Record:
    __slots__ = ("inputs", "output", "bwd")

    def __init__(self, inputs, output, bwd):
        self.inputs = inputs
        self.output = output
        self.bwd = bwd


class Tape:
    """Recorded graph for one training step; confined to a single thread."""

    def __init__(self):
        self.records: list[_Record] = []

    def __enter__(self):
        _state.stack.append(self)
        return self

    def __exit__(self, *exc):
        popped = _state.stack.pop()
        assert popped is self
        return False


class _TapeState(threading.local):
    def __init__(self):
        self.stack: list[Tape] = []


_state = _TapeState()


def active_tape() -> Optional[Tape]:
    return _state.stack[-1] if _state.stack else None


class pause:
    """Context manager: temporarily disable recording inside a tape."""

    def __enter__(self):
        self._saved = _state.stack
        _state.stack = []
        return self

    def __exit__(self, *exc):
        _state.stack = self._saved
        return False


def record(inputs: Sequence[Tensor], out_data: np.ndarray,
           bwd: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]) -> Tensor:
    """Wrap ``out_data`` in a Tensor, recording ``bwd`` if a tape is active.

    ``bwd(grad_out)`` must return one gradient array (or None) per input,
    in order.  Composite modules may call this directly to define fused ops.
    """
    tape = active_tape()
    needs = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=needs)
    if needs:
        tape.records.append(_Record(tuple(inputs), out, bwd))
    return out


def backward(loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Reverse-replay the active tape from a scalar loss.

    Returns a map from every visited requires-grad tensor to its gradient
    and stores the same array in ``t.grad``.  The tape is consumed.
    """
    tape = active_tape()
    if tape is None:
        raise GraphError("backward() requires an active Tape")
    if loss.data.size != 1:
        raise GraphError(f"loss must be scalar, got shape {loss.data.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    by_id: dict[int, Tensor] = {id(loss): loss}
    for rec in reversed(tape.records):
        gout = grads.get(id(rec.output))
        if gout is None:
            continue
        gins = rec.bwd(gout)
        for t, g in zip(rec.inputs, gins):
            if g is None or not t.requires_grad:
                continue
            g = np.asarray(g, dtype=np.float32)
            if g.shape != t.data.shape:
                raise GraphError(f"backward produced shape {g.shape} for input of shape {t.data.shape}")
            key = id(t)
            if key in grads:
                grads[key] += g
            else:
                grads[key] = g
                by_id[key] = t
    tape.records.clear()
    out: dict[Tensor, np.ndarray] = {}
    for key, g in grads.items():
        t = by_id[key]
        if t.requires_grad:
            t.grad = g
            out[t] = g
    return out


# ---------------------------------------------------------------------------
# Elementwise and scalar ops

def _check_same_shape(a: Tensor, b: Tensor, op: str):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{op}: shapes {a.data.shape} and {b.data.shape} differ")


def add(a: Tensor, b) -> Tensor:
    if isinstance(b, Tensor):
        _check_same_shape(a, b, "add")
        return record([a, b], a.data + b.data, lambda g: (g, g))
    c = float(b)
    return record([a], a.data + np.float32(c), lambda g: (g,))


def sub(a: Tensor, b) -> Tensor:
    if isinstance(b, Tensor):
        _check_same_shape(a, b, "sub")
        return record([a, b], a.data - b.data, lambda g: (g, -g))
    c = float(b)
    return record([a], a.data - np.float32(c), lambda g: (g,))


def mul(a: Tensor, b) -> Tensor:
    if isinstance(b, Tensor):
        _check_same_shape(a, b, "mul")
        return record([a, b], a.data * b.data,
                      lambda g, ad=a.data, bd=b.data: (g * bd, g * ad))
    c = np.float32(float(b))
    return record([a], a.data * c, lambda g: (g * c,))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def silu(x: Tensor) -> Tensor:
    s = _sigmoid(x.data)
    out = x.data * s

    def bwd(g, xd=x.data, s=s):
        return (g * (s * (1.0 + xd * (1.0 - s))),)

    return record([x], out, bwd)


def square(x: Tensor) -> Tensor:
    return mul(x, x)


# ---------------------------------------------------------------------------
# Reductions

def sum_all(x: Tensor) -> Tensor:
    out = np.asarray(x.data.sum(), np.float32)
    return record([x], out, lambda g: (np.full_like(x.data, np.float32(g)),))


def mean_all(x: Tensor) -> Tensor:
    n = x.data.size
    out = np.asarray(x.data.mean(), np.float32)
    return record([x], out, lambda g: (np.full_like(x.data, np.float32(g) / np.float32(n)),))


# ---------------------------------------------------------------------------
# Shape ops

def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    out = x.data.reshape(shape)
    return record([x], out, lambda g: (g.reshape(x.data.shape),))


def permute(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = np.ascontiguousarray(x.data.transpose(axes))
    return record([x], out, lambda g: (np.ascontiguousarray(g.transpose(inv)),))


def concat(xs: Sequence[Tensor], axis: int) -> Tensor:
    datas = [t.data for t in xs]
    ref = datas[0].shape
    for d in datas[1:]:
        if len(d.shape) != len(ref) or any(
            i != axis and d.shape[i] != ref[i] for i in range(len(ref))
        ):
            raise ShapeError(f"concat: incompatible shapes {[d.shape for d in datas]}")
    out = np.concatenate(datas, axis=axis)
    splits = np.cumsum([d.shape[axis] for d in datas])[:-1]

    def bwd(g):
        return [np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis)]

    return record(list(xs), out, bwd)


# ---------------------------------------------------------------------------
# Linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul: expects 2-D operands, got {a.data.shape} and {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: inner extents differ, {a.data.shape} x {b.data.shape}")
    out = a.data @ b.data

    def bwd(g, ad=a.data, bd=b.data):
        return (g @ bd.T, ad.T @ g)

    return record([a, b], out, bwd)


def linear(x: Tensor, w: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """x[n,k] @ w[k,m] (+ b[m]).  The only op with an implicit bias broadcast."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
        raise ShapeError(f"linear: {x.data.shape} x {w.data.shape}")
    out = x.data @ w.data
    if b is None:
        def bwd(g, xd=x.data, wd=w.data):
            return (g @ wd.T, xd.T @ g)
        return record([x, w], out, bwd)
    if b.data.shape != (w.data.shape[1],):
        raise ShapeError(f"linear: bias shape {b.data.shape} != ({w.data.shape[1]},)")
    out = out + b.data[None, :]

    def bwd(g, xd=x.data, wd=w.data):
        return (g @ wd.T, xd.T @ g, g.sum(axis=0))

    return record([x, w, b], out, bwd)


# ---------------------------------------------------------------------------
# Convolution and resampling (NCHW)

def conv2d(x: Tensor, w: Tensor, b: Optional[Tensor] = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv2d: need NCHW and OIHW, got {x.data.shape}, {w.data.shape}")
    if x.data.shape[1] != w.data.shape[1]:
        raise ShapeError(f"conv2d: channel mismatch {x.data.shape} vs {w.data.shape}")
    bd = None if b is None else b.data
    out = kernels.conv2d_forward(x.data, w.data, bd, stride, padding)

    def bwd(g, xd=x.data, wd=w.data):
        g = np.ascontiguousarray(g)
        dx = kernels.conv2d_backward_input(g, wd, stride, padding, xd.shape[2], xd.shape[3])
        dw, db = kernels.conv2d_backward_weight(xd, g, stride, padding, wd.shape[2], wd.shape[3])
        if b is None:
            return (dx, dw)
        return (dx, dw, db)

    inputs = [x, w] if b is None else [x, w, b]
    return record(inputs, out, bwd)


def upsample_nearest(x: Tensor, factor: int) -> Tensor:
    if x.data.ndim != 4:
        raise ShapeError("upsample_nearest: NCHW input required")
    f = int(factor)
    out = x.data.repeat(f, axis=2).repeat(f, axis=3)

    def bwd(g, shp=x.data.shape):
        n, c, h, w = shp
        return (g.reshape(n, c, h, f, w, f).sum(axis=(3, 5)),)

    return record([x], out, bwd)


def broadcast_hw(x: Tensor, h: int, w: int) -> Tensor:
    """Expand (N,C,1,1) to (N,C,h,w); the spatial broadcast for embeddings."""
    if x.data.ndim != 4 or x.data.shape[2:] != (1, 1):
        raise ShapeError(f"broadcast_hw: expected (N,C,1,1), got {x.data.shape}")
    out = np.ascontiguousarray(np.broadcast_to(x.data, x.data.shape[:2] + (h, w)))
    return record([x], out, lambda g: (g.sum(axis=(2, 3), keepdims=True),))


def downsample_nearest(x: Tensor, factor: int) -> Tensor:
    if x.data.ndim != 4:
        raise ShapeError("downsample_nearest: NCHW input required")
    f = int(factor)
    if x.data.shape[2] % f or x.data.shape[3] % f:
        raise ShapeError(f"downsample_nearest: {x.data.shape} not divisible by {f}")
    out = np.ascontiguousarray(x.data[:, :, ::f, ::f])

    def bwd(g, shp=x.data.shape):
        dx = np.zeros(shp, np.float32)
        dx[:, :, ::f, ::f] = g
        return (dx,)

    return record([x], out, bwd)


# ---------------------------------------------------------------------------
# Normalization

def groupnorm(x: Tensor, gain: Tensor, bias: Tensor, groups: int, eps: float = 1e-5) -> Tensor:
    if x.data.ndim != 4:
        raise ShapeError("groupnorm: NCHW input required")
    n, c, h, w = x.data.shape
    if c % groups:
        raise ShapeError(f"groupnorm: {c} channels not divisible by {groups} groups")
    if gain.data.shape != (c,) or bias.data.shape != (c,):
        raise ShapeError("groupnorm: gain/bias must have one entry per channel")
    xg = x.data.reshape(n, groups, c // groups * h * w)
    mu = xg.mean(axis=2, keepdims=True)
    var = xg.var(axis=2, keepdims=True)
    inv = 1.0 / np.sqrt(var + np.float32(eps))
    xhat = ((xg - mu) * inv).reshape(n, c, h, w)
    out = xhat * gain.data[None, :, None, None] + bias.data[None, :, None, None]

    def bwd(g, xhat=xhat, inv=inv, gd=gain.data):
        dgain = (g * xhat).sum(axis=(0, 2, 3))
        dbias = g.sum(axis=(0, 2, 3))
        dxhat = (g * gd[None, :, None, None]).reshape(n, groups, -1)
        xh = xhat.reshape(n, groups, -1)
        m = dxhat.shape[2]
        t1 = dxhat.mean(axis=2, keepdims=True)
        t2 = (dxhat * xh).mean(axis=2, keepdims=True)
        dx = (dxhat - t1 - xh * t2) * inv
        return (dx.reshape(n, c, h, w).astype(np.float32, copy=False), dgain, dbias)

    return record([x, gain, bias], out.astype(np.float32, copy=False), bwd)


# ---------------------------------------------------------------------------
# Attention

def _softmax_lastaxis(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=-1, keepdims=True)
    e = np.exp(logits - m)
    return e / e.sum(axis=-1, keepdims=True)


def attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """Batched single-head attention: q[B,n,d], k[B,m,d], v[B,m,c] -> [B,n,c]."""
    if q.data.ndim != 3 or k.data.ndim != 3 or v.data.ndim != 3:
        raise ShapeError("attention: 3-D operands required")
    bq, n, d = q.data.shape
    bk, m, dk = k.data.shape
    bv, mv, c = v.data.shape
    if not (bq == bk == bv and d == dk and m == mv):
        raise ShapeError(f"attention: incompatible {q.data.shape}, {k.data.shape}, {v.data.shape}")
    scale = np.float32(1.0 / np.sqrt(d))
    logits = np.einsum("bnd,bmd->bnm", q.data, k.data, optimize=True) * scale
    p = _softmax_lastaxis(logits)
    out = np.einsum("bnm,bmc->bnc", p, v.data, optimize=True)

    def bwd(g, qd=q.data, kd=k.data, vd=v.data, p=p):
        dp = np.einsum("bnc,bmc->bnm", g, vd, optimize=True)
        dv = np.einsum("bnm,bnc->bmc", p, g, optimize=True)
        da = p * (dp - (dp * p).sum(axis=-1, keepdims=True))
        dq = np.einsum("bnm,bmd->bnd", da, kd, optimize=True) * scale
        dk_ = np.einsum("bnm,bnd->bmd", da, qd, optimize=True) * scale
        return (dq.astype(np.float32, copy=False),
                dk_.astype(np.float32, copy=False),
                dv.astype(np.float32, copy=False))

    return record([q, k, v], out.astype(np.float32, copy=False), bwd)


def softmax_attention(q: Tensor, k: Tensor, v: Tensor,
                      mask: Optional[np.ndarray] = None) -> Tensor:
    """Single-head attention over 2-D operands with an optional key mask.

    ``mask[j] == True`` removes key j from the distribution; rows of the
    output are convex combinations of the surviving rows of ``v``.
    """
    if q.data.ndim != 2 or k.data.ndim != 2 or v.data.ndim != 2:
        raise ShapeError("softmax_attention: 2-D operands required")
    n, d = q.data.shape
    m, dk = k.data.shape
    mv, c = v.data.shape
    if d != dk or m != mv:
        raise ShapeError(f"softmax_attention: incompatible {q.data.shape}, {k.data.shape}, {v.data.shape}")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (m,):
            raise ShapeError(f"softmax_attention: mask shape {mask.shape} != ({m},)")
        if mask.all():
            raise ValueError("softmax_attention: all keys masked, distribution undefined")
    scale = np.float32(1.0 / np.sqrt(d))
    logits = (q.data @ k.data.T) * scale
    if mask is not None:
        logits = np.where(mask[None, :], -np.inf, logits)
    p = _softmax_lastaxis(logits)
    out = p @ v.data

    def bwd(g, qd=q.data, kd=k.data, vd=v.data, p=p):
        dp = g @ vd.T
        dv = p.T @ g
        da = p * (dp - (dp * p).sum(axis=-1, keepdims=True))
        dq = (da @ kd) * scale
        dk_ = (da.T @ qd) * scale
        return (dq.astype(np.float32, copy=False),
                dk_.astype(np.float32, copy=False),
                dv.astype(np.float32, copy=False))

    return record([q, k, v], out.astype(np.float32, copy=False), bwd)


def attention_weights(q: np.ndarray, k: np.ndarray,
                      mask: Optional[np.ndarray] = None) -> np.ndarray:
    """The softmax weight matrix itself (diagnostics; no recording)."""
    scale = 1.0 / np.sqrt(q.shape[-1])
    logits = (q @ k.T) * scale
    if mask is not None:
        logits = np.where(np.asarray(mask, bool)[None, :], -np.inf, logits)
    return _softmax_lastaxis(logits)
