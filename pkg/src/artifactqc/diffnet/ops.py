"""Kernel registry: forward evaluation and vector-Jacobian rules per op.

Each entry maps an op name to (forward, backward).  ``forward`` gets the
node and the resolved input arrays and returns the output value, or a
(value, aux) pair when the backward pass can reuse expensive
intermediates (conv2d caches its im2col buffer).  ``backward`` gets the
node, the output gradient, the cached output value, the aux object and
the input arrays, and returns one gradient per input.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcasted gradient back to the original operand shape."""
    grad = np.asarray(grad)
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# --- dense --------------------------------------------------------------

def _dense_fwd(node, x, w, b):
    if x.ndim != 2 or w.ndim != 2 or b.ndim != 1:
        raise ShapeMismatch(
            f"dense expects x (B,K), w (O,K), b (O,); got {x.shape}, {w.shape}, {b.shape}"
        )
    if x.shape[1] != w.shape[1] or w.shape[0] != b.shape[0]:
        raise ShapeMismatch(f"dense shapes incompatible: x {x.shape}, w {w.shape}, b {b.shape}")
    return x @ w.T + b


def _dense_bwd(node, g, out, aux, x, w, b):
    return [g @ w, g.T @ x, g.sum(axis=0)]


# --- conv2d -------------------------------------------------------------

def _conv_out_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def _im2col(x, kh, kw, stride, pad):
    b, c, h, w = x.shape
    ho = _conv_out_size(h, kh, stride, pad)
    wo = _conv_out_size(w, kw, stride, pad)
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = np.empty((b, c, kh, kw, ho, wo), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = x[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride]
    return cols.reshape(b, c * kh * kw, ho * wo), ho, wo


def _col2im(gcols, xshape, kh, kw, stride, pad):
    b, c, h, w = xshape
    ho = _conv_out_size(h, kh, stride, pad)
    wo = _conv_out_size(w, kw, stride, pad)
    g = gcols.reshape(b, c, kh, kw, ho, wo)
    gx = np.zeros((b, c, h + 2 * pad, w + 2 * pad), dtype=gcols.dtype)
    for i in range(kh):
        for j in range(kw):
            gx[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += g[:, :, i, j]
    if pad:
        gx = gx[:, :, pad:pad + h, pad:pad + w]
    return gx


def _conv2d_fwd(node, x, w, b):
    if x.ndim != 4 or w.ndim != 4 or b.ndim != 1:
        raise ShapeMismatch(
            f"conv2d expects x (B,C,H,W), w (O,C,kh,kw), b (O,); got {x.shape}, {w.shape}, {b.shape}"
        )
    if x.shape[1] != w.shape[1] or w.shape[0] != b.shape[0]:
        raise ShapeMismatch(f"conv2d channels incompatible: x {x.shape}, w {w.shape}")
    stride, pad = node.attrs["stride"], node.attrs["pad"]
    o, _, kh, kw = w.shape
    cols, ho, wo = _im2col(x, kh, kw, stride, pad)
    y = w.reshape(o, -1) @ cols + b[:, None]
    return y.reshape(x.shape[0], o, ho, wo), cols


def _conv2d_bwd(node, g, out, cols, x, w, b):
    stride, pad = node.attrs["stride"], node.attrs["pad"]
    o, _, kh, kw = w.shape
    gflat = np.ascontiguousarray(g.reshape(x.shape[0], o, -1))
    gb = gflat.sum(axis=(0, 2))
    gw = np.matmul(gflat, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)
    gcols = w.reshape(o, -1).T @ gflat
    gx = _col2im(gcols, x.shape, kh, kw, stride, pad)
    return [gx, gw, gb]


# --- activations / elementwise -------------------------------------------

def _relu_fwd(node, x):
    return np.maximum(x, 0.0)


def _relu_bwd(node, g, out, aux, x):
    return [g * (x > 0.0)]


def _leaky_relu_fwd(node, x):
    return np.where(x > 0.0, x, node.attrs["alpha"] * x)


def _leaky_relu_bwd(node, g, out, aux, x):
    return [g * np.where(x > 0.0, 1.0, node.attrs["alpha"])]


def _exp_fwd(node, x):
    return np.exp(x)


def _exp_bwd(node, g, out, aux, x):
    return [g * out]


def _log_fwd(node, x):
    return np.log(x)


def _log_bwd(node, g, out, aux, x):
    return [g / x]


def _clip_fwd(node, x):
    return np.clip(x, node.attrs["lo"], node.attrs["hi"])


def _clip_bwd(node, g, out, aux, x):
    inside = (x > node.attrs["lo"]) & (x < node.attrs["hi"])
    return [g * inside]


def _affine_fwd(node, x):
    return node.attrs["scale"] * x + node.attrs["shift"]


def _affine_bwd(node, g, out, aux, x):
    return [g * node.attrs["scale"]]


def _binary_fwd(fn):
    def run(node, a, b):
        try:
            return fn(a, b)
        except ValueError as exc:
            raise ShapeMismatch(f"{node.op}: operands {a.shape} and {b.shape}") from exc
    return run


def _add_bwd(node, g, out, aux, a, b):
    return [_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)]


def _sub_bwd(node, g, out, aux, a, b):
    return [_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)]


def _mul_bwd(node, g, out, aux, a, b):
    return [_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)]


# --- shape manipulation ---------------------------------------------------

def _concat_fwd(node, *xs):
    return np.concatenate(xs, axis=node.attrs["axis"])


def _concat_bwd(node, g, out, aux, *xs):
    axis = node.attrs["axis"]
    sizes = [x.shape[axis] for x in xs]
    splits = np.cumsum(sizes)[:-1]
    return list(np.split(g, splits, axis=axis))


def _slice_fwd(node, x):
    axis, start, stop = node.attrs["axis"], node.attrs["start"], node.attrs["stop"]
    slicer = [slice(None)] * x.ndim
    slicer[axis] = slice(start, stop)
    return x[tuple(slicer)]


def _slice_bwd(node, g, out, aux, x):
    axis, start, stop = node.attrs["axis"], node.attrs["start"], node.attrs["stop"]
    gx = np.zeros_like(x)
    slicer = [slice(None)] * x.ndim
    slicer[axis] = slice(start, stop)
    gx[tuple(slicer)] = g
    return [gx]


# --- pooling / reductions -------------------------------------------------

def _gap_fwd(node, x):
    if x.ndim != 4:
        raise ShapeMismatch(f"global-average-pool expects (B,C,H,W), got {x.shape}")
    return x.mean(axis=(2, 3))


def _gap_bwd(node, g, out, aux, x):
    _, _, h, w = x.shape
    return [np.broadcast_to(g[:, :, None, None], x.shape) / (h * w)]


def _sum_fwd(node, x):
    return np.sum(x, axis=node.attrs["axis"])


def _sum_bwd(node, g, out, aux, x):
    axis = node.attrs["axis"]
    if axis is None:
        return [np.broadcast_to(g, x.shape).copy()]
    g = np.expand_dims(g, axis)
    return [np.broadcast_to(g, x.shape).copy()]


def _mean_fwd(node, x):
    return np.mean(x, axis=node.attrs["axis"])


def _mean_bwd(node, g, out, aux, x):
    axis = node.attrs["axis"]
    if axis is None:
        return [np.broadcast_to(g, x.shape) / x.size]
    g = np.expand_dims(g, axis)
    return [np.broadcast_to(g, x.shape) / x.shape[axis]]


def _logsumexp_fwd(node, x):
    m = np.max(x)
    return m + np.log(np.sum(np.exp(x - m)))


def _logsumexp_bwd(node, g, out, aux, x):
    return [g * np.exp(x - out)]


def _const_fwd(node):
    return np.asarray(node.attrs["value"], dtype=np.float64)


OPS: dict[str, tuple] = {
    "dense": (_dense_fwd, _dense_bwd),
    "conv2d": (_conv2d_fwd, _conv2d_bwd),
    "relu": (_relu_fwd, _relu_bwd),
    "leaky_relu": (_leaky_relu_fwd, _leaky_relu_bwd),
    "exp": (_exp_fwd, _exp_bwd),
    "log": (_log_fwd, _log_bwd),
    "clip": (_clip_fwd, _clip_bwd),
    "affine": (_affine_fwd, _affine_bwd),
    "add": (_binary_fwd(np.add), _add_bwd),
    "sub": (_binary_fwd(np.subtract), _sub_bwd),
    "mul": (_binary_fwd(np.multiply), _mul_bwd),
    "concat": (_concat_fwd, _concat_bwd),
    "slice": (_slice_fwd, _slice_bwd),
    "gap": (_gap_fwd, _gap_bwd),
    "sum": (_sum_fwd, _sum_bwd),
    "mean": (_mean_fwd, _mean_bwd),
    "logsumexp": (_logsumexp_fwd, _logsumexp_bwd),
    "const": (_const_fwd, None),
}
