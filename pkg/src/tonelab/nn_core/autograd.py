"""Minimal reverse-mode autodiff over numpy arrays.

Only the operations the tone classifier needs: dense algebra, 2-D
convolution, masked batch norm, masked statistics pooling, scatter, and
fused softmax cross-entropy. Reductions that feed statistics accumulate in
float64 so results do not depend on how much zero padding a batch carries.

Masking convention: "mask" arguments are plain ndarrays (not Tensors) with
1.0 at valid positions and 0.0 at padding; ops that can leak values into the
padded region multiply it back to exact zero.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import BadLabel, EmptySegment, ShapeError

STATS_POOL_EPS = 1e-5


class Tensor:
    """An ndarray plus the closure that routes gradients to its parents."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad=False, parents=(), backward_fn=None):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents
        self._backward_fn = backward_fn

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def backward(self):
        """Backpropagate from a scalar root."""
        if self.data.size != 1:
            raise ShapeError("backward() requires a scalar root")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward_fn is None or node.grad is None:
                continue
            for parent, g in zip(node._parents, node._backward_fn(node.grad)):
                if g is None or not parent.requires_grad:
                    continue
                parent.grad = g if parent.grad is None else parent.grad + g


def param(data) -> Tensor:
    return Tensor(np.asarray(data), requires_grad=True)


def constant(data) -> Tensor:
    return Tensor(np.asarray(data))


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def backward_fn(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return Tensor(out, parents=(a, b), backward_fn=backward_fn)


def matmul(x: Tensor, w: Tensor) -> Tensor:
    out = x.data @ w.data

    def backward_fn(g):
        dx = g @ w.data.T if x.requires_grad else None
        dw = x.data.T @ g if w.requires_grad else None
        return dx, dw

    return Tensor(out, parents=(x, w), backward_fn=backward_fn)


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)

    def backward_fn(g):
        return (g * (x.data > 0),)

    return Tensor(out, parents=(x,), backward_fn=backward_fn)


def mul_const(x: Tensor, c) -> Tensor:
    c = np.asarray(c)
    out = x.data * c

    def backward_fn(g):
        return (_unbroadcast(g * c, x.data.shape),)

    return Tensor(out, parents=(x,), backward_fn=backward_fn)


def reshape(x: Tensor, shape) -> Tensor:
    out = x.data.reshape(shape)

    def backward_fn(g):
        return (g.reshape(x.data.shape),)

    return Tensor(out, parents=(x,), backward_fn=backward_fn)


def transpose(x: Tensor, axes) -> Tensor:
    out = np.ascontiguousarray(x.data.transpose(axes))
    inverse = np.argsort(axes)

    def backward_fn(g):
        return (g.transpose(inverse),)

    return Tensor(out, parents=(x,), backward_fn=backward_fn)


def concat(tensors: list[Tensor], axis: int) -> Tensor:
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward_fn(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor(out, parents=tuple(tensors), backward_fn=backward_fn)


def sum_all(x: Tensor) -> Tensor:
    out = np.asarray(x.data.sum())

    def backward_fn(g):
        return (np.broadcast_to(g, x.data.shape) * np.ones_like(x.data),)

    return Tensor(out, parents=(x,), backward_fn=backward_fn)


def conv2d(x: Tensor, w: Tensor, stride=(1, 1), padding=(1, 1)) -> Tensor:
    """2-D cross-correlation, NCHW x [Cout, Cin, kh, kw], zero padding.

    Implemented as slice-gathered im2col plus batched matmul; the column
    matrix is kept for the backward pass (dW is one GEMM, dX folds the
    column gradients back with kh*kw strided adds).
    """
    sh, sw = stride
    ph, pw = padding
    xd, wd = x.data, w.data
    n, c_in, h, wid = xd.shape
    c_out, c_in2, kh, kw = wd.shape
    if c_in != c_in2:
        raise ShapeError(f"conv2d: input has {c_in} channels, kernel expects {c_in2}")
    h_out = (h + 2 * ph - kh) // sh + 1
    w_out = (wid + 2 * pw - kw) // sw + 1
    hw = h_out * w_out

    xp = np.pad(xd, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else xd
    cols = np.empty((n, c_in * kh * kw, hw), dtype=xd.dtype)
    cols5 = cols.reshape(n, c_in, kh * kw, h_out, w_out)
    k = 0
    for ki in range(kh):
        for kj in range(kw):
            cols5[:, :, k] = xp[:, :, ki : ki + sh * h_out : sh, kj : kj + sw * w_out : sw]
            k += 1
    wmat = wd.reshape(c_out, c_in * kh * kw)
    out = np.matmul(wmat, cols).reshape(n, c_out, h_out, w_out)

    def backward_fn(g):
        g3 = g.reshape(n, c_out, hw)
        dw = dx = None
        if w.requires_grad:
            dw = np.matmul(g3, cols.transpose(0, 2, 1)).sum(axis=0)
            dw = dw.reshape(wd.shape).astype(wd.dtype, copy=False)
        if x.requires_grad:
            dcols = np.matmul(wmat.T, g3).reshape(n, c_in, kh * kw, h_out, w_out)
            dxp = np.zeros_like(xp)
            k2 = 0
            for ki in range(kh):
                for kj in range(kw):
                    dxp[:, :, ki : ki + sh * h_out : sh, kj : kj + sw * w_out : sw] += (
                        dcols[:, :, k2]
                    )
                    k2 += 1
            dx = dxp[:, :, ph : ph + h, pw : pw + wid] if (ph or pw) else dxp
        return dx, dw

    return Tensor(out, parents=(x, w), backward_fn=backward_fn)


def batchnorm2d_masked(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    mask: np.ndarray,
    running: dict,
    train: bool,
    momentum: float = 0.9,
    eps: float = 1e-5,
) -> Tensor:
    """Batch norm over (batch, H, W) with statistics restricted to ``mask``.

    ``mask`` is [N, 1, H, 1]; padded positions neither enter the statistics
    nor survive in the output (which is re-multiplied by the mask). In train
    mode the running stats are updated in place with ``momentum`` weight on
    the old value.
    """
    xd = x.data
    c = xd.shape[1]
    f = xd.shape[3]
    shape_c = (1, c, 1, 1)

    if train:
        cnt = float(mask.sum() * f)
        if cnt <= 0:
            raise EmptySegment("batch norm over zero valid positions")
        mean64 = (xd * mask).sum(axis=(0, 2, 3), dtype=np.float64) / cnt
        mean = mean64.astype(xd.dtype)
        diff = xd - mean.reshape(shape_c)
        var64 = (diff * diff * mask).sum(axis=(0, 2, 3), dtype=np.float64) / cnt
        var = var64.astype(xd.dtype)
        inv_std = 1.0 / np.sqrt(var + eps)
        xhat = diff * inv_std.reshape(shape_c)
        out = (gamma.data.reshape(shape_c) * xhat + beta.data.reshape(shape_c)) * mask

        running["mean"] = momentum * running["mean"] + (1 - momentum) * mean64
        running["var"] = momentum * running["var"] + (1 - momentum) * var64

        def backward_fn(g):
            dy = g * mask
            dbeta = dy.sum(axis=(0, 2, 3), dtype=np.float64).astype(beta.data.dtype)
            dgamma = (dy * xhat).sum(axis=(0, 2, 3), dtype=np.float64).astype(gamma.data.dtype)
            dx = None
            if x.requires_grad:
                dxhat = dy * gamma.data.reshape(shape_c)
                inv = inv_std.reshape(shape_c)
                dvar = (dxhat * diff).sum(axis=(0, 2, 3), dtype=np.float64) * (
                    -0.5
                ) * (inv_std.astype(np.float64) ** 3)
                sum_diff = (diff * mask).sum(axis=(0, 2, 3), dtype=np.float64)
                dmean = -(dxhat * mask).sum(axis=(0, 2, 3), dtype=np.float64) * inv_std.astype(
                    np.float64
                ) + dvar * (-2.0 / cnt) * sum_diff
                dx = (
                    dxhat * inv
                    + (2.0 / cnt) * dvar.astype(xd.dtype).reshape(shape_c) * diff
                    + (dmean / cnt).astype(xd.dtype).reshape(shape_c)
                ) * mask
            return dx, dgamma, dbeta

    else:
        mean = running["mean"].astype(xd.dtype)
        inv_std = (1.0 / np.sqrt(running["var"] + eps)).astype(xd.dtype)
        xhat = (xd - mean.reshape(shape_c)) * inv_std.reshape(shape_c)
        out = (gamma.data.reshape(shape_c) * xhat + beta.data.reshape(shape_c)) * mask

        def backward_fn(g):
            dy = g * mask
            dbeta = dy.sum(axis=(0, 2, 3), dtype=np.float64).astype(beta.data.dtype)
            dgamma = (dy * xhat).sum(axis=(0, 2, 3), dtype=np.float64).astype(gamma.data.dtype)
            dx = dy * (gamma.data * inv_std).reshape(shape_c) if x.requires_grad else None
            return dx, dgamma, dbeta

    return Tensor(out, parents=(x, gamma, beta), backward_fn=backward_fn)


def stats_pool_masked(x: Tensor, lengths: np.ndarray, eps: float = STATS_POOL_EPS) -> Tensor:
    """Per-row masked mean and std over time: [K, T, C] -> [K, 2C].

    Row k pools its first ``lengths[k]`` time steps; std is the population
    standard deviation with ``eps`` added inside the square root.
    """
    xd = x.data
    k, t, _ = xd.shape
    lengths = np.asarray(lengths)
    if np.any(lengths < 1):
        raise EmptySegment("statistics pooling needs >= 1 valid frame per row")
    if np.any(lengths > t):
        raise ShapeError("valid frame count exceeds padded length")

    mask = (np.arange(t)[None, :] < lengths[:, None]).astype(xd.dtype)[:, :, None]
    cnt64 = lengths.astype(np.float64)[:, None]
    mean = ((xd * mask).sum(axis=1, dtype=np.float64) / cnt64).astype(xd.dtype)
    diff = xd - mean[:, None, :]
    var = ((diff * diff * mask).sum(axis=1, dtype=np.float64) / cnt64).astype(xd.dtype)
    std = np.sqrt(var + np.asarray(eps, dtype=xd.dtype))
    out = np.concatenate([mean, std], axis=1)

    def backward_fn(g):
        gm, gs = g[:, : xd.shape[2]], g[:, xd.shape[2] :]
        cnt = cnt64.astype(xd.dtype)[:, :, None]
        dx = (gm[:, None, :] + (gs / std)[:, None, :] * diff) * mask / cnt
        return (dx,)

    return Tensor(out, parents=(x,), backward_fn=backward_fn)


def scatter_rows(x: Tensor, indices: np.ndarray, n_rows: int) -> Tensor:
    """Place rows of ``x`` at ``indices`` in an otherwise-zero [n_rows, D]."""
    out = np.zeros((n_rows, x.data.shape[1]), dtype=x.data.dtype)
    out[indices] = x.data

    def backward_fn(g):
        return (g[indices],)

    return Tensor(out, parents=(x,), backward_fn=backward_fn)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean softmax cross-entropy, accumulated in float64."""
    labels = np.asarray(labels)
    n, n_classes = logits.data.shape
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} does not match batch {n}")
    if np.any(labels < 0) or np.any(labels >= n_classes):
        raise BadLabel(f"labels must lie in [0, {n_classes})")

    z = logits.data.astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1, keepdims=True))
    log_probs = z - log_norm
    loss = -log_probs[np.arange(n), labels].mean()

    def backward_fn(g):
        probs = np.exp(log_probs)
        probs[np.arange(n), labels] -= 1.0
        return ((probs * (float(g) / n)).astype(logits.data.dtype),)

    return Tensor(np.asarray(loss), parents=(logits,), backward_fn=backward_fn)
