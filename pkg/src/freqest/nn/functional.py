"""Differentiable ops: exactly the set the frequency networks need.

Layout conventions: sequences are ``[batch, channels, length]``; linear
weights are ``[out, in]``; conv kernels are ``[c_out, c_in, k]`` and
transposed-conv kernels ``[c_in, c_out, k]``.
"""

from __future__ import annotations

import numpy as np

from freqest.nn.tensor import Tensor


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise ValueError(msg)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``y = x @ weight.T + bias`` for ``x`` of shape ``[B, in]``."""
    _check(x.ndim == 2 and weight.ndim == 2, "linear expects 2-D input and weight")
    _check(x.shape[1] == weight.shape[1], f"linear: input width {x.shape[1]} != weight in-dim {weight.shape[1]}")
    out = x.data @ weight.data.T
    if bias is not None:
        _check(bias.shape == (weight.shape[0],), "linear: bias shape mismatch")
        out = out + bias.data
    xd, wd = x.data, weight.data

    def backward(g):
        gx = g @ wd if x.requires_grad else None
        gw = g.T @ xd if weight.requires_grad else None
        gb = g.sum(axis=0) if bias is not None and bias.requires_grad else None
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor.from_op(out, parents, backward)


def _channel_major(a: np.ndarray) -> np.ndarray:
    # [B, C, L] -> contiguous [C, B, L]; free when a is already a view of one
    return np.ascontiguousarray(a.transpose(1, 0, 2))


def _pad_circular(a: np.ndarray, pad: int) -> np.ndarray:
    L = a.shape[-1]
    if pad == 0:
        return np.ascontiguousarray(a)
    if pad <= L:
        return np.concatenate([a[..., L - pad :], a, a[..., :pad]], axis=-1)
    return a[..., np.arange(-pad, L + pad) % L]


def _fold_circular(ap: np.ndarray, pad: int, L: int) -> np.ndarray:
    """Adjoint of :func:`_pad_circular`: sum padded entries back onto the circle."""
    if pad == 0:
        return ap
    out = ap[..., pad : pad + L].copy()
    src = np.arange(-pad, L + pad) % L
    for i in list(range(pad)) + list(range(L + pad, L + 2 * pad)):
        out[..., src[i]] += ap[..., i]
    return out


def _gather_taps(ap: np.ndarray, K: int, stride: int, n_out: int) -> np.ndarray:
    """``cols[j, ..., l] = ap[..., l*stride + j]``, shape ``[K, *lead, n_out]``."""
    cols = np.empty((K,) + ap.shape[:-1] + (n_out,), dtype=ap.dtype)
    span = stride * (n_out - 1) + 1
    for j in range(K):
        cols[j] = ap[..., j : j + span : stride]
    return cols


def _scatter_taps(cols: np.ndarray, stride: int, padded_len: int) -> np.ndarray:
    """Adjoint of :func:`_gather_taps`."""
    K, n_out = cols.shape[0], cols.shape[-1]
    ap = np.zeros(cols.shape[1:-1] + (padded_len,), dtype=cols.dtype)
    span = stride * (n_out - 1) + 1
    for j in range(K):
        ap[..., j : j + span : stride] += cols[j]
    return ap


def conv1d_circular(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1) -> Tensor:
    """Cross-correlation over a circularly padded input.

    ``out[b, o, l] = sum_{c, j} w[o, c, j] * x[b, c, (l*stride + j - (k-1)/2) mod L]``
    """
    _check(x.ndim == 3 and weight.ndim == 3, "conv1d expects [B,C,L] input and [O,C,K] kernel")
    B, C, L = x.shape
    O, Cw, K = weight.shape
    _check(C == Cw, f"conv1d: input channels {C} != kernel channels {Cw}")
    _check(K % 2 == 1, "conv1d: kernel length must be odd")
    _check(stride >= 1 and L % stride == 0, f"conv1d: stride {stride} does not divide length {L}")
    if stride == 1:
        return _conv1d_circular_unit_stride(x, weight, bias)
    n_out = L // stride
    pad = (K - 1) // 2
    wd = weight.data
    # [O, K*C] with tap-major columns to match the gathered layout
    w2 = wd.transpose(0, 2, 1).reshape(O, K * C)
    xp = _pad_circular(_channel_major(x.data), pad)

    def im2col():
        return _gather_taps(xp, K, stride, n_out).reshape(K * C, B * n_out)

    out = w2 @ im2col()
    if bias is not None:
        _check(bias.shape == (O,), "conv1d: bias shape mismatch")
        out += bias.data[:, None]
    out = out.reshape(O, B, n_out).transpose(1, 0, 2)

    def backward(g):
        g2 = _channel_major(g).reshape(O, B * n_out)
        gw = gx = gb = None
        if weight.requires_grad:
            gw = (g2 @ im2col().T).reshape(O, K, C).transpose(0, 2, 1)
        if bias is not None and bias.requires_grad:
            gb = g2.sum(axis=1)
        if x.requires_grad:
            gcols = (w2.T @ g2).reshape(K, C, B, n_out)
            gx = _fold_circular(_scatter_taps(gcols, stride, L + 2 * pad), pad, L).transpose(1, 0, 2)
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor.from_op(out, parents, backward)


def _conv1d_circular_unit_stride(x: Tensor, weight: Tensor, bias: Tensor | None) -> Tensor:
    # The padded input is stored as [C, B*P] with P = L + 2*pad.  For tap j
    # the columns j .. j+T-1 of that buffer line up with every output
    # position at once (T = B*P - 2*pad), so each tap is a single GEMM on a
    # strided view; the 2*pad junk columns per sample are dropped afterwards.
    B, C, L = x.shape
    O, _, K = weight.shape
    pad = (K - 1) // 2
    P = L + 2 * pad
    T = B * P - 2 * pad
    wd = weight.data
    wt = np.ascontiguousarray(wd.transpose(2, 0, 1))  # [K, O, C]
    wtt = np.ascontiguousarray(wd.transpose(2, 1, 0))  # [K, C, O]
    flat = _pad_circular(x.data.transpose(1, 0, 2), pad).reshape(C, B * P)
    full = np.zeros((O, B * P), dtype=np.result_type(x.data, wd))
    acc = full[:, :T]
    for j in range(K):
        acc += wt[j] @ flat[:, j : j + T]
    if bias is not None:
        _check(bias.shape == (O,), "conv1d: bias shape mismatch")
        full += bias.data[:, None]
    out = full.reshape(O, B, P)[:, :, :L].transpose(1, 0, 2)

    def backward(g):
        gfull = np.zeros((O, B, P), dtype=g.dtype)
        gfull[:, :, :L] = g.transpose(1, 0, 2)
        gacc = gfull.reshape(O, B * P)[:, :T]
        gw = gx = gb = None
        if weight.requires_grad:
            gw = np.empty_like(wd)
            for j in range(K):
                gw[:, :, j] = gacc @ flat[:, j : j + T].T
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2))
        if x.requires_grad:
            gflat = np.zeros((C, B * P), dtype=g.dtype)
            for j in range(K):
                gflat[:, j : j + T] += wtt[j] @ gacc
            gx = _fold_circular(gflat.reshape(C, B, P), pad, L).transpose(1, 0, 2)
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor.from_op(out, parents, backward)


def conv_transpose1d_circular(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1) -> Tensor:
    """Adjoint of :func:`conv1d_circular`; maps length ``M`` to ``M * stride``.

    Each input sample scatters a copy of the kernel centred on position
    ``l * stride`` of the output, wrapping around the ends.
    """
    _check(x.ndim == 3 and weight.ndim == 3, "conv_transpose1d expects [B,C,M] input and [C,O,K] kernel")
    B, C, M = x.shape
    Cw, O, K = weight.shape
    _check(C == Cw, f"conv_transpose1d: input channels {C} != kernel channels {Cw}")
    _check(K % 2 == 1, "conv_transpose1d: kernel length must be odd")
    _check(stride >= 1, "conv_transpose1d: stride must be positive")
    L = M * stride
    pad = (K - 1) // 2
    wd = weight.data
    # [K*O, C]: row (j, o) holds w[:, o, j]
    w2 = wd.transpose(2, 1, 0).reshape(K * O, C)
    x2 = _channel_major(x.data).reshape(C, B * M)
    taps = (w2 @ x2).reshape(K, O, B, M)
    out = _fold_circular(_scatter_taps(taps, stride, L + 2 * pad), pad, L)
    if bias is not None:
        _check(bias.shape == (O,), "conv_transpose1d: bias shape mismatch")
        out += bias.data[:, None, None]
    out = out.transpose(1, 0, 2)

    def backward(g):
        gp = _pad_circular(_channel_major(g), pad)
        gtaps = _gather_taps(gp, K, stride, M).reshape(K * O, B * M)
        gx = gw = gb = None
        if x.requires_grad:
            gx = (w2.T @ gtaps).reshape(C, B, M).transpose(1, 0, 2)
        if weight.requires_grad:
            gw = (gtaps @ x2.T).reshape(K, O, C).transpose(2, 1, 0)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2))
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor.from_op(out, parents, backward)


def batch_norm1d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel normalization over ``(batch, length)``.

    In training mode the batch statistics are used and the running buffers
    are updated in place as ``r <- 0.9 r + 0.1 batch`` (unbiased variance
    for the running estimate).  In eval mode the running buffers are used.
    """
    _check(x.ndim == 3, "batch_norm1d expects [B,C,L] input")
    B, C, L = x.shape
    _check(gamma.shape == (C,) and beta.shape == (C,), "batch_norm1d: affine shape mismatch")
    xd = x.data
    gd = gamma.data[None, :, None]
    if training:
        if B < 2:
            raise ValueError("batch_norm1d: training mode needs batch size >= 2")
        n = B * L
        mean = xd.mean(axis=(0, 2))
        var = xd.var(axis=(0, 2))
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var * (n / (n - 1))
    else:
        mean, var = running_mean, running_var
    inv_std = (1.0 / np.sqrt(var + eps)).astype(xd.dtype)
    xhat = (xd - mean.astype(xd.dtype)[None, :, None]) * inv_std[None, :, None]
    out = xhat * gd + beta.data[None, :, None]

    def backward(g):
        ggamma = (g * xhat).sum(axis=(0, 2)) if gamma.requires_grad else None
        gbeta = g.sum(axis=(0, 2)) if beta.requires_grad else None
        gx = None
        if x.requires_grad:
            gxhat = g * gd
            if training:
                n = B * L
                s1 = gxhat.sum(axis=(0, 2), keepdims=True)
                s2 = (gxhat * xhat).sum(axis=(0, 2), keepdims=True)
                gx = (inv_std[None, :, None] / n) * (n * gxhat - s1 - xhat * s2)
            else:
                gx = gxhat * inv_std[None, :, None]
        return gx, ggamma, gbeta

    return Tensor.from_op(out, (x, gamma, beta), backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor.from_op(x.data * mask, (x,), lambda g: (g * mask,))


def reshape(x: Tensor, shape: tuple) -> Tensor:
    src = x.shape
    return Tensor.from_op(x.data.reshape(shape), (x,), lambda g: (g.reshape(src),))


def mse_loss(pred: Tensor, target) -> Tensor:
    """Mean of squared differences; ``target`` is treated as a constant."""
    t = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=pred.dtype)
    _check(pred.shape == t.shape, f"mse_loss: shape {pred.shape} != {t.shape}")
    diff = pred.data - t
    loss = np.asarray(np.mean(diff * diff), dtype=pred.dtype)
    scale = 2.0 / diff.size

    def backward(g):
        return (g * scale * diff,)

    return Tensor.from_op(loss, (pred,), backward)


def dot_loss(pred: Tensor, weights: np.ndarray) -> Tensor:
    """``sum(pred * weights)``; a linear probe used by gradient checks."""
    w = np.asarray(weights, dtype=pred.dtype)
    _check(pred.shape == w.shape, "dot_loss: shape mismatch")
    return Tensor.from_op(np.asarray(np.sum(pred.data * w)), (pred,), lambda g: (g * w,))
