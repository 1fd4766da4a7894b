"""Differentiable image kernels: convolution, pooling, resampling, batch norm.

All kernels take and return :class:`~dunp.autodiff.Tensor` in NCHW layout
and register closure backward rules on the graph.  Convolution supports
"same" zero padding only; the total pad per axis is
``(out - 1) * stride + effective_extent - input`` clamped at zero, with
``effective_extent = dilation * (k - 1) + 1``, split floor-left /
ceil-right.  Output extent is ``ceil(input / stride)``.
"""
from __future__ import annotations

import numpy as np

from .autodiff import Tensor, accumulate_grad, amax, make, reshape
from .errors import ConfigurationError


def _same_geometry(size: int, stride: int, k: int, dilation: int):
    eff = dilation * (k - 1) + 1
    out = -(-size // stride)
    total = max((out - 1) * stride + eff - size, 0)
    lo = total // 2
    return out, lo, total - lo


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1, dilation: int = 1) -> Tensor:
    """2-d cross-correlation with "same" zero padding.

    x: (N, Cin, H, W); w: (Cout, Cin, kh, kw); b: (Cout,).
    Kernel taps of the padded input are gathered into a column matrix
    so forward and both backward contractions are single matmuls; the
    scatter back to input positions reuses the same tap slices.
    """
    if x.ndim != 4:
        raise ConfigurationError(f"conv2d expects NCHW input, got shape {x.shape}")
    if w.ndim != 4:
        raise ConfigurationError(f"conv2d expects OIHW kernel, got shape {w.shape}")
    n, cin, h, wdt = x.shape
    cout, cin_w, kh, kw = w.shape
    if cin_w != cin:
        raise ConfigurationError(
            f"conv2d channel mismatch: input has {cin} channels, kernel expects {cin_w}")
    if b.shape != (cout,):
        raise ConfigurationError(
            f"conv2d bias shape {b.shape} does not match {cout} output channels")
    if stride < 1 or dilation < 1:
        raise ConfigurationError(
            f"conv2d stride and dilation must be >= 1, got {stride}, {dilation}")

    hout, ph_lo, ph_hi = _same_geometry(h, stride, kh, dilation)
    wout, pw_lo, pw_hi = _same_geometry(wdt, stride, kw, dilation)
    if ph_lo or ph_hi or pw_lo or pw_hi:
        xp = np.pad(x.data, ((0, 0), (0, 0), (ph_lo, ph_hi), (pw_lo, pw_hi)))
    else:
        xp = x.data
    spatial = hout * wout

    def tap(ki, kj):
        return (slice(None), slice(None),
                slice(ki * dilation, ki * dilation + stride * (hout - 1) + 1, stride),
                slice(kj * dilation, kj * dilation + stride * (wout - 1) + 1, stride))

    # gather once, contract once: cols rows are tap-major, channel-minor
    if kh == 1 and kw == 1:
        cols = np.ascontiguousarray(xp[tap(0, 0)]).reshape(n, cin, spatial)
    else:
        cols = np.empty((n, kh * kw * cin, spatial), dtype=x.data.dtype)
        for ki in range(kh):
            for kj in range(kw):
                t = ki * kw + kj
                cols[:, t * cin:(t + 1) * cin] = xp[tap(ki, kj)].reshape(n, cin, spatial)
    w2d = np.ascontiguousarray(w.data.transpose(0, 2, 3, 1)).reshape(cout, kh * kw * cin)
    out_data = np.matmul(w2d, cols).reshape(n, cout, hout, wout)
    out_data += b.data[None, :, None, None]

    def bw(g):
        g2d = g.reshape(n, cout, spatial)
        if x.requires_grad:
            gcols = np.matmul(w2d.T, g2d)
            gxp = np.zeros((n, cin, h + ph_lo + ph_hi, wdt + pw_lo + pw_hi),
                           dtype=x.data.dtype)
            for ki in range(kh):
                for kj in range(kw):
                    t = ki * kw + kj
                    gxp[tap(ki, kj)] += gcols[:, t * cin:(t + 1) * cin].reshape(
                        n, cin, hout, wout)
            accumulate_grad(x, np.ascontiguousarray(
                gxp[:, :, ph_lo:ph_lo + h, pw_lo:pw_lo + wdt]))
        if w.requires_grad:
            gw2d = np.matmul(g2d, cols.transpose(0, 2, 1)).sum(axis=0)
            accumulate_grad(w, np.ascontiguousarray(
                gw2d.reshape(cout, kh, kw, cin).transpose(0, 3, 1, 2)))
        accumulate_grad(b, g.sum(axis=(0, 2, 3)))

    return make(out_data, (x, w, b), bw, "conv2d")


def maxpool2d(x: Tensor) -> Tensor:
    """2x2 max pooling, stride 2; even extents required.

    Ties route the gradient to the first maximum in row-major window
    order.
    """
    if x.ndim != 4:
        raise ConfigurationError(f"maxpool2d expects NCHW input, got shape {x.shape}")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ConfigurationError(
            f"maxpool2d needs even spatial extents, got {h}x{w}")
    win = (x.data.reshape(n, c, h // 2, 2, w // 2, 2)
           .transpose(0, 1, 2, 4, 3, 5)
           .reshape(n, c, h // 2, w // 2, 4))
    idx = win.argmax(axis=4)
    out_data = np.take_along_axis(win, idx[..., None], axis=4)[..., 0]

    def bw(g):
        gwin = np.zeros_like(win)
        np.put_along_axis(gwin, idx[..., None], g[..., None], axis=4)
        gx = (gwin.reshape(n, c, h // 2, w // 2, 2, 2)
              .transpose(0, 1, 2, 4, 3, 5)
              .reshape(n, c, h, w))
        accumulate_grad(x, gx)

    return make(out_data, (x,), bw, "maxpool2d")


def global_avg_pool(x: Tensor) -> Tensor:
    """(N, C, H, W) -> (N, C) spatial mean."""
    if x.ndim != 4:
        raise ConfigurationError(f"global_avg_pool expects NCHW input, got shape {x.shape}")
    n, c, h, w = x.shape
    out_data = x.data.mean(axis=(2, 3))
    inv = 1.0 / (h * w)

    def bw(g):
        accumulate_grad(x, np.broadcast_to(g[:, :, None, None] * inv, x.shape)
                        .astype(x.data.dtype, copy=False))

    return make(out_data, (x,), bw, "global_avg_pool")


def global_max_pool(x: Tensor) -> Tensor:
    """(N, C, H, W) -> (N, C) spatial max; first-occurrence tie rule."""
    if x.ndim != 4:
        raise ConfigurationError(f"global_max_pool expects NCHW input, got shape {x.shape}")
    n, c, h, w = x.shape
    flat = reshape(x, (n, c, h * w))
    return amax(flat, axis=2)


_UP2_CACHE: dict = {}


def _up2_matrix(size: int, dtype) -> np.ndarray:
    """(2*size, size) bilinear interpolation matrix, align_corners=False.

    Source coordinate of output i is (i + 0.5) / 2 - 0.5; taps clamp at
    the borders, which reproduces edge replication.
    """
    key = (size, np.dtype(dtype).char)
    got = _UP2_CACHE.get(key)
    if got is not None:
        return got
    src = (np.arange(2 * size, dtype=np.float64) + 0.5) / 2.0 - 0.5
    i0 = np.floor(src).astype(int)
    frac = src - i0
    lo = np.clip(i0, 0, size - 1)
    hi = np.clip(i0 + 1, 0, size - 1)
    u = np.zeros((2 * size, size), dtype=np.float64)
    rows = np.arange(2 * size)
    np.add.at(u, (rows, lo), 1.0 - frac)
    np.add.at(u, (rows, hi), frac)
    u = u.astype(dtype)
    _UP2_CACHE[key] = u
    return u


def upsample_bilinear2x(x: Tensor) -> Tensor:
    """Double both spatial extents with bilinear interpolation.

    Implemented as two matrix products, out = U_h @ x @ U_w^T, so the
    backward rule is the exact transpose.
    """
    if x.ndim != 4:
        raise ConfigurationError(f"upsample expects NCHW input, got shape {x.shape}")
    _, _, h, w = x.shape
    uh = _up2_matrix(h, x.data.dtype)
    uw = _up2_matrix(w, x.data.dtype)
    out_data = np.matmul(np.matmul(uh, x.data), uw.T)

    def bw(g):
        accumulate_grad(x, np.matmul(uh.T, np.matmul(g, uw)))

    return make(out_data, (x,), bw, "upsample_bilinear2x")


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor,
               running_mean: np.ndarray, running_var: np.ndarray,
               training: bool, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Per-channel batch normalization over (N, H, W).

    Training mode normalizes with batch statistics and updates the
    running buffers in place (biased variance, momentum blend); eval
    mode normalizes with the buffers.  eps sits inside the square root.
    """
    if x.ndim != 4:
        raise ConfigurationError(f"batch_norm expects NCHW input, got shape {x.shape}")
    n, c, h, w = x.shape
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ConfigurationError(
            f"batch_norm affine shapes {gamma.shape}/{beta.shape} do not match {c} channels")
    if training:
        mu = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mu = running_mean.astype(x.data.dtype, copy=False)
        var = running_var.astype(x.data.dtype, copy=False)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu[None, :, None, None]) * inv[None, :, None, None]
    out_data = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]

    def bw(g):
        accumulate_grad(gamma, (g * xhat).sum(axis=(0, 2, 3)))
        accumulate_grad(beta, g.sum(axis=(0, 2, 3)))
        if not x.requires_grad:
            return
        gamma_b = gamma.data[None, :, None, None]
        inv_b = inv[None, :, None, None]
        if training:
            dxhat = g * gamma_b
            m1 = dxhat.mean(axis=(0, 2, 3), keepdims=True)
            m2 = (dxhat * xhat).mean(axis=(0, 2, 3), keepdims=True)
            accumulate_grad(x, inv_b * (dxhat - m1 - xhat * m2))
        else:
            accumulate_grad(x, g * gamma_b * inv_b)

    return make(out_data, (x, gamma, beta), bw, "batch_norm")


def concat_channels(xs) -> Tensor:
    """Concatenate along the channel axis; N, H, W must agree."""
    xs = list(xs)
    if not xs:
        raise ConfigurationError("concat_channels needs at least one tensor")
    first = xs[0]
    for t in xs[1:]:
        if t.ndim != 4 or first.ndim != 4:
            raise ConfigurationError("concat_channels expects NCHW tensors")
        if t.shape[0] != first.shape[0]:
            raise ConfigurationError(
                f"concat_channels batch mismatch: {first.shape[0]} vs {t.shape[0]}")
        if t.shape[2:] != first.shape[2:]:
            raise ConfigurationError(
                f"concat_channels spatial mismatch: {first.shape[2:]} vs {t.shape[2:]}")
    out_data = np.concatenate([t.data for t in xs], axis=1)
    offsets = np.cumsum([0] + [t.shape[1] for t in xs])

    def bw(g):
        for t, lo, hi in zip(xs, offsets[:-1], offsets[1:]):
            accumulate_grad(t, g[:, lo:hi])

    return make(out_data, tuple(xs), bw, "concat_channels")
