"""Differentiable network ops used by the slip detector.

Spatial and temporal ops accept an optional leading batch axis: ``conv1d_causal``
takes ``(C, T)`` or ``(N, C, T)``, ``conv2d``/``maxpool2d`` take ``(C, H, W)`` or
``(N, C, H, W)``.  All arithmetic is float64.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ConfigError, DimensionError, ValidationError
from .tensor import Tensor, _as_tensor


def _pair(v) -> tuple[int, int]:
    if isinstance(v, (int, np.integer)):
        return int(v), int(v)
    a, b = v
    return int(a), int(b)


def _batched(x: Tensor, core_ndim: int, op: str) -> tuple[np.ndarray, bool]:
    if x.ndim == core_ndim:
        return x.data[None], True
    if x.ndim == core_ndim + 1:
        return x.data, False
    raise DimensionError(f"{op}: expected {core_ndim}-D or batched input, got shape {x.shape}")


def conv1d_causal(x: Tensor, w: Tensor, b: Tensor, dilation: int = 1) -> Tensor:
    """Dilated causal convolution with left zero padding of ``(k - 1) * dilation``.

    ``y[c, t] = b[c] + sum_i sum_ci w[c, ci, i] * x[ci, t - i * dilation]``; tap 0 is
    the current frame, so output length equals input length.
    """
    if w.ndim != 3:
        raise DimensionError(f"conv1d_causal: weight must be (C_out, C_in, k), got {w.shape}")
    c_out, c_in, k = w.shape
    if k < 1 or dilation < 1:
        raise ConfigError(f"conv1d_causal: kernel size {k} and dilation {dilation} must be >= 1")
    xd, squeeze = _batched(x, 2, "conv1d_causal")
    n, cx, t_len = xd.shape
    if cx != c_in:
        raise DimensionError(f"conv1d_causal: input has {cx} channels, weight expects {c_in}")
    if b.shape != (c_out,):
        raise DimensionError(f"conv1d_causal: bias shape {b.shape} != ({c_out},)")

    pad = (k - 1) * dilation
    xp = np.concatenate([np.zeros((n, c_in, pad)), xd], axis=2) if pad else xd
    # cols[n, ci, i, t] = x[n, ci, t - i*d]
    cols = np.stack([xp[:, :, pad - i * dilation: pad - i * dilation + t_len] for i in range(k)], axis=2)
    cols2 = cols.transpose(0, 3, 1, 2).reshape(n * t_len, c_in * k)
    w2 = w.data.reshape(c_out, c_in * k)
    y = (cols2 @ w2.T).reshape(n, t_len, c_out).transpose(0, 2, 1) + b.data[None, :, None]

    def grad_fn(g):
        g = g[None] if squeeze else g
        g2 = g.transpose(0, 2, 1).reshape(n * t_len, c_out)
        dw = (g2.T @ cols2).reshape(w.shape)
        db = g.sum(axis=(0, 2))
        dx = None
        if x.requires_grad:
            dcols = (g2 @ w2).reshape(n, t_len, c_in, k).transpose(0, 2, 3, 1)
            dxp = np.zeros((n, c_in, t_len + pad))
            for i in range(k):
                s = pad - i * dilation
                dxp[:, :, s: s + t_len] += dcols[:, :, i, :]
            dx = dxp[:, :, pad:]
            if squeeze:
                dx = dx[0]
        return dx, dw, db

    return Tensor._from_op(y[0] if squeeze else y, (x, w, b), grad_fn)


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride=(1, 1), padding=(0, 0)) -> Tensor:
    """Zero-padded 2-D cross-correlation."""
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    if sh < 1 or sw < 1 or ph < 0 or pw < 0:
        raise ConfigError(f"conv2d: bad stride {stride} / padding {padding}")
    if w.ndim != 4:
        raise DimensionError(f"conv2d: weight must be (C_out, C_in, kh, kw), got {w.shape}")
    c_out, c_in, kh, kw = w.shape
    xd, squeeze = _batched(x, 3, "conv2d")
    n, cx, h, wd = xd.shape
    if cx != c_in:
        raise DimensionError(f"conv2d: input has {cx} channels, weight expects {c_in}")
    if b.shape != (c_out,):
        raise DimensionError(f"conv2d: bias shape {b.shape} != ({c_out},)")
    if h + 2 * ph < kh or wd + 2 * pw < kw:
        raise DimensionError(
            f"conv2d: kernel {kh}x{kw} larger than padded input {h + 2 * ph}x{wd + 2 * pw}"
        )
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (wd + 2 * pw - kw) // sw + 1
    xp = np.pad(xd, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else xd

    cols = np.empty((n, c_in, kh, kw, ho, wo))
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i: i + sh * (ho - 1) + 1: sh, j: j + sw * (wo - 1) + 1: sw]
    cols2 = cols.transpose(0, 4, 5, 1, 2, 3).reshape(n * ho * wo, c_in * kh * kw)
    w2 = w.data.reshape(c_out, -1)
    y = (cols2 @ w2.T).reshape(n, ho, wo, c_out).transpose(0, 3, 1, 2) + b.data[None, :, None, None]

    def grad_fn(g):
        g = g[None] if squeeze else g
        g2 = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, c_out)
        dw = (g2.T @ cols2).reshape(w.shape)
        db = g.sum(axis=(0, 2, 3))
        dx = None
        if x.requires_grad:
            dcols = (g2 @ w2).reshape(n, ho, wo, c_in, kh, kw).transpose(0, 3, 4, 5, 1, 2)
            dxp = np.zeros(xp.shape)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i: i + sh * (ho - 1) + 1: sh, j: j + sw * (wo - 1) + 1: sw] += dcols[:, :, i, j]
            dx = dxp[:, :, ph: ph + h, pw: pw + wd]
            if squeeze:
                dx = dx[0]
        return dx, dw, db

    return Tensor._from_op(y[0] if squeeze else y, (x, w, b), grad_fn)


def maxpool2d(x: Tensor, size=(2, 2), stride=None) -> Tensor:
    """Max pooling; the gradient goes to the first row-major maximum of each window."""
    kh, kw = _pair(size)
    sh, sw = _pair(stride if stride is not None else size)
    if min(kh, kw, sh, sw) < 1:
        raise ConfigError(f"maxpool2d: bad size {size} / stride {stride}")
    xd, squeeze = _batched(x, 3, "maxpool2d")
    n, c, h, wd = xd.shape
    if h < kh or wd < kw:
        raise DimensionError(f"maxpool2d: window {kh}x{kw} larger than input {h}x{wd}")
    ho = (h - kh) // sh + 1
    wo = (wd - kw) // sw + 1
    windows = np.stack(
        [xd[:, :, i: i + sh * (ho - 1) + 1: sh, j: j + sw * (wo - 1) + 1: sw] for i in range(kh) for j in range(kw)],
        axis=-1,
    )
    arg = windows.argmax(axis=-1)
    y = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]

    def grad_fn(g):
        g = g[None] if squeeze else g
        dx = np.zeros(xd.shape)
        for off in range(kh * kw):
            i, j = divmod(off, kw)
            dx[:, :, i: i + sh * (ho - 1) + 1: sh, j: j + sw * (wo - 1) + 1: sw] += g * (arg == off)
        return (dx[0] if squeeze else dx,)

    return Tensor._from_op(y[0] if squeeze else y, (x,), grad_fn)


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """``y = x @ w.T + b`` for ``x`` of shape ``(N, D_in)`` or ``(D_in,)``."""
    if w.ndim != 2:
        raise DimensionError(f"linear: weight must be 2-D, got {w.shape}")
    d_out, d_in = w.shape
    if x.shape[-1] != d_in or x.ndim not in (1, 2):
        raise DimensionError(f"linear: input {x.shape} incompatible with weight {w.shape}")
    if b.shape != (d_out,):
        raise DimensionError(f"linear: bias shape {b.shape} != ({d_out},)")
    xd = x.data if x.ndim == 2 else x.data[None]
    y = xd @ w.data.T + b.data

    def grad_fn(g):
        g2 = g if x.ndim == 2 else g[None]
        dx = g2 @ w.data
        return (dx if x.ndim == 2 else dx[0]), g2.T @ xd, g2.sum(axis=0)

    return Tensor._from_op(y if x.ndim == 2 else y[0], (x, w, b), grad_fn)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor._from_op(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Stack ``a``'s channels followed by ``b``'s along the channel axis (second to last)."""
    if a.ndim != b.ndim or a.ndim < 2:
        raise DimensionError(f"concat_channels: incompatible ranks {a.shape} / {b.shape}")
    if a.shape[:-2] != b.shape[:-2] or a.shape[-1] != b.shape[-1]:
        raise DimensionError(f"concat_channels: length mismatch {a.shape} vs {b.shape}")
    ca = a.shape[-2]
    out = np.concatenate([a.data, b.data], axis=-2)
    return Tensor._from_op(out, (a, b), lambda g: (g[..., :ca, :], g[..., ca:, :]))


def log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(z: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(np.asarray(z, dtype=np.float64)))


def softmax_cross_entropy(logits: Tensor, labels: Sequence[int]) -> Tensor:
    """Mean negative log-likelihood of ``labels`` under ``softmax(logits)``."""
    logits = _as_tensor(logits)
    if logits.ndim != 2:
        raise DimensionError(f"softmax_cross_entropy: logits must be (N, K), got {logits.shape}")
    n, k = logits.shape
    labels = np.asarray(labels)
    if n < 1 or labels.shape != (n,):
        raise ValidationError(f"softmax_cross_entropy: need {n} labels, got shape {labels.shape}")
    if not np.all(np.isin(labels, np.arange(k))):
        bad = labels[~np.isin(labels, np.arange(k))]
        raise ValidationError(f"softmax_cross_entropy: labels outside 0..{k - 1}: {bad.tolist()}")
    labels = labels.astype(np.int64)
    logp = log_softmax(logits.data)
    loss = -logp[np.arange(n), labels].mean()

    def grad_fn(g):
        d = np.exp(logp)
        d[np.arange(n), labels] -= 1.0
        return (d * (g.item() / n),)

    return Tensor._from_op(np.array(loss), (logits,), grad_fn)
