"""
Differentiable operations used by the vocoder models and losses

All convolution and pooling ops take (batch, channels, time) tensors; a rank-2
(channels, time) input is treated as a batch of one and returned at rank 2.
"""

from functools import lru_cache
from typing import Optional, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import get_window

from core.errors import ConfigurationError, ShapeError
from core.tensor import Tensor, record

MAGNITUDE_FLOOR = 1e-7


def _batched(x: Tensor, op: str) -> Tuple[Tensor, bool]:
    if x.ndim == 3:
        return x, False
    if x.ndim == 2:
        return x.reshape(1, *x.shape), True
    raise ShapeError(op, "rank", "2 or 3", x.ndim)


def _unbatched(out: Tensor, squeeze: bool) -> Tensor:
    return out.reshape(*out.shape[1:]) if squeeze else out


def pad1d(x: Tensor, left: int, right: int, mode: str = "zero") -> Tensor:
    """Pad the last axis with zeros or by reflection about the edge samples"""
    if left < 0 or right < 0:
        raise ConfigurationError(f"negative padding ({left}, {right})")
    if left == 0 and right == 0:
        return x
    length = x.shape[-1]
    shape = x.shape

    if mode == "reflect":
        index = np.pad(np.arange(length), (left, right), mode="reflect")
        border = np.concatenate([np.arange(left), np.arange(left + length, left + length + right)])

        def adjoint(g):
            flat = g.reshape(-1, g.shape[-1])
            full = flat[:, left : left + length].copy()
            np.add.at(full, (slice(None), index[border]), flat[:, border])
            return (full.reshape(shape),)

        return record("pad_reflect", x.data[..., index], (x,), adjoint)

    if mode == "zero":
        widths = [(0, 0)] * (x.ndim - 1) + [(left, right)]
        return record("pad_zero", np.pad(x.data, widths), (x,), lambda g: (g[..., left : left + length],))

    raise ConfigurationError(f"unknown padding mode '{mode}'", key="padding_mode")


def same_padding(kernel_size: int, dilation: int = 1) -> Tuple[int, int]:
    total = dilation * (kernel_size - 1)
    return total // 2, total - total // 2


def conv1d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    dilation: int = 1,
    groups: int = 1,
    padding: Union[int, str] = 0,
    padding_mode: str = "zero",
) -> Tensor:
    """Grouped, strided, dilated 1-D cross-correlation with weight [C_out x C_in/groups x K]"""
    xb, squeeze = _batched(x, "conv1d")
    batch, in_channels, _ = xb.shape
    if weight.ndim != 3:
        raise ShapeError("conv1d", "weight rank", 3, weight.ndim)
    out_channels, group_in, kernel = weight.shape
    if groups < 1 or in_channels % groups != 0:
        raise ShapeError("conv1d", "in_channels", f"divisible by groups={groups}", in_channels)
    if group_in * groups != in_channels:
        raise ShapeError("conv1d", "in_channels", group_in * groups, in_channels)
    if out_channels % groups != 0:
        raise ShapeError("conv1d", "out_channels", f"divisible by groups={groups}", out_channels)
    if kernel < 1 or dilation < 1 or stride < 1:
        raise ConfigurationError(f"conv1d requires kernel, dilation, stride >= 1 (got {kernel}, {dilation}, {stride})")
    if bias is not None and bias.shape != (out_channels,):
        raise ShapeError("conv1d", "bias", (out_channels,), bias.shape)

    if padding == "same":
        if stride != 1:
            raise ConfigurationError("'same' padding requires stride 1")
        left, right = same_padding(kernel, dilation)
    else:
        left = right = int(padding)
    xp = pad1d(xb, left, right, padding_mode)

    padded_len = xp.shape[-1]
    span = dilation * (kernel - 1) + 1
    if padded_len < span:
        raise ShapeError("conv1d", "time", f">= {span} after padding", padded_len)
    out_len = (padded_len - span) // stride + 1
    group_out = out_channels // groups

    windows = sliding_window_view(xp.data, span, axis=2)[:, :, ::stride, ::dilation]
    cols = (
        windows.reshape(batch, groups, group_in, out_len, kernel)
        .transpose(0, 1, 3, 2, 4)
        .reshape(batch, groups, out_len, group_in * kernel)
    )
    w_mat = weight.data.reshape(groups, group_out, group_in * kernel).transpose(0, 2, 1)
    out = np.matmul(cols, w_mat).transpose(0, 1, 3, 2).reshape(batch, out_channels, out_len)
    if bias is not None:
        out = out + bias.data[None, :, None]

    def adjoint(g):
        go = g.reshape(batch, groups, group_out, out_len).transpose(0, 1, 3, 2)
        gw = np.matmul(cols.transpose(0, 1, 3, 2), go).sum(axis=0)
        gw = gw.transpose(0, 2, 1).reshape(out_channels, group_in, kernel)
        gcols = np.matmul(go, w_mat.transpose(0, 2, 1))
        gcols = (
            gcols.reshape(batch, groups, out_len, group_in, kernel)
            .transpose(0, 1, 3, 2, 4)
            .reshape(batch, in_channels, out_len, kernel)
        )
        gx = np.zeros((batch, in_channels, padded_len), dtype=g.dtype)
        stop = stride * (out_len - 1) + 1
        for k in range(kernel):
            start = k * dilation
            gx[:, :, start : start + stop : stride] += gcols[:, :, :, k]
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2)))
        return grads

    inputs = (xp, weight) if bias is None else (xp, weight, bias)
    return _unbatched(record("conv1d", out, inputs, adjoint), squeeze)


def conv_transpose1d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, stride: int = 1) -> Tensor:
    """Transposed convolution with weight [C_in x C_out x K], K = 2*stride, output length stride*T"""
    xb, squeeze = _batched(x, "conv_transpose1d")
    batch, in_channels, length = xb.shape
    if weight.ndim != 3 or weight.shape[0] != in_channels:
        raise ShapeError("conv_transpose1d", "in_channels", in_channels, weight.shape[0] if weight.ndim else None)
    _, out_channels, kernel = weight.shape
    if kernel != 2 * stride:
        raise ConfigurationError(f"transposed conv kernel must be twice the stride (kernel={kernel}, stride={stride})")
    if bias is not None and bias.shape != (out_channels,):
        raise ShapeError("conv_transpose1d", "bias", (out_channels,), bias.shape)

    left = stride // 2 + stride % 2
    out_len = length * stride
    full_len = (length - 1) * stride + kernel
    stop = stride * (length - 1) + 1

    xt = xb.data.transpose(0, 2, 1)
    w_mat = weight.data.reshape(in_channels, out_channels * kernel)
    taps = np.matmul(xt, w_mat).reshape(batch, length, out_channels, kernel)
    full = np.zeros((batch, out_channels, full_len), dtype=taps.dtype)
    for k in range(kernel):
        full[:, :, k : k + stop : stride] += taps[:, :, :, k].transpose(0, 2, 1)
    out = full[:, :, left : left + out_len]
    if bias is not None:
        out = out + bias.data[None, :, None]

    def adjoint(g):
        g_full = np.zeros((batch, out_channels, full_len), dtype=g.dtype)
        g_full[:, :, left : left + out_len] = g
        g_taps = np.empty((batch, length, out_channels, kernel), dtype=g.dtype)
        for k in range(kernel):
            g_taps[:, :, :, k] = g_full[:, :, k : k + stop : stride].transpose(0, 2, 1)
        g_taps = g_taps.reshape(batch, length, out_channels * kernel)
        gx = np.matmul(g_taps, w_mat.T).transpose(0, 2, 1)
        gw = np.matmul(xt.transpose(0, 2, 1), g_taps).sum(axis=0).reshape(in_channels, out_channels, kernel)
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2)))
        return grads

    inputs = (xb, weight) if bias is None else (xb, weight, bias)
    return _unbatched(record("conv_transpose1d", np.ascontiguousarray(out), inputs, adjoint), squeeze)


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    """max(x, slope*x); the subgradient at 0 is slope"""
    if not 0.0 < slope < 1.0:
        raise ConfigurationError(f"leaky_relu slope must be in (0, 1), got {slope}")
    a = x.data
    factor = np.where(a > 0, 1.0, slope).astype(a.dtype)
    return record("leaky_relu", a * factor, (x,), lambda g: (g * factor,))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return record("tanh", out, (x,), lambda g: (g * (1.0 - out * out),))


def avg_pool1d(x: Tensor, kernel: int, stride: int, padding: int = 0, count_include_pad: bool = False) -> Tensor:
    """Windowed mean over the last axis"""
    if kernel < stride:
        raise ConfigurationError(f"avg_pool1d kernel ({kernel}) must be >= stride ({stride})")
    xb, squeeze = _batched(x, "avg_pool1d")
    batch, channels, length = xb.shape
    padded = np.pad(xb.data, ((0, 0), (0, 0), (padding, padding)))
    if padded.shape[-1] < kernel:
        raise ShapeError("avg_pool1d", "time", f">= {kernel - 2 * padding}", length)
    windows = sliding_window_view(padded, kernel, axis=2)[:, :, ::stride]
    out_len = windows.shape[2]
    if count_include_pad:
        counts = np.full(out_len, float(kernel))
    else:
        mask = np.pad(np.ones(length), padding)
        counts = sliding_window_view(mask, kernel)[::stride].sum(axis=-1)
    out = windows.sum(axis=-1) / counts

    def adjoint(g):
        scaled = g / counts
        gp = np.zeros_like(padded)
        stop = stride * (out_len - 1) + 1
        for j in range(kernel):
            gp[:, :, j : j + stop : stride] += scaled
        return (gp[:, :, padding : padding + length],)

    return _unbatched(record("avg_pool1d", out.astype(xb.dtype), (xb,), adjoint), squeeze)


def weight_norm(v: Tensor, g: Tensor) -> Tensor:
    """w = g * v / ||v||, the norm taken per leading-axis slice"""
    if g.shape != (v.shape[0],):
        raise ShapeError("weight_norm", "g", (v.shape[0],), g.shape)
    axes = tuple(range(1, v.ndim))
    scale_shape = (-1,) + (1,) * (v.ndim - 1)
    norm = np.sqrt((v.data * v.data).sum(axis=axes, keepdims=True))
    direction = v.data / norm
    gain = g.data.reshape(scale_shape)

    def adjoint(gw):
        dg = (gw * direction).sum(axis=axes)
        dv = gain / norm * (gw - direction * dg.reshape(scale_shape))
        return dv, dg

    return record("weight_norm", gain * direction, (v, g), adjoint)


def upsample_zero(x: Tensor, factor: int) -> Tensor:
    """Insert factor-1 zeros after every sample of the last axis"""
    out = np.zeros(x.shape[:-1] + (x.shape[-1] * factor,), dtype=x.dtype)
    out[..., ::factor] = x.data
    return record("upsample_zero", out, (x,), lambda g: (g[..., ::factor],))


@lru_cache(maxsize=32)
def fft_window(fft_size: int, window_size: int) -> np.ndarray:
    """Periodic Hann window of window_size, zero-padded to fft_size around the frame centre"""
    if window_size > fft_size:
        raise ConfigurationError(f"window size {window_size} exceeds FFT size {fft_size}")
    window = np.zeros(fft_size)
    offset = (fft_size - window_size) // 2
    window[offset : offset + window_size] = get_window("hann", window_size, fftbins=True)
    window.setflags(write=False)
    return window


def stft_magnitude(
    x: Tensor,
    fft_size: int,
    window_size: int,
    hop_size: int,
    center: bool = True,
    floor: float = MAGNITUDE_FLOOR,
) -> Tensor:
    """|STFT| of (..., N) signals -> (..., frames, fft_size // 2 + 1), floored at `floor`"""
    if hop_size < 1 or hop_size > window_size:
        raise ConfigurationError(f"hop size must be in [1, window size], got {hop_size}")
    window = fft_window(fft_size, window_size)
    if x.shape[-1] == 0:
        raise ShapeError("stft_magnitude", "samples", "> 0", 0)
    if center:
        x = pad1d(x, fft_size // 2, fft_size // 2, "reflect")
    padded_len = x.shape[-1]
    if padded_len < fft_size:
        raise ShapeError("stft_magnitude", "samples", f">= {fft_size}", padded_len)

    frames = sliding_window_view(x.data, fft_size, axis=-1)[..., ::hop_size, :]
    n_frames = frames.shape[-2]
    spectrum = np.fft.rfft(frames * window, axis=-1)
    modulus = np.abs(spectrum)
    live = modulus > floor
    out = np.where(live, modulus, floor).astype(x.dtype)
    bins = spectrum.shape[-1]

    def adjoint(g):
        safe = np.where(live, modulus, 1.0)
        weight = np.where(live, g / safe, 0.0)
        full = np.zeros(spectrum.shape[:-1] + (fft_size,), dtype=complex)
        full[..., :bins] = weight * spectrum
        g_frames = np.real(np.fft.ifft(full, axis=-1)) * fft_size * window
        gx = np.zeros(x.shape, dtype=g.dtype)
        for f in range(n_frames):
            start = f * hop_size
            gx[..., start : start + fft_size] += g_frames[..., f, :]
        return (gx,)

    return record("stft_magnitude", out, (x,), adjoint)
