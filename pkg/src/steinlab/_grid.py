"""Uniform-grid helpers: Toeplitz convolution quadrature and finite differences."""

from __future__ import annotations

import numpy as np
from scipy import signal

FFT_THRESHOLD = 1024


def kernel_lags(n: int, dx: float, kfun, shift: float = 0.0) -> np.ndarray:
    lags = (np.arange(-(n - 1), n) * dx + shift)
    return np.asarray(kfun(lags), dtype=float).reshape(-1)


def convolve(f, dx: float, kfun, shift: float = 0.0, method: str = "auto") -> np.ndarray:
    """(K * f)(x_i + shift) ~ sum_j K(x_i + shift - x_j) f_j dx on a uniform grid.

    ``kfun`` maps an array of scalar offsets to kernel values.  The direct
    sum is used below ``FFT_THRESHOLD`` nodes and a zero-padded (linear, not
    circular) FFT convolution above it.
    """
    f = np.asarray(f, dtype=float)
    n = f.size
    kv = kernel_lags(n, dx, kfun, shift)
    if method == "auto":
        method = "fft" if n >= FFT_THRESHOLD else "direct"
    if method == "direct":
        full = np.convolve(f, kv)
    elif method == "fft":
        full = signal.fftconvolve(f, kv)
    else:
        raise ValueError("method must be 'auto', 'direct' or 'fft'")
    return full[n - 1:2 * n - 1] * dx


def derivative(f, dx: float) -> np.ndarray:
    """Second-order central differences, one-sided second order at the ends."""
    f = np.asarray(f, dtype=float)
    out = np.empty_like(f)
    out[1:-1] = (f[2:] - f[:-2]) / (2 * dx)
    out[0] = (-3 * f[0] + 4 * f[1] - f[2]) / (2 * dx)
    out[-1] = (3 * f[-1] - 4 * f[-2] + f[-3]) / (2 * dx)
    return out
