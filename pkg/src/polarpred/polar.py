"""Complex channel pairing and the phase-advance extrapolation mechanism.

Channel 2k holds the real part and channel 2k+1 the imaginary part of complex
channel k.  The advance maps a pair of complex maps (current, previous) to the
extrapolated next map

    z_hat = z_t^2 * conj(z_tm1) / (|z_t| * |z_tm1| + eps_amp)

which keeps the current amplitude and continues the per-coefficient phase
velocity, without ever unwrapping a phase.  The additive `eps_amp` makes the
expression total and smooth through zero-amplitude coefficients; eps_amp=0 is
allowed and falls back to 0/0 -> 0 in the numpy path (exact mode for DFT
oracles).

Numpy entry points operate on complex arrays; `phase_advance_graph` is the
differentiable twin used inside training graphs, operating on interleaved
real-pair tensors.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import tensor as T

DEFAULT_EPS_AMP = 1e-6


def pair_channels(y: np.ndarray) -> np.ndarray:
    """[2K,...] real -> [K,...] complex, z_k = y_{2k} + i y_{2k+1}."""
    if y.shape[0] % 2:
        raise ValueError(f"channel extent must be even to pair, got {y.shape[0]}")
    return y[0::2] + 1j * y[1::2]


def unpair_channels(z: np.ndarray) -> np.ndarray:
    """[K,...] complex -> [2K,...] real, inverse of pair_channels."""
    K = z.shape[0]
    out = np.empty((2 * K,) + z.shape[1:], dtype=z.real.dtype)
    out[0::2] = z.real
    out[1::2] = z.imag
    return out


def phase_advance(z_t: np.ndarray, z_tm1: np.ndarray, eps_amp: float = DEFAULT_EPS_AMP) -> np.ndarray:
    """Extrapolate complex coefficients one step, elementwise."""
    if z_t.shape != z_tm1.shape:
        raise ValueError(f"shape mismatch {z_t.shape} vs {z_tm1.shape}")
    num = z_t * z_t * np.conj(z_tm1)
    den = np.abs(z_t) * np.abs(z_tm1) + eps_amp
    if eps_amp > 0:
        return num / den
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


def polar_decompose(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Amplitude and phase maps (analysis only; phase is unstable at low amplitude)."""
    return np.abs(z), np.angle(z)


def phase_advance_graph(y_t: ad.Var, y_tm1: ad.Var, eps_amp: float = DEFAULT_EPS_AMP) -> ad.Var:
    """Differentiable phase advance on interleaved real pairs [B,2K,H,W]."""
    if y_t.shape[1] % 2:
        raise ValueError(f"channel extent must be even to pair, got {y_t.shape[1]}")
    re_t, im_t = y_t[:, 0::2], y_t[:, 1::2]
    re_p, im_p = y_tm1[:, 0::2], y_tm1[:, 1::2]
    # z_t^2
    sq_re = re_t * re_t - im_t * im_t
    sq_im = (re_t * im_t) * 2.0
    # z_t^2 * conj(z_tm1)
    num_re = sq_re * re_p + sq_im * im_p
    num_im = sq_im * re_p - sq_re * im_p
    den = ad.sqrt(re_t * re_t + im_t * im_t) * ad.sqrt(re_p * re_p + im_p * im_p) + eps_amp
    return ad.stack_pairs(num_re / den, num_im / den)


def dft_phase_advance_predict(x_tm1: np.ndarray, x_t: np.ndarray, eps_amp: float = 0.0) -> np.ndarray:
    """Reference global-Fourier predictor: analyze, advance each bin, synthesize.

    Exact for cyclically translating content at constant integer velocity; used
    as the oracle against learned analysis/synthesis transforms.
    """
    if x_tm1.shape != x_t.shape:
        raise ValueError(f"frame shape mismatch {x_tm1.shape} vs {x_t.shape}")
    z_t = T.dft2(np.asarray(x_t, dtype=np.float64))
    z_tm1 = T.dft2(np.asarray(x_tm1, dtype=np.float64))
    z_hat = phase_advance(z_t, z_tm1, eps_amp)
    return T.idft2(z_hat).real
