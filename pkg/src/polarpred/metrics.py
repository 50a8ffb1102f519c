"""Image-quality metrics and the comparison exports behind the result tables.

PSNR uses peak 2 for [-1, 1] data.  SSIM is single-scale with the standard
11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03, dynamic range 2, averaged
over valid window positions only (no padding).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import tensor

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
DATA_RANGE = 2.0


@dataclass
class MetricRecord:
    clip_id: str
    frame_index: int
    mse: float
    rmse: float
    psnr: float
    ssim: float


def psnr_from_mse(mse: float, peak: float = DATA_RANGE) -> float:
    if mse < 0:
        raise ValueError(f"mse must be non-negative, got {mse}")
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def psnr(pred: np.ndarray, target: np.ndarray, peak: float = DATA_RANGE) -> float:
    diff = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    return psnr_from_mse(float(np.mean(diff * diff)), peak)


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords * coords) / (2.0 * sigma * sigma))
    window = np.outer(g, g)
    return window / window.sum()


def _windowed_mean(x: np.ndarray, window: np.ndarray) -> np.ndarray:
    return tensor.conv2d_valid(x[None], window[None, None])[0]


def ssim(a: np.ndarray, b: np.ndarray, data_range: float = DATA_RANGE) -> float:
    """Mean single-scale SSIM over all fully valid window positions."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if min(a.shape) < SSIM_WINDOW:
        raise ValueError(f"frames must be at least {SSIM_WINDOW} pixels, got {a.shape}")
    window = _gaussian_window()
    mu_a = _windowed_mean(a, window)
    mu_b = _windowed_mean(b, window)
    var_a = _windowed_mean(a * a, window) - mu_a * mu_a
    var_b = _windowed_mean(b * b, window) - mu_b * mu_b
    cov = _windowed_mean(a * b, window) - mu_a * mu_b
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def aggregate(records: list[MetricRecord]) -> dict[str, float]:
    """Arithmetic means over per-frame records (PSNR averaged per frame)."""
    if not records:
        raise ValueError("no records to aggregate")
    finite_psnr = [r.psnr for r in records if math.isfinite(r.psnr)]
    return {
        "n_frames": len(records),
        "mse": float(np.mean([r.mse for r in records])),
        "rmse": float(np.mean([r.rmse for r in records])),
        "psnr": float(np.mean(finite_psnr)) if finite_psnr else math.inf,
        "ssim": float(np.mean([r.ssim for r in records])),
    }


def records_to_csv(path, records: list[MetricRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["clip_id", "frame_index", "mse", "rmse", "psnr", "ssim"])
        for r in records:
            writer.writerow([
                r.clip_id, r.frame_index,
                f"{r.mse:.10g}", f"{r.rmse:.10g}",
                "inf" if math.isinf(r.psnr) else f"{r.psnr:.6f}",
                f"{r.ssim:.8f}",
            ])


def scatter_rows(records_a: list[MetricRecord], records_b: list[MetricRecord]) -> list[tuple]:
    """Per-frame paired (rmse_a, rmse_b - rmse_a) rows plus a mean summary row."""
    by_key = {(r.clip_id, r.frame_index): r for r in records_b}
    rows = []
    for ra in records_a:
        rb = by_key.get((ra.clip_id, ra.frame_index))
        if rb is None:
            raise ValueError(f"no paired record for {(ra.clip_id, ra.frame_index)}")
        rows.append((ra.clip_id, ra.frame_index, ra.rmse, rb.rmse - ra.rmse))
    mean_a = float(np.mean([r[2] for r in rows]))
    mean_b = float(np.mean([by_key[(r[0], r[1])].rmse for r in rows]))
    rows.append(("__mean__", -1, mean_a, mean_b - mean_a))
    return rows


def scatter_export(path, records_a: list[MetricRecord], records_b: list[MetricRecord]) -> None:
    rows = scatter_rows(records_a, records_b)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["clip_id", "frame_index", "rmse_a", "rmse_diff"])
        for row in rows:
            writer.writerow([row[0], row[1], f"{row[2]:.10g}", f"{row[3]:.10g}"])
