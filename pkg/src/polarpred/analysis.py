"""Learned-filter diagnostics: spectral concentration, quadrature offsets,
harmonic-recovery scoring, and the analytic filter banks used as references.

Filters come in channel pairs (2k real, 2k+1 imaginary).  Concentration
measures how much of a pair's Fourier energy sits in the dominant
conjugate-symmetric frequency orbit; the quadrature offset is the phase
difference between pair members at that orbit, folded to [0, 180] degrees.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


def _as_filters(weights: np.ndarray) -> np.ndarray:
    """Accept [C,1,h,w], [C,h,w] and return [C,h,w] float64."""
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim == 4:
        if w.shape[1] != 1:
            raise ValueError(f"expected single-input-channel filters, got C_in={w.shape[1]}")
        w = w[:, 0]
    if w.ndim != 3:
        raise ValueError(f"filters must be [C,h,w], got rank {w.ndim}")
    return w


def _orbit_id(ky: int, kx: int, h: int, w: int) -> tuple[int, int]:
    """Canonical representative of the conjugate pair {(ky,kx), (-ky,-kx)}."""
    a = (ky % h, kx % w)
    b = ((-ky) % h, (-kx) % w)
    return min(a, b)


def _orbit_energy(power: np.ndarray) -> dict[tuple[int, int], float]:
    h, w = power.shape
    orbits: dict[tuple[int, int], float] = {}
    for ky in range(h):
        for kx in range(w):
            key = _orbit_id(ky, kx, h, w)
            orbits[key] = orbits.get(key, 0.0) + power[ky, kx]
    return orbits


def _signed_freq(orbit: tuple[int, int], h: int, w: int) -> tuple[int, int]:
    ky = orbit[0] if orbit[0] <= h // 2 else orbit[0] - h
    kx = orbit[1] if orbit[1] <= w // 2 else orbit[1] - w
    return ky, kx


def dominant_orbit(power: np.ndarray) -> tuple[tuple[int, int], float]:
    """(orbit id, energy fraction) of the strongest conjugate-symmetric pair."""
    total = float(power.sum())
    if total <= 0:
        return (0, 0), 0.0
    orbits = _orbit_energy(power)
    best = max(orbits.items(), key=lambda kv: (kv[1], (-kv[0][0], -kv[0][1])))
    return best[0], best[1] / total


def spectral_concentration(filt: np.ndarray) -> tuple[tuple[int, int], float]:
    """Dominant signed 2-D frequency of one filter and its energy fraction."""
    filt = np.asarray(filt, dtype=np.float64)
    F = np.fft.fft2(filt)
    orbit, fraction = dominant_orbit(np.abs(F) ** 2)
    return _signed_freq(orbit, *filt.shape), fraction


def pair_concentration(fa: np.ndarray, fb: np.ndarray) -> tuple[tuple[int, int], float]:
    """Concentration of a pair's combined spectrum at its shared dominant orbit."""
    Fa = np.fft.fft2(np.asarray(fa, dtype=np.float64))
    Fb = np.fft.fft2(np.asarray(fb, dtype=np.float64))
    orbit, fraction = dominant_orbit(np.abs(Fa) ** 2 + np.abs(Fb) ** 2)
    return _signed_freq(orbit, *fa.shape), fraction


def quadrature_offset(fa: np.ndarray, fb: np.ndarray) -> float:
    """Phase difference (degrees, folded to [0, 180]) at the shared dominant frequency."""
    fa = np.asarray(fa, dtype=np.float64)
    fb = np.asarray(fb, dtype=np.float64)
    Fa = np.fft.fft2(fa)
    Fb = np.fft.fft2(fb)
    orbit, _ = dominant_orbit(np.abs(Fa) ** 2 + np.abs(Fb) ** 2)
    delta = np.angle(Fa[orbit]) - np.angle(Fb[orbit])
    deg = abs(np.rad2deg(delta)) % 360.0
    return min(deg, 360.0 - deg)


@dataclass
class PairReport:
    pair_index: int
    norm: float
    freq: tuple[int, int]
    concentration: float
    offset_deg: float
    freq_match: bool


@dataclass
class RecoverySummary:
    expected: str
    reports: list[PairReport]
    n_pass: int
    concentration_min: float
    offset_center: float
    offset_tol: float


def filter_report(weights: np.ndarray) -> list[PairReport]:
    """Per-pair diagnostics, sorted by descending pair norm (stable by index)."""
    filters = _as_filters(weights)
    if filters.shape[0] % 2:
        raise ValueError(f"filter count must be even to form pairs, got {filters.shape[0]}")
    reports = []
    for k in range(filters.shape[0] // 2):
        fa, fb = filters[2 * k], filters[2 * k + 1]
        freq, conc = pair_concentration(fa, fb)
        freq_a, _ = spectral_concentration(fa)
        freq_b, _ = spectral_concentration(fb)
        reports.append(PairReport(
            pair_index=k,
            norm=float(np.sqrt((fa * fa).sum() + (fb * fb).sum())),
            freq=freq,
            concentration=conc,
            offset_deg=quadrature_offset(fa, fb),
            freq_match=freq_a == freq_b,
        ))
    reports.sort(key=lambda r: (-r.norm, r.pair_index))
    return reports


def report_to_csv(path, reports: list[PairReport]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pair", "norm", "freq_y", "freq_x", "concentration",
                         "offset_deg", "freq_match"])
        for r in reports:
            writer.writerow([r.pair_index, f"{r.norm:.8g}", r.freq[0], r.freq[1],
                             f"{r.concentration:.6f}", f"{r.offset_deg:.3f}",
                             int(r.freq_match)])


def recovery_score(weights: np.ndarray, expected: str = "fourier",
                   concentration_min: float = 0.5, offset_center: float = 90.0,
                   offset_tol: float = 15.0) -> RecoverySummary:
    """Count pairs that recovered the expected harmonic structure.

    Fourier case: a pair passes when its spectral concentration reaches
    `concentration_min` and its quadrature offset lies within
    `offset_center` +- `offset_tol` degrees.  Disk-harmonic case: the pair's
    energy fraction at its dominant angular frequency replaces concentration,
    and members must agree on that frequency.
    """
    if expected == "fourier":
        reports = filter_report(weights)
    elif expected == "disk_harmonic":
        reports = disk_harmonic_report(weights)
    else:
        raise ValueError(f"expected must be 'fourier' or 'disk_harmonic', got {expected!r}")
    n_pass = sum(
        1 for r in reports
        if r.concentration >= concentration_min
        and abs(r.offset_deg - offset_center) <= offset_tol
    ) if expected == "fourier" else sum(
        1 for r in reports if r.concentration >= concentration_min and r.freq_match
    )
    return RecoverySummary(expected, reports, n_pass, concentration_min,
                           offset_center, offset_tol)


# -- analytic bases ------------------------------------------------------------


def fourier_quadrature_weights(size: int, frequencies=None, dtype=np.float64) -> np.ndarray:
    """Cos/-sin grating filter bank [2K,1,size,size] realizing the DFT.

    With the full frequency set (default), applying these weights as a
    whole-patch analysis transform, phase-advancing the channel pairs, and
    synthesizing through the transpose reproduces the global-Fourier
    analyze/advance/synthesize pipeline exactly.
    """
    if frequencies is None:
        frequencies = [(ky, kx) for ky in range(size) for kx in range(size)]
    rows, cols = np.mgrid[0:size, 0:size]
    scale = 1.0 / np.sqrt(size * size)
    bank = np.empty((2 * len(frequencies), 1, size, size), dtype=dtype)
    for i, (ky, kx) in enumerate(frequencies):
        phase = 2.0 * np.pi * (ky * rows + kx * cols) / size
        bank[2 * i, 0] = np.cos(phase) * scale
        bank[2 * i + 1, 0] = -np.sin(phase) * scale
    return bank


def disk_harmonic_basis(size: int, m_max: int = 8) -> dict[int, np.ndarray]:
    """Orthonormal angular-harmonic bases on the centered disk, keyed by |m|.

    Each basis column is a ring-supported cos(m phi) or sin(m phi) profile,
    orthonormalized over disk pixels; projecting a filter onto the bases
    splits its in-disk energy by angular frequency.
    """
    center = (size - 1) / 2.0
    rows, cols = np.mgrid[0:size, 0:size]
    dr, dc = rows - center, cols - center
    radius = np.sqrt(dr * dr + dc * dc)
    phi = np.arctan2(dr, dc)
    disk = radius <= size / 2.0
    r_in = radius[disk]
    phi_in = phi[disk]
    n_rings = int(np.ceil(r_in.max())) + 1
    ring = np.minimum(r_in.astype(np.int64), n_rings - 1)
    bases: dict[int, np.ndarray] = {}
    for m in range(m_max + 1):
        columns = []
        for j in range(n_rings):
            mask = ring == j
            if not mask.any():
                continue
            c = np.zeros(disk.sum())
            c[mask] = np.cos(m * phi_in[mask])
            columns.append(c)
            if m > 0:
                s = np.zeros(disk.sum())
                s[mask] = np.sin(m * phi_in[mask])
                columns.append(s)
        B = np.stack(columns, axis=1)
        q, r = np.linalg.qr(B)
        keep = np.abs(np.diag(r)) > 1e-9 * max(1.0, np.abs(np.diag(r)).max())
        bases[m] = q[:, keep]
    return bases


def angular_energy(filt: np.ndarray, bases: dict[int, np.ndarray]) -> np.ndarray:
    """In-disk energy of `filt` projected onto each angular frequency band."""
    filt = np.asarray(filt, dtype=np.float64)
    size = filt.shape[0]
    center = (size - 1) / 2.0
    rows, cols = np.mgrid[0:size, 0:size]
    disk = ((rows - center) ** 2 + (cols - center) ** 2) <= (size / 2.0) ** 2
    v = filt[disk]
    return np.array([float(((bases[m].T @ v) ** 2).sum()) for m in sorted(bases)])


def disk_harmonic_report(weights: np.ndarray, m_max: int = 8) -> list[PairReport]:
    """Per-pair dominant angular frequency and its energy fraction."""
    filters = _as_filters(weights)
    if filters.shape[0] % 2:
        raise ValueError(f"filter count must be even to form pairs, got {filters.shape[0]}")
    bases = disk_harmonic_basis(filters.shape[1], m_max)
    reports = []
    for k in range(filters.shape[0] // 2):
        fa, fb = filters[2 * k], filters[2 * k + 1]
        ea = angular_energy(fa, bases)
        eb = angular_energy(fb, bases)
        combined = ea + eb
        m_dom = int(np.argmax(combined))
        total = float(combined.sum())
        fraction = combined[m_dom] / total if total > 0 else 0.0
        reports.append(PairReport(
            pair_index=k,
            norm=float(np.sqrt((fa * fa).sum() + (fb * fb).sum())),
            freq=(m_dom, 0),
            concentration=float(fraction),
            offset_deg=float("nan"),
            freq_match=int(np.argmax(ea)) == int(np.argmax(eb)),
        ))
    reports.sort(key=lambda r: (-r.norm, r.pair_index))
    return reports


# -- image export ----------------------------------------------------------------


def to_uint8(img: np.ndarray, symmetric: bool = True) -> np.ndarray:
    """Map an array to 8-bit grayscale; symmetric uses +-max|value| about mid-gray."""
    img = np.asarray(img, dtype=np.float64)
    if symmetric:
        peak = np.abs(img).max()
        scaled = 0.5 + 0.5 * img / peak if peak > 0 else np.full_like(img, 0.5)
    else:
        lo, hi = img.min(), img.max()
        scaled = (img - lo) / (hi - lo) if hi > lo else np.zeros_like(img)
    return np.clip(np.round(scaled * 255.0), 0, 255).astype(np.uint8)


def write_pgm(path, img: np.ndarray, symmetric: bool = True) -> None:
    """Binary 8-bit PGM (P5)."""
    data = to_uint8(img, symmetric)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{data.shape[1]} {data.shape[0]}\n255\n".encode("ascii"))
        fh.write(data.tobytes(order="C"))


def filter_mosaic(weights: np.ndarray, pad: int = 1, columns: int = 8,
                  sort_by_norm: bool = True) -> np.ndarray:
    """Tile filters into one grid image, pair members adjacent, sorted by norm."""
    filters = _as_filters(weights)
    C, h, w = filters.shape
    if sort_by_norm and C % 2 == 0:
        norms = [float((filters[2 * k] ** 2).sum() + (filters[2 * k + 1] ** 2).sum())
                 for k in range(C // 2)]
        order = sorted(range(C // 2), key=lambda k: (-norms[k], k))
        filters = np.concatenate([filters[2 * k : 2 * k + 2] for k in order])
    rows = -(-C // columns)
    mosaic = np.zeros((rows * (h + pad) + pad, columns * (w + pad) + pad))
    peak = np.abs(filters).max()
    for i in range(C):
        r, c = divmod(i, columns)
        r0, c0 = pad + r * (h + pad), pad + c * (w + pad)
        mosaic[r0 : r0 + h, c0 : c0 + w] = filters[i] / peak if peak > 0 else 0.0
    return mosaic


def spectrum_mosaic(weights: np.ndarray, pad: int = 1, columns: int = 8) -> np.ndarray:
    """Mosaic of centered Fourier amplitude spectra, one tile per filter."""
    filters = _as_filters(weights)
    spectra = np.stack([np.fft.fftshift(np.abs(np.fft.fft2(f))) for f in filters])
    return filter_mosaic(spectra[:, None], pad=pad, columns=columns, sort_by_norm=False)
