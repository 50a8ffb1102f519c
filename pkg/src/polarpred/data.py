"""Synthetic sequence generators, raw clip container, preprocessing, batching.

Clips hold T single-channel frames in [-1, 1].  Generator output is a pure
function of (spec, seed).  Synthetic velocities are (vx, vy): positive vx
moves content toward larger column indices by one pixel per frame.

The PPV1 container is: magic "PPV1", u32 version=1, u32 T, u32 H, u32 W, then
T*H*W little-endian f32 values, frame-major, row-major within each frame.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

from . import tensor

PPV1_MAGIC = b"PPV1"
PPV1_VERSION = 1
_HEADER_BYTES = 20

SYNTHETIC_KINDS = ("translate_cyclic", "rotate", "mixed", "translate_open")


@dataclass
class VideoClip:
    frames: np.ndarray  # [T, H, W] float32 in [-1, 1]
    source_id: str = ""
    fps: float | None = None

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 3:
            raise ValueError(f"clip frames must be [T,H,W], got rank {self.frames.ndim}")
        if self.frames.shape[0] < 3:
            raise ValueError(f"clips need at least 3 frames, got {self.frames.shape[0]}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.frames.shape


@dataclass
class SyntheticSpec:
    kind: str = "translate_cyclic"
    patch_size: int = 16
    count: int = 100
    length: int = 11
    velocity_max: int = 3
    angle_step_deg: float | None = None  # None: sampled per clip
    source_size: int = 48
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SYNTHETIC_KINDS:
            raise ValueError(f"unknown synthetic kind {self.kind!r}; expected one of {SYNTHETIC_KINDS}")
        if self.length < 3:
            raise ValueError(f"sequence length must be >= 3, got {self.length}")


# -- natural-like patch source -------------------------------------------------


def natural_patches(count: int, size: int, rng: np.random.Generator,
                    spectral_power: float = 1.0, amplitude: float = 0.9) -> np.ndarray:
    """Random patches with a 1/f^p amplitude spectrum (natural-image surrogate)."""
    fy = np.fft.fftfreq(size)[:, None]
    fx = np.fft.fftfreq(size)[None, :]
    radius = np.sqrt(fy * fy + fx * fx)
    envelope = np.where(radius > 0, 1.0 / np.maximum(radius, 1e-9) ** spectral_power, 0.0)
    spectrum = envelope * (rng.standard_normal((count, size, size))
                           + 1j * rng.standard_normal((count, size, size)))
    patches = np.fft.ifft2(spectrum, axes=(-2, -1)).real
    peak = np.abs(patches).max(axis=(-2, -1), keepdims=True)
    return (patches / np.maximum(peak, 1e-12) * amplitude).astype(np.float64)


def natural_image(size: int, rng: np.random.Generator,
                  spectral_power: float = 1.5, amplitude: float = 0.9) -> np.ndarray:
    return natural_patches(1, size, rng, spectral_power, amplitude)[0]


# -- generators ---------------------------------------------------------------


def _sample_velocity(rng: np.random.Generator, vmax: int) -> tuple[int, int]:
    while True:
        vx = int(rng.integers(-vmax, vmax + 1))
        vy = int(rng.integers(-vmax, vmax + 1))
        if (vx, vy) != (0, 0):
            return vx, vy


def gen_translate_cyclic(spec: SyntheticSpec) -> list[VideoClip]:
    """Patches cyclically shifted by a constant integer velocity per frame."""
    rng = np.random.default_rng(spec.seed)
    patches = natural_patches(spec.count, spec.patch_size, rng)
    clips = []
    for i in range(spec.count):
        vx, vy = _sample_velocity(rng, spec.velocity_max)
        frames = [np.roll(patches[i], shift=(vy * t, vx * t), axis=(0, 1))
                  for t in range(spec.length)]
        clips.append(VideoClip(np.stack(frames), source_id=f"translate_cyclic/{i:03d}(v={vx},{vy})"))
    return clips


def rotate_bilinear(patch: np.ndarray, angle_deg: float) -> np.ndarray:
    """Rotate about the patch center, bilinear resampling, zero outside the disk."""
    size = patch.shape[0]
    center = (size - 1) / 2.0
    rows, cols = np.mgrid[0:size, 0:size].astype(np.float64)
    dr, dc = rows - center, cols - center
    theta = np.deg2rad(angle_deg)
    # source coordinates: rotate the output grid backwards
    src_r = center + np.cos(theta) * dr + np.sin(theta) * dc
    src_c = center - np.sin(theta) * dr + np.cos(theta) * dc
    r0 = np.floor(src_r).astype(np.int64)
    c0 = np.floor(src_c).astype(np.int64)
    fr, fc = src_r - r0, src_c - c0
    out = np.zeros_like(patch, dtype=np.float64)
    for (ro, co, wgt) in (
        (0, 0, (1 - fr) * (1 - fc)),
        (0, 1, (1 - fr) * fc),
        (1, 0, fr * (1 - fc)),
        (1, 1, fr * fc),
    ):
        rr, cc = r0 + ro, c0 + co
        valid = (rr >= 0) & (rr < size) & (cc >= 0) & (cc < size)
        out[valid] += wgt[valid] * patch[rr[valid], cc[valid]]
    disk = (dr * dr + dc * dc) <= (size / 2.0) ** 2
    out[~disk] = 0.0
    return out


def gen_rotate(spec: SyntheticSpec) -> list[VideoClip]:
    """Patches rotated about their center by a constant angular step per frame."""
    rng = np.random.default_rng(spec.seed)
    patches = natural_patches(spec.count, spec.patch_size, rng)
    clips = []
    for i in range(spec.count):
        if spec.angle_step_deg is None:
            step = float(rng.uniform(5.0, 25.0)) * (1 if rng.random() < 0.5 else -1)
        else:
            step = spec.angle_step_deg
        frames = [rotate_bilinear(patches[i], step * t) for t in range(spec.length)]
        clips.append(VideoClip(np.stack(frames), source_id=f"rotate/{i:03d}(step={step:+.2f}deg)"))
    return clips


def gen_mixed(spec: SyntheticSpec) -> list[VideoClip]:
    """Coin flip per clip between the translation and rotation generators."""
    rng = np.random.default_rng(spec.seed)
    kinds = rng.random(spec.count) < 0.5
    trans = gen_translate_cyclic(SyntheticSpec(
        kind="translate_cyclic", patch_size=spec.patch_size, count=spec.count,
        length=spec.length, velocity_max=spec.velocity_max, seed=spec.seed + 1))
    rots = gen_rotate(SyntheticSpec(
        kind="rotate", patch_size=spec.patch_size, count=spec.count,
        length=spec.length, angle_step_deg=spec.angle_step_deg, seed=spec.seed + 2))
    clips = []
    for i in range(spec.count):
        chosen = trans[i] if kinds[i] else rots[i]
        clips.append(VideoClip(chosen.frames, source_id=f"mixed/{i:03d}:{chosen.source_id}"))
    return clips


def gen_translate_open(spec: SyntheticSpec) -> list[VideoClip]:
    """Window sliding across a larger image; content enters and exits."""
    rng = np.random.default_rng(spec.seed)
    size, S, T = spec.patch_size, spec.source_size, spec.length
    clips = []
    for i in range(spec.count):
        source = natural_image(S, rng, spectral_power=1.0)
        vx, vy = _sample_velocity(rng, spec.velocity_max)
        span_x, span_y = abs(vx) * (T - 1), abs(vy) * (T - 1)
        if size + span_x > S or size + span_y > S:
            raise ValueError(
                f"source extent {S} too small for window {size} moving ({vx},{vy}) over {T} frames"
            )
        x0 = int(rng.integers(0, S - size - span_x + 1)) + (span_x if vx < 0 else 0)
        y0 = int(rng.integers(0, S - size - span_y + 1)) + (span_y if vy < 0 else 0)
        frames = [source[y0 + vy * t : y0 + vy * t + size, x0 + vx * t : x0 + vx * t + size]
                  for t in range(T)]
        clips.append(VideoClip(np.stack(frames), source_id=f"translate_open/{i:03d}(v={vx},{vy})"))
    return clips


_GENERATORS = {
    "translate_cyclic": gen_translate_cyclic,
    "rotate": gen_rotate,
    "mixed": gen_mixed,
    "translate_open": gen_translate_open,
}


def generate(spec: SyntheticSpec) -> list[VideoClip]:
    return _GENERATORS[spec.kind](spec)


# -- PPV1 container -------------------------------------------------------------


def save_clip(path, clip: VideoClip) -> None:
    frames = np.asarray(clip.frames, dtype="<f4")
    T, H, W = frames.shape
    with open(path, "wb") as fh:
        fh.write(PPV1_MAGIC)
        fh.write(struct.pack("<IIII", PPV1_VERSION, T, H, W))
        fh.write(frames.tobytes(order="C"))


def load_raw_clip(path) -> VideoClip:
    """Read and validate a PPV1 clip; failures name the offending byte offset."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != PPV1_MAGIC:
        raise ValueError(f"bad PPV1 magic at byte 0 in {path}")
    if len(blob) < _HEADER_BYTES:
        raise ValueError(f"truncated PPV1 header at byte {len(blob)} in {path}")
    version, T, H, W = struct.unpack_from("<IIII", blob, 4)
    if version != PPV1_VERSION:
        raise ValueError(f"unsupported PPV1 version {version} at byte 4 in {path}")
    expected = _HEADER_BYTES + 4 * T * H * W
    if len(blob) != expected:
        raise ValueError(
            f"truncated PPV1 payload at byte {len(blob)} in {path} (expected {expected})"
        )
    flat = np.frombuffer(blob, dtype="<f4", offset=_HEADER_BYTES)
    bad = np.flatnonzero(~np.isfinite(flat) | (np.abs(flat) > 1.0))
    if bad.size:
        idx = int(bad[0])
        raise ValueError(
            f"out-of-range value {flat[idx]} at byte {_HEADER_BYTES + 4 * idx} in {path}"
        )
    return VideoClip(flat.reshape(T, H, W).copy(), source_id=str(path))


def load_clip_dir(directory) -> list[VideoClip]:
    import pathlib

    paths = sorted(pathlib.Path(directory).glob("*.ppv1"))
    if not paths:
        raise ValueError(f"no .ppv1 clips found in {directory}")
    return [load_raw_clip(p) for p in paths]


# -- preprocessing and batching ----------------------------------------------------


def preprocess(clip: VideoClip, crop: int = 256, down: int = 2) -> VideoClip:
    """Center-crop to `crop` then box-average by integer factor `down`."""
    frames = clip.frames
    T, H, W = frames.shape
    if crop > H or crop > W:
        raise ValueError(f"crop {crop} exceeds frame extent {H}x{W}")
    r0, c0 = (H - crop) // 2, (W - crop) // 2
    frames = frames[:, r0 : r0 + crop, c0 : c0 + crop]
    if down < 1 or (down & (down - 1)):
        raise ValueError(f"downsampling factor must be a power of two >= 1, got {down}")
    while down > 1:
        frames = tensor.downsample2_avg(frames)
        down //= 2
    return VideoClip(frames.astype(np.float32), source_id=clip.source_id, fps=clip.fps)


def segment_clips(clips: list[VideoClip], seg_len: int = 11) -> np.ndarray:
    """Non-overlapping seg_len windows from every clip, stacked [N, seg_len, H, W]."""
    shapes = {c.frames.shape[1:] for c in clips}
    if len(shapes) != 1:
        raise ValueError(f"clips must share frame extents for batching, got {sorted(shapes)}")
    segments = []
    for clip in clips:
        T = clip.frames.shape[0]
        for start in range(0, T - seg_len + 1, seg_len):
            segments.append(clip.frames[start : start + seg_len])
    if not segments:
        raise ValueError(f"no clip is long enough for segment length {seg_len}")
    return np.stack(segments)


def make_batches(clips: list[VideoClip], seg_len: int = 11, batch: int = 4,
                 seed: int = 0, epoch: int = 0):
    """Deterministic shuffled iterator of [<=batch, seg_len, H, W] segment stacks."""
    segments = segment_clips(clips, seg_len)
    order = np.random.default_rng([seed, epoch, 0x5E9]).permutation(len(segments))
    for i in range(0, len(order), batch):
        yield segments[order[i : i + batch]]


def write_manifest(path, clips: list[VideoClip], filenames: list[str]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["file", "source", "T", "H", "W"])
        for name, clip in zip(filenames, clips):
            T, H, W = clip.frames.shape
            writer.writerow([name, clip.source_id, T, H, W])
