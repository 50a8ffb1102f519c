"""Dense tensor kernels: valid convolution, its adjoint, pooling, DFT, snapshots.

Tensors are plain numpy arrays (row-major, f32 by default, f64 for exact-math
checks).  Convolutions use the cross-correlation orientation throughout:

    out[o, i, j] = sum_{c, u, v} kernels[o, c, u, v] * x[c, i + u, j + v]

so that `conv2d_transpose` is the exact linear adjoint of `conv2d_valid` with
the same kernel tensor.  No padding, stride 1, no additive constants anywhere.

Kernels accumulate over kernel offsets in row-major (u, v) order with BLAS
inner products, so results are run-to-run deterministic at a fixed thread
count.  Convolution is direct (offset-blocked matmul), never FFT-based.
"""

from __future__ import annotations

import struct

import numpy as np

PTN1_MAGIC = b"PTN1"


def _check_2d_kernel(x: np.ndarray, kernels: np.ndarray) -> None:
    if kernels.ndim != 4:
        raise ValueError(f"kernels must have rank 4 [C_out,C_in,k,k], got rank {kernels.ndim}")
    if x.shape[-3] != kernels.shape[1]:
        raise ValueError(
            f"input channel extent {x.shape[-3]} does not match kernel C_in extent {kernels.shape[1]}"
        )


def conv2d_valid(x: np.ndarray, kernels: np.ndarray) -> np.ndarray:
    """Valid cross-correlation of `x` [C,H,W] or [B,C,H,W] with kernels [C_out,C_in,k,k]."""
    squeeze = x.ndim == 3
    if squeeze:
        x = x[None]
    if x.ndim != 4:
        raise ValueError(f"input must have rank 3 or 4, got rank {x.ndim}")
    _check_2d_kernel(x, kernels)
    B, C, H, W = x.shape
    Cout, Cin, kh, kw = kernels.shape
    if kh > H or kw > W:
        raise ValueError(f"kernel extent {kh}x{kw} exceeds input extent {H}x{W}")
    Ho, Wo = H - kh + 1, W - kw + 1
    out = np.zeros((B, Cout, Ho, Wo), dtype=x.dtype)
    w = kernels.astype(x.dtype, copy=False)
    for u in range(kh):
        for v in range(kw):
            # [Cout,Cin] x [B,Cin,Ho,Wo] -> [B,Cout,Ho,Wo]
            out += np.einsum(
                "oc,bcij->boij", w[:, :, u, v], x[:, :, u : u + Ho, v : v + Wo], optimize=True
            )
    return out[0] if squeeze else out


def conv2d_transpose(y: np.ndarray, kernels: np.ndarray) -> np.ndarray:
    """Adjoint of `conv2d_valid`: maps [C_out,H',W'] back to [C_in,H'+k-1,W'+k-1]."""
    squeeze = y.ndim == 3
    if squeeze:
        y = y[None]
    if y.ndim != 4:
        raise ValueError(f"input must have rank 3 or 4, got rank {y.ndim}")
    if kernels.ndim != 4:
        raise ValueError(f"kernels must have rank 4 [C_out,C_in,k,k], got rank {kernels.ndim}")
    if y.shape[1] != kernels.shape[0]:
        raise ValueError(
            f"input channel extent {y.shape[1]} does not match kernel C_out extent {kernels.shape[0]}"
        )
    B, Cout, Ho, Wo = y.shape
    _, Cin, kh, kw = kernels.shape
    out = np.zeros((B, Cin, Ho + kh - 1, Wo + kw - 1), dtype=y.dtype)
    w = kernels.astype(y.dtype, copy=False)
    for u in range(kh):
        for v in range(kw):
            out[:, :, u : u + Ho, v : v + Wo] += np.einsum(
                "oc,boij->bcij", w[:, :, u, v], y, optimize=True
            )
    return out[0] if squeeze else out


def conv2d_grad_kernels(x: np.ndarray, grad_out: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """Gradient of conv2d_valid w.r.t. kernels, given input and output cotangent."""
    if x.ndim == 3:
        x = x[None]
    if grad_out.ndim == 3:
        grad_out = grad_out[None]
    B, Cout, Ho, Wo = grad_out.shape
    grads = np.empty((Cout, x.shape[1], kh, kw), dtype=x.dtype)
    for u in range(kh):
        for v in range(kw):
            grads[:, :, u, v] = np.einsum(
                "boij,bcij->oc", grad_out, x[:, :, u : u + Ho, v : v + Wo], optimize=True
            )
    return grads


def conv2d_transpose_grad_kernels(y: np.ndarray, grad_out: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """Gradient of conv2d_transpose w.r.t. kernels."""
    if y.ndim == 3:
        y = y[None]
    if grad_out.ndim == 3:
        grad_out = grad_out[None]
    B, Cout, Ho, Wo = y.shape
    grads = np.empty((Cout, grad_out.shape[1], kh, kw), dtype=y.dtype)
    for u in range(kh):
        for v in range(kw):
            grads[:, :, u, v] = np.einsum(
                "boij,bcij->oc", y, grad_out[:, :, u : u + Ho, v : v + Wo], optimize=True
            )
    return grads


def trim_border(x: np.ndarray, m: int) -> np.ndarray:
    """Central crop removing an m-pixel strip from each side of the last two axes."""
    if m < 0:
        raise ValueError(f"trim margin must be non-negative, got {m}")
    if m == 0:
        return x
    H, W = x.shape[-2], x.shape[-1]
    if 2 * m >= H or 2 * m >= W:
        raise ValueError(f"trim margin {m} too large for extent {H}x{W}")
    return x[..., m : H - m, m : W - m]


def downsample2_avg(x: np.ndarray) -> np.ndarray:
    """Halve the last two axes, each output pixel the mean of its 2x2 source block."""
    H, W = x.shape[-2], x.shape[-1]
    if H % 2 or W % 2:
        raise ValueError(f"extents must be even for 2x downsampling, got {H}x{W}")
    lead = x.shape[:-2]
    blocks = x.reshape(*lead, H // 2, 2, W // 2, 2)
    return blocks.mean(axis=(-3, -1))


def dft2(x: np.ndarray) -> np.ndarray:
    """Unnormalized 2-D DFT of a real [H,W] array; inverse carries the 1/(HW) factor."""
    if x.ndim != 2:
        raise ValueError(f"dft2 expects a rank-2 array, got rank {x.ndim}")
    return np.fft.fft2(x)


def idft2(xf: np.ndarray) -> np.ndarray:
    """Inverse 2-D DFT; returns the (generally complex) spatial array."""
    if xf.ndim != 2:
        raise ValueError(f"idft2 expects a rank-2 array, got rank {xf.ndim}")
    return np.fft.ifft2(xf)


def save_ptn1(path, x: np.ndarray) -> None:
    """Write a tensor snapshot: magic 'PTN1', u32 rank, u32 extents, f32 LE payload."""
    x = np.asarray(x, dtype=np.float32)
    with open(path, "wb") as fh:
        fh.write(PTN1_MAGIC)
        fh.write(struct.pack("<I", x.ndim))
        fh.write(struct.pack(f"<{x.ndim}I", *x.shape))
        fh.write(x.astype("<f4", copy=False).tobytes(order="C"))


def load_ptn1(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    return ptn1_from_bytes(blob)


def ptn1_to_bytes(x: np.ndarray) -> bytes:
    x = np.asarray(x, dtype=np.float32)
    head = PTN1_MAGIC + struct.pack("<I", x.ndim) + struct.pack(f"<{x.ndim}I", *x.shape)
    return head + x.astype("<f4", copy=False).tobytes(order="C")


def ptn1_from_bytes(blob: bytes, offset: int = 0) -> np.ndarray:
    arr, _ = ptn1_read(blob, offset)
    return arr


def ptn1_read(blob: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Parse one PTN1 record from `blob` at `offset`; returns (array, next offset)."""
    if blob[offset : offset + 4] != PTN1_MAGIC:
        raise ValueError(f"bad PTN1 magic at byte {offset}")
    pos = offset + 4
    (rank,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    shape = struct.unpack_from(f"<{rank}I", blob, pos)
    pos += 4 * rank
    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    end = pos + 4 * count
    if end > len(blob):
        raise ValueError(f"truncated PTN1 payload at byte {len(blob)} (needed {end})")
    arr = np.frombuffer(blob[pos:end], dtype="<f4").reshape(shape).astype(np.float32)
    return arr, end
