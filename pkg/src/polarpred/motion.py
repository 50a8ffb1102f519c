"""Causal block-matching baseline: diamond-search estimation and block copy.

Displacements are stored as integer (dy, dx) per 8x8 block, bounded by the
search radius in infinity norm.  The search criterion is block MSE.  Candidate
blocks that read outside the reference frame are skipped; compensation reads
clamp to the frame edge instead.

Tie-breaking is fixed for reproducibility: lowest MSE, then smaller |dy|+|dx|,
then earlier position in the row-major candidate enumeration.
"""

from __future__ import annotations

import csv

import numpy as np

BLOCK_SIZE = 8
SEARCH_RADIUS = 8

# Candidate offsets in row-major (dy, dx) order.
_LARGE_DIAMOND = ((-2, 0), (-1, -1), (-1, 1), (0, -2), (0, 0), (0, 2), (1, -1), (1, 1), (2, 0))
_SMALL_DIAMOND = ((-1, 0), (0, -1), (0, 0), (0, 1), (1, 0))
_MAX_ROUNDS = 64  # plateau guard; generic content converges in <= radius rounds


class MotionField:
    """Grid of per-block displacements plus the geometry that produced it."""

    def __init__(self, vectors: np.ndarray, block_size: int = BLOCK_SIZE,
                 radius: int = SEARCH_RADIUS):
        self.vectors = np.asarray(vectors, dtype=np.int64)  # [rows, cols, 2] as (dy, dx)
        self.block_size = block_size
        self.radius = radius

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.vectors.shape[0], self.vectors.shape[1]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["block_row", "block_col", "dy", "dx"])
            rows, cols = self.grid_shape
            for r in range(rows):
                for c in range(cols):
                    dy, dx = self.vectors[r, c]
                    writer.writerow([r, c, int(dy), int(dx)])


def _block_cost(reference: np.ndarray, target_block: np.ndarray, r0: int, c0: int) -> float:
    bh, bw = target_block.shape
    ref_block = reference[r0 : r0 + bh, c0 : c0 + bw]
    diff = ref_block - target_block
    return float(np.mean(diff * diff))


def _search_block(reference: np.ndarray, target_block: np.ndarray, r0: int, c0: int,
                  radius: int, pattern_rounds=True) -> tuple[int, int]:
    """Diamond search for one block anchored at (r0, c0) in the target."""
    H, W = reference.shape
    bh, bw = target_block.shape
    cache: dict[tuple[int, int], float] = {}

    def cost_at(dy: int, dx: int) -> float | None:
        if max(abs(dy), abs(dx)) > radius:
            return None
        rr, cc = r0 + dy, c0 + dx
        if rr < 0 or cc < 0 or rr + bh > H or cc + bw > W:
            return None
        key = (dy, dx)
        if key not in cache:
            cache[key] = _block_cost(reference, target_block, rr, cc)
        return cache[key]

    def best_of(center: tuple[int, int], offsets) -> tuple[int, int]:
        winner = None
        winner_key = None
        for order, (oy, ox) in enumerate(offsets):
            dy, dx = center[0] + oy, center[1] + ox
            c = cost_at(dy, dx)
            if c is None:
                continue
            key = (c, abs(dy) + abs(dx), order)
            if winner_key is None or key < winner_key:
                winner_key = key
                winner = (dy, dx)
        return winner

    center = (0, 0)
    for _ in range(_MAX_ROUNDS):
        winner = best_of(center, _LARGE_DIAMOND)
        if winner == center:
            break
        center = winner
    refined = best_of(center, _SMALL_DIAMOND)
    return refined


def diamond_search(reference: np.ndarray, target: np.ndarray,
                   block_size: int = BLOCK_SIZE, radius: int = SEARCH_RADIUS) -> MotionField:
    """Estimate per-block displacements of `target` blocks into `reference`."""
    reference = np.asarray(reference)
    target = np.asarray(target)
    if reference.shape != target.shape:
        raise ValueError(f"frame shape mismatch {reference.shape} vs {target.shape}")
    H, W = target.shape
    if block_size > H or block_size > W:
        raise ValueError(f"block size {block_size} exceeds frame extent {H}x{W}")
    rows = -(-H // block_size)
    cols = -(-W // block_size)
    vectors = np.zeros((rows, cols, 2), dtype=np.int64)
    for br in range(rows):
        for bc in range(cols):
            r0, c0 = br * block_size, bc * block_size
            block = target[r0 : min(r0 + block_size, H), c0 : min(c0 + block_size, W)]
            vectors[br, bc] = _search_block(reference, block, r0, c0, radius)
    return MotionField(vectors, block_size, radius)


def full_search(reference: np.ndarray, target: np.ndarray,
                block_size: int = BLOCK_SIZE, radius: int = SEARCH_RADIUS) -> MotionField:
    """Exhaustive +-radius search; the optimality oracle for diamond_search."""
    reference = np.asarray(reference)
    target = np.asarray(target)
    if reference.shape != target.shape:
        raise ValueError(f"frame shape mismatch {reference.shape} vs {target.shape}")
    H, W = target.shape
    rows = -(-H // block_size)
    cols = -(-W // block_size)
    vectors = np.zeros((rows, cols, 2), dtype=np.int64)
    for br in range(rows):
        for bc in range(cols):
            r0, c0 = br * block_size, bc * block_size
            block = target[r0 : min(r0 + block_size, H), c0 : min(c0 + block_size, W)]
            bh, bw = block.shape
            winner_key = None
            winner = (0, 0)
            order = 0
            for dy in range(-radius, radius + 1):
                for dx in range(-radius, radius + 1):
                    rr, cc = r0 + dy, c0 + dx
                    if rr < 0 or cc < 0 or rr + bh > H or cc + bw > W:
                        continue
                    cost = _block_cost(reference, block, rr, cc)
                    key = (cost, abs(dy) + abs(dx), order)
                    order += 1
                    if winner_key is None or key < winner_key:
                        winner_key = key
                        winner = (dy, dx)
            vectors[br, bc] = winner
    return MotionField(vectors, block_size, radius)


def block_residuals(reference: np.ndarray, target: np.ndarray, field: MotionField) -> np.ndarray:
    """Per-block matching MSE of `field` applied between target and reference."""
    H, W = target.shape
    bs = field.block_size
    rows, cols = field.grid_shape
    out = np.zeros((rows, cols))
    for br in range(rows):
        for bc in range(cols):
            r0, c0 = br * bs, bc * bs
            block = target[r0 : min(r0 + bs, H), c0 : min(c0 + bs, W)]
            dy, dx = field.vectors[br, bc]
            out[br, bc] = _block_cost(reference, block, r0 + int(dy), c0 + int(dx))
    return out


def compensate(frame: np.ndarray, field: MotionField) -> np.ndarray:
    """Copy each block of `frame` from its displaced location (edge-clamped reads)."""
    frame = np.asarray(frame)
    H, W = frame.shape
    bs = field.block_size
    rows, cols = field.grid_shape
    if rows != -(-H // bs) or cols != -(-W // bs):
        raise ValueError(
            f"field grid {rows}x{cols} does not match frame {H}x{W} at block size {bs}"
        )
    out = np.empty_like(frame)
    row_idx = np.arange(H)
    col_idx = np.arange(W)
    for br in range(rows):
        for bc in range(cols):
            dy, dx = field.vectors[br, bc]
            r0, r1 = br * bs, min((br + 1) * bs, H)
            c0, c1 = bc * bs, min((bc + 1) * bs, W)
            rr = np.clip(row_idx[r0:r1] + int(dy), 0, H - 1)
            cc = np.clip(col_idx[c0:c1] + int(dx), 0, W - 1)
            out[r0:r1, c0:c1] = frame[np.ix_(rr, cc)]
    return out


def cmc_predict(x_tm1: np.ndarray, x_t: np.ndarray,
                block_size: int = BLOCK_SIZE, radius: int = SEARCH_RADIUS) -> np.ndarray:
    """Causal motion compensation: estimate on (x_tm1 -> x_t), apply to x_t."""
    field = diamond_search(x_tm1, x_t, block_size, radius)
    return compensate(x_t, field)
