"""End-to-end optimization of the learnable predictors on next-frame MSE.

A training step consumes a batch of fixed-length segments, predicts every
interior frame, and averages the trimmed squared errors before backprop.
Given a seed, runs are deterministic at a fixed BLAS thread count; segment
shuffling is derived statelessly from (seed, epoch), so resuming from an
epoch checkpoint reproduces the uninterrupted run bitwise.
"""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import checkpoint as ckpt_io
from . import data, metrics, optim
from .predictors import Predictor, PredictorConfig, build_predictor

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 100
    base_lr: float = optim.DEFAULT_BASE_LR
    halve_epochs: tuple[int, ...] = optim.DEFAULT_HALVE_EPOCHS
    batch_size: int = 4
    seg_len: int = 11
    trim: int = 17
    seed: int = 0
    keep_epoch_checkpoints: bool = False
    model: PredictorConfig = field(default_factory=PredictorConfig)

    def validate(self, frame_extent: tuple[int, int] | None = None) -> None:
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.seg_len < 3:
            raise ValueError(f"segment length must be >= 3, got {self.seg_len}")
        if frame_extent is not None and 2 * self.trim >= min(frame_extent):
            raise ValueError(f"trim {self.trim} too large for frames {frame_extent}")
        self.model.validate()


class TrainingDiverged(RuntimeError):
    """Raised when the loss goes non-finite; the last good checkpoint is retained."""


def comparison_extent(pred_hw: tuple[int, int], target_hw: tuple[int, int],
                      trim: int) -> tuple[int, int]:
    """Mutually valid central region: target trimmed, intersected with the prediction."""
    h = min(pred_hw[0], target_hw[0] - 2 * trim)
    w = min(pred_hw[1], target_hw[1] - 2 * trim)
    if h <= 0 or w <= 0:
        raise ValueError(
            f"trim {trim} leaves no comparison region for prediction {pred_hw} "
            f"against target {target_hw}"
        )
    return h, w


def center_crop(x, h: int, w: int):
    H, W = x.shape[-2], x.shape[-1]
    r0, c0 = (H - h) // 2, (W - w) // 2
    return x[..., r0 : r0 + h, c0 : c0 + w]


def prediction_loss(pred, target, trim: int = 17):
    """Mean squared error over the trimmed, mutually valid region.

    Accepts numpy arrays (returns float) or graph Vars (returns a Var).
    """
    pred_hw = (pred.shape[-2], pred.shape[-1])
    target_hw = (target.shape[-2], target.shape[-1])
    h, w = comparison_extent(pred_hw, target_hw, trim)
    log.debug("prediction loss region %dx%d (trim %d)", h, w, trim)
    pred_c = center_crop(pred, h, w)
    target_c = center_crop(target, h, w)
    if isinstance(pred_c, ad.Var):
        if not isinstance(target_c, ad.Var):
            target_c = ad.constant(np.asarray(target_c, dtype=pred_c.dtype))
        return ad.mse(pred_c, target_c)
    diff = np.asarray(pred_c, dtype=np.float64) - np.asarray(target_c, dtype=np.float64)
    return float(np.mean(diff * diff))


def _segment_loss(predictor: Predictor, frames: np.ndarray, trim: int,
                  training: bool = True) -> ad.Var:
    B, T, H, W = frames.shape
    preds = predictor.forward_segments(frames, training=training)
    targets = frames[:, 2:].reshape(B * (T - 2), 1, H, W)
    return prediction_loss(preds, targets, trim)


@dataclass
class TrainResult:
    predictor: Predictor
    loss_curve: list[tuple[int, float, float]]  # (epoch, lr, mean loss)
    final_path: str | None = None


def train(config: TrainConfig, clips: list[data.VideoClip], out_dir=None,
          resume: str | None = None) -> TrainResult:
    """Optimize config.model on `clips`; returns the predictor and loss curve.

    With `out_dir`, a rolling `checkpoint_last.ppck` is written every epoch
    (plus per-epoch files when configured), `checkpoint_final.ppck` at the
    end, and the loss curve as CSV.  `resume` restarts from a checkpoint,
    reproducing the uninterrupted trajectory.
    """
    shapes = {c.frames.shape[1:] for c in clips}
    if len(shapes) != 1:
        raise ValueError(f"clips must share frame extents for training, got {sorted(shapes)}")
    config.validate(next(iter(shapes)))
    if config.model.variant in ("Copy", "cMC"):
        raise ValueError(f"variant {config.model.variant} has no trainable parameters")

    loss_curve: list[tuple[int, float, float]] = []
    if resume is not None:
        loaded = ckpt_io.load_checkpoint(resume)
        predictor = ckpt_io.restore_predictor(loaded)
        adam = ckpt_io.restore_adam(loaded, predictor)
        start_epoch = loaded.epoch
    else:
        predictor = build_predictor(config.model, np.random.default_rng(config.seed))
        adam = optim.AdamState(predictor.params, lr=config.base_lr)
        start_epoch = 0

    last_path = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        last_path = os.path.join(out_dir, "checkpoint_last.ppck")

    for epoch in range(start_epoch, config.epochs):
        adam.lr = optim.lr_schedule(epoch, config.base_lr, config.halve_epochs)
        epoch_losses = []
        for batch in data.make_batches(clips, config.seg_len, config.batch_size,
                                       config.seed, epoch):
            loss = _segment_loss(predictor, batch, config.trim, training=True)
            loss_value = float(loss.value)
            if not np.isfinite(loss_value):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}; last good checkpoint: {last_path}"
                )
            ad.backward(loss, list(predictor.params.values()))
            adam.step(predictor.params)
            epoch_losses.append(loss_value)
        mean_loss = float(np.mean(epoch_losses))
        loss_curve.append((epoch, adam.lr, mean_loss))
        log.info("epoch %d lr %.3g loss %.6g", epoch, adam.lr, mean_loss)
        if out_dir is not None:
            ckpt_io.save_checkpoint(last_path, predictor, adam, epoch + 1)
            if config.keep_epoch_checkpoints:
                ckpt_io.save_checkpoint(
                    os.path.join(out_dir, f"checkpoint_epoch_{epoch:04d}.ppck"),
                    predictor, adam, epoch + 1)

    final_path = None
    if out_dir is not None:
        final_path = os.path.join(out_dir, "checkpoint_final.ppck")
        ckpt_io.save_checkpoint(final_path, predictor, adam, config.epochs)
        write_loss_curve(os.path.join(out_dir, "loss_curve.csv"), loss_curve)
    return TrainResult(predictor, loss_curve, final_path)


def write_loss_curve(path, loss_curve) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "lr", "train_loss"])
        for epoch, lr, loss in loss_curve:
            writer.writerow([epoch, f"{lr:.10g}", f"{loss:.10g}"])


def evaluate(predictor: Predictor, clips: list[data.VideoClip],
             trim: int = 17) -> list[metrics.MetricRecord]:
    """Per-frame records over every consecutive triple of every clip."""
    records = []
    for clip_idx, clip in enumerate(clips):
        frames = clip.frames
        clip_id = clip.source_id or f"clip{clip_idx:03d}"
        for t in range(1, frames.shape[0] - 1):
            pred = predictor.predict(frames[t - 1], frames[t])
            target = frames[t + 1]
            h, w = comparison_extent(pred.shape, target.shape, trim)
            p = np.asarray(center_crop(pred, h, w), dtype=np.float64)
            g = np.asarray(center_crop(target, h, w), dtype=np.float64)
            mse = float(np.mean((p - g) ** 2))
            records.append(metrics.MetricRecord(
                clip_id=clip_id,
                frame_index=t + 1,
                mse=mse,
                rmse=float(np.sqrt(mse)),
                psnr=metrics.psnr_from_mse(mse),
                ssim=metrics.ssim(p, g),
            ))
    return records
