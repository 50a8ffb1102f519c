"""Command-line entry point: synth, train, eval, predict, filters.

Heavy imports happen inside handlers so that --threads (or the
POLARPRED_THREADS environment variable) can pin BLAS thread counts before
numpy initializes.  All commands refuse to write into a non-empty output
directory unless --force is given, and every run writes its fully resolved
configuration next to its outputs.
"""

from __future__ import annotations

import argparse
import os
import pathlib
import sys


class CliError(RuntimeError):
    pass


def _pin_threads(argv: list[str]) -> None:
    n = None
    for i, arg in enumerate(argv):
        if arg == "--threads" and i + 1 < len(argv):
            n = argv[i + 1]
        elif arg.startswith("--threads="):
            n = arg.split("=", 1)[1]
    if n is None:
        n = os.environ.get("POLARPRED_THREADS")
    if n:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(n)


def _prepare_out(out: str, force: bool) -> pathlib.Path:
    path = pathlib.Path(out)
    if path.exists() and any(path.iterdir()) and not force:
        raise CliError(f"output directory {out} is not empty (use --force to overwrite)")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_run_config(args) -> "RunConfig":
    from .config import RunConfig

    cfg = RunConfig.from_file(args.config) if getattr(args, "config", None) else RunConfig()
    cfg.apply_overrides(getattr(args, "set", []) or [])
    if getattr(args, "seed", None) is not None:
        cfg.set_raw("seed", str(args.seed))
    return cfg


def _load_predictor(ref: str):
    """Checkpoint path, or the parameterless pseudo-checkpoints 'copy' / 'cmc'."""
    from . import checkpoint
    from .predictors import PredictorConfig, build_predictor

    lowered = ref.lower()
    if lowered in ("copy", "cmc"):
        variant = "Copy" if lowered == "copy" else "cMC"
        return build_predictor(PredictorConfig(variant=variant))
    if not os.path.exists(ref):
        raise CliError(f"checkpoint {ref} does not exist")
    return checkpoint.restore_predictor(checkpoint.load_checkpoint(ref))


# -- command handlers -------------------------------------------------------------


def _cmd_synth(args) -> int:
    from . import data

    cfg = _load_run_config(args)
    out = _prepare_out(args.out, args.force)
    spec = cfg.synthetic_spec()
    clips = data.generate(spec)
    names = []
    for i, clip in enumerate(clips):
        name = f"clip_{i:04d}.ppv1"
        data.save_clip(out / name, clip)
        names.append(name)
    data.write_manifest(out / "manifest.csv", clips, names)
    cfg.write_resolved(out / "resolved_config.txt")
    print(f"wrote {len(clips)} clips to {out}")
    return 0


def _cmd_train(args) -> int:
    from . import data, figures, training

    cfg = _load_run_config(args)
    out = _prepare_out(args.out, args.force)
    clips = data.load_clip_dir(args.data)
    train_cfg = cfg.train_config()
    result = training.train(train_cfg, clips, out_dir=str(out), resume=args.resume)
    figures.save_loss_curve(out / "loss_curve.png", result.loss_curve,
                            title=f"{train_cfg.model.variant} training loss")
    cfg.write_resolved(out / "resolved_config.txt")
    final = result.loss_curve[-1][2] if result.loss_curve else float("nan")
    print(f"trained {train_cfg.model.variant} for {train_cfg.epochs} epochs, "
          f"final loss {final:.6g}; checkpoint: {result.final_path}")
    return 0


def _cmd_eval(args) -> int:
    from . import data, figures, metrics, training
    from .predictors import PredictorConfig, build_predictor, param_count

    cfg = _load_run_config(args)
    out = _prepare_out(args.out, args.force)
    clips = data.load_clip_dir(args.data)
    trim = cfg["trim"]
    predictor = _load_predictor(args.checkpoint)
    rows = [(predictor.variant, predictor)]
    if predictor.variant != "Copy":
        rows.append(("Copy", build_predictor(PredictorConfig(variant="Copy"))))
    baseline = cfg["baseline"].lower()
    if baseline == "cmc" and predictor.variant != "cMC":
        rows.append(("cMC", build_predictor(PredictorConfig(variant="cMC"))))

    all_records = {}
    for label, model in rows:
        records = training.evaluate(model, clips, trim=trim)
        all_records[label] = records
        metrics.records_to_csv(out / f"records_{label}.csv", records)

    with open(out / "aggregate.csv", "w", newline="") as fh:
        import csv as _csv

        writer = _csv.writer(fh)
        writer.writerow(["variant", "n_frames", "mse", "rmse", "psnr", "ssim", "n_param"])
        for label, model in rows:
            agg = metrics.aggregate(all_records[label])
            writer.writerow([
                label, agg["n_frames"], f"{agg['mse']:.8g}", f"{agg['rmse']:.8g}",
                f"{agg['psnr']:.4f}", f"{agg['ssim']:.6f}", param_count(model.config),
            ])

    main_label = rows[0][0]
    for label, _ in rows[1:]:
        scatter = metrics.scatter_rows(all_records[main_label], all_records[label])
        metrics.scatter_export(out / f"scatter_{main_label}_vs_{label}.csv",
                               all_records[main_label], all_records[label])
        figures.save_scatter(out / f"scatter_{main_label}_vs_{label}.png",
                             scatter, main_label, label)
    cfg.write_resolved(out / "resolved_config.txt")
    agg = metrics.aggregate(all_records[main_label])
    print(f"evaluated {main_label} on {agg['n_frames']} frames: mse {agg['mse']:.6g}")
    return 0


def _cmd_predict(args) -> int:
    import numpy as np

    from . import analysis, data, figures, training

    cfg = _load_run_config(args)
    out = _prepare_out(args.out, args.force)
    clip = data.load_raw_clip(args.clip)
    predictor = _load_predictor(args.checkpoint)
    trim = cfg["trim"]
    frames = clip.frames
    preds, strip_rows = [], []
    for t in range(1, frames.shape[0] - 1):
        pred = predictor.predict(frames[t - 1], frames[t])
        preds.append(pred)
        target = frames[t + 1]
        h, w = training.comparison_extent(pred.shape, target.shape, trim)
        error = (training.center_crop(np.asarray(target, dtype=np.float64), h, w)
                 - training.center_crop(np.asarray(pred, dtype=np.float64), h, w))
        analysis.write_pgm(out / f"pred_{t + 1:04d}.pgm", pred)
        analysis.write_pgm(out / f"err_{t + 1:04d}.pgm", error)
        if len(strip_rows) < args.max_rows:
            strip_rows.append({
                "x_tm1": frames[t - 1], "x_t": frames[t], "target": target,
                "pred": pred, "error": error,
            })
    stacked = np.clip(np.stack(preds), -1.0, 1.0).astype(np.float32)
    data.save_clip(out / "predictions.ppv1", _pad_clip(stacked))
    figures.save_prediction_strip(out / "strip.png", strip_rows, predictor.variant)
    cfg.write_resolved(out / "resolved_config.txt")
    print(f"wrote {len(preds)} predictions to {out}")
    return 0


def _pad_clip(stacked):
    """PPV1 requires >= 3 frames; repeat the last prediction for short clips."""
    import numpy as np

    from . import data

    while stacked.shape[0] < 3:
        stacked = np.concatenate([stacked, stacked[-1:]])
    return data.VideoClip(stacked, source_id="predictions")


def _cmd_filters(args) -> int:
    from . import analysis, figures

    cfg = _load_run_config(args)
    out = _prepare_out(args.out, args.force)
    predictor = _load_predictor(args.checkpoint)
    if predictor.variant == "PP":
        weights = predictor.params["w"].value
    elif predictor.variant in ("deepPP", "deepL"):
        weights = predictor.params["enc.0.w"].value
    else:
        raise CliError(f"variant {predictor.variant} has no pixel-facing filter pairs to report")
    reports = analysis.filter_report(weights)
    analysis.report_to_csv(out / "filter_report.csv", reports)
    mosaic = analysis.filter_mosaic(weights)
    analysis.write_pgm(out / "filters.pgm", mosaic)
    figures.save_mosaic(out / "filters.png", mosaic,
                        title=f"{predictor.variant} filters (pairs, sorted by norm)")
    spectra = analysis.spectrum_mosaic(weights)
    analysis.write_pgm(out / "spectra.pgm", spectra, symmetric=False)
    figures.save_mosaic(out / "spectra.png", spectra, title="amplitude spectra")
    if args.recovery:
        summary = analysis.recovery_score(weights, expected=args.recovery)
        with open(out / "recovery.txt", "w", encoding="utf-8") as fh:
            fh.write(f"expected={summary.expected}\n")
            fh.write(f"pairs_pass={summary.n_pass}\n")
            fh.write(f"pairs_total={len(summary.reports)}\n")
        print(f"recovery: {summary.n_pass}/{len(summary.reports)} pairs pass")
    cfg.write_resolved(out / "resolved_config.txt")
    print(f"wrote filter report for {len(reports)} pairs to {out}")
    return 0


# -- parser ---------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polarpred",
        description="Polar next-frame prediction: synthesis, training, evaluation, analysis.",
    )
    parser.add_argument("--threads", type=int, default=None,
                        help="BLAS thread count (default: POLARPRED_THREADS or all cores)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data_arg=False):
        p.add_argument("--config", default=None, help="key=value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
        p.add_argument("--seed", type=int, default=None, help="override the seed")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--force", action="store_true",
                       help="allow writing into a non-empty output directory")
        if data_arg:
            p.add_argument("--data", required=True, help="directory of .ppv1 clips")

    p = sub.add_parser("synth", help="generate synthetic PPV1 clips")
    common(p)
    p.set_defaults(handler=_cmd_synth)

    p = sub.add_parser("train", help="train a predictor on PPV1 clips")
    common(p, data_arg=True)
    p.add_argument("--resume", default=None, help="checkpoint to resume from")
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint against the Copy floor")
    common(p, data_arg=True)
    p.add_argument("--checkpoint", required=True,
                   help="PPCK path, or 'copy' / 'cmc' for the parameterless baselines")
    p.set_defaults(handler=_cmd_eval)

    p = sub.add_parser("predict", help="predict every frame of one clip")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--clip", required=True, help="input .ppv1 clip")
    p.add_argument("--max-rows", type=int, default=4,
                   help="predicted frames shown in the strip figure")
    p.set_defaults(handler=_cmd_predict)

    p = sub.add_parser("filters", help="export filter report and mosaics")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--recovery", choices=["fourier", "disk_harmonic"], default=None,
                   help="also score harmonic recovery")
    p.set_defaults(handler=_cmd_filters)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    _pin_threads(argv)
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (CliError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
