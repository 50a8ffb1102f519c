"""Flat key=value run configuration: UTF-8 text, '#' comments, flags override.

Unknown keys are rejected.  Every command writes the fully resolved mapping
alongside its outputs so runs are reproducible from the artifacts alone.
"""

from __future__ import annotations

from . import optim
from .data import SYNTHETIC_KINDS, SyntheticSpec
from .predictors import SUBVARIANTS, VARIANTS, PredictorConfig
from .training import TrainConfig


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


def _parse_int_tuple(raw: str) -> tuple[int, ...]:
    raw = raw.strip()
    if not raw:
        return ()
    return tuple(int(part) for part in raw.split(","))


def _identity(raw: str) -> str:
    return raw.strip()


def _opt_float(raw: str):
    raw = raw.strip()
    return None if raw.lower() in ("", "none") else float(raw)


# key -> (parser, default)
SCHEMA: dict[str, tuple] = {
    # model
    "variant": (_identity, "PP"),
    "channels": (int, 64),
    "kernel_size": (int, 17),
    "subvariant": (_identity, "text-4x5"),
    "cnn_stages": (int, 20),
    "cnn_kernel": (int, 3),
    "eps_amp": (float, 1e-6),
    "precision": (_identity, "f32"),
    "bn_center": (_parse_bool, False),
    "whole_patch": (_parse_bool, False),
    "block_size": (int, 8),
    "search_radius": (int, 8),
    # training
    "epochs": (int, 100),
    "base_lr": (float, optim.DEFAULT_BASE_LR),
    "halve_epochs": (_parse_int_tuple, optim.DEFAULT_HALVE_EPOCHS),
    "batch_size": (int, 4),
    "seg_len": (int, 11),
    "trim": (int, 17),
    "seed": (int, 0),
    "keep_epoch_checkpoints": (_parse_bool, False),
    # synthetic data
    "kind": (_identity, "translate_cyclic"),
    "patch_size": (int, 16),
    "count": (int, 100),
    "length": (int, 11),
    "velocity_max": (int, 3),
    "angle_step_deg": (_opt_float, None),
    "source_size": (int, 48),
    # evaluation
    "baseline": (_identity, "copy"),
}


class RunConfig:
    def __init__(self, values: dict | None = None):
        self.values = {key: default for key, (_, default) in SCHEMA.items()}
        if values:
            for key, value in values.items():
                self._check_key(key)
                self.values[key] = value

    @staticmethod
    def _check_key(key: str) -> None:
        if key not in SCHEMA:
            raise ValueError(f"unknown config key {key!r}")

    def set_raw(self, key: str, raw: str) -> None:
        self._check_key(key)
        parser = SCHEMA[key][0]
        try:
            self.values[key] = parser(raw)
        except ValueError as exc:
            raise ValueError(f"bad value for {key!r}: {exc}") from exc

    def __getitem__(self, key: str):
        self._check_key(key)
        return self.values[key]

    # -- file round trip ----------------------------------------------------

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        cfg = cls()
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                stripped = line.split("#", 1)[0].strip()
                if not stripped:
                    continue
                if "=" not in stripped:
                    raise ValueError(f"{path}:{lineno}: expected key=value, got {line.rstrip()!r}")
                key, raw = stripped.split("=", 1)
                try:
                    cfg.set_raw(key.strip(), raw)
                except ValueError as exc:
                    raise ValueError(f"{path}:{lineno}: {exc}") from exc
        return cfg

    def apply_overrides(self, pairs: list[str]) -> None:
        for pair in pairs:
            if "=" not in pair:
                raise ValueError(f"--set expects key=value, got {pair!r}")
            key, raw = pair.split("=", 1)
            self.set_raw(key.strip(), raw)

    def write_resolved(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for key in sorted(self.values):
                value = self.values[key]
                if isinstance(value, tuple):
                    rendered = ",".join(str(v) for v in value)
                elif value is None:
                    rendered = "none"
                elif isinstance(value, bool):
                    rendered = "true" if value else "false"
                else:
                    rendered = f"{value!r}" if isinstance(value, float) else str(value)
                fh.write(f"{key}={rendered}\n")

    # -- typed views ----------------------------------------------------------

    def predictor_config(self) -> PredictorConfig:
        v = self.values
        if v["variant"] not in VARIANTS:
            raise ValueError(f"unknown variant {v['variant']!r}; expected one of {VARIANTS}")
        if v["subvariant"] not in SUBVARIANTS:
            raise ValueError(
                f"unknown subvariant {v['subvariant']!r}; expected one of {SUBVARIANTS}")
        return PredictorConfig(
            variant=v["variant"], channels=v["channels"], kernel_size=v["kernel_size"],
            subvariant=v["subvariant"], cnn_stages=v["cnn_stages"], cnn_kernel=v["cnn_kernel"],
            eps_amp=v["eps_amp"], precision=v["precision"], bn_center=v["bn_center"],
            whole_patch=v["whole_patch"], block_size=v["block_size"],
            search_radius=v["search_radius"],
        )

    def train_config(self) -> TrainConfig:
        v = self.values
        return TrainConfig(
            epochs=v["epochs"], base_lr=v["base_lr"], halve_epochs=tuple(v["halve_epochs"]),
            batch_size=v["batch_size"], seg_len=v["seg_len"], trim=v["trim"], seed=v["seed"],
            keep_epoch_checkpoints=v["keep_epoch_checkpoints"], model=self.predictor_config(),
        )

    def synthetic_spec(self) -> SyntheticSpec:
        v = self.values
        if v["kind"] not in SYNTHETIC_KINDS:
            raise ValueError(f"unknown kind {v['kind']!r}; expected one of {SYNTHETIC_KINDS}")
        return SyntheticSpec(
            kind=v["kind"], patch_size=v["patch_size"], count=v["count"], length=v["length"],
            velocity_max=v["velocity_max"], angle_step_deg=v["angle_step_deg"],
            source_size=v["source_size"], seed=v["seed"],
        )
