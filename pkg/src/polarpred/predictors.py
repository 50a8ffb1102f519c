"""The predictor family behind one interface: predict(x_tm1, x_t) -> x_hat.

Variants:
  Copy    repeat the current frame;
  cMC     causal block-matching motion compensation;
  PP      linear convolutional analysis, phase advance on channel pairs,
          synthesis through the transposed convolution with the *same* weights;
  deepPP  nonlinear encoder/decoder around the same phase advance;
  deepL   identical architecture to deepPP, linear latent extrapolation
          y_hat = 2 y_t - y_tm1 on raw channels;
  CNN     20-stage direct predictor consuming both frames as channels.

All forward passes use valid convolutions only (no padding anywhere), so CNN
outputs shrink by `margin` pixels per side; the other variants restore the
input extent.  Learnable predictor parameters live in an ordered name->Var
dict shared with the optimizer and checkpoints.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from . import motion
from . import polar

VARIANTS = ("Copy", "cMC", "PP", "deepPP", "deepL", "CNN")
SUBVARIANTS = ("text-4x5", "table-10x3")


@dataclass
class PredictorConfig:
    variant: str = "PP"
    channels: int = 64
    kernel_size: int = 17
    subvariant: str = "text-4x5"
    cnn_stages: int = 20
    cnn_kernel: int = 3
    eps_amp: float = polar.DEFAULT_EPS_AMP
    precision: str = "f32"
    bn_center: bool = False
    whole_patch: bool = False
    block_size: int = 8
    search_radius: int = 8

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.subvariant not in SUBVARIANTS:
            raise ValueError(f"unknown subvariant {self.subvariant!r}; expected one of {SUBVARIANTS}")
        if self.channels % 2:
            raise ValueError(f"channel count must be even to form pairs, got {self.channels}")
        if self.precision not in ("f32", "f64"):
            raise ValueError(f"precision must be f32 or f64, got {self.precision!r}")

    @property
    def dtype(self):
        return np.float32 if self.precision == "f32" else np.float64


def _deep_layer_plan(cfg: PredictorConfig) -> tuple[list[dict], list[dict]]:
    """Encoder/decoder layer shapes for the deepPP/deepL sub-variants."""
    C = cfg.channels
    if cfg.subvariant == "text-4x5":
        n_layers, k = 4, 5
    else:  # table-10x3
        n_layers, k = 10, 3
    enc, dec = [], []
    for i in range(n_layers):
        c_in = 1 if i == 0 else C
        enc.append({"c_in": c_in, "c_out": C, "k": k, "bn": i < n_layers - 1})
    for i in range(n_layers):
        c_out = 1 if i == n_layers - 1 else C
        dec.append({"c_in": C, "c_out": c_out, "k": k, "bn": i < n_layers - 1})
    return enc, dec


def _cnn_layer_plan(cfg: PredictorConfig) -> list[dict]:
    C, k, S = cfg.channels, cfg.cnn_kernel, cfg.cnn_stages
    plan = []
    for i in range(S):
        c_in = 2 if i == 0 else C
        c_out = 1 if i == S - 1 else C
        plan.append({"c_in": c_in, "c_out": c_out, "k": k, "bn": i < S - 1})
    return plan


def param_count(cfg: PredictorConfig) -> int:
    """Exact trainable scalar count, including batchnorm scale vectors."""
    cfg.validate()
    if cfg.variant in ("Copy", "cMC"):
        return 0
    if cfg.variant == "PP":
        return cfg.channels * cfg.kernel_size * cfg.kernel_size
    if cfg.variant in ("deepPP", "deepL"):
        enc, dec = _deep_layer_plan(cfg)
        plans = enc + dec
    else:
        plans = _cnn_layer_plan(cfg)
    total = 0
    for p in plans:
        total += p["c_in"] * p["c_out"] * p["k"] * p["k"]
        if p["bn"]:
            total += p["c_out"]
    return total


def output_margin(cfg: PredictorConfig) -> int:
    """Pixels lost per side between input frame and prediction."""
    if cfg.variant == "CNN":
        return cfg.cnn_stages * (cfg.cnn_kernel - 1) // 2
    return 0


def receptive_field(cfg: PredictorConfig) -> int:
    """Effective spatial support of one latent coefficient on the input."""
    if cfg.variant == "PP":
        return cfg.kernel_size
    if cfg.variant in ("deepPP", "deepL"):
        enc, _ = _deep_layer_plan(cfg)
        return 1 + sum(p["k"] - 1 for p in enc)
    if cfg.variant == "CNN":
        return 1 + cfg.cnn_stages * (cfg.cnn_kernel - 1)
    return 1


class _ConvStage:
    """One conv (or transposed conv) with optional batchnorm-scale + ReLU."""

    def __init__(self, name: str, plan: dict, transposed: bool, final_linear: bool,
                 rng: np.random.Generator, dtype):
        c_in, c_out, k = plan["c_in"], plan["c_out"], plan["k"]
        fan_in = c_in * k * k
        std = np.sqrt((1.0 if final_linear else 2.0) / fan_in)
        if transposed:
            shape = (c_in, c_out, k, k)
        else:
            shape = (c_out, c_in, k, k)
        self.weights = ad.Var((rng.standard_normal(shape) * std).astype(dtype), name=f"{name}.w")
        self.transposed = transposed
        self.bn = plan["bn"]
        self.relu = plan["bn"]  # rectification always rides behind a bn stage here
        if self.bn:
            self.gamma = ad.Var(np.ones(c_out, dtype=dtype), name=f"{name}.gamma")
            self.running_var = np.ones(c_out, dtype=dtype)
        self.name = name

    def params(self) -> dict[str, ad.Var]:
        out = {f"{self.name}.w": self.weights}
        if self.bn:
            out[f"{self.name}.gamma"] = self.gamma
        return out

    def state(self) -> dict[str, np.ndarray]:
        return {f"{self.name}.running_var": self.running_var} if self.bn else {}

    def __call__(self, x: ad.Var, training: bool, bn_center: bool) -> ad.Var:
        if self.transposed:
            x = ad.conv2d_transpose(x, self.weights)
        else:
            x = ad.conv2d(x, self.weights)
        if self.bn:
            x = ad.batchnorm_scale(
                x, self.gamma, center=bn_center,
                running_var=self.running_var, training=training,
            )
            x = ad.relu(x)
        return x


class Predictor:
    """Interface shared by all variants."""

    trainable = False

    def __init__(self, cfg: PredictorConfig):
        cfg.validate()
        self.config = cfg
        self.margin = output_margin(cfg)
        self.params: dict[str, ad.Var] = {}
        self.state: dict[str, np.ndarray] = {}

    @property
    def variant(self) -> str:
        return self.config.variant

    def predict(self, x_tm1: np.ndarray, x_t: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def forward_segments(self, frames: np.ndarray, training: bool = True) -> ad.Var:
        raise NotImplementedError(f"{self.variant} is not trainable")


class CopyPredictor(Predictor):
    def predict(self, x_tm1, x_t):
        return np.array(x_t, copy=True)


class CMCPredictor(Predictor):
    def predict(self, x_tm1, x_t):
        return motion.cmc_predict(
            np.asarray(x_tm1), np.asarray(x_t),
            self.config.block_size, self.config.search_radius,
        )


class LatentPredictor(Predictor):
    """PP / deepPP / deepL: encode, extrapolate in latent space, decode."""

    trainable = True

    def __init__(self, cfg: PredictorConfig, rng: np.random.Generator):
        super().__init__(cfg)
        dtype = cfg.dtype
        if cfg.variant == "PP":
            k, C = cfg.kernel_size, cfg.channels
            scale = 1.0 if cfg.whole_patch else 1.0 / np.sqrt(C)
            if C <= k * k:
                q, _ = np.linalg.qr(rng.standard_normal((k * k, C)))
                rows = q.T  # orthonormal filter rows
            else:
                rows = rng.standard_normal((C, k * k)) / k
            w = (rows * scale).reshape(C, 1, k, k).astype(dtype)
            self.shared_weights = ad.Var(w, name="w")
            self.params = {"w": self.shared_weights}
            self.enc_stages: list[_ConvStage] = []
            self.dec_stages: list[_ConvStage] = []
        else:
            enc_plan, dec_plan = _deep_layer_plan(cfg)
            self.shared_weights = None
            self.enc_stages = [
                _ConvStage(f"enc.{i}", p, transposed=False, final_linear=not p["bn"],
                           rng=rng, dtype=dtype)
                for i, p in enumerate(enc_plan)
            ]
            self.dec_stages = [
                _ConvStage(f"dec.{i}", p, transposed=True, final_linear=not p["bn"],
                           rng=rng, dtype=dtype)
                for i, p in enumerate(dec_plan)
            ]
            for stage in self.enc_stages + self.dec_stages:
                self.params.update(stage.params())
                self.state.update(stage.state())

    def encode(self, x: ad.Var, training: bool) -> ad.Var:
        if self.shared_weights is not None:
            return ad.conv2d(x, self.shared_weights)
        for stage in self.enc_stages:
            x = stage(x, training, self.config.bn_center)
        return x

    def decode(self, y: ad.Var, training: bool) -> ad.Var:
        if self.shared_weights is not None:
            return ad.conv2d_transpose(y, self.shared_weights)
        for stage in self.dec_stages:
            y = stage(y, training, self.config.bn_center)
        return y

    def advance(self, y_t: ad.Var, y_tm1: ad.Var) -> ad.Var:
        if self.config.variant == "deepL":
            return y_t * 2.0 - y_tm1
        return polar.phase_advance_graph(y_t, y_tm1, self.config.eps_amp)

    def forward_segments(self, frames: np.ndarray, training: bool = True) -> ad.Var:
        B, T, H, W = frames.shape
        if T < 3:
            raise ValueError(f"segments need at least 3 frames, got {T}")
        x = ad.constant(frames.reshape(B * T, 1, H, W).astype(self.config.dtype))
        z = self.encode(x, training)
        _, C, h, w = z.shape
        z = ad.reshape(z, (B, T, C, h, w))
        z_t = ad.reshape(z[:, 1 : T - 1], (B * (T - 2), C, h, w))
        z_p = ad.reshape(z[:, 0 : T - 2], (B * (T - 2), C, h, w))
        z_hat = self.advance(z_t, z_p)
        return self.decode(z_hat, training)

    def predict(self, x_tm1, x_t):
        frames = np.stack([np.asarray(x_tm1), np.asarray(x_t)]).astype(self.config.dtype)
        z = self.encode(ad.constant(frames[:, None]), training=False)
        z_hat = self.advance(z[1:2], z[0:1])
        return self.decode(z_hat, training=False).value[0, 0]


class CNNPredictor(Predictor):
    """Direct predictor: both frames enter as channels of one stack."""

    trainable = True

    def __init__(self, cfg: PredictorConfig, rng: np.random.Generator):
        super().__init__(cfg)
        self.stages = [
            _ConvStage(f"stage.{i}", p, transposed=False, final_linear=not p["bn"],
                       rng=rng, dtype=cfg.dtype)
            for i, p in enumerate(_cnn_layer_plan(cfg))
        ]
        for stage in self.stages:
            self.params.update(stage.params())
            self.state.update(stage.state())

    def forward_pairs(self, pairs: np.ndarray, training: bool) -> ad.Var:
        x = ad.constant(pairs.astype(self.config.dtype))
        for stage in self.stages:
            x = stage(x, training, self.config.bn_center)
        return x

    def forward_segments(self, frames: np.ndarray, training: bool = True) -> ad.Var:
        B, T, H, W = frames.shape
        if T < 3:
            raise ValueError(f"segments need at least 3 frames, got {T}")
        pairs = np.stack([frames[:, : T - 2], frames[:, 1 : T - 1]], axis=2)
        return self.forward_pairs(pairs.reshape(B * (T - 2), 2, H, W), training)

    def predict(self, x_tm1, x_t):
        pairs = np.stack([np.asarray(x_tm1), np.asarray(x_t)])[None]
        return self.forward_pairs(pairs, training=False).value[0, 0]


def build_predictor(cfg: PredictorConfig, rng: np.random.Generator | None = None) -> Predictor:
    cfg.validate()
    if cfg.variant == "Copy":
        return CopyPredictor(cfg)
    if cfg.variant == "cMC":
        return CMCPredictor(cfg)
    if rng is None:
        rng = np.random.default_rng(0)
    if cfg.variant == "CNN":
        return CNNPredictor(cfg, rng)
    return LatentPredictor(cfg, rng)


def pp_predict(weights: np.ndarray, x_tm1: np.ndarray, x_t: np.ndarray,
               eps_amp: float = polar.DEFAULT_EPS_AMP) -> np.ndarray:
    """Single-call PP forward with explicit weights [C,1,k,k] (shared both ways)."""
    if weights.shape[0] % 2:
        raise ValueError(f"channel count must be even to form pairs, got {weights.shape[0]}")
    from . import tensor as T

    dtype = np.result_type(weights.dtype, np.asarray(x_t).dtype)
    w = weights.astype(dtype, copy=False)
    frames = np.stack([x_tm1, x_t]).astype(dtype)[:, None]
    y = T.conv2d_valid(frames, w)
    z_p = polar.pair_channels(y[0])
    z_t = polar.pair_channels(y[1])
    z_hat = polar.phase_advance(z_t, z_p, eps_amp)
    return T.conv2d_transpose(polar.unpair_channels(z_hat)[None], w)[0, 0]


def config_for_recovery(patch_size: int = 16, channels: int = 64,
                        precision: str = "f32") -> PredictorConfig:
    """Whole-patch PP used by the synthetic recovery experiments."""
    return PredictorConfig(
        variant="PP", channels=channels, kernel_size=patch_size,
        whole_patch=True, precision=precision,
    )


__all__ = [
    "PredictorConfig", "Predictor", "CopyPredictor", "CMCPredictor",
    "LatentPredictor", "CNNPredictor", "build_predictor", "param_count",
    "output_margin", "receptive_field", "pp_predict", "config_for_recovery",
    "VARIANTS", "SUBVARIANTS", "replace",
]
