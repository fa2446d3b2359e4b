"""Compact convolutional classifier with hand-written gradients.

The architecture follows the shallow band-power recipe: a per-channel
temporal convolution, a spatial filter mixing all (channel, temporal
filter) maps, squaring, mean pooling over time, log, dropout and a linear
softmax head. Squaring + mean pooling + log turns each spatial filter
output into a log band-power feature, so no normalisation layers are
needed.

Forward, backward and the AdamW update are written out explicitly in
numpy. Training is deterministic given the config seed (shuffling and
dropout masks come from one generator) and early-stops on validation
loss, returning the parameters of the best epoch.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .trialdata import Trial, TrialSet

__all__ = [
    "ModelConfig",
    "TrainConfig",
    "TrainHistory",
    "TrainingDivergedError",
    "ConvClassifier",
    "forward",
    "nll_loss",
    "backward",
    "adamw_step",
    "train",
    "linear_probe",
    "fine_tune_config",
    "save_checkpoint",
    "load_checkpoint",
]

LOG_EPS = 1e-12
PARAM_NAMES = ("w_temp", "b_temp", "w_spat", "b_spat", "w_head", "b_head")

# Fine-tuning (linear probing) runs a shorter schedule than full training.
FT_MAX_EPOCHS = 600
FT_PATIENCE = 150


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite during training."""

    def __init__(self, epoch: int):
        super().__init__(f"non-finite loss at epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class ModelConfig:
    """Shape of the network; defaults follow the shallow recipe."""

    channels: int
    samples: int
    temporal_filters: int = 8
    kernel_len: int = 25
    spatial_filters: int = 8
    pool_len: int = 32
    pool_stride: int = 8
    n_classes: int = 2

    def __post_init__(self):
        if min(self.channels, self.samples, self.temporal_filters,
               self.kernel_len, self.spatial_filters, self.pool_len,
               self.pool_stride) < 1:
            raise ValueError("all model dimensions must be positive")
        if self.n_classes != 2:
            raise ValueError("binary classification only")
        if self.kernel_len > self.samples:
            raise ValueError("temporal kernel longer than the trial")
        if self.pool_len > self.conv_len:
            raise ValueError("pool window longer than the convolved signal")

    @property
    def conv_len(self) -> int:
        return self.samples - self.kernel_len + 1

    @property
    def n_pools(self) -> int:
        return (self.conv_len - self.pool_len) // self.pool_stride + 1

    @property
    def feature_dim(self) -> int:
        return self.spatial_filters * self.n_pools


@dataclass(frozen=True)
class TrainConfig:
    """Optimisation schedule; defaults are the shared-model settings."""

    learning_rate: float = 8.25e-4
    weight_decay: float = 1e-5
    batch_size: int = 64
    max_epochs: int = 1000
    patience: int = 250
    dropout_rate: float = 0.25
    rng_seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be positive")
        if self.patience < 0:
            raise ValueError("patience must be >= 0")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")


def fine_tune_config(cfg: TrainConfig) -> TrainConfig:
    return replace(cfg, max_epochs=FT_MAX_EPOCHS, patience=FT_PATIENCE)


@dataclass(frozen=True)
class TrainHistory:
    """Per-epoch curves; best_epoch is the argmin of validation loss."""

    train_loss: tuple[float, ...]
    val_loss: tuple[float, ...]
    val_acc: tuple[float, ...]
    best_epoch: int

    @property
    def n_epochs(self) -> int:
        return len(self.val_loss)


class ConvClassifier:
    """Temporal conv -> spatial filter -> square -> mean pool -> log -> head."""

    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray]):
        self.config = config
        missing = set(PARAM_NAMES) - set(params)
        if missing:
            raise ValueError(f"missing parameters: {sorted(missing)}")
        self.params = {k: np.asarray(params[k], dtype=float) for k in PARAM_NAMES}
        shapes = self.param_shapes(config)
        for k in PARAM_NAMES:
            if self.params[k].shape != shapes[k]:
                raise ValueError(f"{k}: expected shape {shapes[k]}, got {self.params[k].shape}")

    @staticmethod
    def param_shapes(config: ModelConfig) -> dict[str, tuple]:
        return {
            "w_temp": (config.temporal_filters, config.kernel_len),
            "b_temp": (config.temporal_filters,),
            "w_spat": (config.spatial_filters, config.temporal_filters, config.channels),
            "b_spat": (config.spatial_filters,),
            "w_head": (config.n_classes, config.feature_dim),
            "b_head": (config.n_classes,),
        }

    @classmethod
    def init(cls, config: ModelConfig, rng_seed: int = 0) -> "ConvClassifier":
        """Glorot-style uniform init for the weights, zeros for the biases."""
        rng = np.random.default_rng(rng_seed)
        shapes = cls.param_shapes(config)
        params = {}
        for name, shape in shapes.items():
            if name.startswith("b_"):
                params[name] = np.zeros(shape)
            else:
                fan_in = int(np.prod(shape[1:]))
                fan_out = shape[0]
                limit = np.sqrt(6.0 / (fan_in + fan_out))
                params[name] = rng.uniform(-limit, limit, size=shape)
        return cls(config, params)

    def copy(self) -> "ConvClassifier":
        return ConvClassifier(self.config, {k: v.copy() for k, v in self.params.items()})

    def reinit_head(self, rng_seed: int = 0) -> None:
        rng = np.random.default_rng(rng_seed)
        w = self.params["w_head"]
        limit = np.sqrt(6.0 / (w.shape[1] + w.shape[0]))
        self.params["w_head"] = rng.uniform(-limit, limit, size=w.shape)
        self.params["b_head"] = np.zeros_like(self.params["b_head"])

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(forward(self, x), axis=1)


def _forward_cached(
    model: ConvClassifier,
    x: np.ndarray,
    dropout_rate: float = 0.0,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, dict]:
    cfg = model.config
    p = model.params
    x = np.asarray(x, dtype=float)
    if x.ndim != 3 or x.shape[1:] != (cfg.channels, cfg.samples):
        raise ValueError(
            f"expected batch of shape (n, {cfg.channels}, {cfg.samples}), got {x.shape}"
        )
    # temporal convolution per channel: (n, F1, c, conv_len)
    windows = sliding_window_view(x, cfg.kernel_len, axis=2)
    temporal = np.einsum("nctk,fk->nfct", windows, p["w_temp"])
    temporal += p["b_temp"][:, None, None]
    # spatial filters mix (temporal filter, channel) maps: (n, F2, conv_len)
    spatial = np.einsum("nfct,gfc->ngt", temporal, p["w_spat"])
    spatial += p["b_spat"][:, None]
    squared = spatial**2
    # mean pooling over time: (n, F2, n_pools)
    pool_wins = sliding_window_view(squared, cfg.pool_len, axis=2)[:, :, :: cfg.pool_stride]
    pooled = pool_wins.mean(axis=3)
    feats = np.log(pooled + LOG_EPS).reshape(len(x), -1)
    if dropout_rate > 0.0:
        if rng is None:
            raise ValueError("dropout needs a generator")
        mask = (rng.random(feats.shape) >= dropout_rate) / (1.0 - dropout_rate)
        dropped = feats * mask
    else:
        mask = None
        dropped = feats
    logits = dropped @ p["w_head"].T + p["b_head"]
    shift = logits - logits.max(axis=1, keepdims=True)
    log_probs = shift - np.log(np.exp(shift).sum(axis=1, keepdims=True))
    cache = {
        "windows": windows,
        "temporal": temporal,
        "spatial": spatial,
        "pooled": pooled,
        "mask": mask,
        "dropped": dropped,
        "log_probs": log_probs,
    }
    return log_probs, cache


def forward(
    model: ConvClassifier,
    x: np.ndarray,
    training: bool = False,
    rng: np.random.Generator | None = None,
    dropout_rate: float = 0.0,
) -> np.ndarray:
    """Log class probabilities for a batch. Dropout only when training."""
    rate = dropout_rate if training else 0.0
    log_probs, _ = _forward_cached(model, x, dropout_rate=rate, rng=rng)
    return log_probs


def nll_loss(log_probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log likelihood of the true labels."""
    labels = np.asarray(labels, dtype=int)
    return float(-log_probs[np.arange(len(labels)), labels].mean())


def _backward_cached(
    model: ConvClassifier, cache: dict, labels: np.ndarray
) -> dict[str, np.ndarray]:
    cfg = model.config
    p = model.params
    labels = np.asarray(labels, dtype=int)
    n = len(labels)
    # d(mean NLL)/d logits = (softmax - onehot) / n
    d_logits = np.exp(cache["log_probs"])
    d_logits[np.arange(n), labels] -= 1.0
    d_logits /= n
    grads = {
        "w_head": d_logits.T @ cache["dropped"],
        "b_head": d_logits.sum(axis=0),
    }
    d_feats = d_logits @ p["w_head"]
    if cache["mask"] is not None:
        d_feats = d_feats * cache["mask"]
    d_pooled = d_feats.reshape(cache["pooled"].shape) / (cache["pooled"] + LOG_EPS)
    # un-pool: every window contributes dp/len to its span
    d_squared = np.zeros_like(cache["spatial"])
    w, s = cfg.pool_len, cfg.pool_stride
    for j in range(cfg.n_pools):
        d_squared[:, :, j * s : j * s + w] += d_pooled[:, :, j : j + 1] / w
    d_spatial = 2.0 * cache["spatial"] * d_squared
    grads["w_spat"] = np.einsum("ngt,nfct->gfc", d_spatial, cache["temporal"])
    grads["b_spat"] = d_spatial.sum(axis=(0, 2))
    d_temporal = np.einsum("ngt,gfc->nfct", d_spatial, p["w_spat"])
    grads["w_temp"] = np.einsum("nfct,nctk->fk", d_temporal, cache["windows"])
    grads["b_temp"] = d_temporal.sum(axis=(0, 2, 3))
    return grads


def backward(model: ConvClassifier, x: np.ndarray, labels: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of the mean NLL w.r.t. every parameter (no dropout)."""
    _, cache = _forward_cached(model, x)
    return _backward_cached(model, cache, labels)


def init_adamw_state(params: dict[str, np.ndarray]) -> dict:
    return {
        "step": 0,
        "m": {k: np.zeros_like(v) for k, v in params.items()},
        "v": {k: np.zeros_like(v) for k, v in params.items()},
    }


def adamw_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: dict,
    learning_rate: float,
    weight_decay: float = 0.0,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> dict[str, np.ndarray]:
    """One AdamW update, in place. Weight decay is decoupled: it shrinks the
    pre-step parameters and never enters the moment estimates."""
    state["step"] += 1
    t = state["step"]
    for k, g in grads.items():
        m = state["m"][k]
        v = state["v"][k]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        decay = learning_rate * weight_decay * params[k] if weight_decay > 0 else 0.0
        params[k] -= learning_rate * m_hat / (np.sqrt(v_hat) + eps) + decay
    return params


def _as_xy(trials) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(trials, TrialSet):
        trials = trials.trials
    trials = list(trials)
    if not trials:
        raise ValueError("empty trial list")
    x = np.stack([tr.data for tr in trials])
    y = np.array([tr.label for tr in trials], dtype=int)
    return x, y


def train(
    model: ConvClassifier,
    train_trials,
    val_trials,
    cfg: TrainConfig,
    trainable: tuple[str, ...] = PARAM_NAMES,
) -> tuple[ConvClassifier, TrainHistory]:
    """Mini-batch AdamW with early stopping on validation loss.

    Mutates ``model`` and finally resets it to the best-epoch parameters,
    which are also the ones returned. Deterministic for a given
    cfg.rng_seed. Raises TrainingDivergedError on non-finite loss.
    """
    x_tr, y_tr = _as_xy(train_trials)
    x_va, y_va = _as_xy(val_trials)
    rng = np.random.default_rng(cfg.rng_seed)
    subset = {k: model.params[k] for k in trainable}
    state = init_adamw_state(subset)

    train_curve: list[float] = []
    val_curve: list[float] = []
    acc_curve: list[float] = []
    best_loss = np.inf
    best_epoch = -1
    best_params: dict[str, np.ndarray] | None = None
    stall = 0
    # patience = 0 still tolerates nothing: stop at the first non-improving epoch
    stop_after = max(cfg.patience, 1)

    # overflow in a diverging run is reported via TrainingDivergedError,
    # not as a numpy warning
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(cfg.max_epochs):
            order = rng.permutation(len(y_tr))
            loss_sum = 0.0
            for start in range(0, len(order), cfg.batch_size):
                idx = order[start : start + cfg.batch_size]
                log_probs, cache = _forward_cached(
                    model, x_tr[idx], dropout_rate=cfg.dropout_rate, rng=rng
                )
                loss = nll_loss(log_probs, y_tr[idx])
                if not np.isfinite(loss):
                    raise TrainingDivergedError(epoch)
                loss_sum += loss * len(idx)
                grads = _backward_cached(model, cache, y_tr[idx])
                adamw_step(
                    subset,
                    {k: grads[k] for k in trainable},
                    state,
                    learning_rate=cfg.learning_rate,
                    weight_decay=cfg.weight_decay,
                )
            val_logp = forward(model, x_va)
            val_loss = nll_loss(val_logp, y_va)
            if not np.isfinite(val_loss):
                raise TrainingDivergedError(epoch)
            train_curve.append(loss_sum / len(y_tr))
            val_curve.append(val_loss)
            acc_curve.append(float(np.mean(np.argmax(val_logp, axis=1) == y_va)))
            if val_loss < best_loss:
                best_loss = val_loss
                best_epoch = epoch
                best_params = {k: v.copy() for k, v in model.params.items()}
                stall = 0
            else:
                stall += 1
                if stall >= stop_after:
                    break

    assert best_params is not None
    model.params.update({k: v.copy() for k, v in best_params.items()})
    history = TrainHistory(
        train_loss=tuple(train_curve),
        val_loss=tuple(val_curve),
        val_acc=tuple(acc_curve),
        best_epoch=best_epoch,
    )
    return model, history


def linear_probe(
    model: ConvClassifier, calib_trials, cfg: TrainConfig, val_frac: float = 0.2
) -> tuple[ConvClassifier, TrainHistory]:
    """Retrain only the head on calibration trials; everything else frozen.

    Returns a new model; the input is untouched and all non-head
    parameters of the result are bit-identical to it. The calibration
    pool is split internally for early stopping.
    """
    from .trialdata import split_train_val

    if isinstance(calib_trials, TrialSet):
        calib_trials = list(calib_trials.trials)
    probe_train, probe_val = split_train_val(list(calib_trials), val_frac, cfg.rng_seed)
    probed = model.copy()
    _, history = train(
        probed, probe_train, probe_val, cfg, trainable=("w_head", "b_head")
    )
    return probed, history


def save_checkpoint(model: ConvClassifier, path, extra: dict | None = None) -> None:
    """Checkpoint = length-prefixed JSON header + little-endian f64 blob."""
    header = {
        "config": {
            "channels": model.config.channels,
            "samples": model.config.samples,
            "temporal_filters": model.config.temporal_filters,
            "kernel_len": model.config.kernel_len,
            "spatial_filters": model.config.spatial_filters,
            "pool_len": model.config.pool_len,
            "pool_stride": model.config.pool_stride,
            "n_classes": model.config.n_classes,
        },
        "params": [[k, list(model.params[k].shape)] for k in PARAM_NAMES],
        "extra": extra or {},
    }
    blob = b"".join(
        np.ascontiguousarray(model.params[k], dtype="<f8").tobytes() for k in PARAM_NAMES
    )
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
        fh.write(blob)


def load_checkpoint(path) -> ConvClassifier:
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise ValueError(f"{path}: truncated checkpoint")
    (hlen,) = struct.unpack_from("<I", raw)
    header = json.loads(raw[4 : 4 + hlen].decode("utf-8"))
    config = ModelConfig(**header["config"])
    off = 4 + hlen
    params = {}
    for name, shape in header["params"]:
        count = int(np.prod(shape))
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=off)
        params[name] = arr.reshape(shape).astype(float)
        off += count * 8
    return ConvClassifier(config, params)
