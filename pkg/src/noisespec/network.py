"""From-scratch 1-d convolutional regression network.

Maps a sampled coherence curve to a normalized log-spectrum through an
autoencoder-style stack: four conv+maxpool blocks, three decoder convs
with two nearest-neighbour upsamplings, a single-channel conv, and a
linear dense readout.  Implemented directly on numpy so training is
deterministic for a fixed seed and BLAS thread count, and so
backpropagation can be validated against finite differences.

All tensors are float32; tests that need tighter arithmetic can convert a
model with ModelWeights.astype(np.float64) since every op follows the
input dtype.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
import struct
import time
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .forward import (CoherenceCurve, DEFAULT_TIME_MAX, DEFAULT_TIME_MIN,
                      DEFAULT_TIME_COUNT)
from .spectra import (DEFAULT_OMEGA_MAX, DEFAULT_OMEGA_MIN, FrequencyGrid,
                      NoiseSpectrum)

_MAGIC = b"NSPECWTS"
_FILE_VERSION = 1


class ConfigError(ValueError):
    """Network configuration cannot be built."""


class TrainingError(RuntimeError):
    """Training aborted (non-finite loss or incompatible data)."""


class GridMismatchError(ValueError):
    """Input curve grid differs from the grid the model was trained on."""


class WeightFormatError(ValueError):
    """Weight file is corrupt, truncated, or from a different config."""


@dataclass(frozen=True)
class NetworkConfig:
    input_len: int = 150
    output_len: int = 501
    encoder_channels: tuple[int, ...] = (40, 40, 40, 40)
    decoder_channels: tuple[int, ...] = (80, 160, 320, 1)
    kernel_size: int = 5
    pool_size: int = 2
    n_pools: int = 4
    n_upsamples: int = 2
    dropout_rate: float = 0.05

    def __post_init__(self):
        if self.kernel_size % 2 != 1 or self.kernel_size < 1:
            raise ConfigError("kernel_size must be odd and positive")
        if self.pool_size < 1:
            raise ConfigError("pool_size must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must lie in [0, 1)")
        if self.input_len < 1 or self.output_len < 1:
            raise ConfigError("input_len and output_len must be positive")
        if not self.encoder_channels or not self.decoder_channels:
            raise ConfigError("need at least one encoder and one decoder conv")
        if self.n_pools > len(self.encoder_channels):
            raise ConfigError("n_pools exceeds encoder depth")
        if self.n_upsamples > len(self.decoder_channels):
            raise ConfigError("n_upsamples exceeds decoder depth")
        layer_plan(self)  # raises if any pooled length collapses to zero

    def to_json(self) -> str:
        return json.dumps({
            "input_len": self.input_len, "output_len": self.output_len,
            "encoder_channels": list(self.encoder_channels),
            "decoder_channels": list(self.decoder_channels),
            "kernel_size": self.kernel_size, "pool_size": self.pool_size,
            "n_pools": self.n_pools, "n_upsamples": self.n_upsamples,
            "dropout_rate": self.dropout_rate}, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "NetworkConfig":
        raw = json.loads(text)
        raw["encoder_channels"] = tuple(raw["encoder_channels"])
        raw["decoder_channels"] = tuple(raw["decoder_channels"])
        return NetworkConfig(**raw)

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()


def layer_plan(config: NetworkConfig):
    """Ordered op list [(kind, name, c_in, c_out, length_out), ...].

    Pooling truncates (floor) and upsampling repeats, so lengths follow
    L -> L // pool and L -> L * pool.  Raises if pooling exhausts the
    sequence length.
    """
    ops = []
    length = config.input_len
    c_in = 1
    for i, c_out in enumerate(config.encoder_channels):
        ops.append(("conv", f"enc{i}", c_in, c_out, length))
        c_in = c_out
        if i < config.n_pools:
            length = length // config.pool_size
            if length < 1:
                raise ConfigError("pooling reduced the sequence length to zero")
            ops.append(("pool", f"pool{i}", c_in, c_in, length))
    for i, c_out in enumerate(config.decoder_channels):
        ops.append(("conv", f"dec{i}", c_in, c_out, length))
        c_in = c_out
        if i < config.n_upsamples:
            length = length * config.pool_size
            ops.append(("up", f"up{i}", c_in, c_in, length))
    flat = length * c_in
    ops.append(("dense", "dense", flat, config.output_len, config.output_len))
    return ops


FULL_CONFIG = NetworkConfig()
DESK_CONFIG = NetworkConfig(encoder_channels=(16, 16, 16, 16),
                            decoder_channels=(32, 64, 128, 1))


def parameter_count(config: NetworkConfig) -> int:
    total = 0
    for kind, _, c_in, c_out, _ in layer_plan(config):
        if kind == "conv":
            total += config.kernel_size * c_in * c_out + c_out
        elif kind == "dense":
            total += c_in * c_out + c_out
    return total


@dataclass
class ModelWeights:
    """Layer tensors plus the training-grid and normalization metadata."""

    config: NetworkConfig
    tensors: dict[str, np.ndarray]
    train_sigma: float = 0.0
    norm_mean: float = 0.0
    norm_std: float = 1.0
    omega_min: float = DEFAULT_OMEGA_MIN
    omega_max: float = DEFAULT_OMEGA_MAX
    time_min: float = DEFAULT_TIME_MIN
    time_max: float = DEFAULT_TIME_MAX

    def frequency_grid(self) -> FrequencyGrid:
        return FrequencyGrid(np.geomspace(self.omega_min, self.omega_max,
                                          self.config.output_len))

    def time_grid(self) -> np.ndarray:
        return np.geomspace(self.time_min, self.time_max, self.config.input_len)

    def astype(self, dtype) -> "ModelWeights":
        return replace(self, tensors={k: v.astype(dtype)
                                      for k, v in self.tensors.items()})

    def copy(self) -> "ModelWeights":
        return replace(self, tensors={k: v.copy() for k, v in self.tensors.items()})

    def stats_hash(self) -> str:
        packed = struct.pack("<6d", self.train_sigma, self.norm_mean,
                             self.norm_std, self.omega_min, self.omega_max,
                             self.time_min) + struct.pack("<d", self.time_max)
        return hashlib.sha256(packed).hexdigest()


_CONV_BIAS_INIT = 0.1


def build_network(config: NetworkConfig, seed=0) -> ModelWeights:
    """Deterministic per-seed initialization.

    Convolution kernels are fan-in-scaled uniform with a small positive
    bias so the rectifiers start active; the dense readout starts at zero
    so the convolutional path is silent until its gradients are aligned
    with the targets.  Without the silent start, the early mean-fitting
    phase drives the single-channel bottleneck into the dead-rectifier
    state and the model never recovers.
    """
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    for kind, name, c_in, c_out, _ in layer_plan(config):
        if kind == "conv":
            fan_in = config.kernel_size * c_in
            limit = np.sqrt(6.0 / fan_in)
            tensors[f"{name}_w"] = rng.uniform(
                -limit, limit, (config.kernel_size, c_in, c_out)).astype(np.float32)
            tensors[f"{name}_b"] = np.full(c_out, _CONV_BIAS_INIT, dtype=np.float32)
        elif kind == "dense":
            tensors["dense_w"] = np.zeros((c_in, c_out), dtype=np.float32)
            tensors["dense_b"] = np.zeros(c_out, dtype=np.float32)
    return ModelWeights(config=config, tensors=tensors)


# ---------------------------------------------------------------------------
# Layer math

def _conv_forward(x, w, b):
    batch, length, c_in = x.shape
    k = w.shape[0]
    pad = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (pad, pad), (0, 0)))
    cols = sliding_window_view(xp, k, axis=1).reshape(batch * length, c_in * k)
    wmat = w.transpose(1, 0, 2).reshape(c_in * k, -1)
    pre = (cols @ wmat + b).reshape(batch, length, -1)
    out = np.maximum(pre, 0.0)
    return out, (cols, wmat, pre > 0, x.shape)


def _conv_backward(dy, w, cache):
    cols, wmat, relu_mask, x_shape = cache
    batch, length, c_in = x_shape
    k = w.shape[0]
    pad = (k - 1) // 2
    dpre = (dy * relu_mask).reshape(batch * length, -1)
    dw = (cols.T @ dpre).reshape(c_in, k, -1).transpose(1, 0, 2)
    db = dpre.sum(axis=0)
    dcols = (dpre @ wmat.T).reshape(batch, length, c_in, k)
    dxp = np.zeros((batch, length + 2 * pad, c_in), dtype=dy.dtype)
    for j in range(k):
        dxp[:, j:j + length, :] += dcols[:, :, :, j]
    return dxp[:, pad:pad + length, :], dw, db


def _pool_forward(x, p):
    batch, length, ch = x.shape
    l_out = length // p
    xt = x[:, :l_out * p, :].reshape(batch, l_out, p, ch)
    idx = xt.argmax(axis=2)
    y = np.take_along_axis(xt, idx[:, :, None, :], axis=2)[:, :, 0, :]
    return y, (idx, x.shape)


def _pool_backward(dy, p, cache):
    idx, x_shape = cache
    batch, length, ch = x_shape
    l_out = length // p
    dxt = np.zeros((batch, l_out, p, ch), dtype=dy.dtype)
    np.put_along_axis(dxt, idx[:, :, None, :], dy[:, :, None, :], axis=2)
    dx = np.zeros(x_shape, dtype=dy.dtype)
    dx[:, :l_out * p, :] = dxt.reshape(batch, l_out * p, ch)
    return dx


def _upsample_forward(x, s):
    return np.repeat(x, s, axis=1), x.shape


def _upsample_backward(dy, s, x_shape):
    batch, length, ch = x_shape
    return dy.reshape(batch, length, s, ch).sum(axis=2)


def forward_pass(weights: ModelWeights, x: np.ndarray, training: bool = False,
                 dropout_rng: np.random.Generator | None = None):
    """Run the network on a (batch, input_len) array of curve values."""
    config = weights.config
    dtype = weights.tensors["dense_w"].dtype
    h = np.asarray(x, dtype=dtype).reshape(x.shape[0], config.input_len, 1)
    caches = []
    for kind, name, _, _, _ in layer_plan(config):
        if kind == "conv":
            h, cache = _conv_forward(h, weights.tensors[f"{name}_w"],
                                     weights.tensors[f"{name}_b"])
            caches.append((kind, name, cache))
        elif kind == "pool":
            h, cache = _pool_forward(h, config.pool_size)
            caches.append((kind, name, cache))
        elif kind == "up":
            h, cache = _upsample_forward(h, config.pool_size)
            caches.append((kind, name, cache))
        else:  # dense
            flat = h.reshape(h.shape[0], -1)
            if training and config.dropout_rate > 0.0:
                if dropout_rng is None:
                    raise TrainingError("dropout requires an rng in training mode")
                keep = (dropout_rng.random(flat.shape) >= config.dropout_rate)
                flat = flat * keep.astype(dtype) / (1.0 - config.dropout_rate)
                caches.append(("dropout", name, (keep, h.shape)))
            else:
                caches.append(("dropout", name, (None, h.shape)))
            caches.append((kind, name, flat))
            h = flat @ weights.tensors["dense_w"] + weights.tensors["dense_b"]
    return h, caches


def backward_pass(weights: ModelWeights, caches, dy: np.ndarray):
    """Gradients of the scalar loss w.r.t. every tensor, given dL/dy."""
    config = weights.config
    grads: dict[str, np.ndarray] = {}
    dh = np.asarray(dy, dtype=weights.tensors["dense_w"].dtype)
    for kind, name, cache in reversed(caches):
        if kind == "dense":
            flat = cache
            grads["dense_w"] = flat.T @ dh
            grads["dense_b"] = dh.sum(axis=0)
            dh = dh @ weights.tensors["dense_w"].T
        elif kind == "dropout":
            keep, shape = cache
            if keep is not None:
                dh = dh * keep.astype(dh.dtype) / (1.0 - config.dropout_rate)
            dh = dh.reshape(shape)
        elif kind == "up":
            dh = _upsample_backward(dh, config.pool_size, cache)
        elif kind == "pool":
            dh = _pool_backward(dh, config.pool_size, cache)
        else:  # conv
            dh, dw, db = _conv_backward(dh, weights.tensors[f"{name}_w"], cache)
            grads[f"{name}_w"] = dw
            grads[f"{name}_b"] = db
    return grads


# ---------------------------------------------------------------------------
# Training

@dataclass
class TrainReport:
    train_mae: list[float] = field(default_factory=list)
    val_mae: list[float] = field(default_factory=list)
    wall_time_s: float = 0.0

    @property
    def epochs(self) -> int:
        return len(self.train_mae)

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("epoch,train_mae,val_mae\n")
            for i, (tr, va) in enumerate(zip(self.train_mae, self.val_mae), 1):
                fh.write(f"{i},{tr:.17g},{va:.17g}\n")


class _Adam:
    def __init__(self, tensors, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in tensors.items()}
        self.v = {k: np.zeros_like(v) for k, v in tensors.items()}
        self.t = 0

    def step(self, tensors, grads):
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for key in tensors:
            g = grads[key]
            self.m[key] = self.beta1 * self.m[key] + (1.0 - self.beta1) * g
            self.v[key] = self.beta2 * self.v[key] + (1.0 - self.beta2) * g * g
            m_hat = self.m[key] / correction1
            v_hat = self.v[key] / correction2
            tensors[key] -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(
                tensors[key].dtype)


def _batched_mae(weights, inputs, targets, batch=256) -> float:
    total = 0.0
    for start in range(0, inputs.shape[0], batch):
        pred, _ = forward_pass(weights, inputs[start:start + batch])
        total += float(np.sum(np.abs(pred - targets[start:start + batch])))
    return total / targets.size


def train(weights: ModelWeights, corpus, epochs: int, batch_size: int = 64,
          learning_rate: float = 1e-3, seed=0,
          final_lr_fraction: float = 1.0) -> tuple[ModelWeights, TrainReport]:
    """Adam-driven mini-batch training on mean absolute error.

    Dropout is active only here; the returned weights carry the corpus
    normalization statistics and grids so prediction can undo the target
    transform.  Deterministic for a fixed seed and BLAS thread count.
    final_lr_fraction < 1 enables cosine decay of the learning rate down
    to learning_rate * final_lr_fraction at the last epoch.
    """
    manifest = corpus.manifest
    config = weights.config
    if manifest.time_count != config.input_len:
        raise TrainingError(f"corpus curves have {manifest.time_count} points, "
                            f"config expects {config.input_len}")
    if manifest.omega_count != config.output_len:
        raise TrainingError(f"corpus spectra have {manifest.omega_count} points, "
                            f"config expects {config.output_len}")

    model = replace(weights.copy(),
                    train_sigma=manifest.noise_sigma,
                    norm_mean=manifest.norm_mean, norm_std=manifest.norm_std,
                    omega_min=manifest.omega_min, omega_max=manifest.omega_max,
                    time_min=manifest.time_min, time_max=manifest.time_max)

    x_train = corpus.split("train").curves.astype(np.float32)
    y_train = corpus.normalized_targets("train").astype(np.float32)
    x_val = corpus.split("validation").curves.astype(np.float32)
    y_val = corpus.normalized_targets("validation").astype(np.float32)

    optimizer = _Adam(model.tensors, learning_rate)
    report = TrainReport()
    started = time.perf_counter()
    n = x_train.shape[0]
    final_lr = learning_rate * final_lr_fraction
    for epoch in range(epochs):
        if epochs > 1:
            phase = 0.5 * (1.0 + math.cos(math.pi * epoch / (epochs - 1)))
            optimizer.lr = final_lr + (learning_rate - final_lr) * phase
        shuffle_rng = np.random.default_rng(np.random.SeedSequence((seed, epoch, 0)))
        dropout_rng = np.random.default_rng(np.random.SeedSequence((seed, epoch, 1)))
        order = shuffle_rng.permutation(n)
        epoch_abs = 0.0
        for start in range(0, n, batch_size):
            batch = order[start:start + batch_size]
            xb, yb = x_train[batch], y_train[batch]
            pred, caches = forward_pass(model, xb, training=True,
                                        dropout_rng=dropout_rng)
            diff = pred - yb
            loss = float(np.mean(np.abs(diff)))
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch + 1}, "
                                    f"batch {start // batch_size + 1}")
            dy = np.sign(diff) / diff.size
            grads = backward_pass(model, caches, dy)
            optimizer.step(model.tensors, grads)
            epoch_abs += loss * diff.size
        report.train_mae.append(epoch_abs / (n * config.output_len))
        report.val_mae.append(_batched_mae(model, x_val, y_val))
    report.wall_time_s = time.perf_counter() - started
    return model, report


# ---------------------------------------------------------------------------
# Inference

def predict_batch(weights: ModelWeights, curves: np.ndarray,
                  batch: int = 256) -> np.ndarray:
    """Denormalized spectra (linear scale) for an array of curve values."""
    out = np.empty((curves.shape[0], weights.config.output_len))
    for start in range(0, curves.shape[0], batch):
        z, _ = forward_pass(weights, np.asarray(curves[start:start + batch],
                                                dtype=np.float32))
        out[start:start + batch] = z
    return np.power(10.0, out * weights.norm_std + weights.norm_mean)


def predict(weights: ModelWeights, curve: CoherenceCurve) -> NoiseSpectrum:
    """Invert one coherence curve to a noise spectrum (dropout disabled)."""
    expected = weights.time_grid()
    if curve.times.shape != expected.shape:
        raise GridMismatchError(f"curve has {curve.times.size} points, model "
                                f"expects {expected.size}")
    if np.max(np.abs(curve.times / expected - 1.0)) > 1e-9:
        raise GridMismatchError("curve time grid differs from the training grid")
    values = predict_batch(weights, curve.values[None, :])[0]
    return NoiseSpectrum(weights.frequency_grid(), values)


# ---------------------------------------------------------------------------
# Weight serialization

def save_weights(weights: ModelWeights, path) -> None:
    """Versioned binary container with raw little-endian float32 tensors."""
    config_json = weights.config.to_json().encode()
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<I", _FILE_VERSION))
    buf.write(weights.config.fingerprint().encode())
    buf.write(weights.stats_hash().encode())
    buf.write(struct.pack("<7d", weights.train_sigma, weights.norm_mean,
                          weights.norm_std, weights.omega_min,
                          weights.omega_max, weights.time_min,
                          weights.time_max))
    buf.write(struct.pack("<I", len(config_json)))
    buf.write(config_json)
    names = list(weights.tensors)
    buf.write(struct.pack("<I", len(names)))
    for name in names:
        tensor = weights.tensors[name]
        encoded = name.encode()
        buf.write(struct.pack("<H", len(encoded)))
        buf.write(encoded)
        buf.write(struct.pack("<B", tensor.ndim))
        buf.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
    for name in names:
        buf.write(weights.tensors[name].astype("<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_weights(path) -> ModelWeights:
    with open(path, "rb") as fh:
        data = fh.read()
    view = io.BytesIO(data)

    def take(n: int) -> bytes:
        chunk = view.read(n)
        if len(chunk) != n:
            raise WeightFormatError(f"{path}: truncated weight file")
        return chunk

    if take(8) != _MAGIC:
        raise WeightFormatError(f"{path}: not a weight file")
    (version,) = struct.unpack("<I", take(4))
    if version != _FILE_VERSION:
        raise WeightFormatError(f"{path}: unsupported version {version}")
    fingerprint = take(64).decode()
    stats_hash = take(64).decode()
    (train_sigma, norm_mean, norm_std, omega_min, omega_max,
     time_min, time_max) = struct.unpack("<7d", take(56))
    (config_len,) = struct.unpack("<I", take(4))
    config = NetworkConfig.from_json(take(config_len).decode())
    if config.fingerprint() != fingerprint:
        raise WeightFormatError(f"{path}: config fingerprint mismatch")
    (n_tensors,) = struct.unpack("<I", take(4))
    shapes: list[tuple[str, tuple[int, ...]]] = []
    for _ in range(n_tensors):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode()
        (ndim,) = struct.unpack("<B", take(1))
        dims = struct.unpack(f"<{ndim}I", take(4 * ndim))
        shapes.append((name, dims))
    tensors: dict[str, np.ndarray] = {}
    for name, dims in shapes:
        size = int(np.prod(dims)) if dims else 1
        raw = np.frombuffer(take(4 * size), dtype="<f4")
        tensors[name] = raw.reshape(dims).astype(np.float32)
    if view.read(1):
        raise WeightFormatError(f"{path}: trailing bytes in weight file")
    model = ModelWeights(config=config, tensors=tensors,
                         train_sigma=train_sigma, norm_mean=norm_mean,
                         norm_std=norm_std, omega_min=omega_min,
                         omega_max=omega_max, time_min=time_min,
                         time_max=time_max)
    if model.stats_hash() != stats_hash:
        raise WeightFormatError(f"{path}: statistics hash mismatch")
    expected = {f"{name}_w" for kind, name, *_ in layer_plan(config)
                if kind in ("conv", "dense")}
    if expected - set(tensors):
        raise WeightFormatError(f"{path}: missing tensors for this config")
    for name, tensor in tensors.items():
        if not np.all(np.isfinite(tensor)):
            raise WeightFormatError(f"{path}: non-finite values in {name}")
    return model
