"""Toy dense autoencoder with in-repo reverse-mode differentiation.

Training objective: mean over the batch of squared reconstruction distance,
plus lam times the repulsive pair loss on the latent codes of the batch.
Optimization is Adam with decoupled weight decay.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .datasets import Dataset
from .kernel import ParamSet, PointBatch, batch_loss, batch_loss_gradient

__all__ = [
    "DenseNetSpec",
    "DenseNet",
    "TrainConfig",
    "TrainReport",
    "total_loss",
    "total_loss_gradients",
    "train",
    "encode_dataset",
    "save_checkpoint",
    "load_checkpoint",
]

LEAKY_SLOPE = 0.1
_ACTIVATIONS = ("identity", "relu", "leaky-relu", "sigmoid")
CHECKPOINT_MAGIC = b"EAE1"


def _act(tag: str, pre: np.ndarray) -> np.ndarray:
    if tag == "identity":
        return pre
    if tag == "relu":
        return np.maximum(pre, 0.0)
    if tag == "leaky-relu":
        return np.where(pre > 0.0, pre, LEAKY_SLOPE * pre)
    if tag == "sigmoid":
        return 1.0 / (1.0 + np.exp(-pre))
    raise ValueError(f"unknown activation {tag!r}")


def _act_grad(tag: str, pre: np.ndarray, out: np.ndarray) -> np.ndarray:
    if tag == "identity":
        return np.ones_like(pre)
    if tag == "relu":
        return (pre > 0.0).astype(np.float64)
    if tag == "leaky-relu":
        return np.where(pre > 0.0, 1.0, LEAKY_SLOPE)
    if tag == "sigmoid":
        return out * (1.0 - out)
    raise ValueError(f"unknown activation {tag!r}")


@dataclass(frozen=True)
class DenseNetSpec:
    """Layer widths (input first) and one activation tag per affine layer."""

    layer_widths: tuple
    activations: tuple

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        acts = tuple(self.activations)
        if len(widths) < 2:
            raise ValueError(f"need at least input and output widths, got {widths}")
        if any(w < 1 for w in widths):
            raise ValueError(f"widths must be positive, got {widths}")
        if len(acts) != len(widths) - 1:
            raise ValueError(
                f"need {len(widths) - 1} activation tags for {len(widths)} widths, got {len(acts)}"
            )
        for tag in acts:
            if tag not in _ACTIVATIONS:
                raise ValueError(f"unknown activation {tag!r}; expected one of {_ACTIVATIONS}")
        object.__setattr__(self, "layer_widths", widths)
        object.__setattr__(self, "activations", acts)

    @property
    def in_width(self) -> int:
        return self.layer_widths[0]

    @property
    def out_width(self) -> int:
        return self.layer_widths[-1]


class DenseNet:
    """Fully connected network with explicit forward/backward passes.

    Weights W have shape (fan_in, fan_out); a layer computes x @ W + b
    followed by its activation.
    """

    def __init__(self, spec: DenseNetSpec, weights, biases):
        self.spec = spec
        self.weights = weights
        self.biases = biases

    @classmethod
    def initialize(cls, spec: DenseNetSpec, rng: np.random.Generator) -> "DenseNet":
        """Uniform init in +-sqrt(6/(fan_in+fan_out)), zero biases."""
        weights, biases = [], []
        for fi, fo in zip(spec.layer_widths[:-1], spec.layer_widths[1:]):
            bound = np.sqrt(6.0 / (fi + fo))
            weights.append(rng.uniform(-bound, bound, size=(fi, fo)))
            biases.append(np.zeros(fo))
        return cls(spec, weights, biases)

    def copy(self) -> "DenseNet":
        return DenseNet(self.spec, [w.copy() for w in self.weights],
                        [b.copy() for b in self.biases])

    def forward(self, x: np.ndarray, with_cache: bool = False):
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.shape[1] != self.spec.in_width:
            raise ValueError(f"input width {x.shape[1]} != spec width {self.spec.in_width}")
        cache = []
        out = x
        for w, b, tag in zip(self.weights, self.biases, self.spec.activations):
            pre = out @ w + b
            new = _act(tag, pre)
            cache.append((out, pre, new))
            out = new
        if squeeze:
            out = out[0]
        if with_cache:
            return out, cache
        return out

    def backward(self, cache, grad_out: np.ndarray):
        """Propagate grad_out back through a cached forward pass.

        Returns (grad_input, grads_w, grads_b) with gradients summed over
        the batch axis.
        """
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        g = np.asarray(grad_out, dtype=np.float64)
        for i in range(len(self.weights) - 1, -1, -1):
            inp, pre, out = cache[i]
            g = g * _act_grad(self.spec.activations[i], pre, out)
            grads_w[i] = inp.T @ g
            grads_b[i] = g.sum(axis=0)
            g = g @ self.weights[i].T
        return g, grads_w, grads_b

    def parameters(self):
        return self.weights + self.biases


@dataclass(frozen=True)
class TrainConfig:
    encoder: DenseNetSpec
    decoder: DenseNetSpec
    params: ParamSet
    batch_size: int = 100
    epochs: int = 1
    learning_rate: float = 1e-4
    weight_decay: float = 1e-6
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.encoder.out_width != self.params.dim:
            raise ValueError(
                f"encoder output width {self.encoder.out_width} != latent dim {self.params.dim}"
            )
        if self.decoder.in_width != self.params.dim:
            raise ValueError(
                f"decoder input width {self.decoder.in_width} != latent dim {self.params.dim}"
            )
        if self.encoder.in_width != self.decoder.out_width:
            raise ValueError("encoder input width must equal decoder output width")
        if self.batch_size < 2:
            raise ValueError(f"batch_size must be >= 2 (pair loss needs pairs), got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be nonnegative, got {self.epochs}")


@dataclass(frozen=True)
class TrainReport:
    recon_trace: list = field(repr=False)
    reg_trace: list = field(repr=False)
    encoder: DenseNet = field(repr=False, default=None)
    decoder: DenseNet = field(repr=False, default=None)
    embedding: PointBatch = field(repr=False, default=None)


def total_loss(x: np.ndarray, encoder: DenseNet, decoder: DenseNet,
               params: ParamSet) -> tuple[float, float, float]:
    """(recon, reg, total) where recon is the batch mean of |x - x_hat|^2."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] < 2:
        raise ValueError(f"batch must have >= 2 items, got {x.shape[0]}")
    z = encoder.forward(x)
    x_hat = decoder.forward(z)
    recon = float(np.mean(np.sum((x - x_hat) ** 2, axis=1)))
    reg = batch_loss(PointBatch(z), params)
    return recon, reg, recon + params.lam * reg


def total_loss_gradients(x: np.ndarray, encoder: DenseNet, decoder: DenseNet,
                         params: ParamSet):
    """Loss values plus gradients of the total loss for every parameter.

    Returns (recon, reg, total, enc_grads, dec_grads) where each grads entry
    is ([dW...], [db...]) in layer order.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] < 2:
        raise ValueError(f"batch must have >= 2 items, got {x.shape[0]}")
    b = x.shape[0]
    z, enc_cache = encoder.forward(x, with_cache=True)
    x_hat, dec_cache = decoder.forward(z, with_cache=True)
    recon = float(np.mean(np.sum((x - x_hat) ** 2, axis=1)))

    grad_xhat = 2.0 * (x_hat - x) / b
    grad_z, dec_w, dec_b = decoder.backward(dec_cache, grad_xhat)
    if params.lam > 0:
        reg = batch_loss(PointBatch(z), params)
        # latent codes also feed the regularizer directly
        grad_z = grad_z + params.lam * batch_loss_gradient(PointBatch(z), params)
    else:
        # lam = 0 reduces to a plain reconstruction autoencoder
        reg = 0.0
    _, enc_w, enc_b = encoder.backward(enc_cache, grad_z)
    return recon, reg, recon + params.lam * reg, (enc_w, enc_b), (dec_w, dec_b)


class _Adam:
    """Adam with decoupled weight decay over a flat parameter list."""

    def __init__(self, params, lr, beta1, beta2, eps, weight_decay):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * ((m / b1c) / (np.sqrt(v / b2c) + self.eps)
                            + self.weight_decay * p)


def train(config: TrainConfig, dataset: Dataset,
          holdout: Dataset | None = None) -> TrainReport:
    """Train the autoencoder; returns loss traces and a held-out embedding.

    Epochs are shuffled deterministically from the seed.  A trailing partial
    batch is kept if it still holds a pair, otherwise dropped.  The holdout
    defaults to the training set itself.
    """
    if dataset.count < config.batch_size:
        raise ValueError(
            f"dataset size {dataset.count} < batch_size {config.batch_size}"
        )
    rng = np.random.default_rng(config.seed)
    encoder = DenseNet.initialize(config.encoder, rng)
    decoder = DenseNet.initialize(config.decoder, rng)
    opt = _Adam(encoder.parameters() + decoder.parameters(),
                config.learning_rate, config.adam_beta1, config.adam_beta2,
                config.adam_epsilon, config.weight_decay)

    recon_trace, reg_trace = [], []
    data = dataset.data
    for epoch in range(config.epochs):
        perm = rng.permutation(dataset.count)
        recon_sum = reg_sum = 0.0
        batches = 0
        for start in range(0, dataset.count, config.batch_size):
            idx = perm[start:start + config.batch_size]
            if idx.size < 2:
                continue
            x = data[idx]
            recon, reg, total, (ew, eb), (dw, db) = total_loss_gradients(
                x, encoder, decoder, config.params)
            if not np.isfinite(total):
                raise FloatingPointError(
                    f"non-finite loss at epoch {epoch}, batch {batches}"
                )
            opt.step(encoder.parameters() + decoder.parameters(),
                     ew + eb + dw + db)
            recon_sum += recon
            reg_sum += reg
            batches += 1
        recon_trace.append(recon_sum / batches)
        reg_trace.append(reg_sum / batches)

    held = holdout if holdout is not None else dataset
    return TrainReport(
        recon_trace=recon_trace,
        reg_trace=reg_trace,
        encoder=encoder,
        decoder=decoder,
        embedding=encode_dataset(encoder, held),
    )


def encode_dataset(encoder: DenseNet, dataset: Dataset) -> PointBatch | None:
    """Map every item through the encoder, preserving order."""
    if dataset.count == 0:
        return None
    return PointBatch(encoder.forward(dataset.data))


def save_checkpoint(net: DenseNet, path):
    """Flat binary checkpoint: magic, u32 width count, widths, float64 params.

    Parameters are written in layer order, each weight matrix row-major and
    followed by its bias vector.  Activations are not stored; supply the
    spec when loading.
    """
    widths = net.spec.layer_widths
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(widths)))
        fh.write(struct.pack(f"<{len(widths)}I", *widths))
        for w, b in zip(net.weights, net.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_checkpoint(path, spec: DenseNetSpec) -> DenseNet:
    """Load a checkpoint written by save_checkpoint; widths must match spec."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: bad checkpoint magic {buf[:4]!r}")
    (count,) = struct.unpack("<I", buf[4:8])
    widths = struct.unpack(f"<{count}I", buf[8:8 + 4 * count])
    if widths != spec.layer_widths:
        raise ValueError(f"{path}: widths {widths} do not match spec {spec.layer_widths}")
    offset = 8 + 4 * count
    weights, biases = [], []
    for fi, fo in zip(widths[:-1], widths[1:]):
        w = np.frombuffer(buf, dtype="<f8", count=fi * fo, offset=offset).reshape(fi, fo)
        offset += 8 * fi * fo
        b = np.frombuffer(buf, dtype="<f8", count=fo, offset=offset)
        offset += 8 * fo
        weights.append(w.copy())
        biases.append(b.copy())
    if offset != len(buf):
        raise ValueError(f"{path}: trailing bytes after parameters ({len(buf) - offset})")
    return DenseNet(spec, weights, biases)
