"""Fully connected rectifier network trained by minibatch SGD on MSE."""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import DivergenceError, DomainError
from ..scale_time_predictor import mlp_param_count
from .data import Dataset

WEIGHT_INIT = "normal(0, 2/fan_in), zero bias"
MLP_DEPTH = 6


@dataclass
class MlpModel:
    layer_widths: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    seed: int | None = None
    activation: str = "relu"

    def __post_init__(self):
        if len(self.weights) != len(self.layer_widths) - 1 or len(self.biases) != len(self.weights):
            raise DomainError("one weight matrix and bias per layer transition")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (self.layer_widths[i], self.layer_widths[i + 1]) or b.shape != (self.layer_widths[i + 1],):
                raise DomainError(f"layer {i} has shape {W.shape}/{b.shape}")
        if self.activation not in ("relu", "identity"):
            raise DomainError(f"unknown activation {self.activation!r}")

    @property
    def param_count(self) -> int:
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    def copy(self) -> "MlpModel":
        return MlpModel(list(self.layer_widths), [W.copy() for W in self.weights],
                        [b.copy() for b in self.biases], self.seed, self.activation)

    def digest(self) -> str:
        h = hashlib.sha256()
        for W, b in zip(self.weights, self.biases):
            h.update(np.ascontiguousarray(W).tobytes())
            h.update(np.ascontiguousarray(b).tobytes())
        return h.hexdigest()

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self._forward(x)[-1]

    def _forward(self, x: np.ndarray) -> list[np.ndarray]:
        acts = [np.asarray(x, dtype=float)]
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = acts[-1] @ W + b
            if i < last and self.activation == "relu":
                z = np.maximum(z, 0.0)
            acts.append(z)
        return acts

    def gradients(self, x: np.ndarray, y: np.ndarray) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
        """MSE (mean over rows and outputs) and its parameter gradients."""
        acts = self._forward(x)
        resid = acts[-1] - y
        loss = float(np.mean(resid * resid))
        delta = 2.0 * resid / resid.size
        gW, gb = [None] * len(self.weights), [None] * len(self.weights)
        for i in range(len(self.weights) - 1, -1, -1):
            gW[i] = acts[i].T @ delta
            gb[i] = delta.sum(axis=0)
            if i:
                delta = delta @ self.weights[i].T
                if self.activation == "relu":
                    delta = delta * (acts[i] > 0)
        return loss, gW, gb


def from_widths(layer_widths: list[int], seed: int, activation: str = "relu") -> MlpModel:
    """He-normal weights and zero biases for arbitrary layer widths."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_widths[:-1], layer_widths[1:]):
        weights.append(rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in))
        biases.append(np.zeros(fan_out))
    return MlpModel(list(layer_widths), weights, biases, seed, activation)


def build_mlp(in_dim: int, width_scale: int, out_dim: int, seed: int, depth: int = MLP_DEPTH) -> MlpModel:
    """Six affine layers, hidden width ``10 * width_scale``."""
    if width_scale < 1:
        raise DomainError("width scale must be at least 1")
    width = 10 * width_scale
    model = from_widths([in_dim] + [width] * (depth - 1) + [out_dim], seed)
    assert model.param_count == mlp_param_count(in_dim, width, depth, out_dim)
    return model


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 0.01
    seed: int = 101
    eval_every: int = 1

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.eval_every < 1:
            raise DomainError("need epochs >= 0, batch_size >= 1, eval_every >= 1")
        if not self.learning_rate > 0:
            raise DomainError("learning rate must be positive")


@dataclass
class TrainingTrace:
    epochs_logged: list[int] = field(default_factory=list)
    train_mse: list[float] = field(default_factory=list)
    test_mse: list[float] = field(default_factory=list)
    final_model_digest: str = ""
    config: dict = field(default_factory=dict)


def evaluate_mse(model: MlpModel, ds: Dataset, batch: int = 4096) -> float:
    """Squared residual averaged over samples and output coordinates."""
    if ds.dim != model.layer_widths[0] or ds.n_classes != model.layer_widths[-1]:
        raise DomainError("dataset shape does not match the model")
    total = 0.0
    for start in range(0, len(ds), batch):
        r = model.forward(ds.inputs[start:start + batch]) - ds.labels[start:start + batch]
        total += float(np.sum(r * r))
    return total / (len(ds) * ds.n_classes)


def sgd_step(model: MlpModel, x: np.ndarray, y: np.ndarray, lr: float) -> float:
    loss, gW, gb = model.gradients(x, y)
    for W, b, dW, db in zip(model.weights, model.biases, gW, gb):
        W -= lr * dW
        b -= lr * db
    return loss


def train_sgd(model: MlpModel, train: Dataset, test: Dataset, cfg: TrainConfig) -> TrainingTrace:
    """Shuffled minibatch SGD; updates ``model`` in place and logs MSE.

    The shuffle of epoch ``e`` comes from a stream seeded by ``(cfg.seed, e)``;
    the last partial batch is kept.
    """
    trace = TrainingTrace(config={**asdict(cfg), "weight_init": WEIGHT_INIT, "model_seed": model.seed,
                                  "layer_widths": list(model.layer_widths)})

    def log(epoch: int):
        tr, te = evaluate_mse(model, train), evaluate_mse(model, test)
        if not (np.isfinite(tr) and np.isfinite(te)):
            raise DivergenceError(epoch, "loss")
        trace.epochs_logged.append(epoch)
        trace.train_mse.append(tr)
        trace.test_mse.append(te)

    log(0)
    n = len(train)
    for epoch in range(1, cfg.epochs + 1):
        order = np.random.default_rng([int(cfg.seed), epoch]).permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            sgd_step(model, train.inputs[idx], train.labels[idx], cfg.learning_rate)
        if epoch % cfg.eval_every == 0 or epoch == cfg.epochs:
            log(epoch)
    trace.final_model_digest = model.digest()
    return trace
