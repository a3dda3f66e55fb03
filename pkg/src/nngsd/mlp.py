"""From-scratch multilayer perceptron with sigmoid layers and Adam training.

The default detector architecture is layer sizes (5, 20, 50, 20, 5):
five angle inputs, three hidden layers, five outputs, with the logistic
sigmoid y = e^x / (e^x + 1) on every layer boundary including the output.
Everything is plain numpy so the analytic gradients can be checked against
central finite differences, and training is single-threaded with a fixed
accumulation order so a (seed, data, config) triple fully determines the
trained weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .configio import ConfigError, format_float, read_config

DEFAULT_LAYER_SIZES = (5, 20, 50, 20, 5)

LOSSES = ("mse", "cross_entropy")

# Training aborts once any loss crosses this or goes non-finite.
LOSS_ABS_LIMIT = 1.0e6


class CheckpointError(ConfigError):
    """Unreadable, truncated, or shape-incompatible checkpoint file."""


class TrainingDiverged(RuntimeError):
    """Loss became non-finite or exceeded the divergence guard."""


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic sigmoid."""
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass(eq=False)
class MlpNetwork:
    """Layer sizes plus per-layer weight matrices (out x in) and bias vectors.

    ``input_scaling`` optionally holds per-column (min, max) bounds applied
    as min-max scaling before the first layer; it travels with the
    checkpoint.
    """

    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    input_scaling: tuple[np.ndarray, np.ndarray] | None = None

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        if len(self.layer_sizes) < 2 or any(s < 1 for s in self.layer_sizes):
            raise ValueError(f"bad layer_sizes {self.layer_sizes}")
        expected = len(self.layer_sizes) - 1
        if len(self.weights) != expected or len(self.biases) != expected:
            raise ValueError(
                f"need {expected} weight/bias layers, got "
                f"{len(self.weights)}/{len(self.biases)}")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            want = (self.layer_sizes[k + 1], self.layer_sizes[k])
            if w.shape != want:
                raise ValueError(f"weights[{k}] has shape {w.shape}, expected {want}")
            if b.shape != (self.layer_sizes[k + 1],):
                raise ValueError(
                    f"biases[{k}] has shape {b.shape}, expected ({self.layer_sizes[k + 1]},)")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {k} parameters must be finite")
        if self.input_scaling is not None:
            lo, hi = (np.asarray(a, dtype=float) for a in self.input_scaling)
            if lo.shape != (self.layer_sizes[0],) or hi.shape != lo.shape:
                raise ValueError("input_scaling bounds must match the input width")
            self.input_scaling = (lo, hi)

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    def copy(self) -> "MlpNetwork":
        scaling = None
        if self.input_scaling is not None:
            scaling = (self.input_scaling[0].copy(), self.input_scaling[1].copy())
        return MlpNetwork(self.layer_sizes, [w.copy() for w in self.weights],
                          [b.copy() for b in self.biases], scaling)


def init_network(layer_sizes=DEFAULT_LAYER_SIZES, seed: int = 0) -> MlpNetwork:
    """Seeded init: weights uniform in +-sqrt(6/(fan_in+fan_out)), zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes, layer_sizes[1:]):
        r = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-r, r, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpNetwork(tuple(layer_sizes), weights, biases)


def _scaled(net: MlpNetwork, x: np.ndarray) -> np.ndarray:
    if net.input_scaling is None:
        return x
    lo, hi = net.input_scaling
    span = np.where(hi > lo, hi - lo, 1.0)
    return (x - lo) / span


def _activations(net: MlpNetwork, x: np.ndarray) -> list[np.ndarray]:
    """All layer activations for a 2-D batch, input (scaled) first."""
    a = _scaled(net, x)
    acts = [a]
    for w, b in zip(net.weights, net.biases):
        a = sigmoid(a @ w.T + b)
        acts.append(a)
    return acts


def forward(net: MlpNetwork, x) -> np.ndarray:
    """Iterated affine-then-sigmoid maps; accepts one input vector or a batch."""
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    batch = arr[None, :] if single else arr
    if batch.ndim != 2 or batch.shape[1] != net.n_inputs:
        raise ValueError(
            f"input width {batch.shape[-1]} does not match network input "
            f"width {net.n_inputs}")
    if not np.all(np.isfinite(batch)):
        raise ValueError("network input must be finite")
    out = _activations(net, batch)[-1]
    return out[0] if single else out


def loss_value(net: MlpNetwork, inputs: np.ndarray, targets: np.ndarray,
               loss: str = "mse") -> float:
    y = forward(net, np.atleast_2d(inputs))
    t = np.atleast_2d(np.asarray(targets, dtype=float))
    if loss == "mse":
        return float(np.mean((y - t) ** 2))
    if loss == "cross_entropy":
        eps = 1.0e-12
        yc = np.clip(y, eps, 1.0 - eps)
        return float(np.mean(-t * np.log(yc) - (1.0 - t) * np.log(1.0 - yc)))
    raise ValueError(f"unknown loss {loss!r}")


def backward(net: MlpNetwork, inputs: np.ndarray, targets: np.ndarray,
             loss: str = "mse") -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Gradients of the mean batch loss w.r.t. every weight matrix and bias."""
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    t = np.atleast_2d(np.asarray(targets, dtype=float))
    if x.shape[0] == 0:
        raise ValueError("backward needs a non-empty batch")
    if t.shape != (x.shape[0], net.n_outputs):
        raise ValueError(f"targets shape {t.shape} does not match outputs")
    acts = _activations(net, x)
    y = acts[-1]
    n_cells = y.size
    if loss == "mse":
        value = float(np.mean((y - t) ** 2))
        delta = (2.0 * (y - t) / n_cells) * y * (1.0 - y)
    elif loss == "cross_entropy":
        eps = 1.0e-12
        yc = np.clip(y, eps, 1.0 - eps)
        value = float(np.mean(-t * np.log(yc) - (1.0 - t) * np.log(1.0 - yc)))
        delta = (y - t) / n_cells
    else:
        raise ValueError(f"unknown loss {loss!r}")
    if not np.isfinite(value):
        raise TrainingDiverged(f"non-finite {loss} loss on a batch of {x.shape[0]}")

    grad_w = [np.empty(0)] * len(net.weights)
    grad_b = [np.empty(0)] * len(net.biases)
    for k in range(len(net.weights) - 1, -1, -1):
        grad_w[k] = delta.T @ acts[k]
        grad_b[k] = np.sum(delta, axis=0)
        if k > 0:
            delta = (delta @ net.weights[k]) * acts[k] * (1.0 - acts[k])
    return grad_w, grad_b


def accuracy(net: MlpNetwork, inputs: np.ndarray, targets: np.ndarray,
             threshold: float = 0.5) -> float:
    """Per-sample-per-output accuracy in percent at the given threshold."""
    y = forward(net, np.atleast_2d(inputs))
    verdicts = (y >= threshold).astype(np.int64)
    return 100.0 * float(np.mean(verdicts == np.atleast_2d(targets)))


def accuracy_all_outputs(net: MlpNetwork, inputs: np.ndarray, targets: np.ndarray,
                         threshold: float = 0.5) -> float:
    """Percent of samples with every output correct at the given threshold."""
    y = forward(net, np.atleast_2d(inputs))
    verdicts = (y >= threshold).astype(np.int64)
    return 100.0 * float(np.mean(np.all(verdicts == np.atleast_2d(targets), axis=1)))


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 1.0e-3
    early_stop_patience: int = 20
    seed: int = 0
    loss: str = "mse"

    def __post_init__(self):
        if min(self.max_epochs, self.batch_size, self.early_stop_patience) < 1:
            raise ValueError("epochs, batch size and patience must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.early_stop_patience > self.max_epochs:
            raise ValueError("early_stop_patience must be <= max_epochs")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")


@dataclass
class TrainReport:
    epochs_run: int
    train_loss: float
    validation_loss: float
    test_loss: float | None
    train_accuracy: float
    validation_accuracy: float
    test_accuracy: float | None
    train_accuracy_all_outputs: float
    validation_accuracy_all_outputs: float
    test_accuracy_all_outputs: float | None
    loss_curve: tuple[tuple[float, float], ...] = field(default_factory=tuple)

    def __post_init__(self):
        for value in (self.train_accuracy, self.validation_accuracy, self.test_accuracy,
                      self.train_accuracy_all_outputs,
                      self.validation_accuracy_all_outputs,
                      self.test_accuracy_all_outputs):
            if value is not None and not (0.0 <= value <= 100.0):
                raise ValueError(f"accuracy {value} outside [0, 100]")


def _check_pair(net, data, name):
    x, t = (np.asarray(a, dtype=float) for a in data)
    if x.ndim != 2 or x.shape[1] != net.n_inputs:
        raise ValueError(f"{name} inputs must be (n, {net.n_inputs}), got {x.shape}")
    if t.shape != (x.shape[0], net.n_outputs):
        raise ValueError(f"{name} targets must be (n, {net.n_outputs}), got {t.shape}")
    if x.shape[0] == 0:
        raise ValueError(f"{name} set is empty")
    return x, t


def train(net: MlpNetwork, train_data, val_data, cfg: TrainConfig,
          test_data=None) -> tuple[MlpNetwork, TrainReport]:
    """Mini-batch Adam with early stopping on validation loss.

    ``train_data``/``val_data``/``test_data`` are (inputs, targets) array
    pairs. Returns the parameters that achieved the best validation loss
    plus a report; bit-reproducible for a fixed (seed, data, config).
    """
    x_train, t_train = _check_pair(net, train_data, "train")
    x_val, t_val = _check_pair(net, val_data, "validation")
    x_test = t_test = None
    if test_data is not None:
        x_test, t_test = _check_pair(net, test_data, "test")

    work = net.copy()
    params = work.weights + work.biases
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    beta1, beta2, eps = 0.9, 0.999, 1.0e-8
    step = 0

    rng = np.random.default_rng(cfg.seed)
    n = x_train.shape[0]
    best_val = np.inf
    best_weights = [w.copy() for w in work.weights]
    best_biases = [b.copy() for b in work.biases]
    bad_epochs = 0
    curve: list[tuple[float, float]] = []
    epochs_run = 0

    for _ in range(cfg.max_epochs):
        epochs_run += 1
        perm = rng.permutation(n)
        batch_losses = []
        for lo in range(0, n, cfg.batch_size):
            idx = perm[lo:lo + cfg.batch_size]
            grad_w, grad_b = backward(work, x_train[idx], t_train[idx], loss=cfg.loss)
            batch_losses.append(loss_value(work, x_train[idx], t_train[idx], cfg.loss))
            step += 1
            correction = np.sqrt(1.0 - beta2 ** step) / (1.0 - beta1 ** step)
            for p, g, mi, vi in zip(params, grad_w + grad_b, m, v):
                mi *= beta1
                mi += (1.0 - beta1) * g
                vi *= beta2
                vi += (1.0 - beta2) * g * g
                p -= cfg.learning_rate * correction * mi / (np.sqrt(vi) + eps)
        train_loss = float(np.mean(batch_losses))
        val_loss = loss_value(work, x_val, t_val, cfg.loss)
        for name, value in (("train", train_loss), ("validation", val_loss)):
            if not np.isfinite(value) or value > LOSS_ABS_LIMIT:
                raise TrainingDiverged(
                    f"{name} loss {value!r} at epoch {epochs_run} tripped the guard")
        curve.append((train_loss, val_loss))
        if val_loss < best_val:
            best_val = val_loss
            best_weights = [w.copy() for w in work.weights]
            best_biases = [b.copy() for b in work.biases]
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= cfg.early_stop_patience:
                break

    best = MlpNetwork(work.layer_sizes, best_weights, best_biases, work.input_scaling)
    report = TrainReport(
        epochs_run=epochs_run,
        train_loss=loss_value(best, x_train, t_train, cfg.loss),
        validation_loss=loss_value(best, x_val, t_val, cfg.loss),
        test_loss=None if x_test is None else loss_value(best, x_test, t_test, cfg.loss),
        train_accuracy=accuracy(best, x_train, t_train),
        validation_accuracy=accuracy(best, x_val, t_val),
        test_accuracy=None if x_test is None else accuracy(best, x_test, t_test),
        train_accuracy_all_outputs=accuracy_all_outputs(best, x_train, t_train),
        validation_accuracy_all_outputs=accuracy_all_outputs(best, x_val, t_val),
        test_accuracy_all_outputs=(None if x_test is None
                                   else accuracy_all_outputs(best, x_test, t_test)),
        loss_curve=tuple(curve),
    )
    return best, report


def fit_input_scaling(net: MlpNetwork, inputs: np.ndarray) -> MlpNetwork:
    """Return a copy of the network with per-column min-max input scaling fitted."""
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    out = net.copy()
    out.input_scaling = (x.min(axis=0), x.max(axis=0))
    return out


# ---------------------------------------------------------------------------
# Checkpoint files (`# nngsd-checkpoint v1`): layer sizes, then row-major
# weight blocks and bias lines per layer at 17 significant digits.

def save_checkpoint(net: MlpNetwork, path: str | Path) -> None:
    lines = ["# nngsd-checkpoint v1",
             "layer_sizes = " + " ".join(str(s) for s in net.layer_sizes)]
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        lines.append(f"weights_{k} =")
        for row in w:
            lines.append("  " + " ".join(format_float(v) for v in row))
        lines.append(f"biases_{k} = " + " ".join(format_float(v) for v in b))
    if net.input_scaling is not None:
        lo, hi = net.input_scaling
        lines.append("input_scale_min = " + " ".join(format_float(v) for v in lo))
        lines.append("input_scale_max = " + " ".join(format_float(v) for v in hi))
    Path(path).write_text("\n".join(lines) + "\n")


def load_checkpoint(path: str | Path,
                    expected_layer_sizes: tuple[int, ...] | None = None) -> MlpNetwork:
    """Parse a checkpoint; raises CheckpointError before returning anything partial."""
    try:
        doc = read_config(path, expected_kind="checkpoint")
    except ConfigError as exc:
        raise CheckpointError(str(exc)) from None
    try:
        layer_sizes = tuple(int(t) for t in doc.tokens("layer_sizes"))
    except (ConfigError, ValueError):
        raise CheckpointError(f"{path}: missing or malformed layer_sizes") from None
    if expected_layer_sizes is not None and layer_sizes != tuple(expected_layer_sizes):
        raise CheckpointError(
            f"{path}: checkpoint has layer sizes {layer_sizes}, "
            f"expected {tuple(expected_layer_sizes)}")
    weights, biases = [], []
    for k in range(len(layer_sizes) - 1):
        want = (layer_sizes[k + 1], layer_sizes[k])
        try:
            w = doc.matrix(f"weights_{k}")
            b = doc.floats(f"biases_{k}")
        except ConfigError as exc:
            raise CheckpointError(f"truncated or malformed checkpoint: {exc}") from None
        if w.shape != want:
            raise CheckpointError(
                f"{path}: weights_{k} has shape {w.shape}, expected {want}")
        if b.shape != (want[0],):
            raise CheckpointError(
                f"{path}: biases_{k} has length {b.shape[0]}, expected {want[0]}")
        weights.append(w)
        biases.append(b)
    scaling = None
    if doc.has("input_scale_min") or doc.has("input_scale_max"):
        try:
            lo = doc.floats("input_scale_min")
            hi = doc.floats("input_scale_max")
        except ConfigError as exc:
            raise CheckpointError(str(exc)) from None
        if lo.shape != (layer_sizes[0],) or hi.shape != lo.shape:
            raise CheckpointError(f"{path}: input scaling width does not match inputs")
        scaling = (lo, hi)
    try:
        return MlpNetwork(layer_sizes, weights, biases, scaling)
    except ValueError as exc:
        raise CheckpointError(f"{path}: {exc}") from None
