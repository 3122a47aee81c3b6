"""ReLU multilayer perceptron approximating the MPC control law, trained with Adam.

Weights are stored as (n_in, n_out) so a layer is ``h = xi @ W + b``. Inputs
and outputs are normalized by per-coordinate affine scalers fit on the
training split; the loss is measured in the original output units and the
clip into the input bounds is applied only at inference.
"""

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ConfigurationError, DegenerateDataError, DimensionError, EmptyDatasetError
from ..serialization import read_records, write_records
from .dataset import Dataset

logger = logging.getLogger(__name__)

POLICY_SCHEMA = "mpcaug.policy"
POLICY_VERSION = 1
MIN_SAMPLES = 10


@dataclass
class Scaler:
    """z = (x - center) / scale."""

    center: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        self.scale = np.asarray(self.scale, dtype=float)
        if self.center.shape != self.scale.shape:
            raise DimensionError("scaler center and scale differ in shape")
        if np.any(self.scale == 0.0):
            raise ConfigurationError("scaler has a zero scale entry", "scaler")

    @classmethod
    def identity(cls, dim: int) -> "Scaler":
        return cls(np.zeros(dim), np.ones(dim))

    @classmethod
    def fit(cls, data: np.ndarray) -> "Scaler":
        """Zero mean, unit range; a constant column keeps scale 1."""
        span = np.ptp(data, axis=0)
        return cls(data.mean(axis=0), np.where(span > 0.0, span, 1.0))

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (x - self.center) / self.scale

    def inverse(self, z: np.ndarray) -> np.ndarray:
        return z * self.scale + self.center


@dataclass
class MlpParams:
    layer_sizes: Tuple[int, ...]
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    input_scaler: Scaler
    output_scaler: Scaler
    output_lower: np.ndarray
    output_upper: np.ndarray
    seed: int = 0
    activation: str = "relu"

    def __post_init__(self):
        self.layer_sizes = tuple(int(n) for n in self.layer_sizes)
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise DimensionError("number of layers disagrees with layer_sizes")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.layer_sizes[i], self.layer_sizes[i + 1]) or b.shape != (self.layer_sizes[i + 1],):
                raise DimensionError(f"layer {i} has shapes {w.shape}, {b.shape}")
        self.output_lower = np.asarray(self.output_lower, dtype=float)
        self.output_upper = np.asarray(self.output_upper, dtype=float)

    @property
    def n_in(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_out(self) -> int:
        return self.layer_sizes[-1]

    @classmethod
    def initialize(
        cls,
        layer_sizes: Sequence[int],
        seed: int = 0,
        output_bounds: Optional[Tuple[Sequence[float], Sequence[float]]] = None,
    ) -> "MlpParams":
        """He-uniform weights, zero biases, identity scalers."""
        sizes = tuple(int(n) for n in layer_sizes)
        if len(sizes) < 2 or any(n < 1 for n in sizes):
            raise ConfigurationError(f"invalid layer sizes {sizes}", "training.hidden")
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = np.sqrt(6.0 / fan_in)
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        lower, upper = output_bounds or (np.full(sizes[-1], -np.inf), np.full(sizes[-1], np.inf))
        return cls(
            sizes,
            weights,
            biases,
            Scaler.identity(sizes[0]),
            Scaler.identity(sizes[-1]),
            np.asarray(lower, dtype=float),
            np.asarray(upper, dtype=float),
            seed,
        )

    def flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(self.weights, self.biases)])

    def with_flat(self, theta: np.ndarray) -> "MlpParams":
        weights, biases = [], []
        pos = 0
        for w, b in zip(self.weights, self.biases):
            weights.append(np.array(theta[pos : pos + w.size]).reshape(w.shape))
            pos += w.size
            biases.append(np.array(theta[pos : pos + b.size]))
            pos += b.size
        return replace(self, weights=weights, biases=biases)


def _network(params: MlpParams, z: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
    """Forward pass on scaled inputs. Returns scaled outputs and the layer inputs."""
    activations = [z]
    h = z
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if i < last:
            h = np.maximum(h, 0.0)
        activations.append(h)
    return h, activations


def forward_unclipped(params: MlpParams, x_tilde: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x_tilde, dtype=float))
    if x.shape[1] != params.n_in:
        raise DimensionError(f"policy expects {params.n_in} inputs, got {x.shape[1]}")
    out, _ = _network(params, params.input_scaler.transform(x))
    return params.output_scaler.inverse(out)


def forward(params: MlpParams, x_tilde: np.ndarray) -> np.ndarray:
    """Control input for one parameter vector (1-D) or a batch (rows), clipped into the bounds."""
    x = np.asarray(x_tilde, dtype=float)
    u = np.clip(forward_unclipped(params, x), params.output_lower, params.output_upper)
    return u[0] if x.ndim == 1 else u


def loss_and_gradient(params: MlpParams, x: np.ndarray, u_star: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean over the batch of the squared output error and its gradient w.r.t. ``params.flat()``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    u_star = np.atleast_2d(np.asarray(u_star, dtype=float))
    n = x.shape[0]
    if n == 0:
        raise EmptyDatasetError("loss needs a nonempty batch")
    out, acts = _network(params, params.input_scaler.transform(x))
    err = params.output_scaler.inverse(out) - u_star
    loss = float(np.sum(err**2) / n)

    delta = (2.0 / n) * err * params.output_scaler.scale
    grads: List[np.ndarray] = []
    for i in range(len(params.weights) - 1, -1, -1):
        grads.append(delta.sum(axis=0))
        grads.append((acts[i].T @ delta).ravel())
        if i > 0:
            delta = (delta @ params.weights[i].T) * (acts[i] > 0.0)
    grads.reverse()
    return loss, np.concatenate(grads)


def mse(params: MlpParams, x: np.ndarray, u_star: np.ndarray) -> float:
    if len(x) == 0:
        return float("nan")
    err = forward_unclipped(params, x) - u_star
    return float(np.sum(err**2) / len(x))


@dataclass(frozen=True)
class SplitSpec:
    fractions: Tuple[float, float, float] = (0.70, 0.15, 0.15)
    seed: int = 0

    def __post_init__(self):
        if len(self.fractions) != 3 or any(f <= 0 for f in self.fractions):
            raise ConfigurationError("split fractions must be three positive numbers", "training.split")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ConfigurationError("split fractions must sum to 1", "training.split")

    def sizes(self, n: int) -> Tuple[int, int, int]:
        n_train = int(round(self.fractions[0] * n))
        n_val = int(round(self.fractions[1] * n))
        return n_train, n_val, n - n_train - n_val

    def split(self, n: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        order = np.random.default_rng(self.seed).permutation(n)
        n_train, n_val, _ = self.sizes(n)
        return order[:n_train], order[n_train : n_train + n_val], order[n_train + n_val :]


@dataclass(frozen=True)
class TrainingOptions:
    hidden: Tuple[int, ...] = (10, 10, 10)
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 2000
    patience: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    lr_decay: float = 1.0
    lr_decay_patience: int = 20
    min_learning_rate: float = 1e-7
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ConfigurationError("learning rate, batch size, epochs and patience must be positive", "training")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ConfigurationError("lr_decay must lie in (0, 1]", "training.lr_decay")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_mse: float
    val_mse: float
    learning_rate: float


@dataclass
class TrainingResult:
    params: MlpParams
    history: List[EpochRecord]
    test_mse: float
    split_sizes: Tuple[int, int, int]
    best_epoch: int

    @property
    def train_mse(self) -> float:
        return self.history[self.best_epoch].train_mse

    @property
    def val_mse(self) -> float:
        return self.history[self.best_epoch].val_mse

    def summary(self) -> Dict[str, Any]:
        return {
            "split_sizes": list(self.split_sizes),
            "best_epoch": self.best_epoch,
            "epochs": len(self.history),
            "train_mse": self.train_mse,
            "val_mse": self.val_mse,
            "test_mse": self.test_mse,
            "test_rmse": float(np.sqrt(self.test_mse)),
        }


class _Adam:
    def __init__(self, size: int, opts: TrainingOptions):
        self.opts = opts
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
        o = self.opts
        self.t += 1
        self.m = o.beta1 * self.m + (1 - o.beta1) * grad
        self.v = o.beta2 * self.v + (1 - o.beta2) * grad**2
        m_hat = self.m / (1 - o.beta1**self.t)
        v_hat = self.v / (1 - o.beta2**self.t)
        return theta - lr * m_hat / (np.sqrt(v_hat) + o.adam_eps)


def train_arrays(
    x: np.ndarray,
    u: np.ndarray,
    split: SplitSpec = SplitSpec(),
    opts: TrainingOptions = TrainingOptions(),
    output_bounds: Optional[Tuple[Sequence[float], Sequence[float]]] = None,
) -> TrainingResult:
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.ndim != 2 or u.ndim != 2 or len(x) != len(u):
        raise DimensionError("training inputs and labels must be row-aligned matrices")
    if len(x) < MIN_SAMPLES:
        raise EmptyDatasetError(f"training needs at least {MIN_SAMPLES} feasible samples, got {len(x)}")
    if np.all(np.ptp(u, axis=0) == 0.0):
        raise DegenerateDataError("all labels are identical")

    idx_train, idx_val, idx_test = split.split(len(x))
    x_tr, u_tr = x[idx_train], u[idx_train]
    x_val, u_val = x[idx_val], u[idx_val]

    params = MlpParams.initialize((x.shape[1], *opts.hidden, u.shape[1]), opts.seed, output_bounds)
    params.input_scaler = Scaler.fit(x_tr)
    params.output_scaler = Scaler.fit(u_tr)

    rng = np.random.default_rng(opts.seed)
    theta = params.flat()
    adam = _Adam(theta.size, opts)
    lr = opts.learning_rate
    best = (np.inf, theta.copy(), 0)
    since_best = since_decay = 0
    history: List[EpochRecord] = []

    for epoch in range(opts.max_epochs):
        order = rng.permutation(len(x_tr))
        for start in range(0, len(order), opts.batch_size):
            batch = order[start : start + opts.batch_size]
            _, grad = loss_and_gradient(params, x_tr[batch], u_tr[batch])
            theta = adam.step(theta, grad, lr)
            params = params.with_flat(theta)

        record = EpochRecord(epoch, mse(params, x_tr, u_tr), mse(params, x_val, u_val), lr)
        history.append(record)
        if record.val_mse < best[0]:
            best = (record.val_mse, theta.copy(), epoch)
            since_best = since_decay = 0
        else:
            since_best += 1
            since_decay += 1
        if since_best >= opts.patience:
            logger.info(f"early stop at epoch {epoch}, best validation MSE {best[0]:.3e} at epoch {best[2]}")
            break
        if opts.lr_decay < 1.0 and since_decay >= opts.lr_decay_patience and lr > opts.min_learning_rate:
            lr = max(opts.min_learning_rate, lr * opts.lr_decay)
            since_decay = 0
        if epoch % 100 == 0:
            logger.debug(f"epoch {epoch}: train {record.train_mse:.3e} val {record.val_mse:.3e}")

    params = params.with_flat(best[1])
    test = mse(params, x[idx_test], u[idx_test])
    result = TrainingResult(params, history, test, split.sizes(len(x)), best[2])
    logger.info(f"training finished: {result.summary()}")
    return result


def train(
    ds: Dataset,
    split: SplitSpec = SplitSpec(),
    opts: TrainingOptions = TrainingOptions(),
    output_bounds: Optional[Tuple[Sequence[float], Sequence[float]]] = None,
) -> TrainingResult:
    """Fit the policy on the feasible samples of ``ds``; returns the best-validation parameters."""
    x, u = ds.arrays()
    return train_arrays(x, u, split, opts, output_bounds)


def save_policy(params: MlpParams, path: Path, extra: Optional[Dict[str, Any]] = None):
    header = {
        "schema": POLICY_SCHEMA,
        "version": POLICY_VERSION,
        "layer_sizes": list(params.layer_sizes),
        "activation": params.activation,
        "seed": params.seed,
        "input_scaler": {"center": params.input_scaler.center, "scale": params.input_scaler.scale},
        "output_scaler": {"center": params.output_scaler.center, "scale": params.output_scaler.scale},
        "output_bounds": {"lower": params.output_lower, "upper": params.output_upper},
        "extra": extra or {},
    }
    records = (
        {"layer": i, "W": w.ravel(), "b": b} for i, (w, b) in enumerate(zip(params.weights, params.biases))
    )
    write_records(Path(path), header, records)


def load_policy(path: Path) -> MlpParams:
    header, records = read_records(Path(path), POLICY_SCHEMA, POLICY_VERSION)
    sizes = tuple(header["layer_sizes"])
    records = sorted(records, key=lambda r: r["layer"])
    weights = [np.array(r["W"], dtype=float).reshape(sizes[i], sizes[i + 1]) for i, r in enumerate(records)]
    biases = [np.array(r["b"], dtype=float) for r in records]
    return MlpParams(
        layer_sizes=sizes,
        weights=weights,
        biases=biases,
        input_scaler=Scaler(header["input_scaler"]["center"], header["input_scaler"]["scale"]),
        output_scaler=Scaler(header["output_scaler"]["center"], header["output_scaler"]["scale"]),
        output_lower=np.array(header["output_bounds"]["lower"], dtype=float),
        output_upper=np.array(header["output_bounds"]["upper"], dtype=float),
        seed=int(header["seed"]),
        activation=header["activation"],
    )

