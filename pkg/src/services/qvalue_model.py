"""Scalar-output value network, replay buffer and the model file format."""

import logging
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..config import ModelConfig
from ..utils.errors import ContractError, InputError, ModelFormatError
from .routing_env import RoutingState

logger = logging.getLogger(__name__)

MODEL_FILE_HEADER = "qroute-model v1"

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class QNetwork:
    """
    Feed-forward network with rectifier hidden layers and one linear output.

    Weights are stored as (fan_in, fan_out) matrices so a batch X of shape
    (n, fan_in) flows as X @ W + b.
    """

    def __init__(
        self,
        layer_dims: Sequence[int],
        rng: np.random.Generator | None = None,
        arch_id: str = "",
        learning_rate: float = 1e-3,
        optimizer: str = "adam",
    ):
        layer_dims = [int(d) for d in layer_dims]
        if len(layer_dims) < 2 or layer_dims[-1] != 1 or min(layer_dims) < 1:
            raise ContractError(f"layer_dims must run input -> ... -> 1, got {layer_dims}")
        if optimizer not in ("adam", "sgd"):
            raise ContractError(f"Unknown optimizer {optimizer!r}")

        self.layer_dims = layer_dims
        self.arch_id = arch_id
        self.learning_rate = learning_rate
        self.optimizer = optimizer

        rng = rng if rng is not None else np.random.default_rng(0)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
            limit = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))
        self._reset_moments()

    @classmethod
    def for_features(
        cls,
        input_dim: int,
        config: ModelConfig,
        rng: np.random.Generator,
        arch_id: str = "",
    ) -> "QNetwork":
        return cls(
            [input_dim, *config.hidden_dims, 1],
            rng=rng,
            arch_id=arch_id,
            learning_rate=config.learning_rate,
            optimizer=config.optimizer,
        )

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def parameters(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def _reset_moments(self) -> None:
        self._m = [np.zeros_like(p) for p in self.parameters]
        self._v = [np.zeros_like(p) for p in self.parameters]
        self._t = 0

    def _as_batch(self, phi: np.ndarray) -> np.ndarray:
        x = np.asarray(phi, dtype=np.float64)
        if x.ndim == 1:
            x = x[np.newaxis, :]
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ContractError(
                f"Feature length {x.shape[-1]} does not match model input {self.input_dim}"
            )
        return x

    def _forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray], list[np.ndarray]]:
        activations = [x]
        pre_activations = []
        a = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            pre_activations.append(z)
            a = z if i == last else np.maximum(z, 0.0)
            activations.append(a)
        return a[:, 0], activations, pre_activations

    def predict_batch(self, phi: np.ndarray) -> np.ndarray:
        out, _, _ = self._forward(self._as_batch(phi))
        return out

    def predict(self, phi: np.ndarray) -> float:
        """Quality of one (state, next state) feature vector."""
        return float(self.predict_batch(phi)[0])

    def gradients(
        self, phi: np.ndarray, targets: np.ndarray, importance: np.ndarray
    ) -> tuple[float, list[np.ndarray]]:
        """
        Weighted mean squared error and its gradient w.r.t. every parameter.

        Loss = mean(importance * (prediction - target) ** 2); gradients are
        returned in the order of `parameters`.
        """
        x = self._as_batch(phi)
        targets = np.asarray(targets, dtype=np.float64).reshape(-1)
        importance = np.asarray(importance, dtype=np.float64).reshape(-1)
        n = x.shape[0]
        if targets.shape[0] != n or importance.shape[0] != n:
            raise ContractError("Batch, targets and importance weights must have equal length")
        if not np.all(np.isfinite(targets)):
            raise ContractError("TD targets must be finite")

        predictions, activations, pre_activations = self._forward(x)
        errors = predictions - targets
        loss = float(np.mean(importance * errors**2))

        delta = (2.0 / n) * importance * errors
        delta = delta[:, np.newaxis]
        grads_w: list[np.ndarray] = []
        grads_b: list[np.ndarray] = []
        for i in range(len(self.weights) - 1, -1, -1):
            grads_w.append(activations[i].T @ delta)
            grads_b.append(delta.sum(axis=0))
            if i > 0:
                delta = (delta @ self.weights[i].T) * (pre_activations[i - 1] > 0)
        grads_w.reverse()
        grads_b.reverse()
        return loss, [g for pair in zip(grads_w, grads_b) for g in pair]

    def train_batch(self, phi: np.ndarray, targets: np.ndarray, importance: np.ndarray) -> float:
        """
        One gradient step on the weighted squared TD error.

        Returns:
            The loss before the update
        """
        if len(np.asarray(targets).reshape(-1)) == 0:
            raise ContractError("Cannot train on an empty batch")
        loss, grads = self.gradients(phi, targets, importance)
        params = self.parameters

        if self.optimizer == "sgd":
            for p, g in zip(params, grads):
                p -= self.learning_rate * g
            return loss

        self._t += 1
        correction1 = 1.0 - ADAM_BETA1**self._t
        correction2 = 1.0 - ADAM_BETA2**self._t
        for p, g, m, v in zip(params, grads, self._m, self._v):
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * g * g
            p -= self.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + ADAM_EPS)
        return loss

    def clone(self) -> "QNetwork":
        copy = QNetwork.__new__(QNetwork)
        copy.layer_dims = list(self.layer_dims)
        copy.arch_id = self.arch_id
        copy.learning_rate = self.learning_rate
        copy.optimizer = self.optimizer
        copy.weights = [w.copy() for w in self.weights]
        copy.biases = [b.copy() for b in self.biases]
        copy._reset_moments()
        return copy

    def save(self, path: str | Path) -> None:
        """Write the model atomically in the versioned plain-text format."""
        save_model(self, path)


def sync_target(model: QNetwork) -> QNetwork:
    """Independent copy of the online network's current weights."""
    return model.clone()


def format_model(model: QNetwork) -> str:
    lines = [
        MODEL_FILE_HEADER,
        f"arch {model.arch_id or '-'}",
        "dims " + " ".join(str(d) for d in model.layer_dims),
    ]
    for w, b in zip(model.weights, model.biases):
        for row in w:
            lines.append(" ".join(f"{x:.16e}" for x in row))
        lines.append(" ".join(f"{x:.16e}" for x in b))
    return "\n".join(lines) + "\n"


def parse_model(text: str) -> QNetwork:
    lines = [line.strip() for line in text.splitlines() if line.strip()]
    if not lines or lines[0] != MODEL_FILE_HEADER:
        raise ModelFormatError(f"Not a model file: expected header '{MODEL_FILE_HEADER}'")
    if len(lines) < 3 or not lines[1].startswith("arch ") or not lines[2].startswith("dims "):
        raise ModelFormatError("Model file is missing its arch or dims line")

    arch_id = lines[1][len("arch "):].strip()
    try:
        dims = [int(d) for d in lines[2][len("dims "):].split()]
        model = QNetwork(dims, arch_id="" if arch_id == "-" else arch_id)
    except (ValueError, ContractError) as e:
        raise ModelFormatError(f"Invalid dims line: {lines[2]!r}") from e

    cursor = 3
    try:
        for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            rows = [[float(x) for x in lines[cursor + r].split()] for r in range(fan_in)]
            cursor += fan_in
            bias = [float(x) for x in lines[cursor].split()]
            cursor += 1
            w = np.array(rows, dtype=np.float64)
            b = np.array(bias, dtype=np.float64)
            if w.shape != (fan_in, fan_out) or b.shape != (fan_out,):
                raise ModelFormatError(f"Layer {i} has the wrong shape")
            model.weights[i] = w
            model.biases[i] = b
    except (IndexError, ValueError) as e:
        raise ModelFormatError("Model file is truncated or contains non-numeric weights") from e

    if cursor != len(lines):
        raise ModelFormatError("Model file has trailing data")
    model._reset_moments()
    return model


def save_model(model: QNetwork, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=path.parent, prefix=".model_", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(format_model(model))
        os.replace(tmp_path, path)
    except Exception:
        try:
            os.unlink(tmp_path)
        except OSError:
            pass
        raise
    logger.info(f"Model saved to {path}")


def load_model(path: str | Path) -> QNetwork:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise InputError(f"Cannot read model file {path}: {e}") from e
    return parse_model(text)


@dataclass(frozen=True)
class Experience:
    state: RoutingState
    next_state: RoutingState
    reward: float
    done: bool
    priority: float | None = None


class ReplayBuffer:
    """
    Proportional prioritized replay over a fixed-capacity ring.

    Sampling probability is (|td_error| + eps) ** alpha normalised; importance
    weights (N * p) ** -beta are divided by the batch maximum. beta moves
    linearly from beta_start to beta_end over beta_steps sample calls.
    """

    def __init__(
        self,
        capacity: int,
        alpha: float = 0.6,
        beta_start: float = 0.4,
        beta_end: float = 1.0,
        beta_steps: int = 20_000,
        eps: float = 1e-6,
    ):
        if capacity < 1:
            raise ContractError("Replay capacity must be at least 1")
        self.capacity = capacity
        self.alpha = alpha
        self.beta_start = beta_start
        self.beta_end = beta_end
        self.beta_steps = max(1, beta_steps)
        self.eps = eps
        self._items: list[Experience] = []
        self._priorities = np.zeros(capacity, dtype=np.float64)
        self._position = 0
        self._samples_drawn = 0

    @classmethod
    def from_config(cls, config: ModelConfig) -> "ReplayBuffer":
        return cls(
            capacity=config.per_capacity,
            alpha=config.per_alpha,
            beta_start=config.per_beta_start,
            beta_end=config.per_beta_end,
            beta_steps=config.per_beta_steps,
            eps=config.per_eps,
        )

    def __len__(self) -> int:
        return len(self._items)

    @property
    def beta(self) -> float:
        fraction = min(1.0, self._samples_drawn / self.beta_steps)
        return self.beta_start + (self.beta_end - self.beta_start) * fraction

    def add(self, experience: Experience) -> int:
        """Store an experience; without an explicit priority it gets the current maximum."""
        if experience.priority is not None:
            if experience.priority <= 0:
                raise ContractError("Priorities must be positive")
            priority = experience.priority
        else:
            priority = float(self._priorities[: len(self)].max()) if len(self) else 1.0

        index = self._position
        if len(self._items) < self.capacity:
            self._items.append(experience)
        else:
            self._items[index] = experience
        self._priorities[index] = priority
        self._position = (self._position + 1) % self.capacity
        return index

    def probabilities(self) -> np.ndarray:
        scaled = self._priorities[: len(self)] ** self.alpha
        return scaled / scaled.sum()

    def sample(
        self, k: int, rng: np.random.Generator
    ) -> tuple[np.ndarray, list[Experience], np.ndarray]:
        """
        Draw k experiences with replacement.

        Returns:
            (buffer indices, experiences, normalised importance weights)
        """
        n = len(self)
        if n == 0:
            raise ContractError("Cannot sample from an empty replay buffer")
        if k > n:
            raise ContractError(f"Requested {k} samples from a buffer of {n}")

        probs = self.probabilities()
        indices = rng.choice(n, size=k, replace=True, p=probs)
        weights = (n * probs[indices]) ** (-self.beta)
        weights /= weights.max()
        self._samples_drawn += 1
        return indices, [self._items[i] for i in indices], weights

    def update_priorities(self, indices: Sequence[int], td_errors: Sequence[float]) -> None:
        for i, error in zip(indices, td_errors):
            self._priorities[int(i)] = abs(float(error)) + self.eps
