import dataclasses
import logging
import os
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal, Mapping

from dotenv import load_dotenv

from .utils.errors import ConfigError

load_dotenv(override=True)


@dataclass(frozen=True)
class RewardConfig:
    gate_reward: float = 1.0
    dist_reward: float = 0.1
    completion_reward: float = 5.0


@dataclass(frozen=True)
class AnnealSchedule:
    t_initial: float = 1.0
    decay: float = 0.9
    t_min: float = 1e-3
    max_iters: int = 200

    def __post_init__(self):
        if self.t_initial <= 0 or self.t_min <= 0:
            raise ConfigError("Annealing temperatures must be positive")
        if self.t_min >= self.t_initial:
            raise ConfigError(
                f"t_min ({self.t_min}) must be below t_initial ({self.t_initial})"
            )
        if not 0 < self.decay < 1:
            raise ConfigError(f"decay must lie in (0, 1), got {self.decay}")
        if self.max_iters < 0:
            raise ConfigError(f"max_iters must be non-negative, got {self.max_iters}")


@dataclass(frozen=True)
class ModelConfig:
    hidden_dims: tuple[int, ...] = (32, 32)
    learning_rate: float = 1e-3
    optimizer: Literal["adam", "sgd"] = "adam"
    per_capacity: int = 50_000
    per_alpha: float = 0.6
    per_beta_start: float = 0.4
    per_beta_end: float = 1.0
    per_beta_steps: int = 20_000
    per_eps: float = 1e-6

    def __post_init__(self):
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if self.per_capacity < 1:
            raise ConfigError("per_capacity must be at least 1")
        if any(d < 1 for d in self.hidden_dims):
            raise ConfigError(f"hidden_dims must be positive, got {self.hidden_dims}")


@dataclass(frozen=True)
class AgentConfig:
    gamma: float = 0.95
    epsilon_start: float = 1.0
    epsilon_decay: float = 0.995
    epsilon_min: float = 0.05
    batch_size: int = 32
    replay_anneal_iters: int = 10
    target_sync_interval: int = 500
    episodes: int = 500
    training_family: Literal["random", "full_layer", "multi_layer"] = "random"
    training_gates: int = 50
    training_layers: int = 2
    training_density: float = 1.0
    circuits_per_qubit: int = 10
    anneal: AnnealSchedule = field(default_factory=AnnealSchedule)
    rewards: RewardConfig = field(default_factory=RewardConfig)
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ConfigError(f"gamma must lie in (0, 1], got {self.gamma}")
        if not 0 <= self.epsilon_min <= self.epsilon_start <= 1:
            raise ConfigError("epsilon values must satisfy 0 <= epsilon_min <= epsilon_start <= 1")
        if not 0 < self.epsilon_decay <= 1:
            raise ConfigError(f"epsilon_decay must lie in (0, 1], got {self.epsilon_decay}")
        if self.replay_anneal_iters < 1:
            raise ConfigError("replay_anneal_iters must be at least 1")
        if self.batch_size < 1 or self.target_sync_interval < 1:
            raise ConfigError("batch_size and target_sync_interval must be at least 1")
        if self.episodes < 0:
            raise ConfigError("episodes must be non-negative")
        if self.training_family not in ("random", "full_layer", "multi_layer"):
            raise ConfigError(f"Unknown training_family {self.training_family!r}")

    @property
    def replay_schedule(self) -> AnnealSchedule:
        return dataclasses.replace(self.anneal, max_iters=self.replay_anneal_iters)


@dataclass(frozen=True)
class BenchConfig:
    arch: str = "grid:4x4"
    family: Literal["single_full", "multi", "random", "files"] = "random"
    n_qubits: int = 16
    n_layers: int = 1
    density: float = 1.0
    n_gates: int = 50
    circuit_dir: str = ""
    max_depth: int = 200
    batches: int = 5
    circuits_per_batch: int = 100
    seed: int = 0
    routers: tuple[str, ...] = ("greedy", "random_policy")
    decompose_swaps: bool = False
    workers: int = 4
    record_timing: bool = False
    agent: AgentConfig = field(default_factory=AgentConfig)

    def __post_init__(self):
        if self.family not in ("single_full", "multi", "random", "files"):
            raise ConfigError(f"Unknown circuit family {self.family!r}")
        if not 0 < self.density <= 1:
            raise ConfigError(f"density must lie in (0, 1], got {self.density}")
        if min(self.batches, self.circuits_per_batch, self.workers) < 1:
            raise ConfigError("batches, circuits_per_batch and workers must be at least 1")
        if self.family == "files" and not self.circuit_dir:
            raise ConfigError("family=files requires circuit_dir")
        if not self.routers:
            raise ConfigError("At least one router is required")


@dataclass
class AppConfig:
    log_level: str = "INFO"
    workers: int = 4
    progress: bool = True
    output_dir: str = "./runs"


_TRUE_VALUES = frozenset(["1", "true", "yes", "on"])
_FALSE_VALUES = frozenset(["0", "false", "no", "off"])


def _parse_bool(value: str, name: str) -> bool:
    lowered = value.strip().lower()
    if lowered in _TRUE_VALUES:
        return True
    if lowered in _FALSE_VALUES:
        return False
    raise ConfigError(f"Invalid {name}: '{value}'. Must be true or false.")


def load_config() -> AppConfig:
    """Load process-level configuration from environment variables."""
    try:
        workers = int(os.getenv("QROUTE_WORKERS", "4"))
    except ValueError:
        raise ConfigError(
            f"Invalid QROUTE_WORKERS: '{os.getenv('QROUTE_WORKERS')}'. Must be an integer."
        ) from None
    if workers < 1:
        raise ConfigError("QROUTE_WORKERS must be at least 1")

    return AppConfig(
        log_level=os.getenv("QROUTE_LOG_LEVEL", "INFO"),
        workers=workers,
        progress=_parse_bool(os.getenv("QROUTE_PROGRESS", "true"), "QROUTE_PROGRESS"),
        output_dir=os.getenv("QROUTE_OUTPUT_DIR", "./runs"),
    )


# Global config instance
config = load_config()


def setup_logging():
    """Configure logging based on config."""
    logging.basicConfig(
        level=getattr(logging, config.log_level.upper(), logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
    # Suppress asyncio selector chatter at DEBUG
    logging.getLogger("asyncio").setLevel(logging.WARNING)


def read_settings_file(path: str | Path) -> dict[str, str]:
    """
    Read a flat key=value file.

    "#" starts a comment; blank lines are ignored.

    Raises:
        ConfigError: On malformed lines or duplicate keys
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise ConfigError(f"Cannot read config file {path}: {e}") from e

    settings: dict[str, str] = {}
    for line_number, raw in enumerate(text.splitlines(), start=1):
        content = raw.split("#", 1)[0].strip()
        if not content:
            continue
        if "=" not in content:
            raise ConfigError(f"{path}:{line_number}: expected key=value, got {content!r}")
        key, value = (part.strip() for part in content.split("=", 1))
        if not key:
            raise ConfigError(f"{path}:{line_number}: empty key")
        if key in settings:
            raise ConfigError(f"{path}:{line_number}: duplicate key {key!r}")
        settings[key] = value
    return settings


def settable_keys(cls: type) -> dict[str, tuple[str, ...]]:
    """Map every leaf field name of a (nested) config dataclass to its attribute path."""
    keys: dict[str, tuple[str, ...]] = {}
    hints = typing.get_type_hints(cls)
    for f in dataclasses.fields(cls):
        hint = hints[f.name]
        if dataclasses.is_dataclass(hint):
            for leaf, path in settable_keys(hint).items():
                keys[leaf] = (f.name,) + path
        else:
            keys[f.name] = (f.name,)
    return keys


def _coerce(value: str, hint: Any, key: str) -> Any:
    origin = typing.get_origin(hint)
    try:
        if hint is bool:
            return _parse_bool(value, key)
        if hint is int:
            return int(value)
        if hint is float:
            return float(value)
        if hint is str:
            return value
        if origin is Literal:
            if value not in typing.get_args(hint):
                raise ConfigError(f"{key} must be one of {typing.get_args(hint)}, got {value!r}")
            return value
        if origin is tuple:
            item_type = typing.get_args(hint)[0]
            items = [item.strip() for item in value.split(",") if item.strip()]
            return tuple(_coerce(item, item_type, key) for item in items)
    except ValueError:
        raise ConfigError(f"Invalid value for {key}: {value!r}") from None
    raise ConfigError(f"Unsupported config type for {key}: {hint}")


def apply_settings(instance: Any, settings: Mapping[str, str]) -> Any:
    """
    Return a copy of a config dataclass with flat key=value settings applied.

    Raises:
        ConfigError: For unknown keys or values that cannot be coerced
    """
    keys = settable_keys(type(instance))
    unknown = sorted(set(settings) - set(keys))
    if unknown:
        raise ConfigError(f"Unknown config keys: {', '.join(unknown)}")

    # group leaf updates by the nested dataclass they belong to
    nested: dict[str, dict[str, str]] = {}
    direct: dict[str, Any] = {}
    hints = typing.get_type_hints(type(instance))
    for key, value in settings.items():
        path = keys[key]
        if len(path) == 1:
            direct[key] = _coerce(value, hints[key], key)
        else:
            nested.setdefault(path[0], {})[key] = value

    for name, sub_settings in nested.items():
        direct[name] = apply_settings(getattr(instance, name), sub_settings)

    return dataclasses.replace(instance, **direct)


def load_agent_config(path: str | Path | None = None, **overrides: Any) -> AgentConfig:
    agent = AgentConfig()
    if path:
        agent = apply_settings(agent, read_settings_file(path))
    if overrides:
        agent = dataclasses.replace(agent, **overrides)
    return agent


def load_bench_config(path: str | Path, **defaults: Any) -> BenchConfig:
    """Settings from the file override defaults, which override the dataclass defaults."""
    return apply_settings(BenchConfig(**defaults), read_settings_file(path))
