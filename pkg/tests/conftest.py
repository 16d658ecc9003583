import os

import hypothesis
import numpy as np
import pytest

from src.config import AgentConfig, AnnealSchedule, ModelConfig
from src.services.architecture import grid, line
from src.services.circuit import LogicalCircuit

np.seterr(all="warn")

hypothesis.settings.register_profile("fast", max_examples=20, deadline=None)
hypothesis.settings.register_profile("ci", max_examples=200, deadline=None)
hypothesis.settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "fast"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def line4():
    return line(4)


@pytest.fixture
def grid2():
    return grid(2, 2)


@pytest.fixture
def grid4():
    return grid(4, 4)


@pytest.fixture
def two_gate_line_circuit():
    """Two gates that both need their qubits brought together on a 4-node line."""
    return LogicalCircuit.from_pairs([(0, 2), (1, 3)], n_qubits=4)


@pytest.fixture
def small_agent_config():
    return AgentConfig(
        episodes=5,
        batch_size=4,
        target_sync_interval=10,
        anneal=AnnealSchedule(t_initial=1.0, decay=0.8, t_min=1e-2, max_iters=20),
        model=ModelConfig(hidden_dims=(8,), per_capacity=256, per_beta_steps=100),
    )
