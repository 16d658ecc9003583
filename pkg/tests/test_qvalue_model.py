import numpy as np
import pytest

from src.config import ModelConfig
from src.services.qvalue_model import (
    Experience,
    QNetwork,
    ReplayBuffer,
    format_model,
    load_model,
    parse_model,
    save_model,
    sync_target,
)
from src.utils.errors import ContractError, InputError, ModelFormatError


def numeric_gradients(model, phi, targets, importance, eps=1e-6):
    grads = []
    for p in model.parameters:
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            saved = p[idx]
            p[idx] = saved + eps
            plus, _ = model.gradients(phi, targets, importance)
            p[idx] = saved - eps
            minus, _ = model.gradients(phi, targets, importance)
            p[idx] = saved
            g[idx] = (plus - minus) / (2 * eps)
        grads.append(g)
    return grads


class TestQNetwork:
    @pytest.mark.parametrize("seed", range(20))
    def test_gradients_match_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        dims = [int(rng.integers(2, 6)), int(rng.integers(2, 6)), int(rng.integers(2, 5)), 1]
        model = QNetwork(dims, rng=rng)
        phi = rng.normal(size=(5, dims[0]))
        targets = rng.normal(size=5)
        importance = rng.uniform(0.1, 1.0, size=5)

        _, analytic = model.gradients(phi, targets, importance)
        numeric = numeric_gradients(model, phi, targets, importance)

        a = np.concatenate([g.ravel() for g in analytic])
        n = np.concatenate([g.ravel() for g in numeric])
        assert np.linalg.norm(a - n) / max(np.linalg.norm(a) + np.linalg.norm(n), 1e-12) < 1e-4

    def test_sgd_step_closed_form(self):
        model = QNetwork([2, 1], learning_rate=0.1, optimizer="sgd")
        model.weights[0][:] = [[0.5], [-1.0]]
        model.biases[0][:] = [0.25]
        x = np.array([[2.0, 1.0]])

        loss = model.train_batch(x, np.array([1.0]), np.array([1.0]))

        # prediction 0.25, error -0.75
        assert loss == pytest.approx(0.5625)
        assert model.weights[0][:, 0] == pytest.approx([0.5 + 0.1 * 1.5 * 2.0, -1.0 + 0.1 * 1.5 * 1.0])
        assert model.biases[0][0] == pytest.approx(0.25 + 0.1 * 1.5)

    def test_adam_reduces_loss(self):
        rng = np.random.default_rng(5)
        model = QNetwork([3, 8, 1], rng=rng, learning_rate=1e-2)
        phi = rng.normal(size=(16, 3))
        targets = phi @ np.array([1.0, -2.0, 0.5])
        weights = np.ones(16)
        first = model.train_batch(phi, targets, weights)
        for _ in range(200):
            last = model.train_batch(phi, targets, weights)
        assert last < 0.5 * first

    def test_zero_importance_leaves_weights(self):
        model = QNetwork([2, 1], optimizer="sgd")
        before = model.weights[0].copy()
        model.train_batch(np.ones((1, 2)), np.array([10.0]), np.array([0.0]))
        assert np.array_equal(model.weights[0], before)

    def test_feature_length_mismatch(self):
        model = QNetwork([4, 3, 1])
        with pytest.raises(ContractError):
            model.predict(np.zeros(5))

    def test_non_finite_target(self):
        model = QNetwork([2, 1])
        with pytest.raises(ContractError):
            model.train_batch(np.zeros((1, 2)), np.array([np.nan]), np.ones(1))

    def test_invalid_dims(self):
        with pytest.raises(ContractError):
            QNetwork([4, 2])

    def test_for_features(self):
        model = QNetwork.for_features(10, ModelConfig(hidden_dims=(6, 4)), np.random.default_rng(0), "grid:2x2")
        assert model.layer_dims == [10, 6, 4, 1]
        assert model.arch_id == "grid:2x2"

    def test_target_copy_is_independent(self):
        rng = np.random.default_rng(0)
        online = QNetwork([3, 4, 1], rng=rng, learning_rate=0.1)
        target = sync_target(online)
        phi = rng.normal(size=(4, 3))
        before = target.predict_batch(phi).copy()
        online.train_batch(phi, np.ones(4) * 5, np.ones(4))
        assert np.array_equal(target.predict_batch(phi), before)
        assert not np.array_equal(online.predict_batch(phi), before)


class TestModelFile:
    def test_save_and_load_preserve_predictions(self, tmp_path):
        rng = np.random.default_rng(9)
        model = QNetwork([5, 4, 3, 1], rng=rng, arch_id="tokyo")
        path = tmp_path / "models" / "m.qrm"
        save_model(model, path)
        loaded = load_model(path)

        phi = rng.normal(size=(6, 5))
        assert loaded.arch_id == "tokyo"
        assert loaded.layer_dims == model.layer_dims
        assert np.array_equal(loaded.predict_batch(phi), model.predict_batch(phi))
        assert not list(path.parent.glob(".model_*"))

    def test_header_checked(self):
        with pytest.raises(ModelFormatError):
            parse_model("something else\narch -\ndims 2 1\n")

    def test_truncated(self):
        text = format_model(QNetwork([3, 2, 1]))
        with pytest.raises(ModelFormatError):
            parse_model("\n".join(text.splitlines()[:-1]))

    def test_trailing_data(self):
        text = format_model(QNetwork([3, 1])) + "1.0\n"
        with pytest.raises(ModelFormatError):
            parse_model(text)

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputError):
            load_model(tmp_path / "absent.qrm")

    def test_undecodable_file(self, tmp_path):
        path = tmp_path / "bad.qrm"
        path.write_bytes(b"\x80\x81")
        with pytest.raises(InputError):
            load_model(path)


def experience(reward=0.0, priority=None):
    return Experience(state=None, next_state=None, reward=reward, done=False, priority=priority)


class TestReplayBuffer:
    def test_new_items_get_max_priority(self):
        buffer = ReplayBuffer(capacity=8)
        buffer.add(experience(priority=2.0))
        buffer.add(experience())
        assert buffer._priorities[1] == 2.0

    def test_first_item_priority_one(self):
        buffer = ReplayBuffer(capacity=4)
        buffer.add(experience())
        assert buffer._priorities[0] == 1.0

    def test_sampling_follows_priorities(self):
        buffer = ReplayBuffer(capacity=4, alpha=1.0)
        buffer.add(experience(reward=0.0, priority=1.0))
        buffer.add(experience(reward=1.0, priority=3.0))
        rng = np.random.default_rng(0)
        draws = [int(i) for _ in range(1000) for i in buffer.sample(4, rng)[0]]
        assert abs(draws.count(1) / len(draws) - 0.75) < 0.03

    def test_zero_alpha_samples_uniformly(self):
        buffer = ReplayBuffer(capacity=4, alpha=0.0, beta_start=1.0)
        for priority in (0.5, 1.0, 9.0):
            buffer.add(experience(priority=priority))
        assert buffer.probabilities() == pytest.approx([1 / 3] * 3)

        rng = np.random.default_rng(5)
        _, _, weights = buffer.sample(3, rng)
        assert weights == pytest.approx([1.0] * 3)
        draws = [int(i) for _ in range(1000) for i in buffer.sample(3, rng)[0]]
        for index in range(3):
            assert abs(draws.count(index) / len(draws) - 1 / 3) < 0.03

    def test_importance_weights_normalised(self):
        buffer = ReplayBuffer(capacity=4, alpha=1.0, beta_start=1.0)
        buffer.add(experience(priority=1.0))
        buffer.add(experience(priority=3.0))
        indices, _, weights = buffer.sample(2, np.random.default_rng(1))
        assert weights.max() == pytest.approx(1.0)
        for index, weight in zip(indices, weights):
            expected = 1.0 if index == 0 else 1.0 / 3.0
            if len(set(indices.tolist())) == 2:
                assert weight == pytest.approx(expected)

    def test_update_priorities(self):
        buffer = ReplayBuffer(capacity=4, eps=0.01)
        buffer.add(experience())
        buffer.update_priorities([0], [-0.5])
        assert buffer._priorities[0] == pytest.approx(0.51)

    def test_beta_anneals(self):
        buffer = ReplayBuffer(capacity=4, beta_start=0.4, beta_end=1.0, beta_steps=2)
        buffer.add(experience())
        assert buffer.beta == pytest.approx(0.4)
        buffer.sample(1, np.random.default_rng(0))
        assert buffer.beta == pytest.approx(0.7)
        buffer.sample(1, np.random.default_rng(0))
        buffer.sample(1, np.random.default_rng(0))
        assert buffer.beta == pytest.approx(1.0)

    def test_ring_overwrites_oldest(self):
        buffer = ReplayBuffer(capacity=2)
        for reward in (1.0, 2.0, 3.0):
            buffer.add(experience(reward=reward))
        assert len(buffer) == 2
        assert sorted(e.reward for e in buffer._items) == [2.0, 3.0]

    def test_sampling_contract(self):
        buffer = ReplayBuffer(capacity=4)
        with pytest.raises(ContractError):
            buffer.sample(1, np.random.default_rng(0))
        buffer.add(experience())
        with pytest.raises(ContractError):
            buffer.sample(2, np.random.default_rng(0))
