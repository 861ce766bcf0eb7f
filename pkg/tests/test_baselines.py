"""Vanilla actor-critic wiring and random network distillation bonus."""

import numpy as np
import pytest

from csg import baselines
from csg import nn


class TestVanilla:
    def test_not_goal_conditioned(self):
        net = baselines.build_vanilla(0, 5, hidden=16, emb=4)
        assert not net.goal_conditioned
        assert "pos_emb" not in net.params.tensors
        assert net.params["head_policy.w"].shape == (16, 6)


def random_obs_batch(rng, n, m=5):
    return rng.integers(0, 8, size=(n, m * m))


class TestRndBonus:
    def test_nonnegative_and_deterministic(self):
        params = baselines.build_rnd(0, 5)
        rng = np.random.default_rng(0)
        obs = random_obs_batch(rng, 32)
        a = baselines.rnd_bonus(obs, params)
        b = baselines.rnd_bonus(obs, params)
        assert (a >= 0).all()
        np.testing.assert_array_equal(a, b)

    def test_zero_when_predictor_equals_target(self):
        params = baselines.build_rnd(1, 5)
        for name, t in params.target.items():
            params.predictor[name].data = t.data.copy()
        obs = random_obs_batch(np.random.default_rng(1), 16)
        np.testing.assert_allclose(baselines.rnd_bonus(obs, params), 0.0,
                                   atol=1e-10)

    def test_novel_states_score_higher_than_trained_ones(self):
        params = baselines.build_rnd(2, 5)
        opt = nn.Optimizer(params.predictor, lr=1e-3)
        rng = np.random.default_rng(2)
        familiar = random_obs_batch(rng, 64)
        for _ in range(300):
            baselines.rnd_train_step(params, familiar, opt)
        novel = random_obs_batch(rng, 64)
        assert baselines.rnd_bonus(familiar, params).mean() \
            < 0.5 * baselines.rnd_bonus(novel, params).mean()

    def test_bonus_decreases_on_fixed_data(self):
        """Training the predictor shrinks the bonus monotonically after
        smoothing over 20-step windows."""
        params = baselines.build_rnd(3, 5)
        opt = nn.Optimizer(params.predictor, lr=1e-3)
        obs = random_obs_batch(np.random.default_rng(3), 64)
        course = []
        for _ in range(200):
            course.append(baselines.rnd_bonus(obs, params).mean())
            baselines.rnd_train_step(params, obs, opt)
        smoothed = np.array(course).reshape(10, 20).mean(axis=1)
        assert (np.diff(smoothed) < 0).all()

    def test_target_untouched_by_training(self):
        params = baselines.build_rnd(4, 5)
        frozen = {k: t.data.copy() for k, t in params.target.items()}
        opt = nn.Optimizer(params.predictor, lr=1e-3)
        obs = random_obs_batch(np.random.default_rng(4), 32)
        for _ in range(5):
            baselines.rnd_train_step(params, obs, opt)
        for k, t in params.target.items():
            np.testing.assert_array_equal(t.data, frozen[k])

    def test_normalized_bonus_tracks_running_std(self):
        params = baselines.build_rnd(5, 5)
        obs = random_obs_batch(np.random.default_rng(5), 128)
        raw = baselines._raw_error(obs, params)
        out = baselines.rnd_bonus_normalized(obs, params)
        # after the update the running std approximates rms of raw errors
        rms = np.sqrt(np.mean(raw ** 2))
        np.testing.assert_allclose(
            out, params.scale * raw / max(np.sqrt(params.running_sq), 1e-8))
        assert params.count == 128
        assert np.sqrt(params.running_sq) == pytest.approx(rms, rel=0.5)
