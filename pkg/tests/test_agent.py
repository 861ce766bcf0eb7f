"""Subgoal semantics, lifecycle, rewards, and policy network behavior."""

import numpy as np
import pytest

from csg import agent as ag
from csg import gridworld as gw

M = 5
G0 = ag.env_goal(M)


def random_obs(rng, m=M):
    return gw.Observation(view=rng.integers(0, 8, size=(m, m)).astype(np.int8),
                          m=m)


class TestSubGoalEncoding:
    def test_encode_decode_round_trip(self):
        for pos in range(M * M):
            for value in range(8):
                g = ag.SubGoal(pos, value)
                back = ag.decode_subgoal(g.encode(), M, G0)
                assert (back.pos, back.value) == (pos, value)

    def test_env_goal_is_agent_cell_showing_goal(self):
        assert G0.pos == 2 * M + (M - 1)
        assert G0.value == gw.GOAL
        assert G0.is_env_goal

    def test_decode_flags_env_goal(self):
        assert ag.decode_subgoal(G0.encode(), M, G0).is_env_goal
        assert not ag.decode_subgoal(0, M, G0).is_env_goal

    def test_decode_out_of_range(self):
        with pytest.raises(ValueError):
            ag.decode_subgoal(M * M * 8, M, G0)


class TestVerifyGoal:
    def test_key_on_agent_cell(self):
        """Carrying the key shows it at the agent cell, satisfying the
        (agent cell, yellow key) subgoal."""
        state = gw.generate(3, 6)
        state.carried = gw.KEY
        key_cell = np.argwhere(state.grid == gw.KEY)
        state.grid[tuple(key_cell[0])] = gw.EMPTY
        obs = gw.observe(state, M)
        goal = ag.SubGoal(pos=obs.agent_cell[0] * M + obs.agent_cell[1],
                          value=gw.KEY)
        assert ag.verify_goal(obs, goal) == 1

        state.carried = None
        obs2 = gw.observe(state, M)
        assert ag.verify_goal(obs2, goal) == 0

    def test_brute_force_oracle(self):
        """verify over all M^2*8 goals agrees with a direct scan: each
        position matches exactly the tile it shows."""
        rng = np.random.default_rng(0)
        for _ in range(50):
            obs = random_obs(rng)
            flat = obs.flat()
            total = 0
            for pos in range(M * M):
                for value in range(8):
                    v = ag.verify_goal(obs, ag.SubGoal(pos, value))
                    assert v == int(flat[pos] == value)
                    total += v
            assert total == M * M


class TestRewards:
    def test_goal_reward_values(self):
        rng = np.random.default_rng(1)
        obs = random_obs(rng)
        hit = ag.SubGoal(pos=0, value=int(obs.flat()[0]))
        miss = ag.SubGoal(pos=0, value=(int(obs.flat()[0]) + 1) % 8)
        cfg = ag.GoalRewardConfig()
        assert ag.goal_reward(obs, hit, cfg) == 1.0
        assert ag.goal_reward(obs, miss, cfg) == 0.0
        half = ag.GoalRewardConfig(r=0.5)
        assert ag.goal_reward(obs, hit, half) == 0.5

    def test_navigator_step_reward(self):
        assert ag.navigator_step_reward(1.0, 0.2) == pytest.approx(1.2)
        assert ag.navigator_step_reward(0.0, 0.0) == 0.0

    def test_navigator_discounted_sum_oracle(self):
        """Three-step hand trajectory: sum gamma^k (r_g + r_c)."""
        gamma = 0.99
        r_g = [0.0, 0.0, 1.0]
        r_c = [0.3, 0.1, 0.05]
        total = sum(gamma ** k * ag.navigator_step_reward(r_g[k], r_c[k])
                    for k in range(3))
        oracle = 0.3 + 0.99 * 0.1 + 0.99 ** 2 * 1.05
        assert total == pytest.approx(oracle, abs=1e-6)

    def test_subgoal_step_reward_triple(self):
        assert ag.subgoal_step_reward(0.2, 0.8, 1, beta=0.5) \
            == pytest.approx(0.2 + 0.8)
        assert ag.subgoal_step_reward(0.2, 0.8, 0, beta=0.0) \
            == pytest.approx(0.2)
        assert ag.subgoal_step_reward(0.1, 0.9, 0, beta=1.0) \
            == pytest.approx(0.55, abs=1e-9)

    def test_subgoal_discounted_sum_oracle(self):
        gamma, beta = 0.9, 0.5
        r_c = [0.2, 0.1]
        r_e = [0.0, 0.7]
        v = [0, 1]
        total = sum(gamma ** k
                    * ag.subgoal_step_reward(r_c[k], r_e[k], v[k], beta)
                    for k in range(2))
        oracle = 0.2 + 0.9 * (0.1 + 1.0 * 0.7)
        assert total == pytest.approx(oracle, abs=1e-6)

    def test_negative_beta_rejected(self):
        with pytest.raises(ValueError):
            ag.subgoal_step_reward(0.1, 0.1, 0, beta=-0.5)

    def test_bad_config_rejected(self):
        with pytest.raises(ValueError):
            ag.GoalRewardConfig(r=0.0)
        with pytest.raises(ValueError):
            ag.GoalRewardConfig(gamma=1.0)
        with pytest.raises(ValueError):
            ag.GoalRewardConfig(abandon_limit=0)


class TestLifecycle:
    def _obs_hit(self, goal):
        view = np.zeros((M, M), dtype=np.int8)
        view[divmod(goal.pos, M)] = goal.value
        return gw.Observation(view=view, m=M)

    def _obs_miss(self, goal):
        view = np.full((M, M), (goal.value + 1) % 8, dtype=np.int8)
        return gw.Observation(view=view, m=M)

    def test_abandoned_exactly_at_limit(self):
        cfg = ag.GoalRewardConfig(abandon_limit=20)
        goal = ag.SubGoal(3, 2)
        status = ag.SubGoalStatus(ag.Status.ACTIVE, 0)
        for step in range(1, 21):
            status = ag.update_lifecycle(status, self._obs_miss(goal), goal, cfg)
            if step < 20:
                assert status.status == ag.Status.ACTIVE
                status = ag.SubGoalStatus(ag.Status.ACTIVE, status.steps_on_goal)
        assert status.status == ag.Status.ABANDONED
        assert status.steps_on_goal == 20

    def test_reached_beats_abandoned_on_tie(self):
        cfg = ag.GoalRewardConfig(abandon_limit=5)
        goal = ag.SubGoal(0, 7)
        status = ag.SubGoalStatus(ag.Status.ACTIVE, 4)
        out = ag.update_lifecycle(status, self._obs_hit(goal), goal, cfg)
        assert out.status == ag.Status.REACHED

    def test_reached_at_step_three(self):
        cfg = ag.GoalRewardConfig(abandon_limit=25)
        goal = ag.SubGoal(7, 4)
        status = ag.SubGoalStatus(ag.Status.ACTIVE, 2)
        out = ag.update_lifecycle(status, self._obs_hit(goal), goal, cfg)
        assert out.status == ag.Status.REACHED
        assert out.steps_on_goal == 3

    def test_update_requires_active(self):
        cfg = ag.GoalRewardConfig()
        goal = ag.SubGoal(0, 1)
        with pytest.raises(ValueError):
            ag.update_lifecycle(ag.SubGoalStatus(ag.Status.REACHED, 3),
                                self._obs_miss(goal), goal, cfg)


class TestPolicyNetworks:
    def test_head_widths(self):
        nav = ag.build_navigator(0, M, hidden=32, emb=4)
        sg = ag.build_subgoal_net(0, M, hidden=32, emb=4)
        assert nav.params["head_policy.w"].shape == (32, 6)
        assert sg.params["head_policy.w"].shape == (32, M * M * 8)
        assert nav.params["head_value.w"].shape == (32, 1)

    def test_deterministic_logits(self):
        nav = ag.build_navigator(1, M, hidden=16, emb=4)
        rng = np.random.default_rng(2)
        obs = random_obs(rng)
        a, _, _ = ag.navigator_act(nav, obs, G0, nav.initial_state(1))
        b, _, _ = ag.navigator_act(nav, obs, G0, nav.initial_state(1))
        np.testing.assert_array_equal(a, b)

    def test_logits_finite_over_10k_random_draws(self):
        nav = ag.build_navigator(2, M, hidden=16, emb=4)
        rng = np.random.default_rng(3)
        obs = rng.integers(0, 8, size=(10_000, M * M))
        goals = np.stack([rng.integers(0, M * M, 10_000),
                          rng.integers(0, 8, 10_000)], axis=1)
        import csg.autodiff as ad
        with ad.no_grad():
            logits, value, _ = ag.policy_forward(nav, obs, goals,
                                                 nav.initial_state(10_000))
        assert np.isfinite(logits.data).all()
        assert np.isfinite(value.data).all()

    def test_init_entropy_near_uniform(self):
        """Policy head scale keeps the starting policy within 5% of ln 6."""
        rng = np.random.default_rng(4)
        for seed in range(3):
            nav = ag.build_navigator(seed, M)
            obs = random_obs(rng)
            logits, _, _ = ag.navigator_act(nav, obs, G0, nav.initial_state(1))
            p = np.exp(ag.log_probs(logits))
            entropy = -(p * np.log(p)).sum()
            assert abs(entropy - np.log(6)) < 0.05 * np.log(6)

    def test_goal_conditioning_changes_distribution(self):
        nav = ag.build_navigator(5, M)
        rng = np.random.default_rng(5)
        obs = random_obs(rng)
        a, _, _ = ag.navigator_act(nav, obs, ag.SubGoal(0, 3),
                                   nav.initial_state(1))
        b, _, _ = ag.navigator_act(nav, obs, ag.SubGoal(12, 7),
                                   nav.initial_state(1))
        assert np.abs(a - b).max() > 0

    def test_missing_goal_rejected(self):
        nav = ag.build_navigator(6, M, hidden=8, emb=2)
        with pytest.raises(ValueError):
            ag.policy_forward(nav, np.zeros((1, M * M), int), None,
                              nav.initial_state(1))


class TestProposal:
    def test_proposed_goal_in_range(self):
        sg = ag.build_subgoal_net(7, M, hidden=16, emb=4)
        rng = np.random.default_rng(6)
        states = sg.initial_state(1)
        for _ in range(30):
            goal, logp, value, states = ag.propose_subgoal(
                sg, random_obs(rng), G0, states, rng)
            assert 0 <= goal.pos < M * M and 0 <= goal.value < 8
            assert logp <= 0.0 and np.isfinite(value)

    def test_forced_env_goal_encoding(self):
        assert ag.decode_subgoal(G0.encode(), M, G0).is_env_goal

    def test_sampling_frequency_matches_softmax(self):
        """100k draws from fixed logits: empirical frequencies within 1%
        absolute of the softmax probabilities."""
        rng = np.random.default_rng(7)
        logits = rng.normal(0, 1.5, size=12)
        p = np.exp(ag.log_probs(logits))
        draws = ag.sample_from_logits(np.tile(logits, (100_000, 1)), rng)
        freq = np.bincount(np.asarray(draws).ravel(), minlength=12) / 100_000
        assert np.abs(freq - p).max() < 0.01


class TestStateMasking:
    def test_mask_zeroes_finished_rows(self):
        nav = ag.build_navigator(8, M, hidden=4, emb=2)
        states = nav.initial_state(3)
        for s in states:
            s.h.data[:] = 1.0
            s.c.data[:] = -2.0
        masked = ag.mask_states(states, np.array([1.0, 0.0, 1.0]))
        for s in masked:
            assert (s.h.data[1] == 0).all() and (s.c.data[1] == 0).all()
            assert (s.h.data[0] == 1).all() and (s.c.data[2] == -2).all()

    def test_grad_mask_matches_plain_mask(self):
        nav = ag.build_navigator(9, M, hidden=4, emb=2)
        states = nav.initial_state(2)
        for s in states:
            s.h.data[:] = 0.7
        keep = np.array([0.0, 1.0])
        a = ag.mask_states(states, keep)
        b = ag.mask_states_grad(states, keep)
        for sa, sb in zip(a, b):
            np.testing.assert_array_equal(sa.h.data, sb.h.data)
            np.testing.assert_array_equal(sa.c.data, sb.c.data)


class TestDescriptions:
    def test_distinguished_cell_phrases(self):
        agent_cell = 2 * M + 4
        front_cell = 2 * M + 3
        assert ag.describe_subgoal(ag.SubGoal(agent_cell, gw.KEY), M) \
            == "pick up the yellow key"
        assert ag.describe_subgoal(ag.SubGoal(front_cell, gw.DOOR_LOCKED), M) \
            == "go to the locked yellow door"
        assert ag.describe_subgoal(G0, M) == "go to the green goal"

    def test_generic_cell_template(self):
        text = ag.describe_subgoal(ag.SubGoal(6, gw.WALL), M)
        assert text == "make cell (1,1) become wall"

    def test_deterministic(self):
        g = ag.SubGoal(13, gw.DOOR_OPEN)
        assert ag.describe_subgoal(g, M) == ag.describe_subgoal(g, M)
