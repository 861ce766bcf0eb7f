"""Single-process multi-actor actor-critic trainer with V-trace correction.

Actors step their own environments using immutable parameter snapshots
and hand finished trajectories to the single learner through a bounded
queue (or synchronously in deterministic mode). The learner replays each
trajectory through the current parameters, builds V-trace targets, and
applies one optimizer step per network; for the curious-subgoal agent it
also trains the subgoal generator at decision granularity and the GAN on
the freshest transitions.
"""

from __future__ import annotations

import csv
import os
import queue
import threading
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import agent as ag
from . import autodiff as ad
from . import baselines
from . import gridworld as gw
from . import nn
from . import transition_gan as tg
from .autodiff import Tensor
from .vtrace import VtraceConfig, vtrace_targets

EVENT_NONE, EVENT_PROPOSED, EVENT_REACHED, EVENT_ABANDONED = 0, 1, 2, 3
EVENT_NAMES = {EVENT_NONE: "none", EVENT_PROPOSED: "proposed",
               EVENT_REACHED: "reached", EVENT_ABANDONED: "abandoned"}


@dataclass
class Trajectory:
    """One rollout of length T across B actor slots (parallel arrays)."""
    obs: np.ndarray            # (T, B, n_tiles) int
    goals: Optional[np.ndarray]  # (T, B, 2) [pos, value] or None
    actions: np.ndarray        # (T, B) int
    behavior_logp: np.ndarray  # (T, B)
    values: np.ndarray         # (T, B)
    r_e: np.ndarray            # (T, B)
    r_c: np.ndarray            # (T, B)
    r_g: np.ndarray            # (T, B)
    verified: np.ndarray       # (T, B) {0,1}
    dones: np.ndarray          # (T, B) bool
    sg_events: np.ndarray      # (T, B) EVENT_* codes
    bootstrap_value: np.ndarray  # (B,)
    init_state: list           # navigator LSTM states at rollout start
    sg_sequences: list = field(default_factory=list)  # per-actor SG decisions
    episode_returns: list = field(default_factory=list)  # finished episodes' r_e
    episode_reach_stats: tuple = (0, 0)  # (reached, proposals) in this rollout

    def __len__(self):
        return self.obs.shape[0]

    @property
    def batch(self):
        return self.obs.shape[1]


@dataclass
class SgDecision:
    obs: np.ndarray       # flat observation at the decision point
    goal_idx: int         # sampled joint (pos, value) index
    behavior_logp: float
    value: float
    agg_reward: float = 0.0   # discounted subgoal reward over the interval
    duration: int = 0
    discount: float = 1.0     # gamma ** duration, zeroed at episode end
    closed: bool = False


@dataclass
class SgSequence:
    decisions: list
    bootstrap_value: float
    init_state_h: list  # [(h1, c1), (h2, c2)] numpy copies at rollout start


def _copy_states(states):
    return [(s.h.data.copy(), s.c.data.copy()) for s in states]


def _states_from_copy(copies):
    return [nn.LstmState(Tensor(h.copy()), Tensor(c.copy())) for h, c in copies]


class EnvPool:
    """B independent Door & Key environments with private layout seeds."""

    def __init__(self, n, m, seed, batch):
        self.n = n
        self.m = m
        self.rng = np.random.default_rng(seed)
        self.states = [None] * batch
        self.obs = [None] * batch
        for i in range(batch):
            self.reset(i)

    def reset(self, i):
        self.states[i] = gw.generate(int(self.rng.integers(0, 2 ** 31)), self.n)
        self.obs[i] = gw.observe(self.states[i], self.m)
        return self.obs[i]

    def step(self, i, action):
        self.states[i], done, r_e = gw.step(self.states[i], action)
        obs_after = gw.observe(self.states[i], self.m)
        return obs_after, done, r_e

    def obs_batch(self):
        return np.stack([o.flat() for o in self.obs])


# ----------------------------------------------------------------- collectors

class Collector:
    """Steps B environments in lockstep with snapshot parameters.

    Persistent across rollouts: environments, recurrent states, subgoal
    lifecycle. Parameters are replaced via set_snapshots().
    """

    def __init__(self, algo, env_pool, nav, sg=None, gan=None, rnd=None,
                 goal_cfg=None, seed=0):
        if algo not in ("csg", "vanilla", "rnd"):
            raise ValueError(f"unknown algo {algo!r}")
        self.algo = algo
        self.envs = env_pool
        self.nav = nav
        self.sg = sg
        self.gan = gan
        self.rnd = rnd
        self.goal_cfg = goal_cfg or ag.GoalRewardConfig()
        self.rng = np.random.default_rng(seed)
        b = len(env_pool.states)
        self.b = b
        self.m = env_pool.m
        self.g0 = ag.env_goal(self.m)
        self.nav_states = nav.initial_state(b)
        self.episode_return = np.zeros(b)
        if algo == "csg":
            self.sg_states = sg.initial_state(b)
            self.goals = [None] * b
            self.status = [ag.SubGoalStatus() for _ in range(b)]
        self.steps_taken = 0

    def set_snapshots(self, nav, sg=None, gan=None, rnd=None):
        self.nav = nav
        if sg is not None:
            self.sg = sg
        if gan is not None:
            self.gan = gan
        if rnd is not None:
            self.rnd = rnd

    def _sg_forward_row(self, i, obs):
        """Run the subgoal net for one actor slot, updating its LSTM row."""
        row = [nn.LstmState(Tensor(s.h.data[i:i + 1]), Tensor(s.c.data[i:i + 1]))
               for s in self.sg_states]
        goal, logp, value, new_row = ag.propose_subgoal(
            self.sg, obs, self.g0, row, self.rng)
        for s, nr in zip(self.sg_states, new_row):
            s.h.data[i] = nr.h.data[0]
            s.c.data[i] = nr.c.data[0]
        return goal, logp, value

    def _sg_value_row(self, i, obs):
        row = [nn.LstmState(Tensor(s.h.data[i:i + 1]), Tensor(s.c.data[i:i + 1]))
               for s in self.sg_states]
        with ad.no_grad():
            _, value, _ = ag.policy_forward(
                self.sg, obs.flat()[None],
                np.array([[self.g0.pos, self.g0.value]]), row)
        return float(value.data[0])

    def collect(self, t_roll):
        b, m = self.b, self.m
        n_tiles = m * m
        cfg = self.goal_cfg
        T = t_roll
        obs_arr = np.zeros((T, b, n_tiles), dtype=np.int64)
        goals_arr = np.zeros((T, b, 2), dtype=np.int64)
        actions = np.zeros((T, b), dtype=np.int64)
        mu_logp = np.zeros((T, b))
        values = np.zeros((T, b))
        r_e = np.zeros((T, b))
        r_c = np.zeros((T, b))
        r_g = np.zeros((T, b))
        verified = np.zeros((T, b), dtype=np.int64)
        dones = np.zeros((T, b), dtype=bool)
        events = np.zeros((T, b), dtype=np.int64)
        episode_returns = []
        reached_ct, proposal_ct = 0, 0

        init_state = _copy_states(self.nav_states)
        csg = self.algo == "csg"
        if csg:
            init_sg_state = _copy_states(self.sg_states)
            open_decisions = [None] * b
            sg_sequences = [[] for _ in range(b)]

        for t in range(T):
            # subgoal proposals at lifecycle boundaries
            if csg:
                for i in range(b):
                    st = self.status[i].status
                    if st in (ag.Status.NONE, ag.Status.REACHED,
                              ag.Status.ABANDONED):
                        goal, logp, value = self._sg_forward_row(i, self.envs.obs[i])
                        self.goals[i] = goal
                        self.status[i] = ag.SubGoalStatus(ag.Status.ACTIVE, 0)
                        events[t, i] = EVENT_PROPOSED
                        proposal_ct += 1
                        dec = SgDecision(obs=self.envs.obs[i].flat().copy(),
                                         goal_idx=goal.encode(),
                                         behavior_logp=logp, value=value)
                        open_decisions[i] = dec
                        sg_sequences[i].append(dec)

            # navigator forward, batched
            obs_now = self.envs.obs_batch()
            if csg:
                gb = np.array([[g.pos, g.value] for g in self.goals])
            elif self.nav.goal_conditioned:
                gb = np.tile([[self.g0.pos, self.g0.value]], (b, 1))
            else:
                gb = None
            with ad.no_grad():
                logits, vals, self.nav_states = ag.policy_forward(
                    self.nav, obs_now, gb, self.nav_states)
            logp_all = ag.log_probs(logits.data.astype(np.float64))
            acts = ag.sample_from_logits(logits.data, self.rng)
            acts = np.atleast_1d(np.asarray(acts))

            obs_arr[t] = obs_now
            if gb is not None:
                goals_arr[t] = gb
            actions[t] = acts
            mu_logp[t] = logp_all[np.arange(b), acts]
            values[t] = vals.data

            next_flat = np.zeros((b, n_tiles), dtype=np.int64)
            for i in range(b):
                obs_after, done, rew = self.envs.step(i, int(acts[i]))
                next_flat[i] = obs_after.flat()
                r_e[t, i] = rew
                dones[t, i] = done
                self.episode_return[i] += rew

                if csg:
                    v = ag.verify_goal(obs_after, self.goals[i])
                    verified[t, i] = v
                    r_g[t, i] = cfg.r * v
                    new_status = ag.update_lifecycle(
                        self.status[i], obs_after, self.goals[i], cfg)
                    self.status[i] = new_status
                    if new_status.status == ag.Status.REACHED:
                        if events[t, i] == EVENT_NONE:
                            events[t, i] = EVENT_REACHED
                        reached_ct += 1
                    elif new_status.status == ag.Status.ABANDONED:
                        if events[t, i] == EVENT_NONE:
                            events[t, i] = EVENT_ABANDONED

                if done:
                    episode_returns.append(self.episode_return[i])
                    self.episode_return[i] = 0.0
                    self.envs.reset(i)
                else:
                    self.envs.obs[i] = obs_after

            # curiosity on the true transition (terminal observations included)
            if csg and self.gan is not None:
                r_c[t] = tg.curiosity_batch(self.gan, obs_now, acts, next_flat)
            elif self.algo == "rnd":
                r_c[t] = baselines.rnd_bonus_normalized(next_flat, self.rnd)

            if csg:
                # close subgoal decision intervals and reset on episode end
                for i in range(b):
                    dec = open_decisions[i]
                    if dec is not None:
                        step_r = ag.subgoal_step_reward(
                            r_c[t, i], r_e[t, i], verified[t, i], cfg.beta)
                        dec.agg_reward += (cfg.gamma ** dec.duration) * step_r
                        dec.duration += 1
                    boundary = self.status[i].status in (
                        ag.Status.REACHED, ag.Status.ABANDONED)
                    if dones[t, i]:
                        self.status[i] = ag.SubGoalStatus(ag.Status.NONE, 0)
                        if dec is not None:
                            dec.discount = 0.0
                            dec.closed = True
                            open_decisions[i] = None
                    elif boundary and dec is not None:
                        dec.discount = cfg.gamma ** dec.duration
                        dec.closed = True
                        open_decisions[i] = None

            # reset recurrent state at episode boundaries
            keep = (~dones[t]).astype(float)
            self.nav_states = ag.mask_states(self.nav_states, keep)
            if csg:
                self.sg_states = ag.mask_states(self.sg_states, keep)

        # bootstrap values
        obs_now = self.envs.obs_batch()
        if csg:
            gb = np.array([[g.pos, g.value] for g in self.goals])
        elif self.nav.goal_conditioned:
            gb = np.tile([[self.g0.pos, self.g0.value]], (b, 1))
        else:
            gb = None
        with ad.no_grad():
            _, boot, _ = ag.policy_forward(self.nav, obs_now, gb, self.nav_states)

        sg_sequences_out = []
        if csg:
            for i in range(b):
                dec = open_decisions[i]
                if dec is not None:
                    dec.discount = cfg.gamma ** dec.duration
                    dec.closed = True
                boot_sg = self._sg_value_row(i, self.envs.obs[i]) \
                    if dec is not None else 0.0
                if sg_sequences[i]:
                    sg_sequences_out.append(SgSequence(
                        decisions=sg_sequences[i], bootstrap_value=boot_sg,
                        init_state_h=[(h[i:i + 1].copy(), c_[i:i + 1].copy())
                                      for h, c_ in init_sg_state]))
        self.steps_taken += T * b

        return Trajectory(
            obs=obs_arr, goals=goals_arr if gb is not None else None,
            actions=actions, behavior_logp=mu_logp, values=values,
            r_e=r_e, r_c=r_c, r_g=r_g, verified=verified, dones=dones,
            sg_events=events, bootstrap_value=boot.data.astype(np.float64),
            init_state=init_state, sg_sequences=sg_sequences_out,
            episode_returns=episode_returns,
            episode_reach_stats=(reached_ct, proposal_ct))


def validate_lifecycle(traj, abandon_limit=None):
    """Check subgoal event codes against the lifecycle grammar.

    Assumes the trajectory begins at an episode start (fresh collector).
    Returns (ok, message).
    """
    t_len, b = traj.sg_events.shape
    for i in range(b):
        state = "start"
        steps_on_goal = 0
        for t in range(t_len):
            ev = int(traj.sg_events[t, i])
            if ev == EVENT_PROPOSED:
                if state not in ("start", "reached", "abandoned"):
                    return False, (f"slot {i} t {t}: proposal while {state}")
                steps_on_goal = 1
                state = "reached" if traj.verified[t, i] else "active"
            elif ev == EVENT_REACHED:
                if state != "active":
                    return False, f"slot {i} t {t}: reached while {state}"
                steps_on_goal += 1
                state = "reached"
            elif ev == EVENT_ABANDONED:
                if state != "active":
                    return False, f"slot {i} t {t}: abandoned while {state}"
                steps_on_goal += 1
                state = "abandoned"
            else:
                if state != "active":
                    return False, f"slot {i} t {t}: step without open subgoal"
                steps_on_goal += 1
            if abandon_limit is not None and steps_on_goal > abandon_limit:
                return False, (f"slot {i} t {t}: {steps_on_goal} steps on one "
                               f"subgoal exceeds limit {abandon_limit}")
            if traj.dones[t, i]:
                state = "start"
    return True, "ok"


# ----------------------------------------------------------------- updates

def replay_forward(net, traj):
    """Re-run the policy over a trajectory with the tape on.

    Returns (per-step logits tensors, per-step value tensors).
    """
    states = _states_from_copy(traj.init_state)
    logits_seq, value_seq = [], []
    t_len = len(traj)
    for t in range(t_len):
        if t > 0:
            states = ag.mask_states_grad(states, ~traj.dones[t - 1])
        goal = traj.goals[t] if traj.goals is not None else None
        logits, value, states = ag.policy_forward(net, traj.obs[t], goal, states)
        logits_seq.append(logits)
        value_seq.append(value)
    return logits_seq, value_seq


def actor_critic_update(net, traj, rewards, optimizer, vcfg,
                        max_grad_norm=40.0):
    """One V-trace policy-gradient step on `net` for the given rewards.

    Returns a loss report dict.
    """
    t_len, b = rewards.shape
    net.params.zero_grad()
    logits_seq, value_seq = replay_forward(net, traj)

    target_logp = np.zeros((t_len, b))
    values_np = np.zeros((t_len, b))
    for t in range(t_len):
        lp = ag.log_probs(logits_seq[t].data.astype(np.float64))
        target_logp[t] = lp[np.arange(b), traj.actions[t]]
        values_np[t] = value_seq[t].data

    discounts = vcfg.gamma * (~traj.dones).astype(np.float64)
    vs, pg_adv = vtrace_targets(traj.behavior_logp, target_logp, rewards,
                                values_np, traj.bootstrap_value, discounts, vcfg)

    policy_loss = Tensor(0.0)
    baseline_loss = Tensor(0.0)
    entropy = Tensor(0.0)
    for t in range(t_len):
        logp_t = ad.log_softmax(logits_seq[t], axis=-1)
        taken = ad.gather_last(logp_t, traj.actions[t])
        policy_loss = policy_loss + ad.tsum(-1.0 * taken * Tensor(pg_adv[t]))
        diff = value_seq[t] - Tensor(vs[t])
        baseline_loss = baseline_loss + ad.tsum(diff * diff)
        p_t = ad.softmax(logits_seq[t], axis=-1)
        entropy = entropy + ad.tsum(-1.0 * p_t * logp_t)

    denom = float(t_len * b)
    loss = (vcfg.policy_weight * policy_loss
            + vcfg.baseline_weight * baseline_loss
            - vcfg.entropy_weight * entropy) * (1.0 / denom)
    ad.backward(loss)
    grad_norm = nn.clip_grads(net.params, max_grad_norm)
    optimizer.step()
    report = {"loss": float(loss.data),
              "policy_loss": float(policy_loss.data) / denom,
              "baseline_loss": float(baseline_loss.data) / denom,
              "entropy": float(entropy.data) / denom,
              "grad_norm": float(grad_norm)}
    if not np.isfinite(report["loss"]):
        raise nn.GradientNaNError(f"non-finite actor-critic loss: {report}")
    return report


def subgoal_update(sg_net, sg_sequences, optimizer, vcfg, g0,
                   max_grad_norm=40.0):
    """Semi-MDP V-trace update at subgoal decision granularity."""
    if not sg_sequences:
        return {"loss": 0.0, "decisions": 0}
    sg_net.params.zero_grad()
    total_loss = Tensor(0.0)
    n_dec = 0
    logp_terms = []

    for seq in sg_sequences:
        decisions = [d for d in seq.decisions if d.closed]
        if not decisions:
            continue
        states = _states_from_copy(seq.init_state_h)
        logits_seq, value_seq = [], []
        goal_arr = np.array([[g0.pos, g0.value]])
        for d in decisions:
            logits, value, states = ag.policy_forward(
                sg_net, d.obs[None], goal_arr, states)
            logits_seq.append(logits)
            value_seq.append(value)

        t_len = len(decisions)
        mu = np.array([[d.behavior_logp] for d in decisions])
        rewards = np.array([[d.agg_reward] for d in decisions])
        values_np = np.array([[float(v.data[0])] for v in value_seq])
        discounts = np.array([[d.discount] for d in decisions])
        target_logp = np.zeros((t_len, 1))
        for k, d in enumerate(decisions):
            lp = ag.log_probs(logits_seq[k].data[0].astype(np.float64))
            target_logp[k, 0] = lp[d.goal_idx]
        boot = np.array([seq.bootstrap_value])
        vs, pg_adv = vtrace_targets(mu, target_logp, rewards, values_np,
                                    boot, discounts, vcfg)

        for k, d in enumerate(decisions):
            logp_t = ad.log_softmax(logits_seq[k], axis=-1)
            taken = ad.gather_last(logp_t, np.array([d.goal_idx]))
            policy = ad.tsum(-1.0 * taken * Tensor(pg_adv[k]))
            diffv = value_seq[k] - Tensor(vs[k])
            baseline = ad.tsum(diffv * diffv)
            p_t = ad.softmax(logits_seq[k], axis=-1)
            ent = ad.tsum(-1.0 * p_t * logp_t)
            total_loss = total_loss + vcfg.policy_weight * policy \
                + vcfg.baseline_weight * baseline - vcfg.entropy_weight * ent
            n_dec += 1

    if n_dec == 0:
        return {"loss": 0.0, "decisions": 0}
    loss = total_loss * (1.0 / n_dec)
    ad.backward(loss)
    nn.clip_grads(sg_net.params, max_grad_norm)
    optimizer.step()
    report = {"loss": float(loss.data), "decisions": n_dec}
    if not np.isfinite(report["loss"]):
        raise nn.GradientNaNError(f"non-finite subgoal loss: {report}")
    return report


# ----------------------------------------------------------------- training

@dataclass
class TrainConfig:
    algo: str = "csg"
    n: int = 5
    m: int = 5
    total_steps: int = 1_000_000
    seed: int = 1
    actors: int = 4
    t_roll: int = 80
    hidden: int = 128
    emb: int = 8
    lr: float = 3e-4
    gan_lr: float = 1e-3
    gamma: float = 0.99
    rho_bar: float = 1.0
    c_bar: float = 1.0
    entropy_weight: float = 0.01
    baseline_weight: float = 0.5
    alpha: float = 0.1
    z_dim: int = 8
    k_samples: int = 16
    goal_r: float = 1.0
    beta: float = 0.5
    abandon_limit: int = 25
    gan_batch: int = 32
    gan_updates: int = 1
    gan_buffer: int = 50_000
    rnd_scale: float = 0.1
    deterministic: bool = True
    queue_size: int = 4
    checkpoint_interval: int = 200_000
    metrics_interval: int = 10
    out_dir: Optional[str] = None
    stop_at_mean_r_e: Optional[float] = None

    def vtrace(self):
        return VtraceConfig(rho_bar=self.rho_bar, c_bar=self.c_bar,
                            gamma=self.gamma,
                            baseline_weight=self.baseline_weight,
                            entropy_weight=self.entropy_weight)

    def goal(self):
        return ag.GoalRewardConfig(r=self.goal_r, gamma=self.gamma,
                                   beta=self.beta,
                                   abandon_limit=self.abandon_limit)


METRICS_COLUMNS = ["step", "episodes", "mean_r_e", "mean_r_c",
                   "sg_reach_rate", "nav_loss", "sg_loss", "d_loss", "g_loss"]


class _TransitionBuffer:
    """Fixed-capacity ring buffer of (obs, action, next obs) transitions."""

    def __init__(self, capacity, n_tiles):
        self.capacity = capacity
        self.obs = np.zeros((capacity, n_tiles), dtype=np.int64)
        self.acts = np.zeros(capacity, dtype=np.int64)
        self.next_obs = np.zeros((capacity, n_tiles), dtype=np.int64)
        self.size = 0
        self.head = 0

    def add(self, obs, acts, next_obs):
        for chunk in _ring_chunks(self.head, len(obs), self.capacity):
            src, dst = chunk
            self.obs[dst] = obs[src]
            self.acts[dst] = acts[src]
            self.next_obs[dst] = next_obs[src]
        self.head = (self.head + len(obs)) % self.capacity
        self.size = min(self.size + len(obs), self.capacity)

    def arrays(self):
        return (self.obs[:self.size], self.acts[:self.size],
                self.next_obs[:self.size])


def _ring_chunks(head, count, capacity):
    """Source and destination slices for a wrapping ring-buffer write."""
    count = min(count, capacity)
    first = min(count, capacity - head)
    chunks = [(slice(0, first), slice(head, head + first))]
    if count > first:
        chunks.append((slice(first, count), slice(0, count - first)))
    return chunks


class Trainer:
    """Owns all mutable parameters; the only writer of any of them."""

    def __init__(self, config):
        c = config
        self.config = c
        actors = c.actors
        env_cap = os.environ.get("CSG_THREADS")
        if env_cap:
            actors = min(actors, max(1, int(env_cap)))
        self.actors = actors
        self.goal_cfg = c.goal()
        self.vcfg = c.vtrace()

        if c.algo == "csg":
            self.nav = ag.build_navigator(c.seed, c.m, c.hidden, c.emb)
            self.sg = ag.build_subgoal_net(c.seed + 1, c.m, c.hidden, c.emb)
            gan_cfg = tg.GanConfig(m=c.m, z_dim=c.z_dim, alpha=c.alpha,
                                   k_samples=c.k_samples, lr=c.gan_lr)
            self.gan = tg.GanParams(gan_cfg, seed=c.seed + 2)
            self.gan_trainer = tg.GanTrainer(self.gan)
            self.sg_opt = nn.Optimizer(self.sg.params, algo="adam", lr=c.lr)
        else:
            goal_cond = False
            self.nav = baselines.build_vanilla(c.seed, c.m, c.hidden, c.emb)
            self.sg = None
            self.gan = None
        if c.algo == "rnd":
            self.rnd = baselines.build_rnd(c.seed + 3, c.m,
                                           scale=c.rnd_scale)
            self.rnd_opt = nn.Optimizer(self.rnd.predictor, algo="adam",
                                        lr=1e-3)
        else:
            self.rnd = None
        self.nav_opt = nn.Optimizer(self.nav.params, algo="adam", lr=c.lr)

        pool = EnvPool(c.n, c.m, seed=c.seed * 7919 + 13, batch=self.actors)
        self.collector = Collector(
            c.algo, pool,
            nav=self.nav.snapshot(),
            sg=self.sg.snapshot() if self.sg else None,
            gan=self.gan.snapshot() if self.gan else None,
            rnd=self.rnd, goal_cfg=self.goal_cfg, seed=c.seed * 31 + 7)

        self.recent_returns = []
        self.total_episodes = 0
        self.steps = 0
        self.updates = 0
        self.reach_stats = [0, 0]
        self._gan_rng = np.random.default_rng(c.seed + 101)
        self._gan_buf = None

    # -- one full learn iteration on a collected trajectory
    def learn_from(self, traj):
        c = self.config
        reports = {}
        if c.algo == "csg":
            rewards = traj.r_g + traj.r_c
        elif c.algo == "rnd":
            rewards = traj.r_e + traj.r_c  # r_c column holds the RND bonus
        else:
            rewards = traj.r_e
        reports["nav"] = actor_critic_update(self.nav, traj, rewards,
                                             self.nav_opt, self.vcfg)
        if c.algo == "csg":
            reports["sg"] = subgoal_update(self.sg, traj.sg_sequences,
                                           self.sg_opt, self.vcfg,
                                           ag.env_goal(c.m))
            reports["gan"] = self._gan_update(traj)
        if c.algo == "rnd":
            flat_obs = traj.obs.reshape(-1, traj.obs.shape[-1])
            pick = self._gan_rng.choice(len(flat_obs),
                                        size=min(64, len(flat_obs)),
                                        replace=False)
            reports["rnd"] = {"loss": baselines.rnd_train_step(
                self.rnd, flat_obs[pick], self.rnd_opt)}
        self.updates += 1
        self.steps += len(traj) * traj.batch
        self.recent_returns.extend(traj.episode_returns)
        self.recent_returns = self.recent_returns[-100:]
        self.total_episodes += len(traj.episode_returns)
        self.reach_stats[0] += traj.episode_reach_stats[0]
        self.reach_stats[1] += traj.episode_reach_stats[1]
        return reports

    def _gan_update(self, traj):
        """Train the GAN on a replay buffer of observed transitions."""
        t_len, b = traj.actions.shape
        n_tiles = traj.obs.shape[-1]
        # consecutive (obs, action, next obs) pairs inside the rollout;
        # transitions that cross an episode boundary are dropped
        next_obs = traj.obs[1:].reshape((t_len - 1) * b, -1)
        obs_v = traj.obs[:-1].reshape(-1, n_tiles)
        acts_v = traj.actions[:-1].reshape(-1)
        keep = ~traj.dones[:-1].reshape(-1)
        obs_v, acts_v, next_obs = obs_v[keep], acts_v[keep], next_obs[keep]
        empty = {"d_loss": 0.0, "g_mali_loss": 0.0, "kl_loss": 0.0,
                 "latent_loss": 0.0, "recon_loss": 0.0}
        cap = self.config.gan_buffer
        if cap > 0:
            if self._gan_buf is None:
                self._gan_buf = _TransitionBuffer(cap, n_tiles)
            self._gan_buf.add(obs_v, acts_v, next_obs)
            obs_v, acts_v, next_obs = self._gan_buf.arrays()
        if len(obs_v) == 0:
            return empty
        size = min(self.config.gan_batch, len(obs_v))
        for _ in range(max(1, self.config.gan_updates)):
            pick = self._gan_rng.choice(len(obs_v), size=size, replace=False)
            report = self.gan_trainer.step(obs_v[pick], acts_v[pick],
                                           next_obs[pick], self._gan_rng)
        return report

    def publish_snapshots(self):
        self.collector.set_snapshots(
            self.nav.snapshot(),
            sg=self.sg.snapshot() if self.sg else None,
            gan=self.gan.snapshot() if self.gan else None,
            rnd=self.rnd)

    def mean_recent_return(self):
        if not self.recent_returns:
            return 0.0
        return float(np.mean(self.recent_returns))

    def named_param_sets(self):
        sets = {"nav": self.nav.params}
        if self.sg is not None:
            sets["sg"] = self.sg.params
        if self.gan is not None:
            sets.update(self.gan.named_sets())
        if self.rnd is not None:
            sets["rnd_target"] = self.rnd.target
            sets["rnd_predictor"] = self.rnd.predictor
        return sets

    def save_checkpoint(self, path):
        nn.save_params(path, self.named_param_sets())


def train(config, progress=None):
    """Run a full training job; returns the Trainer.

    Writes metrics.csv and periodic checkpoints when config.out_dir is
    set. `progress`, if given, is called with (trainer, reports) after
    every update.
    """
    c = config
    trainer = Trainer(c)
    metrics_path = None
    csv_file = None
    writer = None
    if c.out_dir:
        os.makedirs(c.out_dir, exist_ok=True)
        metrics_path = os.path.join(c.out_dir, "metrics.csv")
        csv_file = open(metrics_path, "w", newline="")
        writer = csv.writer(csv_file)
        writer.writerow(METRICS_COLUMNS)

    next_checkpoint = c.checkpoint_interval
    traj_queue = None
    producer = None
    stop_flag = threading.Event()

    if not c.deterministic:
        traj_queue = queue.Queue(maxsize=c.queue_size)

        def produce():
            while not stop_flag.is_set():
                traj = trainer.collector.collect(c.t_roll)
                traj_queue.put(traj)

        producer = threading.Thread(target=produce, daemon=True)
        producer.start()

    try:
        while trainer.steps < c.total_steps:
            if c.deterministic:
                traj = trainer.collector.collect(c.t_roll)
            else:
                traj = traj_queue.get()
            reports = trainer.learn_from(traj)
            trainer.publish_snapshots()

            if writer and trainer.updates % c.metrics_interval == 0:
                _write_metrics_row(writer, trainer, reports, traj)
                csv_file.flush()
            if c.out_dir and trainer.steps >= next_checkpoint:
                trainer.save_checkpoint(os.path.join(
                    c.out_dir, f"checkpoint_{trainer.steps}.ckpt"))
                next_checkpoint += c.checkpoint_interval
            if progress:
                progress(trainer, reports)
            if (c.stop_at_mean_r_e is not None
                    and len(trainer.recent_returns) >= 100
                    and trainer.mean_recent_return() >= c.stop_at_mean_r_e):
                break
    finally:
        stop_flag.set()
        if producer is not None:
            # drain so the producer can observe the stop flag
            try:
                traj_queue.get_nowait()
            except queue.Empty:
                pass
            producer.join(timeout=5.0)
        if c.out_dir:
            trainer.save_checkpoint(os.path.join(c.out_dir, "final.ckpt"))
            if writer:
                _write_metrics_row(writer, trainer, reports={}, traj=None)
                csv_file.close()
    return trainer


def _write_metrics_row(writer, trainer, reports, traj):
    reached, proposed = trainer.reach_stats
    writer.writerow([
        trainer.steps, trainer.total_episodes,
        round(trainer.mean_recent_return(), 6),
        round(float(traj.r_c.mean()), 6) if traj is not None else "",
        round(reached / proposed, 6) if proposed else "",
        reports.get("nav", {}).get("loss", ""),
        reports.get("sg", {}).get("loss", ""),
        reports.get("gan", {}).get("d_loss", ""),
        reports.get("gan", {}).get("g_mali_loss", ""),
    ])
