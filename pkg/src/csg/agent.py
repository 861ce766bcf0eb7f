"""Goal-conditioned navigator and subgoal generator.

Subgoals are (observation cell, tile value) pairs: the navigator is asked
to make that cell of its egocentric view show that tile. Selecting the
environment's own goal encoding means "no subgoal". Both networks share
the architecture: per-network embedding table, FC+ReLU, two LSTM layers,
then policy-logit and scalar-value heads.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .gridworld import (GOAL, KEY, NUM_ACTIONS, TILE_NAMES, VOCAB_SIZE)


@dataclass(frozen=True)
class SubGoal:
    pos: int          # index into the flattened M*M view
    value: int        # tile vocabulary index
    is_env_goal: bool = False

    def encode(self):
        return self.pos * VOCAB_SIZE + self.value


def env_goal(m):
    """g0: the agent's own cell showing the green goal (agent stands on it)."""
    center = (m - 1) // 2
    return SubGoal(pos=center * m + (m - 1), value=GOAL, is_env_goal=True)


def decode_subgoal(index, m, g0):
    pos, value = divmod(int(index), VOCAB_SIZE)
    if pos >= m * m:
        raise ValueError(f"subgoal index {index} out of range for m={m}")
    is_env = (pos == g0.pos and value == g0.value)
    return SubGoal(pos=pos, value=value, is_env_goal=is_env)


@dataclass
class GoalRewardConfig:
    r: float = 1.0
    gamma: float = 0.99
    beta: float = 0.5
    abandon_limit: int = 25

    def __post_init__(self):
        if self.r <= 0 or not (0 <= self.gamma < 1) or self.beta < 0 \
                or self.abandon_limit < 1:
            raise ValueError(f"bad goal reward config: {self}")


class Status(Enum):
    ACTIVE = "active"
    REACHED = "reached"
    ABANDONED = "abandoned"
    NONE = "none"


@dataclass
class SubGoalStatus:
    status: Status = Status.NONE
    steps_on_goal: int = 0


# --------------------------------------------------------------- rewards

def verify_goal(obs, goal):
    """1 iff the observation cell at goal.pos holds exactly goal.value."""
    return int(int(obs.flat()[goal.pos]) == goal.value)


def goal_reward(obs, goal, config):
    return config.r if verify_goal(obs, goal) else 0.0


def navigator_step_reward(r_g, r_c):
    return r_g + r_c


def subgoal_step_reward(r_c, r_e, verified, beta):
    if beta < 0:
        raise ValueError("beta must be >= 0")
    return r_c + ((verified + beta) / (1.0 + beta)) * r_e


def update_lifecycle(status, obs, goal, config):
    """Advance an active subgoal by one step; reached wins ties."""
    if status.status != Status.ACTIVE:
        raise ValueError(f"update_lifecycle on non-active status {status}")
    count = status.steps_on_goal + 1
    if verify_goal(obs, goal):
        return SubGoalStatus(Status.REACHED, count)
    if count >= config.abandon_limit:
        return SubGoalStatus(Status.ABANDONED, count)
    return SubGoalStatus(Status.ACTIVE, count)


# --------------------------------------------------------------- networks

@dataclass
class PolicyNet:
    """Parameter bundle plus the shape facts needed to run it."""
    params: nn.ParamSet
    m: int
    n_out: int
    hidden: int
    emb: int
    goal_conditioned: bool

    @property
    def n_tiles(self):
        return self.m * self.m

    def initial_state(self, batch):
        return [nn.LstmState.zeros(batch, self.hidden),
                nn.LstmState.zeros(batch, self.hidden)]

    def snapshot(self):
        return PolicyNet(self.params.snapshot(), self.m, self.n_out,
                         self.hidden, self.emb, self.goal_conditioned)


def build_policy(seed, m, n_out, goal_conditioned=True, hidden=128, emb=8):
    rng = np.random.default_rng(seed)
    n_tiles = m * m
    ps = nn.ParamSet()
    ps.add("emb", nn.embedding_init(rng, VOCAB_SIZE, emb))
    in_width = n_tiles * emb
    if goal_conditioned:
        ps.add("pos_emb", nn.embedding_init(rng, n_tiles, emb))
        in_width += 2 * emb  # goal position + goal value embeddings
    nn.add_linear(ps, rng, "fc_in", in_width, hidden)
    nn.add_lstm(ps, rng, "lstm1", hidden, hidden)
    nn.add_lstm(ps, rng, "lstm2", hidden, hidden)
    # near-uniform policy and near-zero value at initialization
    nn.add_linear(ps, rng, "head_policy", hidden, n_out, scale=0.01)
    nn.add_linear(ps, rng, "head_value", hidden, 1, scale=0.01)
    return PolicyNet(ps, m, n_out, hidden, emb, goal_conditioned)


def build_navigator(seed, m, hidden=128, emb=8):
    return build_policy(seed, m, NUM_ACTIONS, True, hidden, emb)


def build_subgoal_net(seed, m, hidden=128, emb=8):
    return build_policy(seed, m, m * m * VOCAB_SIZE, True, hidden, emb)


def policy_forward(net, obs_idx, goal_arr, states):
    """Batched forward pass.

    obs_idx: (B, n_tiles) ints; goal_arr: (B, 2) [pos, value] or None;
    states: list of two LstmStates. Returns (logits (B, n_out),
    value (B,), new_states).
    """
    p = net.params
    b = obs_idx.shape[0]
    x = ad.reshape(ad.embedding_lookup(p["emb"], obs_idx),
                   (b, net.n_tiles * net.emb))
    if net.goal_conditioned:
        if goal_arr is None:
            raise ValueError("goal-conditioned network called without a goal")
        goal_arr = np.asarray(goal_arr)
        x = ad.concat([
            x,
            ad.embedding_lookup(p["pos_emb"], goal_arr[:, 0]),
            ad.embedding_lookup(p["emb"], goal_arr[:, 1]),
        ], axis=-1)
    h = ad.relu(nn.linear(p, "fc_in", x))
    s1 = nn.lstm_step(p, "lstm1", h, states[0])
    s2 = nn.lstm_step(p, "lstm2", s1.h, states[1])
    logits = nn.linear(p, "head_policy", s2.h)
    value = ad.reshape(nn.linear(p, "head_value", s2.h), (b,))
    return logits, value, [s1, s2]


def navigator_act(net, obs, goal, states):
    """Single-observation action logits and value (no tape)."""
    with ad.no_grad():
        logits, value, new_states = policy_forward(
            net, obs.flat()[None], np.array([[goal.pos, goal.value]]), states)
    return logits.data[0], float(value.data[0]), new_states


def propose_subgoal(net, obs, g0, states, rng):
    """Sample a subgoal from the joint (position, value) categorical."""
    with ad.no_grad():
        logits, value, new_states = policy_forward(
            net, obs.flat()[None], np.array([[g0.pos, g0.value]]), states)
    logp = log_probs(logits.data[0])
    idx = sample_from_logits(logits.data[0], rng)
    return (decode_subgoal(idx, net.m, g0), float(logp[idx]),
            float(value.data[0]), new_states)


# --------------------------------------------------------------- sampling

def log_probs(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def sample_from_logits(logits, rng):
    p = np.exp(log_probs(np.asarray(logits, dtype=np.float64)))
    p /= p.sum(axis=-1, keepdims=True)
    if p.ndim == 1:
        return int(rng.choice(p.shape[-1], p=p))
    cdf = p.cumsum(axis=-1)
    u = rng.random(p.shape[:-1] + (1,))
    return (u > cdf).sum(axis=-1).clip(0, p.shape[-1] - 1)


def mask_states(states, keep):
    """Zero recurrent state where keep == 0 (episode boundaries)."""
    keep = np.asarray(keep, dtype=ad.default_dtype()).reshape(-1, 1)
    out = []
    for s in states:
        out.append(nn.LstmState(Tensor(s.h.data * keep), Tensor(s.c.data * keep)))
    return out


def mask_states_grad(states, keep):
    """Like mask_states but keeps the tape attached (for replay)."""
    keep = Tensor(np.asarray(keep, dtype=ad.default_dtype()).reshape(-1, 1))
    return [nn.LstmState(ad.mul(s.h, keep), ad.mul(s.c, keep)) for s in states]


# --------------------------------------------------------------- describing

def describe_subgoal(goal, m):
    """Human-readable rendering of a subgoal, deterministic per (goal, m)."""
    center = (m - 1) // 2
    agent_cell = center * m + (m - 1)
    front_cell = center * m + (m - 2)
    name = TILE_NAMES[goal.value]
    if goal.is_env_goal or (goal.pos == agent_cell and goal.value == GOAL):
        return "go to the green goal"
    if goal.pos == agent_cell and goal.value == KEY:
        return "pick up the yellow key"
    if goal.pos == agent_cell:
        return f"stand on {name}"
    if goal.pos == front_cell:
        return f"go to the {name}"
    r, c = divmod(goal.pos, m)
    return f"make cell ({r},{c}) become {name}"
