"""Comparison agents: plain actor-critic and random network distillation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import nn
from .agent import build_policy
from .autodiff import Tensor
from .gridworld import NUM_ACTIONS, VOCAB_SIZE


def build_vanilla(seed, m, hidden=128, emb=8):
    """Navigator architecture conditioned on no goal; trained on r_e only."""
    return build_policy(seed, m, NUM_ACTIONS, goal_conditioned=False,
                        hidden=hidden, emb=emb)


@dataclass
class RndParams:
    """Frozen random target network and a trained predictor of its features."""
    target: nn.ParamSet
    predictor: nn.ParamSet
    feature_dim: int
    scale: float
    m: int
    emb: int
    # running second moment of the raw bonus, for normalization
    running_sq: float = 1.0
    count: int = 0


def build_rnd(seed, m, feature_dim=32, hidden=64, emb=8, scale=0.1):
    rng = np.random.default_rng(seed)
    n_tiles = m * m

    def make(r):
        ps = nn.ParamSet()
        ps.add("emb", nn.embedding_init(r, VOCAB_SIZE, emb) * 10.0)
        nn.add_linear(ps, r, "fc1", n_tiles * emb, hidden)
        nn.add_linear(ps, r, "fc2", hidden, feature_dim)
        return ps

    target = make(rng)
    predictor = make(np.random.default_rng(seed + 1))
    return RndParams(target=target, predictor=predictor,
                     feature_dim=feature_dim, scale=scale, m=m, emb=emb)


def _features(ps, obs_idx, m, emb):
    b = obs_idx.shape[0]
    x = ad.reshape(ad.embedding_lookup(ps["emb"], obs_idx), (b, m * m * emb))
    return nn.linear(ps, "fc2", ad.relu(nn.linear(ps, "fc1", x)))


def _raw_error(next_obs_idx, params):
    obs_idx = np.atleast_2d(np.asarray(next_obs_idx))
    with ad.no_grad():
        ft = _features(params.target, obs_idx, params.m, params.emb).data
        fp = _features(params.predictor, obs_idx, params.m, params.emb).data
    return ((ft.astype(np.float64) - fp.astype(np.float64)) ** 2).sum(axis=-1)


def rnd_bonus(next_obs_idx, params):
    """scale * ||f_target - f_predictor||^2 per observation, >= 0."""
    return params.scale * _raw_error(next_obs_idx, params)


def rnd_bonus_normalized(next_obs_idx, params):
    """Bonus with the raw error divided by its running standard deviation."""
    raw = _raw_error(next_obs_idx, params)
    for v in raw:
        params.count += 1
        params.running_sq += (v * v - params.running_sq) / params.count
    return params.scale * raw / max(np.sqrt(params.running_sq), 1e-8)


def rnd_train_step(params, obs_idx, optimizer):
    """Fit the predictor to the frozen target on a batch; returns mean error."""
    params.predictor.zero_grad()
    with ad.no_grad():
        ft = _features(params.target, obs_idx, params.m, params.emb).data
    fp = _features(params.predictor, obs_idx, params.m, params.emb)
    diff = fp - Tensor(ft)
    loss = ad.tmean(ad.tsum(diff * diff, axis=-1))
    ad.backward(loss)
    optimizer.step()
    return float(loss.data)
