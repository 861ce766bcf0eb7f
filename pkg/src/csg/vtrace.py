"""V-trace off-policy return and advantage targets.

Operates on plain numpy arrays shaped (T, B); no gradients flow through
these targets. Per-step discounts carry episode boundaries (discount 0 at
a done) and the semi-MDP case (gamma ** duration between subgoal
decisions).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class VtraceConfig:
    rho_bar: float = 1.0
    c_bar: float = 1.0
    gamma: float = 0.99
    policy_weight: float = 1.0
    baseline_weight: float = 0.5
    entropy_weight: float = 0.01

    def __post_init__(self):
        if self.rho_bar < self.c_bar:
            raise ValueError("rho_bar must be >= c_bar")


def vtrace_targets(behavior_logp, target_logp, rewards, values,
                   bootstrap_value, discounts, config):
    """Return (vs, pg_adv), both (T, B).

    discounts[t] is the discount applied across the t -> t+1 boundary
    (already zeroed at episode ends).
    """
    behavior_logp = np.asarray(behavior_logp, dtype=np.float64)
    target_logp = np.asarray(target_logp, dtype=np.float64)
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    discounts = np.asarray(discounts, dtype=np.float64)
    bootstrap_value = np.asarray(bootstrap_value, dtype=np.float64)
    shapes = {a.shape for a in (behavior_logp, target_logp, rewards, values,
                                discounts)}
    if len(shapes) != 1:
        raise ValueError(f"misaligned trajectory arrays: {sorted(shapes)}")

    t_len = rewards.shape[0]
    ratios = np.exp(target_logp - behavior_logp)
    rho = np.minimum(config.rho_bar, ratios)
    c = np.minimum(config.c_bar, ratios)

    values_next = np.concatenate([values[1:], bootstrap_value[None]], axis=0)
    deltas = rho * (rewards + discounts * values_next - values)

    vs_minus_v = np.zeros_like(values)
    acc = np.zeros_like(bootstrap_value)
    for t in range(t_len - 1, -1, -1):
        acc = deltas[t] + discounts[t] * c[t] * acc
        vs_minus_v[t] = acc
    vs = values + vs_minus_v

    vs_next = np.concatenate([vs[1:], bootstrap_value[None]], axis=0)
    pg_adv = rho * (rewards + discounts * vs_next - values)
    return vs, pg_adv
