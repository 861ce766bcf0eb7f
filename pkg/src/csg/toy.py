"""Single-tile toy transition processes for validating the GAN model.

Two fixtures: a deterministic tape whose next symbol is a function of
(symbol, action), and a coin-flip process where one action produces
either of two symbols with probability 1/2. The coin flip is the minimal
stochastic transition a prediction-error curiosity would stay attracted
to; a well-trained multimodal model should not.
"""

from __future__ import annotations

import numpy as np

from . import transition_gan as tg
from .gridworld import VOCAB_SIZE

COIN_OBS = 1          # the single observed tile before flipping
COIN_ACTION = 0
COIN_OUTCOMES = (3, 7)
COIN_IMPOSSIBLE = 2   # a next symbol the process never produces


def tape_next(symbol, action):
    """Deterministic 1-tile dynamics."""
    return (symbol + action + 1) % VOCAB_SIZE


def tape_batch(rng, size):
    obs = rng.integers(0, VOCAB_SIZE, size=(size, 1))
    act = rng.integers(0, 6, size=size)
    nxt = tape_next(obs[:, 0], act)[:, None]
    return obs, act, nxt


def coin_batch(rng, size):
    obs = np.full((size, 1), COIN_OBS)
    act = np.full(size, COIN_ACTION)
    nxt = rng.choice(COIN_OUTCOMES, size=(size, 1))
    return obs, act, nxt


def make_toy_gan(seed=0, hidden=32, z_dim=4, k_samples=16, alpha=1.0,
                 lr=1e-3):
    cfg = tg.GanConfig(m=1, z_dim=z_dim, emb=8, hidden=hidden, alpha=alpha,
                       k_samples=k_samples, lr=lr)
    return tg.GanParams(cfg, seed=seed)


def coin_curiosities(gan):
    """Curiosity on both familiar outcomes and on the impossible one."""
    obs = np.full((3, 1), COIN_OBS)
    act = np.full(3, COIN_ACTION)
    nxt = np.array([[COIN_OUTCOMES[0]], [COIN_OUTCOMES[1]], [COIN_IMPOSSIBLE]])
    r = tg.curiosity_batch(gan, obs, act, nxt)
    return {"familiar_a": float(r[0]), "familiar_b": float(r[1]),
            "familiar_mean": float(r[:2].mean()), "impossible": float(r[2])}


def run_coin_probe(train_steps=3000, batch=32, seed=0, hidden=32,
                   progress=None):
    """Train the GAN on coin-flip transitions; report curiosity before/after.

    The headline comparison: curiosity on the two familiar stochastic
    outcomes should fall below its untrained level and stay well under
    the curiosity assigned to a transition that never happens.
    """
    gan = make_toy_gan(seed=seed, hidden=hidden)
    trainer = tg.GanTrainer(gan)
    rng = np.random.default_rng(seed + 1)

    before = coin_curiosities(gan)
    for step in range(train_steps):
        obs, act, nxt = coin_batch(rng, batch)
        report = trainer.step(obs, act, nxt, rng)
        if progress and (step + 1) % 500 == 0:
            progress(step + 1, report, coin_curiosities(gan))
    after = coin_curiosities(gan)
    return {"untrained": before, "trained": after,
            "robust": (after["familiar_mean"] < before["familiar_mean"]
                       and after["familiar_mean"] < 0.5 * after["impossible"])}


def run_tape_training(train_steps=4000, batch=32, seed=0, hidden=32):
    """Train on the deterministic tape; return held-out argmax accuracy."""
    gan = make_toy_gan(seed=seed, hidden=hidden)
    trainer = tg.GanTrainer(gan)
    rng = np.random.default_rng(seed + 1)
    for _ in range(train_steps):
        obs, act, nxt = tape_batch(rng, batch)
        trainer.step(obs, act, nxt, rng)

    test_rng = np.random.default_rng(seed + 2)
    obs, act, nxt = tape_batch(test_rng, 256)
    hits = 0
    for i in range(len(obs)):
        mu, _ = tg.encode(gan, nxt[i])
        gen = tg.generate(gan, obs[i], act[i], mu)
        hits += int(gen.probs[0].argmax() == nxt[i, 0])
    return hits / len(obs)
