"""GAN transition model and the curiosity reward it powers.

A conditional generator proposes possible next observations from
(observation, action, latent z); an encoder maps the true next
observation back into latent space; a discriminator scores transitions
as synthetic. Curiosity is the encoder-latent reconstruction error times
the discriminator score, so transitions the model can explain (including
stochastic ones, via different z) earn no reward.

Training follows the two-branch conditional scheme: an encoded-latent
reconstruction branch with KL regularization, and a prior-latent branch
whose discrete generator gradient uses self-normalized importance
weights from the discriminator, plus latent regression on the generated
probability matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .gridworld import NUM_ACTIONS, VOCAB_SIZE

D_CLAMP = 1e-6  # keeps importance ratios d/(1-d) finite


@dataclass
class GanConfig:
    m: int = 5                 # view size; tiles = m*m
    z_dim: int = 8
    emb: int = 8
    hidden: int = 64
    alpha: float = 1.0         # curiosity scale, >= 0
    k_samples: int = 16        # prior samples per transition for the
                               # importance-weighted generator update
    lambda_kl: float = 0.01
    lambda_latent: float = 0.5
    lambda_recon: float = 1.0
    lr: float = 1e-3
    d_on_generated: bool = False  # score the generated instead of the real
                                  # transition inside the curiosity reward

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.k_samples < 2:
            raise ValueError("k_samples must be >= 2")

    @property
    def n_tiles(self):
        return self.m * self.m


@dataclass
class GeneratedNextObs:
    probs: np.ndarray   # (n_tiles, vocab), rows sum to 1
    sample: np.ndarray  # (n_tiles,) tile indices drawn row-wise


class GanParams:
    """Encoder/generator/discriminator parameter sets plus hyperparameters."""

    def __init__(self, config, seed=0):
        self.config = config
        rng = np.random.default_rng(seed)
        c = config
        flat = c.n_tiles * c.emb

        enc = nn.ParamSet()
        enc.add("emb", nn.embedding_init(rng, VOCAB_SIZE, c.emb))
        nn.add_linear(enc, rng, "fc1", flat, c.hidden)
        nn.add_linear(enc, rng, "fc2", c.hidden, c.hidden)
        nn.add_linear(enc, rng, "fc3", c.hidden, 2 * c.z_dim)

        gen = nn.ParamSet()
        gen.add("emb", nn.embedding_init(rng, VOCAB_SIZE, c.emb))
        gen.add("act_emb", nn.embedding_init(rng, NUM_ACTIONS, c.emb))
        nn.add_linear(gen, rng, "fc1", flat + c.emb + c.z_dim, c.hidden)
        nn.add_linear(gen, rng, "fc2", c.hidden, c.hidden)
        nn.add_linear(gen, rng, "fc3", c.hidden, c.hidden)
        nn.add_linear(gen, rng, "fc4", c.hidden, c.n_tiles * VOCAB_SIZE)

        dis = nn.ParamSet()
        dis.add("emb", nn.embedding_init(rng, VOCAB_SIZE, c.emb))
        dis.add("act_emb", nn.embedding_init(rng, NUM_ACTIONS, c.emb))
        nn.add_linear(dis, rng, "fc1", 2 * flat + c.emb, c.hidden)
        nn.add_linear(dis, rng, "fc2", c.hidden, c.hidden)
        nn.add_linear(dis, rng, "fc3", c.hidden, c.hidden)
        nn.add_linear(dis, rng, "fc4", c.hidden, 1)

        self.encoder = enc
        self.generator = gen
        self.discriminator = dis

    def snapshot(self):
        out = GanParams.__new__(GanParams)
        out.config = self.config
        out.encoder = self.encoder.snapshot()
        out.generator = self.generator.snapshot()
        out.discriminator = self.discriminator.snapshot()
        return out

    def named_sets(self):
        return {"gan_enc": self.encoder, "gan_gen": self.generator,
                "gan_dis": self.discriminator}


def one_hot(indices, vocab=VOCAB_SIZE):
    idx = np.asarray(indices)
    out = np.zeros(idx.shape + (vocab,), dtype=ad.default_dtype())
    np.put_along_axis(out, idx[..., None], 1.0, axis=-1)
    return out


def _obs_indices(obs):
    """Accept an Observation or a flat index array."""
    if hasattr(obs, "flat") and not isinstance(obs, np.ndarray):
        return obs.flat()
    return np.asarray(obs).reshape(-1)


def _soft_embed(params, probs_t, n_tiles):
    """(B, n_tiles, V) probability rows -> flat expected embeddings."""
    b = probs_t.shape[0]
    emb = params["emb"]
    flat = ad.matmul(ad.reshape(probs_t, (b * n_tiles, VOCAB_SIZE)), emb)
    return ad.reshape(flat, (b, n_tiles * emb.shape[1]))


def _hard_embed(params, idx, n_tiles):
    b = idx.shape[0]
    emb_dim = params["emb"].shape[1]
    return ad.reshape(ad.embedding_lookup(params["emb"], idx), (b, n_tiles * emb_dim))


def encode_t(gan, next_probs_t):
    """Batched encoder forward: (B, n_tiles, V) probs -> (mu, logvar) tensors."""
    c = gan.config
    p = gan.encoder
    h = _soft_embed(p, next_probs_t, c.n_tiles)
    h = ad.tanh(nn.linear(p, "fc1", h))
    h = ad.tanh(nn.linear(p, "fc2", h))
    out = nn.linear(p, "fc3", h)
    return out[:, :c.z_dim], out[:, c.z_dim:]


def generator_logp_t(gan, obs_idx, act_idx, z_t):
    """Batched generator forward -> per-tile log-probabilities (B, n_tiles, V)."""
    c = gan.config
    p = gan.generator
    if z_t.shape[-1] != c.z_dim:
        raise ad.ShapeError(f"latent dim {z_t.shape} != {c.z_dim}")
    b = obs_idx.shape[0]
    x = ad.concat([
        _hard_embed(p, obs_idx, c.n_tiles),
        ad.embedding_lookup(p["act_emb"], act_idx),
        z_t,
    ], axis=-1)
    h = ad.tanh(nn.linear(p, "fc1", x))
    h = ad.tanh(nn.linear(p, "fc2", h))
    h = ad.tanh(nn.linear(p, "fc3", h))
    logits = ad.reshape(nn.linear(p, "fc4", h), (b, c.n_tiles, VOCAB_SIZE))
    return ad.log_softmax(logits, axis=-1)


def discriminate_t(gan, obs_idx, act_idx, next_probs_t):
    """Batched discriminator forward -> (B,) scores in (0,1), clamped."""
    c = gan.config
    p = gan.discriminator
    x = ad.concat([
        _hard_embed(p, obs_idx, c.n_tiles),
        ad.embedding_lookup(p["act_emb"], act_idx),
        _soft_embed(p, next_probs_t, c.n_tiles),
    ], axis=-1)
    h = ad.tanh(nn.linear(p, "fc1", x))
    h = ad.tanh(nn.linear(p, "fc2", h))
    h = ad.tanh(nn.linear(p, "fc3", h))
    d = ad.sigmoid(nn.linear(p, "fc4", h))
    return ad.clip(ad.reshape(d, (d.shape[0],)), D_CLAMP, 1.0 - D_CLAMP)


# ------------------------------------------------------------- public ops

def encode(gan, next_obs):
    """Gaussian latent parameters (mu, logvar) for one next observation."""
    probs = one_hot(_obs_indices(next_obs))[None]
    with ad.no_grad():
        mu, logvar = encode_t(gan, Tensor(probs))
    return mu.data[0].copy(), logvar.data[0].copy()


def generate(gan, obs, action, z, rng=None):
    """One possible next observation for (obs, action, z)."""
    obs_idx = _obs_indices(obs)[None]
    act = np.array([int(action)])
    with ad.no_grad():
        logp = generator_logp_t(gan, obs_idx, act, Tensor(np.asarray(z)[None]))
    probs = np.exp(logp.data[0].astype(np.float64))
    probs /= probs.sum(axis=-1, keepdims=True)
    rng = rng or np.random.default_rng(0)
    sample = np.array([rng.choice(VOCAB_SIZE, p=row) for row in probs])
    return GeneratedNextObs(probs=probs, sample=sample)


def discriminate(gan, obs, action, next_obs):
    """Probability the transition is synthetic, in (0,1)."""
    if isinstance(next_obs, np.ndarray) and next_obs.ndim == 2:
        probs = next_obs.astype(ad.default_dtype())[None]
    else:
        probs = one_hot(_obs_indices(next_obs))[None]
    with ad.no_grad():
        d = discriminate_t(gan, _obs_indices(obs)[None],
                           np.array([int(action)]), Tensor(probs))
    return float(d.data[0])


def curiosity_reward(gan, obs, action, next_obs):
    """alpha * ||true next - reconstruction|| * d, always >= 0.

    Deterministic: the reconstruction latent is the encoder mean, and the
    discriminator scores the real transition (unless configured to score
    the reconstruction instead).
    """
    return float(curiosity_batch(gan, _obs_indices(obs)[None],
                                 np.array([int(action)]),
                                 _obs_indices(next_obs)[None])[0])


def curiosity_batch(gan, obs_idx, act_idx, next_idx):
    """Vectorized curiosity over a batch of real transitions -> (B,)."""
    c = gan.config
    next_probs = one_hot(next_idx)
    with ad.no_grad():
        mu, _ = encode_t(gan, Tensor(next_probs))
        logp = generator_logp_t(gan, obs_idx, act_idx, mu)
        gen_probs = np.exp(logp.data.astype(np.float64))
        if c.d_on_generated:
            d = discriminate_t(gan, obs_idx, act_idx,
                               Tensor(gen_probs.astype(ad.default_dtype())))
        else:
            d = discriminate_t(gan, obs_idx, act_idx, Tensor(next_probs))
    diff = next_probs.astype(np.float64) - gen_probs
    recon = np.sqrt((diff ** 2).sum(axis=(1, 2)))
    return c.alpha * recon * d.data.astype(np.float64)


# ------------------------------------------------------------- training

class GanTrainer:
    """Owns the optimizers; one call = one D update + one G/E update."""

    def __init__(self, gan, lr=None):
        self.gan = gan
        lr = lr if lr is not None else gan.config.lr
        ge = nn.ParamSet()
        for k, t in gan.generator.items():
            ge.tensors[f"gen.{k}"] = t
        for k, t in gan.encoder.items():
            ge.tensors[f"enc.{k}"] = t
        self._ge = ge
        self.d_opt = nn.Optimizer(gan.discriminator, algo="adam", lr=lr)
        self.g_opt = nn.Optimizer(ge, algo="adam", lr=lr)

    def step(self, obs_idx, act_idx, next_idx, rng):
        return gan_train_step(self.gan, obs_idx, act_idx, next_idx,
                              self.d_opt, self.g_opt, rng)


def _sample_rows(probs, rng):
    """Vectorized categorical draw per row of (..., V) probabilities."""
    cdf = probs.cumsum(axis=-1)
    u = rng.random(probs.shape[:-1] + (1,))
    return (u > cdf).sum(axis=-1).clip(0, probs.shape[-1] - 1)


def gan_train_step(gan, obs_idx, act_idx, next_idx, d_opt, g_opt, rng):
    """One discriminator and one generator/encoder update on a batch.

    Returns {d_loss, g_mali_loss, kl_loss, latent_loss, recon_loss}.
    """
    c = gan.config
    b = obs_idx.shape[0]
    if b == 0:
        raise ValueError("empty batch")
    k = c.k_samples
    real_probs = one_hot(next_idx)

    # ---- encoded and prior latents / samples (no graph needed yet)
    with ad.no_grad():
        mu0, logvar0 = encode_t(gan, Tensor(real_probs))
        z_enc_np = (mu0.data + np.exp(0.5 * logvar0.data)
                    * rng.standard_normal(mu0.shape).astype(mu0.data.dtype))
        logp_e = generator_logp_t(gan, obs_idx, act_idx, Tensor(z_enc_np))
        fake_enc = _sample_rows(np.exp(logp_e.data.astype(np.float64)), rng)

    z_prior = rng.standard_normal((b * k, c.z_dim)).astype(ad.default_dtype())
    obs_rep = np.repeat(obs_idx, k, axis=0)
    act_rep = np.repeat(act_idx, k, axis=0)
    with ad.no_grad():
        logp_p = generator_logp_t(gan, obs_rep, act_rep, Tensor(z_prior))
        fake_prior = _sample_rows(np.exp(logp_p.data.astype(np.float64)), rng)

    # ---- discriminator update: real labeled real, both sample branches fake
    gan.discriminator.zero_grad()
    d_real = discriminate_t(gan, obs_idx, act_idx, Tensor(real_probs))
    d_fake_e = discriminate_t(gan, obs_idx, act_idx, Tensor(one_hot(fake_enc)))
    d_fake_p = discriminate_t(gan, obs_idx, act_idx,
                              Tensor(one_hot(fake_prior[:b])))
    d_loss = -1.0 * (
        ad.tmean(ad.log(1.0 - d_real))
        + 0.5 * ad.tmean(ad.log(d_fake_e))
        + 0.5 * ad.tmean(ad.log(d_fake_p)))
    ad.backward(d_loss)
    d_opt.step()

    # ---- generator/encoder update
    gan.generator.zero_grad()
    gan.encoder.zero_grad()

    # importance-weighted discrete generator loss over the K prior samples;
    # weight direction follows d as P(synthetic): realism ratio (1-d)/d.
    with ad.no_grad():
        d_k = discriminate_t(gan, obs_rep, act_rep,
                             Tensor(one_hot(fake_prior))).data.astype(np.float64)
    ratios = ((1.0 - d_k) / d_k).reshape(b, k)
    weights = ratios / ratios.sum(axis=1, keepdims=True)
    coeff = (weights - 1.0 / k).astype(ad.default_dtype())

    logp_prior = generator_logp_t(gan, obs_rep, act_rep, Tensor(z_prior))
    sample_logp = ad.tsum(ad.gather_last(logp_prior, fake_prior), axis=-1)
    mali = -1.0 * ad.tmean(
        ad.tsum(ad.reshape(sample_logp, (b, k)) * Tensor(coeff), axis=-1))

    # reconstruction branch through the encoder (reparameterized)
    mu, logvar = encode_t(gan, Tensor(real_probs))
    eps = rng.standard_normal(mu.shape).astype(ad.default_dtype())
    z_enc = mu + ad.exp(0.5 * logvar) * Tensor(eps)
    logp_rec = generator_logp_t(gan, obs_idx, act_idx, z_enc)
    recon = -1.0 * ad.tmean(
        ad.tsum(ad.gather_last(logp_rec, next_idx), axis=-1))

    kl = ad.tmean(0.5 * ad.tsum(
        mu * mu + ad.exp(logvar) - 1.0 - logvar, axis=-1))

    # latent regression on the generated probability matrix (k=0 sample)
    z_lr = z_prior.reshape(b, k, c.z_dim)[:, 0]
    probs_lr = ad.exp(ad.reshape(logp_prior,
                                 (b, k, c.n_tiles, VOCAB_SIZE))[:, 0])
    mu_lr, _ = encode_t(gan, probs_lr)
    latent = ad.tmean(ad.tsum(ad.abs_(mu_lr - Tensor(z_lr)), axis=-1))

    g_loss = (mali + c.lambda_kl * kl + c.lambda_recon * recon
              + c.lambda_latent * latent)
    ad.backward(g_loss)
    g_opt.step()

    report = {
        "d_loss": float(d_loss.data),
        "g_mali_loss": float(mali.data),
        "kl_loss": float(kl.data),
        "latent_loss": float(latent.data),
        "recon_loss": float(recon.data),
    }
    if not all(np.isfinite(v) for v in report.values()):
        raise nn.GradientNaNError(
            f"non-finite GAN loss {report}; batch obs={obs_idx!r} "
            f"act={act_idx!r} next={next_idx!r}")
    return report
