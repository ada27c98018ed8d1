"""Conditional VAE over actions: the behavior model for offline training.

The encoder maps (state, action) to the mean and log-std of a diagonal
Gaussian over latents; the decoder maps (state, latent) back to an action
through a tanh output, so decoded actions always land in [-1, 1]^d. The prior
over latents is a standard normal, independent of state. Training minimizes
reconstruction MSE plus a weighted KL to that prior; once trained the model is
frozen and only its decoder is consulted by the policy.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import TransitionDataset, sample_indices
from .nets import (
    Gradients,
    Mlp,
    NonFiniteError,
    ShapeError,
    adam_init,
    adam_step,
    mlp_backward,
    mlp_forward,
    mlp_from_dict,
    mlp_init,
    mlp_to_dict,
    params_hash,
)

LOG_STD_MIN_DEFAULT = -4.0
LOG_STD_MAX_DEFAULT = 15.0


@dataclass
class BehaviorCvae:
    encoder: Mlp  # (s, a) -> (mu, log_std), width 2*latent_dim
    decoder: Mlp  # (s, z) -> action, tanh output
    state_dim: int
    action_dim: int
    latent_dim: int
    log_std_min: float = LOG_STD_MIN_DEFAULT
    log_std_max: float = LOG_STD_MAX_DEFAULT

    def __post_init__(self):
        if self.encoder.out_dim != 2 * self.latent_dim:
            raise ShapeError("encoder output must be 2*latent_dim")
        if self.encoder.in_dim != self.state_dim + self.action_dim:
            raise ShapeError("encoder input must be state_dim + action_dim")
        if self.decoder.out_dim != self.action_dim:
            raise ShapeError("decoder output must be action_dim")
        if self.decoder.in_dim != self.state_dim + self.latent_dim:
            raise ShapeError("decoder input must be state_dim + latent_dim")


@dataclass
class ElboReport:
    reconstruction_loss: float
    kl_loss: float
    kl_weight: float
    step: int = 0

    @property
    def total(self) -> float:
        return self.reconstruction_loss + self.kl_weight * self.kl_loss


@dataclass
class CvaeTrainConfig:
    steps: int = 20_000
    batch_size: int = 100
    learning_rate: float = 1e-3
    kl_weight: float = 0.5
    latent_dim: int | None = None  # default 2 * action_dim
    hidden_sizes: tuple[int, ...] = (128, 128)
    log_every: int = 500
    log_std_min: float = LOG_STD_MIN_DEFAULT
    log_std_max: float = LOG_STD_MAX_DEFAULT


def cvae_init(
    state_dim: int,
    action_dim: int,
    rng: np.random.Generator,
    latent_dim: int | None = None,
    hidden_sizes: tuple[int, ...] = (128, 128),
    log_std_min: float = LOG_STD_MIN_DEFAULT,
    log_std_max: float = LOG_STD_MAX_DEFAULT,
) -> BehaviorCvae:
    latent_dim = 2 * action_dim if latent_dim is None else latent_dim
    hidden = list(hidden_sizes)
    encoder = mlp_init([state_dim + action_dim] + hidden + [2 * latent_dim], rng)
    decoder = mlp_init([state_dim + latent_dim] + hidden + [action_dim], rng,
                       output_activation="tanh")
    return BehaviorCvae(encoder, decoder, state_dim, action_dim, latent_dim,
                        log_std_min, log_std_max)


def _rows(x, dim, what):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise ShapeError(f"{what}: expected width {dim}")
    return x, single


def encode(cvae: BehaviorCvae, state, action):
    """Posterior parameters (mu, log_std); log_std is clamped before use."""
    s, single = _rows(state, cvae.state_dim, "state")
    a, _ = _rows(action, cvae.action_dim, "action")
    if s.shape[0] != a.shape[0]:
        raise ShapeError("state/action batch mismatch")
    out = mlp_forward(cvae.encoder, np.concatenate([s, a], axis=1))
    mu = out[:, : cvae.latent_dim]
    log_std = np.clip(out[:, cvae.latent_dim :], cvae.log_std_min, cvae.log_std_max)
    if single:
        return mu[0], log_std[0]
    return mu, log_std


def reparameterize(mu, log_std, noise):
    """z = mu + exp(log_std) * noise, elementwise."""
    mu = np.asarray(mu, dtype=np.float64)
    log_std = np.asarray(log_std, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if mu.shape != log_std.shape or mu.shape != noise.shape:
        raise ShapeError("mu/log_std/noise shapes differ")
    return mu + np.exp(log_std) * noise


def decode(cvae: BehaviorCvae, state, z):
    """Deterministic decoder output; tanh keeps actions in [-1, 1]^d."""
    s, single = _rows(state, cvae.state_dim, "state")
    zz, _ = _rows(z, cvae.latent_dim, "z")
    if s.shape[0] != zz.shape[0]:
        raise ShapeError("state/z batch mismatch")
    a = mlp_forward(cvae.decoder, np.concatenate([s, zz], axis=1))
    return a[0] if single else a


def kl_to_standard_normal(mu, log_std):
    """KL(N(mu, diag exp(2*log_std)) || N(0, I)), closed form, >= 0.

    For 2-D inputs returns one value per row.
    """
    mu = np.asarray(mu, dtype=np.float64)
    log_std = np.asarray(log_std, dtype=np.float64)
    if mu.shape != log_std.shape:
        raise ShapeError("mu/log_std shapes differ")
    per_dim = 0.5 * (mu ** 2 + np.exp(2.0 * log_std) - 1.0 - 2.0 * log_std)
    return per_dim.sum(axis=-1)


def elbo_loss_and_grads(
    cvae: BehaviorCvae,
    states: np.ndarray,
    actions: np.ndarray,
    noise: np.ndarray,
    kl_weight: float,
) -> tuple[ElboReport, Gradients, Gradients]:
    """One minibatch of the CVAE objective with its exact gradients.

    Deterministic given `noise` (one standard-normal draw per datum), which is
    what makes the whole composition checkable by finite differences. The
    reconstruction term is the mean squared error over every action entry in
    the batch; the KL term is averaged over the batch.
    """
    s, _ = _rows(states, cvae.state_dim, "states")
    a, _ = _rows(actions, cvae.action_dim, "actions")
    B = s.shape[0]

    enc_in = np.concatenate([s, a], axis=1)
    enc_out = mlp_forward(cvae.encoder, enc_in)
    mu = enc_out[:, : cvae.latent_dim]
    raw_log_std = enc_out[:, cvae.latent_dim :]
    log_std = np.clip(raw_log_std, cvae.log_std_min, cvae.log_std_max)
    std = np.exp(log_std)
    z = mu + std * noise

    dec_in = np.concatenate([s, z], axis=1)
    recon = mlp_forward(cvae.decoder, dec_in)
    diff = recon - a
    recon_loss = float(np.mean(diff ** 2))
    kl = kl_to_standard_normal(mu, log_std)
    kl_loss = float(np.mean(kl))

    # reconstruction path
    d_recon = 2.0 * diff / diff.size
    dec_grads, d_dec_in = mlp_backward(cvae.decoder, dec_in, d_recon)
    dz = d_dec_in[:, cvae.state_dim :]

    # z = mu + exp(log_std)*noise, plus the KL term's direct dependence
    g_mu = dz + kl_weight * mu / B
    g_log_std = dz * std * noise + kl_weight * (np.exp(2.0 * log_std) - 1.0) / B
    # clamp: zero gradient where the raw output sits outside the bounds
    inside = (raw_log_std > cvae.log_std_min) & (raw_log_std < cvae.log_std_max)
    g_log_std = np.where(inside, g_log_std, 0.0)

    enc_grads, _ = mlp_backward(cvae.encoder, enc_in, np.concatenate([g_mu, g_log_std], axis=1))
    report = ElboReport(recon_loss, kl_loss, kl_weight)
    return report, enc_grads, dec_grads


def train_cvae(
    dataset: TransitionDataset,
    config: CvaeTrainConfig,
    rng: np.random.Generator,
) -> tuple[BehaviorCvae, list[ElboReport]]:
    """Fit the behavior model on the static dataset; returns it frozen.

    Raises NonFiniteError with the failing step index if the loss ever leaves
    the reals.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    cvae = cvae_init(
        dataset.state_dim,
        dataset.action_dim,
        rng,
        latent_dim=config.latent_dim,
        hidden_sizes=tuple(config.hidden_sizes),
        log_std_min=config.log_std_min,
        log_std_max=config.log_std_max,
    )
    enc_adam = adam_init(cvae.encoder, config.learning_rate)
    dec_adam = adam_init(cvae.decoder, config.learning_rate)

    reports: list[ElboReport] = []
    for step in range(1, config.steps + 1):
        idx = sample_indices(dataset, config.batch_size, rng)
        s = dataset.states[idx]
        a = dataset.actions[idx]
        noise = rng.standard_normal((len(idx), cvae.latent_dim))
        report, enc_grads, dec_grads = elbo_loss_and_grads(cvae, s, a, noise, config.kl_weight)
        if not np.isfinite(report.total):
            raise NonFiniteError(
                f"CVAE loss non-finite at step {step}: "
                f"recon={report.reconstruction_loss} kl={report.kl_loss}"
            )
        adam_step(cvae.encoder, enc_grads, enc_adam)
        adam_step(cvae.decoder, dec_grads, dec_adam)
        if step % config.log_every == 0 or step == config.steps:
            report.step = step
            reports.append(report)
    return cvae, reports


class FrozenDecoder:
    """Read-only view of a trained decoder for the policy side.

    forward/backward operate on batches; backward never returns parameter
    gradients, so the decoder cannot be updated through this interface.
    """

    def __init__(self, cvae: BehaviorCvae):
        self._cvae = cvae
        self.state_dim = cvae.state_dim
        self.action_dim = cvae.action_dim
        self.latent_dim = cvae.latent_dim

    def forward(self, states: np.ndarray, z: np.ndarray) -> np.ndarray:
        return decode(self._cvae, states, z)

    def backward(self, states: np.ndarray, z: np.ndarray, action_grad: np.ndarray) -> np.ndarray:
        """dL/dz for L implied by action_grad; decoder parameters untouched."""
        dec_in = np.concatenate([np.atleast_2d(states), np.atleast_2d(z)], axis=1)
        _, d_in = mlp_backward(self._cvae.decoder, dec_in, np.atleast_2d(action_grad))
        return d_in[:, self.state_dim:]

    def checkpoint_hash(self) -> str:
        return params_hash(self._cvae.decoder)


# -- checkpoints --------------------------------------------------------------

def cvae_to_dict(cvae: BehaviorCvae) -> dict:
    return {
        "encoder": mlp_to_dict(cvae.encoder),
        "decoder": mlp_to_dict(cvae.decoder),
        "state_dim": cvae.state_dim,
        "action_dim": cvae.action_dim,
        "latent_dim": cvae.latent_dim,
        "log_std_min": cvae.log_std_min,
        "log_std_max": cvae.log_std_max,
    }


def cvae_from_dict(d: dict) -> BehaviorCvae:
    return BehaviorCvae(
        encoder=mlp_from_dict(d["encoder"]),
        decoder=mlp_from_dict(d["decoder"]),
        state_dim=d["state_dim"],
        action_dim=d["action_dim"],
        latent_dim=d["latent_dim"],
        log_std_min=d["log_std_min"],
        log_std_max=d["log_std_max"],
    )


def cvae_hash(cvae: BehaviorCvae) -> str:
    return params_hash(cvae.encoder, cvae.decoder)
