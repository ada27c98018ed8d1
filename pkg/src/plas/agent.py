"""Latent-action actor-critic for offline RL.

The policy is deterministic and lives in the latent space of a pretrained
behavior model: a tanh-bounded network picks a latent vector, the frozen
decoder projects it to an action the dataset could plausibly contain, and an
optional bounded residual head nudges the result for controlled
out-of-distribution generalization. Twin critics with soft-clipped targets and
Polyak-averaged target copies complete the loop.

Gradient flow in the actor update runs through the frozen decoder (its input
gradient only, never its parameters), which is the one structurally unusual
piece; everything else is a standard deterministic policy gradient step.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import Batch, TransitionDataset, sample_batch
from .envs import evaluate_policy
from .nets import (
    AdamState,
    Mlp,
    NonFiniteError,
    adam_init,
    adam_step,
    mlp_backward,
    mlp_forward,
    mlp_from_dict,
    mlp_init,
    mlp_to_dict,
    params_hash,
    polyak_update,
)


@dataclass
class LatentActor:
    """Deterministic state -> latent action map, bounded by construction."""

    net: Mlp  # tanh output
    max_latent_action: float = 2.0

    def __post_init__(self):
        if self.max_latent_action <= 0:
            raise ValueError("max_latent_action must be positive")
        if self.net.activations[-1] != "tanh":
            raise ValueError("latent actor output activation must be tanh")

    def latent(self, states: np.ndarray) -> np.ndarray:
        return self.max_latent_action * mlp_forward(self.net, states)


@dataclass
class PerturbationHead:
    """Residual head: (state, decoded action) -> correction in [-eps, eps]^d."""

    net: Mlp  # tanh output
    epsilon: float = 0.0

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.net.activations[-1] != "tanh":
            raise ValueError("perturbation output activation must be tanh")

    def residual(self, states: np.ndarray, decoded: np.ndarray) -> np.ndarray:
        pin = np.concatenate([np.atleast_2d(states), np.atleast_2d(decoded)], axis=1)
        return self.epsilon * mlp_forward(self.net, pin)


@dataclass
class CriticPair:
    """Twin Q networks, their target copies, and the target mixing rule."""

    q1: Mlp
    q2: Mlp
    q1_target: Mlp
    q2_target: Mlp
    lam: float = 1.0
    gamma: float = 0.99

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must be in [0, 1]")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")


def q_values(qnet: Mlp, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
    x = np.concatenate([np.atleast_2d(states), np.atleast_2d(actions)], axis=1)
    return mlp_forward(qnet, x)[:, 0]


def compute_target(critics: CriticPair, rewards, next_states, next_actions, dones) -> np.ndarray:
    """Soft clipped double-Q target: r + gamma*(1-done)*(lam*min + (1-lam)*max)."""
    r = np.atleast_1d(np.asarray(rewards, dtype=np.float64))
    d = np.atleast_1d(np.asarray(dones, dtype=np.float64))
    t1 = q_values(critics.q1_target, next_states, next_actions)
    t2 = q_values(critics.q2_target, next_states, next_actions)
    y = critics.lam * np.minimum(t1, t2) + (1.0 - critics.lam) * np.maximum(t1, t2)
    return r + critics.gamma * (1.0 - d) * y


def critic_step(
    critics: CriticPair,
    adam_q1: AdamState,
    adam_q2: AdamState,
    states: np.ndarray,
    actions: np.ndarray,
    targets: np.ndarray,
) -> float:
    """One Adam step on each critic toward the shared target.

    This is the single critic/optimizer code path used by every learner in the
    repo (latent-action agent, unconstrained baseline, online trainer), so
    performance differences between them cannot come from here.
    """
    x = np.concatenate([states, actions], axis=1)
    B = x.shape[0]
    total = 0.0
    for qnet, adam in ((critics.q1, adam_q1), (critics.q2, adam_q2)):
        pred = mlp_forward(qnet, x)[:, 0]
        err = pred - targets
        loss = float(np.mean(err ** 2))
        if not np.isfinite(loss):
            raise NonFiniteError("non-finite critic loss")
        gout = (2.0 * err / B)[:, None]
        grads, _ = mlp_backward(qnet, x, gout)
        adam_step(qnet, grads, adam)
        total += loss
    return total / 2.0


@dataclass
class PlasAgent:
    actor: LatentActor
    actor_target: LatentActor
    critics: CriticPair
    decoder: object  # FrozenDecoder-like: forward(s, z), backward(s, z, da)
    perturbation: PerturbationHead | None = None
    perturbation_target: PerturbationHead | None = None
    tau: float = 0.005
    actor_objective: str = "q1"  # "q1" | "soft-mix"
    decoder_hash: str = ""

    @property
    def state_dim(self) -> int:
        return self.actor.net.in_dim

    @property
    def action_dim(self) -> int:
        return self.decoder.action_dim

    def policy_fn(self):
        return lambda s: act(self, s)


def _policy_actions(
    agent: PlasAgent, states: np.ndarray, use_target: bool
) -> tuple[np.ndarray, dict]:
    """Batched action computation with the intermediates the backward pass needs."""
    s = np.atleast_2d(np.asarray(states, dtype=np.float64))
    actor = agent.actor_target if use_target else agent.actor
    head = agent.perturbation_target if use_target else agent.perturbation
    u = mlp_forward(actor.net, s)
    z = actor.max_latent_action * u
    decoded = agent.decoder.forward(s, z)
    cache = {"s": s, "z": z, "decoded": decoded}
    if head is None:
        return decoded, cache
    pin = np.concatenate([s, decoded], axis=1)
    raw = mlp_forward(head.net, pin)
    summed = decoded + head.epsilon * raw
    final = np.clip(summed, -1.0, 1.0)
    cache.update({"pin": pin, "raw": raw, "summed": summed})
    return final, cache


def act(agent: PlasAgent, state: np.ndarray, use_target: bool = False) -> np.ndarray:
    """Deterministic action for a single state."""
    a, _ = _policy_actions(agent, np.asarray(state, dtype=np.float64)[None, :], use_target)
    return a[0]


def critic_update(agent: PlasAgent, batch: Batch, adam_q1: AdamState, adam_q2: AdamState,
                  use_target_actor: bool = True) -> float:
    """Algorithm step: decode latent actions for s', form targets, fit critics."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    next_actions, _ = _policy_actions(agent, batch.next_states, use_target=use_target_actor)
    targets = compute_target(agent.critics, batch.rewards, batch.next_states,
                             next_actions, batch.dones)
    return critic_step(agent.critics, adam_q1, adam_q2, batch.states, batch.actions, targets)


def actor_update(
    agent: PlasAgent,
    states: np.ndarray,
    adam_actor: AdamState,
    adam_pert: AdamState | None = None,
) -> float:
    """Ascend the critic through decoder and (optional) residual head.

    Returns the batch-mean Q value before the step. Decoder gradients are
    computed for the chain rule but its parameters are never touched.
    """
    s = np.atleast_2d(np.asarray(states, dtype=np.float64))
    B = s.shape[0]
    actions, cache = _policy_actions(agent, s, use_target=False)

    qin = np.concatenate([s, actions], axis=1)
    q1 = mlp_forward(agent.critics.q1, qin)[:, 0]
    if agent.actor_objective == "q1":
        mean_q = float(np.mean(q1))
        gq = np.full((B, 1), -1.0 / B)
        _, d_qin = mlp_backward(agent.critics.q1, qin, gq)
        da = d_qin[:, agent.state_dim:]
    elif agent.actor_objective == "soft-mix":
        q2 = mlp_forward(agent.critics.q2, qin)[:, 0]
        lam = agent.critics.lam
        mean_q = float(np.mean(lam * np.minimum(q1, q2) + (1 - lam) * np.maximum(q1, q2)))
        take_q1_min = (q1 <= q2)[:, None]
        g1 = np.where(take_q1_min, lam, 1 - lam) * (-1.0 / B)
        g2 = np.where(take_q1_min, 1 - lam, lam) * (-1.0 / B)
        _, d1 = mlp_backward(agent.critics.q1, qin, g1)
        _, d2 = mlp_backward(agent.critics.q2, qin, g2)
        da = (d1 + d2)[:, agent.state_dim:]
    else:
        raise ValueError(f"unknown actor objective {agent.actor_objective!r}")

    if not np.all(np.isfinite(da)):
        raise NonFiniteError("non-finite actor gradient")

    pert_grads = None
    if agent.perturbation is not None:
        head = agent.perturbation
        inside = (np.abs(cache["summed"]) < 1.0).astype(np.float64)
        d_sum = da * inside
        pert_grads, d_pin = mlp_backward(head.net, cache["pin"], d_sum * head.epsilon)
        d_decoded = d_sum + d_pin[:, agent.state_dim:]
    else:
        d_decoded = da

    dz = agent.decoder.backward(s, cache["z"], d_decoded)
    du = agent.actor.max_latent_action * dz
    actor_grads, _ = mlp_backward(agent.actor.net, s, du)

    adam_step(agent.actor.net, actor_grads, adam_actor)
    if pert_grads is not None and adam_pert is not None:
        adam_step(agent.perturbation.net, pert_grads, adam_pert)
    return mean_q


@dataclass
class PlasTrainConfig:
    steps: int = 50_000
    batch_size: int = 100
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    gamma: float = 0.99
    tau: float = 0.005
    lam: float = 1.0
    max_latent_action: float = 2.0
    perturbation_epsilon: float = 0.0  # 0 disables the residual head
    hidden_sizes: tuple[int, ...] = (64, 64)
    actor_objective: str = "q1"
    use_target_actor_for_decode: bool = True
    eval_interval: int = 2_500
    eval_episodes: int = 10
    log_every: int = 500


@dataclass
class LogRecord:
    step: int
    critic_loss: float
    mean_q: float
    eval_return_mean: float | None = None
    eval_return_std: float | None = None


def write_log_jsonl(path, records: list[LogRecord]) -> None:
    with Path(path).open("w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(asdict(r)))
            f.write("\n")


def plas_agent_init(
    state_dim: int,
    decoder,
    config: PlasTrainConfig,
    rng: np.random.Generator,
) -> PlasAgent:
    hidden = list(config.hidden_sizes)
    latent_dim = decoder.latent_dim
    action_dim = decoder.action_dim
    actor_net = mlp_init([state_dim] + hidden + [latent_dim], rng, output_activation="tanh")
    actor = LatentActor(actor_net, config.max_latent_action)
    actor_target = LatentActor(actor_net.copy(), config.max_latent_action)
    q1 = mlp_init([state_dim + action_dim] + hidden + [1], rng)
    q2 = mlp_init([state_dim + action_dim] + hidden + [1], rng)
    critics = CriticPair(q1, q2, q1.copy(), q2.copy(), lam=config.lam, gamma=config.gamma)
    pert = pert_target = None
    if config.perturbation_epsilon > 0.0:
        pnet = mlp_init([state_dim + action_dim] + hidden + [action_dim], rng,
                        output_activation="tanh")
        pert = PerturbationHead(pnet, config.perturbation_epsilon)
        pert_target = PerturbationHead(pnet.copy(), config.perturbation_epsilon)
    return PlasAgent(
        actor=actor,
        actor_target=actor_target,
        critics=critics,
        decoder=decoder,
        perturbation=pert,
        perturbation_target=pert_target,
        tau=config.tau,
        actor_objective=config.actor_objective,
        decoder_hash=decoder.checkpoint_hash(),
    )


def train_plas(
    dataset: TransitionDataset,
    decoder,
    config: PlasTrainConfig,
    rng: np.random.Generator,
    env=None,
) -> tuple[PlasAgent, list[LogRecord]]:
    """Policy-training phase over a frozen behavior decoder.

    Per iteration: sample a minibatch, produce next-state latent actions with
    the target actor, decode them, form the soft clipped double-Q target, take
    one Adam step per critic and one on the actor (plus residual head when
    enabled), then Polyak-update every target copy. Evaluation rollouts run
    whenever ``eval_interval`` divides the step and an env is provided.
    """
    agent = plas_agent_init(dataset.state_dim, decoder, config, rng)
    adam_q1 = adam_init(agent.critics.q1, config.critic_lr)
    adam_q2 = adam_init(agent.critics.q2, config.critic_lr)
    adam_actor = adam_init(agent.actor.net, config.actor_lr)
    adam_pert = (
        adam_init(agent.perturbation.net, config.actor_lr)
        if agent.perturbation is not None
        else None
    )
    decoder_hash_before = decoder.checkpoint_hash()

    log: list[LogRecord] = []
    interval_losses: list[float] = []
    interval_qs: list[float] = []
    for step in range(1, config.steps + 1):
        batch = sample_batch(dataset, config.batch_size, rng)
        try:
            loss = critic_update(agent, batch, adam_q1, adam_q2,
                                 use_target_actor=config.use_target_actor_for_decode)
            mean_q = actor_update(agent, batch.states, adam_actor, adam_pert)
        except NonFiniteError as e:
            raise NonFiniteError(f"{e} (training step {step})") from e
        interval_losses.append(loss)
        interval_qs.append(mean_q)

        agent.critics.q1_target = polyak_update(agent.critics.q1_target, agent.critics.q1, config.tau)
        agent.critics.q2_target = polyak_update(agent.critics.q2_target, agent.critics.q2, config.tau)
        agent.actor_target.net = polyak_update(agent.actor_target.net, agent.actor.net, config.tau)
        if agent.perturbation is not None:
            agent.perturbation_target.net = polyak_update(
                agent.perturbation_target.net, agent.perturbation.net, config.tau
            )

        if step % config.log_every == 0 or step == config.steps:
            rec = LogRecord(step, float(np.mean(interval_losses)), float(np.mean(interval_qs)))
            interval_losses, interval_qs = [], []
            if env is not None and (step % config.eval_interval == 0 or step == config.steps):
                eval_rng = np.random.default_rng(rng.integers(2 ** 63))
                mean, std = evaluate_policy(
                    env, lambda s: act(agent, s), config.eval_episodes, eval_rng
                )
                rec.eval_return_mean = mean
                rec.eval_return_std = std
            log.append(rec)

    if decoder.checkpoint_hash() != decoder_hash_before:
        raise RuntimeError("frozen decoder was mutated during policy training")
    return agent, log


# -- checkpoints --------------------------------------------------------------

def agent_to_dict(agent: PlasAgent, config: PlasTrainConfig | None = None) -> dict:
    doc = {
        "actor": mlp_to_dict(agent.actor.net),
        "actor_target": mlp_to_dict(agent.actor_target.net),
        "max_latent_action": agent.actor.max_latent_action,
        "q1": mlp_to_dict(agent.critics.q1),
        "q2": mlp_to_dict(agent.critics.q2),
        "q1_target": mlp_to_dict(agent.critics.q1_target),
        "q2_target": mlp_to_dict(agent.critics.q2_target),
        "lam": agent.critics.lam,
        "gamma": agent.critics.gamma,
        "tau": agent.tau,
        "actor_objective": agent.actor_objective,
        "decoder_hash": agent.decoder_hash,
        "perturbation": None,
        "perturbation_target": None,
        "perturbation_epsilon": 0.0,
    }
    if agent.perturbation is not None:
        doc["perturbation"] = mlp_to_dict(agent.perturbation.net)
        doc["perturbation_target"] = mlp_to_dict(agent.perturbation_target.net)
        doc["perturbation_epsilon"] = agent.perturbation.epsilon
    if config is not None:
        doc["config"] = asdict(config)
    return doc


def agent_from_dict(doc: dict, decoder) -> PlasAgent:
    if doc["decoder_hash"] and decoder.checkpoint_hash() != doc["decoder_hash"]:
        raise ValueError("checkpoint was trained against a different decoder")
    sigma = doc["max_latent_action"]
    pert = pert_target = None
    if doc.get("perturbation") is not None:
        eps = doc["perturbation_epsilon"]
        pert = PerturbationHead(mlp_from_dict(doc["perturbation"]), eps)
        pert_target = PerturbationHead(mlp_from_dict(doc["perturbation_target"]), eps)
    return PlasAgent(
        actor=LatentActor(mlp_from_dict(doc["actor"]), sigma),
        actor_target=LatentActor(mlp_from_dict(doc["actor_target"]), sigma),
        critics=CriticPair(
            mlp_from_dict(doc["q1"]),
            mlp_from_dict(doc["q2"]),
            mlp_from_dict(doc["q1_target"]),
            mlp_from_dict(doc["q2_target"]),
            lam=doc["lam"],
            gamma=doc["gamma"],
        ),
        decoder=decoder,
        perturbation=pert,
        perturbation_target=pert_target,
        tau=doc["tau"],
        actor_objective=doc["actor_objective"],
        decoder_hash=doc["decoder_hash"],
    )


def agent_hash(agent: PlasAgent) -> str:
    nets = [agent.actor.net, agent.critics.q1, agent.critics.q2]
    if agent.perturbation is not None:
        nets.append(agent.perturbation.net)
    return params_hash(*nets)
