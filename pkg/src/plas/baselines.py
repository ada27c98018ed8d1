"""Comparison policies: behavior cloning and the unconstrained off-policy learner.

The unconstrained learner is the minimal ablation of the latent-action agent:
identical twin critics, identical optimizer code path (``agent.critic_step``),
identical target logic; only the actor differs, mapping states straight to
actions with no behavior-model constraint. It deliberately omits target-policy
smoothing noise so the two learners differ in the actor parameterization and
nothing else. Applied to a fixed dataset it is the classic recipe for Q-value
blow-up, which is exactly why it is here.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .agent import CriticPair, LogRecord, compute_target, critic_step
from .data import TransitionDataset, sample_batch, sample_indices
from .envs import evaluate_policy
from .nets import (
    AdamState,
    Mlp,
    NonFiniteError,
    adam_init,
    adam_step,
    mlp_backward,
    mlp_forward,
    mlp_init,
    polyak_update,
)

LOSS_REPORT_CAP = 1e12


@dataclass
class BcPolicy:
    net: Mlp  # state -> action, tanh output

    def action(self, state: np.ndarray) -> np.ndarray:
        return mlp_forward(self.net, np.asarray(state, dtype=np.float64))

    def policy_fn(self):
        return lambda s: self.action(s)


@dataclass
class BcTrainConfig:
    steps: int = 10_000
    batch_size: int = 100
    learning_rate: float = 1e-3
    hidden_sizes: tuple[int, ...] = (64, 64)
    log_every: int = 500


def train_bc(dataset: TransitionDataset, config: BcTrainConfig,
             rng: np.random.Generator) -> tuple[BcPolicy, list[tuple[int, float]]]:
    """Minimize MSE between net(s) and the dataset action over minibatches."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    net = mlp_init([dataset.state_dim] + list(config.hidden_sizes) + [dataset.action_dim],
                   rng, output_activation="tanh")
    adam = adam_init(net, config.learning_rate)
    curve: list[tuple[int, float]] = []
    for step in range(1, config.steps + 1):
        idx = sample_indices(dataset, config.batch_size, rng)
        s, a = dataset.states[idx], dataset.actions[idx]
        pred = mlp_forward(net, s)
        err = pred - a
        loss = float(np.mean(err ** 2))
        if not np.isfinite(loss):
            raise NonFiniteError(f"BC loss non-finite at step {step}")
        grads, _ = mlp_backward(net, s, 2.0 * err / err.size)
        adam_step(net, grads, adam)
        if step % config.log_every == 0 or step == config.steps:
            curve.append((step, loss))
    return BcPolicy(net), curve


@dataclass
class UnconstrainedAgent:
    actor: Mlp  # state -> action, tanh output
    actor_target: Mlp
    critics: CriticPair

    def action(self, state: np.ndarray) -> np.ndarray:
        return mlp_forward(self.actor, np.asarray(state, dtype=np.float64))

    def policy_fn(self):
        return lambda s: self.action(s)


@dataclass
class UnconstrainedTrainConfig:
    steps: int = 20_000
    batch_size: int = 100
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    gamma: float = 0.99
    tau: float = 0.005
    lam: float = 1.0
    hidden_sizes: tuple[int, ...] = (64, 64)
    eval_interval: int = 2_500
    eval_episodes: int = 10
    log_every: int = 500


def unconstrained_agent_init(state_dim: int, action_dim: int,
                             config: UnconstrainedTrainConfig,
                             rng: np.random.Generator) -> UnconstrainedAgent:
    hidden = list(config.hidden_sizes)
    actor = mlp_init([state_dim] + hidden + [action_dim], rng, output_activation="tanh")
    q1 = mlp_init([state_dim + action_dim] + hidden + [1], rng)
    q2 = mlp_init([state_dim + action_dim] + hidden + [1], rng)
    critics = CriticPair(q1, q2, q1.copy(), q2.copy(), lam=config.lam, gamma=config.gamma)
    return UnconstrainedAgent(actor, actor.copy(), critics)


def direct_actor_update(agent: UnconstrainedAgent, states: np.ndarray,
                        adam_actor: AdamState) -> float:
    """Deterministic policy gradient straight through the actor (no decoder)."""
    s = np.atleast_2d(states)
    B = s.shape[0]
    actions = mlp_forward(agent.actor, s)
    x = np.concatenate([s, actions], axis=1)
    q = mlp_forward(agent.critics.q1, x)[:, 0]
    mean_q = float(np.mean(q))
    _, d_x = mlp_backward(agent.critics.q1, x, np.full((B, 1), -1.0 / B))
    da = d_x[:, s.shape[1]:]
    if not np.all(np.isfinite(da)):
        raise NonFiniteError("non-finite actor gradient")
    grads, _ = mlp_backward(agent.actor, s, da)
    adam_step(agent.actor, grads, adam_actor)
    return mean_q


def unconstrained_update(agent: UnconstrainedAgent, batch, adam_q1, adam_q2,
                         adam_actor) -> tuple[float, float]:
    """One critic + actor step; shared with the online trainer."""
    next_actions = mlp_forward(agent.actor_target, batch.next_states)
    targets = compute_target(agent.critics, batch.rewards, batch.next_states,
                             next_actions, batch.dones)
    loss = critic_step(agent.critics, adam_q1, adam_q2, batch.states, batch.actions, targets)
    mean_q = direct_actor_update(agent, batch.states, adam_actor)
    return loss, mean_q


def train_unconstrained(
    dataset: TransitionDataset,
    config: UnconstrainedTrainConfig,
    rng: np.random.Generator,
    env=None,
) -> tuple[UnconstrainedAgent, list[LogRecord]]:
    """Run the off-policy learner on the fixed buffer, no constraint at all.

    Non-finite losses late in training are expected behavior for this
    baseline, not a bug: they are logged (capped at ``LOSS_REPORT_CAP``), the
    offending update is skipped, and the run continues.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    agent = unconstrained_agent_init(dataset.state_dim, dataset.action_dim, config, rng)
    adam_q1 = adam_init(agent.critics.q1, config.critic_lr)
    adam_q2 = adam_init(agent.critics.q2, config.critic_lr)
    adam_actor = adam_init(agent.actor, config.actor_lr)

    log: list[LogRecord] = []
    losses: list[float] = []
    qs: list[float] = []
    for step in range(1, config.steps + 1):
        batch = sample_batch(dataset, config.batch_size, rng)
        try:
            loss, mean_q = unconstrained_update(agent, batch, adam_q1, adam_q2, adam_actor)
        except NonFiniteError:
            loss, mean_q = LOSS_REPORT_CAP, LOSS_REPORT_CAP
        losses.append(min(loss, LOSS_REPORT_CAP))
        qs.append(float(np.clip(mean_q, -LOSS_REPORT_CAP, LOSS_REPORT_CAP)))

        agent.critics.q1_target = polyak_update(agent.critics.q1_target, agent.critics.q1, config.tau)
        agent.critics.q2_target = polyak_update(agent.critics.q2_target, agent.critics.q2, config.tau)
        agent.actor_target = polyak_update(agent.actor_target, agent.actor, config.tau)

        if step % config.log_every == 0 or step == config.steps:
            rec = LogRecord(step, float(np.mean(losses)), float(np.mean(qs)))
            losses, qs = [], []
            if env is not None and (step % config.eval_interval == 0 or step == config.steps):
                eval_rng = np.random.default_rng(rng.integers(2 ** 63))
                mean, std = evaluate_policy(env, agent.policy_fn(), config.eval_episodes, eval_rng)
                rec.eval_return_mean = mean
                rec.eval_return_std = std
            log.append(rec)
    return agent, log


def project_to_dataset_actions(agent: UnconstrainedAgent, dataset: TransitionDataset,
                               states: np.ndarray, k: int = 10) -> np.ndarray:
    """Diagnostic mode: replace each proposed action with the nearest dataset
    action among the k nearest dataset states. Confirms the out-of-distribution
    mechanism by construction."""
    from scipy.spatial.distance import cdist

    s = np.atleast_2d(states)
    proposed = mlp_forward(agent.actor, s)
    state_d = cdist(s, dataset.states)
    out = np.empty_like(proposed)
    for i in range(s.shape[0]):
        nearest = np.argsort(state_d[i])[:k]
        cand = dataset.actions[nearest]
        j = np.argmin(np.linalg.norm(cand - proposed[i], axis=1))
        out[i] = cand[j]
    return out
