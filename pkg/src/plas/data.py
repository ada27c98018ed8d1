"""Offline transition datasets: containers, minibatch sampling, JSONL files.

A dataset is columnar (state/action/reward/next_state/done arrays) with a
metadata record. Files are one JSON object per transition plus a sidecar
``<name>.meta.json``, chosen for diff-ability at desk scale.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

GENERATOR_KINDS = ("random", "medium", "medium_replay", "medium_expert", "expert", "custom")

DATASET_FORMAT_VERSION = 1


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool


@dataclass
class DatasetMeta:
    env_name: str
    generator_kind: str
    seed: int
    size: int


class TransitionDataset:
    """Immutable-by-convention columnar store of offline transitions."""

    def __init__(self, states, actions, rewards, next_states, dones, meta: DatasetMeta):
        self.states = np.asarray(states, dtype=np.float64)
        self.actions = np.asarray(actions, dtype=np.float64)
        self.rewards = np.asarray(rewards, dtype=np.float64)
        self.next_states = np.asarray(next_states, dtype=np.float64)
        self.dones = np.asarray(dones, dtype=np.float64)
        self.meta = meta
        self._validate()

    def _validate(self) -> None:
        n = self.states.shape[0]
        if n == 0:
            raise ValueError("empty dataset")
        if self.states.ndim != 2 or self.actions.ndim != 2:
            raise ValueError("states/actions must be 2-D")
        if self.next_states.shape != self.states.shape:
            raise ValueError("next_states shape mismatch")
        if not (self.actions.shape[0] == self.rewards.shape[0] == self.dones.shape[0] == n):
            raise ValueError("column lengths differ")
        if np.max(np.abs(self.actions)) > 1.0 + 1e-12:
            raise ValueError("actions outside [-1, 1]")
        if not np.all(np.isfinite(self.rewards)):
            raise ValueError("non-finite rewards")
        if self.meta.size != n:
            raise ValueError(f"metadata size {self.meta.size} != length {n}")
        if self.meta.generator_kind not in GENERATOR_KINDS:
            raise ValueError(f"unknown generator kind {self.meta.generator_kind!r}")

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def state_dim(self) -> int:
        return self.states.shape[1]

    @property
    def action_dim(self) -> int:
        return self.actions.shape[1]

    def transition(self, i: int) -> Transition:
        return Transition(
            state=self.states[i].copy(),
            action=self.actions[i].copy(),
            reward=float(self.rewards[i]),
            next_state=self.next_states[i].copy(),
            done=bool(self.dones[i]),
        )

    def content_hash(self) -> str:
        """SHA-256 over the canonical JSONL serialization (immutability probe)."""
        h = hashlib.sha256()
        for line in _jsonl_lines(self):
            h.update(line.encode("utf-8"))
            h.update(b"\n")
        return h.hexdigest()


def dataset_from_transitions(transitions: list[Transition], meta: DatasetMeta) -> TransitionDataset:
    if not transitions:
        raise ValueError("empty dataset")
    return TransitionDataset(
        states=np.stack([t.state for t in transitions]),
        actions=np.stack([t.action for t in transitions]),
        rewards=np.array([t.reward for t in transitions]),
        next_states=np.stack([t.next_state for t in transitions]),
        dones=np.array([1.0 if t.done else 0.0 for t in transitions]),
        meta=meta,
    )


def concat_datasets(a: TransitionDataset, b: TransitionDataset, meta: DatasetMeta) -> TransitionDataset:
    return TransitionDataset(
        states=np.concatenate([a.states, b.states]),
        actions=np.concatenate([a.actions, b.actions]),
        rewards=np.concatenate([a.rewards, b.rewards]),
        next_states=np.concatenate([a.next_states, b.next_states]),
        dones=np.concatenate([a.dones, b.dones]),
        meta=meta,
    )


# -- sampling ---------------------------------------------------------------

def sample_indices(dataset: TransitionDataset, k: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform-with-replacement index draw; the single sampling core used by
    both the Transition and array minibatch views."""
    if k <= 0:
        raise ValueError("k must be >= 1")
    return rng.integers(0, len(dataset), size=k)


def sample_minibatch(dataset: TransitionDataset, k: int, rng: np.random.Generator) -> list[Transition]:
    if k > len(dataset):
        raise ValueError("k exceeds dataset size")
    return [dataset.transition(int(i)) for i in sample_indices(dataset, k, rng)]


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray

    def __len__(self) -> int:
        return self.states.shape[0]


def sample_batch(dataset: TransitionDataset, k: int, rng: np.random.Generator) -> Batch:
    idx = sample_indices(dataset, k, rng)
    return Batch(
        states=dataset.states[idx],
        actions=dataset.actions[idx],
        rewards=dataset.rewards[idx],
        next_states=dataset.next_states[idx],
        dones=dataset.dones[idx],
    )


# -- files -------------------------------------------------------------------

def _jsonl_lines(dataset: TransitionDataset):
    for i in range(len(dataset)):
        yield json.dumps(
            {
                "s": dataset.states[i].tolist(),
                "a": dataset.actions[i].tolist(),
                "r": float(dataset.rewards[i]),
                "s2": dataset.next_states[i].tolist(),
                "done": bool(dataset.dones[i]),
            }
        )


def meta_path_for(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def save_dataset(path, dataset: TransitionDataset, extra_meta: dict | None = None) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as f:
        for line in _jsonl_lines(dataset):
            f.write(line)
            f.write("\n")
    meta = {"format_version": DATASET_FORMAT_VERSION}
    meta.update(asdict(dataset.meta))
    if extra_meta:
        meta.update(extra_meta)
    meta_path_for(path).write_text(json.dumps(meta, sort_keys=True), encoding="utf-8")


def load_dataset(path) -> TransitionDataset:
    path = Path(path)
    states, actions, rewards, next_states, dones = [], [], [], [], []
    with path.open("r", encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            rec = json.loads(line)
            states.append(rec["s"])
            actions.append(rec["a"])
            rewards.append(rec["r"])
            next_states.append(rec["s2"])
            dones.append(1.0 if rec["done"] else 0.0)
    raw = json.loads(meta_path_for(path).read_text(encoding="utf-8"))
    meta = DatasetMeta(
        env_name=raw["env_name"],
        generator_kind=raw["generator_kind"],
        seed=raw["seed"],
        size=raw["size"],
    )
    return TransitionDataset(states, actions, rewards, next_states, dones, meta)
