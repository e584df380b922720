"""Per-UE DQN agent: epsilon-greedy policy, FIFO replay, double-DQN targets.

Each agent owns its replay memory, RNG and two weight sets (evaluation and
target network). Agents are independent between federated averaging
barriers; the averaging code overwrites both weight sets.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import mlp
from .env import Action
from .mlp import MlpSpec, Weights


class Transition(NamedTuple):
    obs: np.ndarray
    action: int
    reward: float
    next_obs: np.ndarray


@dataclass(frozen=True)
class TrainConfig:
    discount: float = 0.95
    batch_size: int = 32
    lr: float = 1e-4
    target_sync_period: int = 100
    replay_capacity: int = 50_000
    eps_start: float = 1.0
    eps_final: float = 0.02
    anneal_epochs: int = 4000
    momentum: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.discount < 1.0):
            raise ValueError("discount must lie in [0, 1)")
        if self.batch_size < 1 or self.replay_capacity < self.batch_size:
            raise ValueError("replay capacity must hold at least one batch")
        if self.lr <= 0 or self.target_sync_period < 1 or self.anneal_epochs < 1:
            raise ValueError("lr, sync period and anneal length must be positive")

    def epsilon_for_epoch(self, epoch: int) -> float:
        """Linear anneal eps_start -> eps_final over anneal_epochs, then flat."""
        frac = min(epoch / self.anneal_epochs, 1.0)
        return max(self.eps_final, self.eps_start - (self.eps_start - self.eps_final) * frac)


class ReplayMemory:
    """Fixed-capacity FIFO of transitions backed by preallocated arrays."""

    def __init__(self, capacity: int, obs_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._obs = np.zeros((capacity, obs_dim), dtype=np.float32)
        self._actions = np.zeros(capacity, dtype=np.int64)
        self._rewards = np.zeros(capacity, dtype=np.float32)
        self._next_obs = np.zeros((capacity, obs_dim), dtype=np.float32)
        self._next_slot = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def push(self, tr: Transition) -> None:
        if tr.reward < 0:
            raise ValueError("rewards are non-negative in this MDP")
        i = self._next_slot
        self._obs[i] = tr.obs
        self._actions[i] = tr.action
        self._rewards[i] = tr.reward
        self._next_obs[i] = tr.next_obs
        self._next_slot = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def _order(self) -> np.ndarray:
        """Indices of retained transitions, oldest first."""
        if self._size < self.capacity:
            return np.arange(self._size)
        return (np.arange(self.capacity) + self._next_slot) % self.capacity

    def items(self) -> list[Transition]:
        return [
            Transition(self._obs[i].copy(), int(self._actions[i]),
                       float(self._rewards[i]), self._next_obs[i].copy())
            for i in self._order()
        ]

    def sample(self, batch_size: int, rng: np.random.Generator):
        if batch_size > self._size:
            raise ValueError("not enough stored transitions to sample a batch")
        idx = rng.integers(0, self._size, size=batch_size)
        return (self._obs[idx], self._actions[idx], self._rewards[idx], self._next_obs[idx])


def compute_target(rewards: np.ndarray, next_obs: np.ndarray, eval_weights: Weights,
                   target_weights: Weights, discount: float) -> np.ndarray:
    """Double-DQN targets: r + gamma * Q_target(o', argmax_a Q_eval(o', a)).

    The evaluation network picks the action, the target network scores it.
    """
    q_eval_next = mlp.forward(eval_weights, next_obs)
    best = np.argmax(q_eval_next, axis=1)
    q_target_next = mlp.forward(target_weights, next_obs)
    rows = np.arange(len(rewards))
    return rewards + discount * q_target_next[rows, best]


def select_action(q_values: np.ndarray, epsilon: float, rng: np.random.Generator) -> Action:
    """Epsilon-greedy over a Q row; greedy ties break to the lowest index."""
    if not (0.0 <= epsilon <= 1.0):
        raise ValueError("epsilon must lie in [0, 1]")
    if epsilon > 0.0 and rng.random() < epsilon:
        return Action(int(rng.integers(len(q_values))))
    return Action(int(np.argmax(q_values)))


class DqnAgent:
    """One UE's learner: evaluation/target networks plus replay memory."""

    def __init__(self, spec: MlpSpec, cfg: TrainConfig, seed: int):
        self.spec = spec
        self.cfg = cfg
        self.rng = np.random.default_rng(seed)
        self.eval_weights = mlp.init_weights(spec, self.rng)
        self.target_weights = mlp.copy_weights(self.eval_weights)
        self.memory = ReplayMemory(cfg.replay_capacity, spec.input_dim)
        self.train_steps = 0
        self._velocity = None

    def select_action(self, obs: np.ndarray, epsilon: float) -> Action:
        if not (0.0 <= epsilon <= 1.0):
            raise ValueError("epsilon must lie in [0, 1]")
        if epsilon >= 1.0:
            # policy is fully random; skip the forward pass
            return Action(int(self.rng.integers(self.spec.output_dim)))
        q = mlp.forward(self.eval_weights, obs)
        return select_action(q, epsilon, self.rng)

    def store(self, tr: Transition) -> None:
        self.memory.push(tr)

    def train_step(self) -> float | None:
        """One minibatch update; returns the pre-step loss, or None if the
        memory cannot fill a batch yet."""
        cfg = self.cfg
        if len(self.memory) < cfg.batch_size:
            return None
        obs, actions, rewards, next_obs = self.memory.sample(cfg.batch_size, self.rng)
        targets = compute_target(
            rewards, next_obs, self.eval_weights, self.target_weights, cfg.discount
        )
        preds_all, cache = mlp._forward_cached(self.eval_weights, obs)
        rows = np.arange(cfg.batch_size)
        preds = preds_all[rows, actions]
        errors = preds - targets
        loss = float(np.mean(errors ** 2))

        # gradient flows only through the taken action's output
        grad_out = np.zeros_like(preds_all)
        grad_out[rows, actions] = 2.0 * errors / cfg.batch_size
        grads = mlp._backward_from_cache(self.eval_weights, cache, grad_out)
        self._apply_update(grads)

        self.train_steps += 1
        if self.train_steps % cfg.target_sync_period == 0:
            self.sync_target()
        return loss

    def _apply_update(self, grads: Weights) -> None:
        if self.cfg.momentum > 0.0:
            if self._velocity is None:
                self._velocity = [(np.zeros_like(w), np.zeros_like(b)) for w, b in grads]
            self._velocity = [
                (self.cfg.momentum * vw + gw, self.cfg.momentum * vb + gb)
                for (vw, vb), (gw, gb) in zip(self._velocity, grads)
            ]
            grads = self._velocity
        self.eval_weights = mlp.sgd_step(self.eval_weights, grads, self.cfg.lr)

    def sync_target(self) -> None:
        self.target_weights = mlp.copy_weights(self.eval_weights)

    # federated averaging hooks

    def get_flat_weights(self) -> np.ndarray:
        return mlp.flatten_weights(self.eval_weights)

    def set_flat_weights(self, flat: np.ndarray, include_target: bool = True) -> None:
        self.eval_weights = mlp.unflatten_weights(self.spec, flat.astype(np.float32))
        if include_target:
            self.target_weights = mlp.copy_weights(self.eval_weights)
