"""
Fixed-capacity replay memory with uniform sampling over the filled region.
"""

from dataclasses import dataclass

import numpy as np

from ..core.exceptions import InvalidArgumentError, NotReadyError
from ..logic_blocks.numerics import Rng


@dataclass
class ReplayBatch:
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_obs: np.ndarray

    def __len__(self) -> int:
        return int(self.rewards.size)


class ReplayBuffer:
    def __init__(self, capacity: int, obs_dim: int, act_dim: int):
        if capacity < 1:
            raise InvalidArgumentError(f"capacity must be positive, got {capacity}")
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.actions = np.zeros((capacity, act_dim))
        self.rewards = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, obs_dim))
        self.cursor = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def add(self, obs, action, reward: float, next_obs):
        i = self.cursor
        self.obs[i] = obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_obs[i] = next_obs
        self.cursor = (self.cursor + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: Rng) -> ReplayBatch:
        if self.size < batch_size:
            raise NotReadyError(f"replay buffer holds {self.size} < {batch_size} transitions")
        idx = rng.integers(0, self.size, size=batch_size)
        return ReplayBatch(self.obs[idx], self.actions[idx], self.rewards[idx], self.next_obs[idx])
