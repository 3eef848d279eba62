"""
DDPG training of the shared path-following policy (single UAV, VFT stream).
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
import torch
import torch.nn as nn

from ..core.config import TrainingSpec
from ..core.event_bus import EventBus, Events
from ..core.exceptions import TrainingDivergenceError
from ..core.models import RewardMode
from ..logic_blocks.numerics import Rng, clip_norm
from .environment import FollowerEnv
from .networks import ACT_DIM, ACTION_LIMIT, DTYPE, OBS_DIM, PolicyParams
from .replay import ReplayBatch, ReplayBuffer

logger = logging.getLogger("DDPG")

EVALUATION_TAIL = 50
CONVERGENCE_WINDOW = 10
CONVERGENCE_TAIL = 20
CONVERGENCE_BAND = 0.1


def _tensors(batch: ReplayBatch):
    return tuple(
        torch.as_tensor(x, dtype=DTYPE) for x in (batch.obs, batch.actions, batch.rewards, batch.next_obs)
    )


def critic_loss(params: PolicyParams, batch: ReplayBatch, gamma: float) -> torch.Tensor:
    """Mean squared TD error against y = r + γ·Q′(s′, μ′(s′))."""
    obs, actions, rewards, next_obs = _tensors(batch)
    with torch.no_grad():
        target = rewards + gamma * params.critic_target(next_obs, params.actor_target(next_obs))
    return torch.mean((target - params.critic(obs, actions)) ** 2)


def actor_loss(params: PolicyParams, batch: ReplayBatch) -> torch.Tensor:
    """Negative mean Q of the actor's own actions (ascent on the sampled policy gradient)."""
    obs = torch.as_tensor(batch.obs, dtype=DTYPE)
    return -torch.mean(params.critic(obs, params.actor(obs)))


def soft_update(target: nn.Module, online: nn.Module, tau: float):
    """θ′ ← τ·θ + (1 − τ)·θ′"""
    with torch.no_grad():
        for t_param, o_param in zip(target.parameters(), online.parameters()):
            t_param.mul_(1.0 - tau).add_(tau * o_param)


def noise_schedule(episode: int, episodes: int, start: float, end: float) -> float:
    """Exploration sd decaying linearly from `start` to `end` over training."""
    if episodes <= 1:
        return start
    return start + (end - start) * episode / (episodes - 1)


class DdpgAgent:
    """Policy, optimisers and replay memory for one training run."""

    def __init__(self, params: PolicyParams, spec: TrainingSpec, rng: Rng):
        self.params = params
        self.spec = spec
        self.rng = rng
        self.actor_optimizer = torch.optim.Adam(params.actor.parameters(), lr=spec.lr_actor)
        self.critic_optimizer = torch.optim.Adam(params.critic.parameters(), lr=spec.lr_critic)
        self.buffer = ReplayBuffer(spec.memory, OBS_DIM, ACT_DIM)

    def act(self, obs: np.ndarray, noise_sd: float, noise_rng: Optional[Rng] = None) -> np.ndarray:
        with torch.no_grad():
            action = self.params.actor(torch.as_tensor(obs, dtype=DTYPE)).numpy()
        if noise_rng is not None and noise_sd > 0:
            action = action + noise_rng.normal(0.0, noise_sd, size=ACT_DIM)
        return clip_norm(action, ACTION_LIMIT)

    def train_step(self) -> Tuple[float, float]:
        """One critic and one actor update on a sampled mini-batch, then soft target updates."""
        batch = self.buffer.sample(self.spec.batch_size, self.rng)

        self.critic_optimizer.zero_grad()
        loss_q = critic_loss(self.params, batch, self.spec.gamma)
        loss_q.backward()
        self.critic_optimizer.step()

        self.actor_optimizer.zero_grad()
        loss_mu = actor_loss(self.params, batch)
        loss_mu.backward()
        self.actor_optimizer.step()

        soft_update(self.params.critic_target, self.params.critic, self.spec.tau_soft)
        soft_update(self.params.actor_target, self.params.actor, self.spec.tau_soft)
        return float(loss_q), float(loss_mu)


@dataclass
class TrainingResult:
    params: PolicyParams
    rewards: List[float] = field(default_factory=list)
    mode: RewardMode = RewardMode.AWPF
    seed: int = 0


@dataclass
class EvaluationResult:
    e_d: List[float]
    e_v: List[float]

    @property
    def following_error(self) -> float:
        """Mean e_d over the last 50 steps."""
        return float(np.mean(self.e_d[-EVALUATION_TAIL:]))


def make_env(spec: TrainingSpec, rng: Rng, r_f: float = 20.0, dt: float = 1.0, v_max: float = ACTION_LIMIT):
    return FollowerEnv(
        leader_spec=spec.leader,
        rng=rng,
        mode=spec.mode,
        r_f=r_f,
        dt=dt,
        v_max=v_max,
        start_jitter=spec.start_jitter,
    )


def train(
    spec: TrainingSpec,
    seed: int,
    r_f: float = 20.0,
    dt: float = 1.0,
    v_max: float = ACTION_LIMIT,
    on_episode: Optional[Callable[[int, float], None]] = None,
) -> TrainingResult:
    """
    Train the shared policy; a pure function of (spec, seed).

    Raises TrainingDivergenceError as soon as a loss or weight turns non-finite.
    """
    root = Rng(seed)
    training_rng = root.substream("training")
    exploration_rng = root.substream("exploration")
    env = make_env(spec, root.substream("episode"), r_f, dt, v_max)

    params = PolicyParams.initialize(int(training_rng.integers(0, 2**31 - 1)))
    agent = DdpgAgent(params, spec, training_rng)
    result = TrainingResult(params=params, mode=spec.mode, seed=seed)

    for episode in range(spec.episodes):
        noise_sd = noise_schedule(episode, spec.episodes, spec.noise_start, spec.noise_end)
        obs = env.reset()
        total = 0.0
        for step in range(spec.steps_per_episode):
            action = agent.act(obs, noise_sd, exploration_rng)
            outcome = env.step(action)
            agent.buffer.add(obs, action, outcome.reward, outcome.obs)
            total += outcome.reward
            obs = outcome.obs

            if len(agent.buffer) >= spec.batch_size:
                loss_q, loss_mu = agent.train_step()
                if not (np.isfinite(loss_q) and np.isfinite(loss_mu)):
                    raise TrainingDivergenceError(
                        "non-finite training loss",
                        {"episode": episode, "step": step, "critic_loss": loss_q, "actor_loss": loss_mu},
                    )

        if not params.is_finite():
            raise TrainingDivergenceError("non-finite network weights", {"episode": episode})
        mean_reward = total / spec.steps_per_episode
        result.rewards.append(mean_reward)
        logger.debug("Episode %d: mean reward %.4f (noise sd %.2f)", episode, mean_reward, noise_sd)
        EventBus.emit(
            Events.TRAINING_EPISODE, {"mode": spec.mode.value, "episode": episode, "mean_reward": mean_reward}
        )
        if on_episode is not None:
            on_episode(episode, mean_reward)

    return result


def evaluate(params: PolicyParams, env: FollowerEnv, steps: int) -> EvaluationResult:
    """Noise-free rollout of the policy."""
    agent_obs = env.reset()
    e_d, e_v = [], []
    for _ in range(steps):
        with torch.no_grad():
            action = params.actor(torch.as_tensor(agent_obs, dtype=DTYPE)).numpy()
        outcome = env.step(action)
        e_d.append(outcome.e_d)
        e_v.append(outcome.e_v)
        agent_obs = outcome.obs
    return EvaluationResult(e_d=e_d, e_v=e_v)


def convergence_episode(rewards: List[float]) -> Optional[int]:
    """
    First episode whose 10-episode moving average enters the band around the
    final level (mean of the last 20 episodes, band 10 % of its magnitude).
    """
    rewards = np.asarray(rewards, dtype=float)
    if rewards.size < CONVERGENCE_WINDOW:
        return None
    final = float(np.mean(rewards[-CONVERGENCE_TAIL:]))
    threshold = final - CONVERGENCE_BAND * abs(final)
    moving = np.convolve(rewards, np.ones(CONVERGENCE_WINDOW) / CONVERGENCE_WINDOW, mode="valid")
    hits = np.nonzero(moving >= threshold)[0]
    return int(hits[0] + CONVERGENCE_WINDOW - 1) if hits.size else None
