"""
Actor and critic networks for the shared path-following policy.

Both run in float64 on the CPU so training is reproducible from a seed.
"""

import copy
import logging
from typing import Dict, List

import numpy as np
import torch
import torch.nn as nn

from ..core.exceptions import InvalidArgumentError

logger = logging.getLogger("Networks")

OBS_DIM = 13
ACT_DIM = 3
HIDDEN = 64
ACTION_LIMIT = 78.0  # m/s
DTYPE = torch.float64


def ball_squash(y: torch.Tensor, limit: float = ACTION_LIMIT) -> torch.Tensor:
    """Map ℝ³ smoothly into the open ball of radius `limit`: limit·tanh(ρ)·y/ρ."""
    rho = torch.linalg.vector_norm(y, dim=-1, keepdim=True)
    safe = torch.clamp(rho, min=1e-12)
    scale = torch.where(rho > 1e-12, torch.tanh(safe) / safe, torch.ones_like(rho))
    return limit * scale * y


class Actor(nn.Module):
    def __init__(self):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(OBS_DIM, HIDDEN),
            nn.Tanh(),
            nn.Linear(HIDDEN, HIDDEN),
            nn.Tanh(),
            nn.Linear(HIDDEN, ACT_DIM),
        )

    def forward(self, obs: torch.Tensor) -> torch.Tensor:
        return ball_squash(self.net(obs))


class Critic(nn.Module):
    """Q(s, a); the action enters scaled by the action limit."""

    def __init__(self):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(OBS_DIM + ACT_DIM, HIDDEN),
            nn.Tanh(),
            nn.Linear(HIDDEN, HIDDEN),
            nn.Tanh(),
            nn.Linear(HIDDEN, 1),
        )

    def forward(self, obs: torch.Tensor, action: torch.Tensor) -> torch.Tensor:
        return self.net(torch.cat([obs, action / ACTION_LIMIT], dim=-1)).squeeze(-1)


def _linear_layers(module: nn.Module) -> List[nn.Linear]:
    return [layer for layer in module.modules() if isinstance(layer, nn.Linear)]


def layers_to_lists(module: nn.Module) -> List[List[list]]:
    return [[layer.weight.detach().tolist(), layer.bias.detach().tolist()] for layer in _linear_layers(module)]


def load_layers(module: nn.Module, layers: List[List[list]]):
    linear = _linear_layers(module)
    if len(layers) != len(linear):
        raise InvalidArgumentError(f"expected {len(linear)} layers, got {len(layers)}")
    with torch.no_grad():
        for layer, (weight, bias) in zip(linear, layers):
            weight = torch.tensor(weight, dtype=DTYPE)
            bias = torch.tensor(bias, dtype=DTYPE)
            if weight.shape != layer.weight.shape or bias.shape != layer.bias.shape:
                raise InvalidArgumentError(
                    f"layer shape {tuple(weight.shape)} does not match {tuple(layer.weight.shape)}"
                )
            layer.weight.copy_(weight)
            layer.bias.copy_(bias)


class PolicyParams:
    """Online actor/critic with their target copies."""

    def __init__(self, actor: Actor, critic: Critic, actor_target: Actor = None, critic_target: Critic = None):
        self.actor = actor
        self.critic = critic
        self.actor_target = actor_target if actor_target is not None else copy.deepcopy(actor)
        self.critic_target = critic_target if critic_target is not None else copy.deepcopy(critic)
        for target in (self.actor_target, self.critic_target):
            target.requires_grad_(False)

    @classmethod
    def initialize(cls, seed: int) -> "PolicyParams":
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            actor = Actor().to(DTYPE)
            critic = Critic().to(DTYPE)
        return cls(actor, critic)

    @classmethod
    def zeros(cls) -> "PolicyParams":
        actor, critic = Actor().to(DTYPE), Critic().to(DTYPE)
        with torch.no_grad():
            for module in (actor, critic):
                for parameter in module.parameters():
                    parameter.zero_()
        return cls(actor, critic)

    def modules(self) -> Dict[str, nn.Module]:
        return {
            "actor": self.actor,
            "critic": self.critic,
            "actor_target": self.actor_target,
            "critic_target": self.critic_target,
        }

    def layer_shapes(self) -> Dict[str, List[tuple]]:
        return {
            name: [tuple(layer.weight.shape) for layer in _linear_layers(module)]
            for name, module in self.modules().items()
        }

    def is_finite(self) -> bool:
        return all(
            bool(torch.all(torch.isfinite(p))) for module in self.modules().values() for p in module.parameters()
        )

    def clone(self) -> "PolicyParams":
        return PolicyParams(*(copy.deepcopy(m) for m in self.modules().values()))

    def to_dict(self) -> Dict[str, list]:
        return {name: layers_to_lists(module) for name, module in self.modules().items()}

    @classmethod
    def from_dict(cls, data: Dict[str, list]) -> "PolicyParams":
        params = cls.zeros()
        for name, module in params.modules().items():
            if name not in data:
                raise InvalidArgumentError(f"checkpoint is missing '{name}'")
            load_layers(module, data[name])
        return params


def _as_batch(values, width: int, what: str) -> torch.Tensor:
    tensor = torch.as_tensor(np.asarray(values, dtype=float), dtype=DTYPE)
    if tensor.shape[-1] != width:
        raise InvalidArgumentError(f"{what} must have {width} components, got shape {tuple(tensor.shape)}")
    return tensor


def actor_forward(params: PolicyParams, obs) -> np.ndarray:
    """Deterministic action(s) for normalized observation(s)."""
    with torch.no_grad():
        return params.actor(_as_batch(obs, OBS_DIM, "observation")).numpy()


def critic_forward(params: PolicyParams, obs, action) -> np.ndarray:
    with torch.no_grad():
        value = params.critic(_as_batch(obs, OBS_DIM, "observation"), _as_batch(action, ACT_DIM, "action"))
    return value.numpy()
