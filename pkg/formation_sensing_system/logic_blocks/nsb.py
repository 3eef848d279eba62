"""
NSB Block - online obstacle avoidance and null-space hierarchical subtask fusion.
"""

import logging
from typing import Optional, Tuple

import numpy as np

from ..core.exceptions import DegenerateGeometryError, InvalidArgumentError
from ..core.models import FusedCommand, FusionGains, SubtaskVelocities
from .numerics import clip_norm, pinv_row

logger = logging.getLogger("NSB")


def _line_of_sight(u, s) -> Tuple[np.ndarray, float]:
    diff = np.asarray(u, dtype=float) - np.asarray(s, dtype=float)
    r = float(np.linalg.norm(diff))
    if r == 0.0:
        raise DegenerateGeometryError("UAV and obstacle coincide")
    return diff, r


def avoidance_velocity(u, s, r_s: float, lambda1: float) -> Tuple[np.ndarray, bool]:
    """Push away from the obstacle along the LOS while inside r_s (strict)."""
    diff, r = _line_of_sight(u, s)
    if r < r_s:
        return diff / r * lambda1 * (r_s - r), True
    return np.zeros(3), False


def null_projector(u, s) -> np.ndarray:
    """I − J₁†J₁ with J₁ the unit LOS row: removes the LOS component."""
    diff, r = _line_of_sight(u, s)
    j1 = (diff / r)[None, :]
    return np.eye(3) - np.outer(pinv_row(j1), j1)


def fuse(
    v: SubtaskVelocities,
    gains: FusionGains,
    u,
    s: Optional[np.ndarray],
    v_max: float,
) -> FusedCommand:
    """
    Commanded velocity: avoidance and sensing at top priority, path following
    projected into the avoidance null space while avoidance is active.
    """
    if v.avoidance_active:
        if s is None:
            raise InvalidArgumentError("avoidance active without an obstacle position")
        out = gains.k1 * v.v1 + gains.k2 * v.v2 + null_projector(u, s) @ v.v3
    else:
        out = gains.k2 * v.v2 + v.v3
    return FusedCommand(
        velocity=clip_norm(out, v_max),
        avoidance_active=v.avoidance_active,
        sensing_active=v.sensing_active,
    )


def command_to_acceleration(command: np.ndarray, velocity: np.ndarray, dt: float) -> np.ndarray:
    """Virtual control α = (v − u̇)/ΔT realising a commanded velocity in one cycle."""
    if dt <= 0:
        raise InvalidArgumentError(f"ΔT must be positive, got {dt}")
    return (np.asarray(command, dtype=float) - np.asarray(velocity, dtype=float)) / dt
