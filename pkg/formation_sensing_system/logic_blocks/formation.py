"""
Formation Block - VFT assignment on the formation circle, following errors, safety checks.
"""

import logging
import math
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

from ..core.exceptions import HeadingUndefinedError, InvalidArgumentError
from ..core.models import FollowErrors, FormationConfig, SafetyReport, UavState, VirtualLeader

logger = logging.getLogger("Formation")


def formation_heading(leader_position: np.ndarray) -> float:
    """Bearing of the leader from the world origin, atan2(y_l, x_l)."""
    x_l, y_l = float(leader_position[0]), float(leader_position[1])
    if x_l == 0.0 and y_l == 0.0:
        raise HeadingUndefinedError("leader at the origin: formation heading undefined")
    return math.atan2(y_l, x_l)


def circle_points(leader_position: np.ndarray, r_f: float, angles: np.ndarray) -> np.ndarray:
    """Points on the horizontal circle of radius r_f at the given absolute angles."""
    angles = np.asarray(angles, dtype=float)
    points = np.empty((angles.size, 3))
    points[:, 0] = leader_position[0] + r_f * np.cos(angles)
    points[:, 1] = leader_position[1] + r_f * np.sin(angles)
    points[:, 2] = leader_position[2]
    return points


def assign_vfts(
    leader: VirtualLeader,
    cfg: FormationConfig,
    overrides: Optional[Sequence[Sequence[float]]] = None,
) -> np.ndarray:
    """VFT of each UAV (P×3); overrides are returned verbatim."""
    if overrides is not None:
        overrides = np.array(overrides, dtype=float)
        if overrides.shape != (cfg.p, 3):
            raise InvalidArgumentError(f"overrides must be {cfg.p}×3, got {overrides.shape}")
        return overrides
    heading = formation_heading(leader.position)
    return circle_points(leader.position, cfg.r_f, heading + cfg.betas)


def follow_errors(uav: UavState, vft: np.ndarray, leader: VirtualLeader) -> FollowErrors:
    return FollowErrors(
        e_d=float(np.linalg.norm(np.asarray(vft, dtype=float) - uav.position)),
        e_v=float(np.linalg.norm(leader.velocity - uav.velocity)),
    )


def safety_report(
    positions: Sequence[Sequence[float]],
    obstacle: Optional[Sequence[float]],
    cfg: FormationConfig,
) -> SafetyReport:
    """Minimum pairwise and UAV-obstacle distances with their (inclusive) safety flags."""
    positions = np.asarray(positions, dtype=float)
    if positions.shape[0] != cfg.p:
        raise InvalidArgumentError(f"expected {cfg.p} positions, got {positions.shape[0]}")

    min_pair = math.inf
    for i, j in combinations(range(cfg.p), 2):
        min_pair = min(min_pair, float(np.linalg.norm(positions[i] - positions[j])))

    min_obstacle = math.inf
    if obstacle is not None:
        distances = np.linalg.norm(positions - np.asarray(obstacle, dtype=float), axis=1)
        min_obstacle = float(np.min(distances))

    return SafetyReport(
        min_pair_distance=min_pair,
        min_obstacle_distance=min_obstacle,
        pairs_ok=bool(min_pair >= cfg.r_min),
        obstacle_ok=bool(min_obstacle >= cfg.r_s),
    )
