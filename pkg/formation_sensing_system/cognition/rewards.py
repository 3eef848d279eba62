"""
Path-following rewards: the adaptive-weight schedule and its fixed-weight baselines.
"""

from typing import Callable, Tuple

from ..core.exceptions import InvalidArgumentError
from ..core.models import RewardMode, RewardWeights

FOLLOWING_THRESHOLD = 3.0  # m; e_d below this counts as following
DISTANCE_SCALE = 40.0
FIXED_WEIGHTS = RewardWeights(w1=0.05, w2=0.95)
DISTANCE_ONLY = RewardWeights(w1=1.0, w2=0.0)

RewardFn = Callable[[float, float], Tuple[float, RewardWeights]]


def adaptive_weights(e_d: float) -> RewardWeights:
    """Velocity-heavy while following; distance weight grows with e_d while chasing."""
    if e_d <= FOLLOWING_THRESHOLD:
        return FIXED_WEIGHTS
    w1 = e_d / (e_d + DISTANCE_SCALE)
    return RewardWeights(w1=w1, w2=1.0 - w1)


def _check(e_d: float, e_v: float):
    if e_d < 0 or e_v < 0:
        raise InvalidArgumentError(f"errors must be non-negative, got e_d={e_d}, e_v={e_v}")


def _weighted(weights: RewardWeights, e_d: float, e_v: float) -> float:
    return -weights.w1 * e_d - weights.w2 * e_v


def reward(e_d: float, e_v: float) -> Tuple[float, RewardWeights]:
    _check(e_d, e_v)
    weights = adaptive_weights(e_d)
    return _weighted(weights, e_d, e_v), weights


def _fixed(weights: RewardWeights) -> RewardFn:
    def fn(e_d: float, e_v: float) -> Tuple[float, RewardWeights]:
        _check(e_d, e_v)
        return _weighted(weights, e_d, e_v), weights

    return fn


def baseline_variants(mode: RewardMode) -> RewardFn:
    mode = RewardMode(mode)
    if mode == RewardMode.AWPF:
        return reward
    if mode == RewardMode.FWPF_DV_FIXED:
        return _fixed(FIXED_WEIGHTS)
    if mode == RewardMode.FWPF_D_ONLY:
        return _fixed(DISTANCE_ONLY)
    raise NotImplementedError("formation-trained policies (fwpf_d_f) are not implemented")
