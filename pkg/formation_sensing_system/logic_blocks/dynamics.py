"""
Dynamics Block - point-mass UAV kinetics and the Markov obstacle model.
The simulator integrates virtual accelerations; bank/load/thrust are derived for reporting.
"""

import logging
import math
from typing import Optional, Tuple

import numpy as np

from ..core.exceptions import DegenerateStateError, InvalidArgumentError, SingularAttitudeError
from ..core.models import ActualControls, ObstacleModel, ObstacleState, UavState
from .numerics import Rng, clip_norm

logger = logging.getLogger("Dynamics")

GRAVITY = 9.81
ATTITUDE_TOLERANCE = 1e-12


def flight_angles(velocity: np.ndarray, chi_prev: float = 0.0, gamma_prev: float = 0.0) -> Tuple[float, float]:
    """Track angle χ and heading angle γ of a velocity; previous values kept at zero speed."""
    vx, vy, vz = (float(c) for c in velocity)
    if vx == 0.0 and vy == 0.0 and vz == 0.0:
        return chi_prev, gamma_prev
    return math.atan2(vy, vx), math.atan2(vz, math.hypot(vx, vy))


def integrate_uav(s: UavState, alpha, dt: float, v_max: float) -> UavState:
    """Semi-implicit Euler step: velocity first (norm-clipped), then position."""
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (3,) or not np.all(np.isfinite(alpha)):
        raise InvalidArgumentError(f"acceleration must be a finite 3-vector, got {alpha}")
    if dt <= 0:
        raise InvalidArgumentError(f"ΔT must be positive, got {dt}")

    velocity = clip_norm(s.velocity + alpha * dt, v_max)
    position = s.position + velocity * dt
    chi, gamma = flight_angles(velocity, s.track_angle, s.heading_angle)
    return UavState(
        position=position,
        velocity=velocity,
        track_angle=chi,
        heading_angle=gamma,
        mass=s.mass,
    )


def virtual_to_actual(s: UavState, alpha, g: float = GRAVITY, drag: float = 0.0) -> ActualControls:
    """
    Bank angle, load factor and thrust that realise the virtual acceleration α.

    A vanishing bank denominator with a vanishing numerator (pure vertical climb,
    no lateral demand) leaves φ indeterminate; it is taken as 0.
    """
    if s.speed == 0.0:
        raise DegenerateStateError("zero airspeed: track and heading angles undefined")
    ax, ay, az = (float(c) for c in np.asarray(alpha, dtype=float))
    chi, gamma = s.track_angle, s.heading_angle

    horizontal = ax * math.cos(chi) + ay * math.sin(chi)
    numerator = ay * math.cos(chi) - ax * math.sin(chi)
    denominator = math.cos(gamma) * (az + g) - math.sin(gamma) * horizontal

    if abs(denominator) < ATTITUDE_TOLERANCE:
        if abs(numerator) >= ATTITUDE_TOLERANCE:
            raise SingularAttitudeError(
                f"bank denominator {denominator:.3e} vanishes with lateral demand {numerator:.3e}"
            )
        phi = 0.0
    else:
        phi = math.atan(numerator / denominator)

    load = denominator / (g * math.cos(phi))
    thrust = (math.sin(gamma) * (az + g) + math.cos(gamma) * horizontal) * s.mass + drag
    return ActualControls(bank_angle=phi, load_factor=load, thrust=thrust)


def actual_to_acceleration(
    s: UavState, controls: ActualControls, g: float = GRAVITY, drag: float = 0.0
) -> np.ndarray:
    """
    Cartesian acceleration produced by (φ, n, T), with lift L = n·m·g.

    Speed, flight-path and track rates are projected back on the
    velocity/climb/turn unit vectors.
    """
    if s.speed == 0.0:
        raise DegenerateStateError("zero airspeed")
    chi, gamma = s.track_angle, s.heading_angle
    phi, n = controls.bank_angle, controls.load_factor

    along = (controls.thrust - drag) / s.mass - g * math.sin(gamma)
    climb = g * (n * math.cos(phi) - math.cos(gamma))
    turn = n * g * math.sin(phi)

    e_v = np.array([math.cos(gamma) * math.cos(chi), math.cos(gamma) * math.sin(chi), math.sin(gamma)])
    e_gamma = np.array([-math.sin(gamma) * math.cos(chi), -math.sin(gamma) * math.sin(chi), math.cos(gamma)])
    e_chi = np.array([-math.sin(chi), math.cos(chi), 0.0])
    return along * e_v + climb * e_gamma + turn * e_chi


def transition_matrices(dt: float) -> Tuple[np.ndarray, np.ndarray]:
    """Constant-velocity Φ (6×6) and acceleration input Γ (6×3)."""
    eye = np.eye(3)
    phi = np.block([[eye, dt * eye], [np.zeros((3, 3)), eye]])
    gamma = np.vstack([0.5 * dt**2 * eye, dt * eye])
    return phi, gamma


def obstacle_step(o: ObstacleState, model: ObstacleModel, rng: Optional[Rng] = None) -> ObstacleState:
    """o' = Φ·o + Γ·υ, υ ~ N(0, Σ_v); no rng means υ = 0."""
    phi, gamma = transition_matrices(model.dt)
    upsilon = rng.multivariate_normal(model.sigma_v) if rng is not None else np.zeros(3)
    return ObstacleState(o=phi @ o.o + gamma @ upsilon)
