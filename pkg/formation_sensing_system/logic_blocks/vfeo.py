"""
VFEO Block - variable-formation enhanced obstacle positioning.

When the predicted formation CRLB at k+1 exceeds the accuracy threshold, the
next-cycle UAV positions are re-chosen on the formation circle to minimise ε_P
under speed, separation and clearance constraints (exterior penalty, steepest
descent with backtracking).
"""

import logging
import math
from itertools import combinations
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from ..core.exceptions import (
    DegenerateGeometryError,
    InvalidArgumentError,
    UnobservableGeometryError,
)
from ..core.models import FormationCrlb, VfeoContext, VfeoResult, default_betas
from ..core.validators import validate_schema
from .formation import circle_points, formation_heading
from .fusion import crlb_formation, crlb_formation_gradient, formation_velocities, measurement_covariance
from .numerics import clip_norm

logger = logging.getLogger("VFEO")

DEFAULT_MU_SCHEDULE = (1e2, 1e4, 1e6)
DEFAULT_EPS_TERM = 1e-3
DEFAULT_MAX_ITERS = 500
ARMIJO = 1e-4
MIN_STEP = 1e-12
FEASIBILITY_TOLERANCE = 1e-6
# Largest single move tried by the line search, per parameterization.
MAX_MOVE = {"angle": 0.25, "cartesian": 5.0}


# --- Geometry of the k+1 layout ---
def formula_vfts(ctx: VfeoContext) -> np.ndarray:
    """Uniform layout the leader would assign at k+1."""
    return circle_points(ctx.leader_position, ctx.r_f, _uniform_angles(ctx))


def _uniform_angles(ctx: VfeoContext) -> np.ndarray:
    betas = ctx.betas if ctx.betas is not None else default_betas(ctx.p)
    return formation_heading(ctx.leader_position) + betas


def _covariance(ctx: VfeoContext) -> np.ndarray:
    return measurement_covariance(ctx.link_variances_r, ctx.link_variances_v)


def predicted_crlb(ctx: VfeoContext, positions: np.ndarray) -> FormationCrlb:
    """Formation CRLB at candidate k+1 positions, every UAV moving with the leader."""
    velocities = formation_velocities(ctx.leader_velocity, ctx.p)
    return crlb_formation(positions, velocities, ctx.obstacle, _covariance(ctx))


def should_trigger(ctx: VfeoContext) -> Tuple[bool, float]:
    eps_p = predicted_crlb(ctx, formula_vfts(ctx)).eps_p
    return bool(eps_p > ctx.zeta), eps_p


# --- Penalty ---
def _unit_rows(diff: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(diff, axis=-1)
    safe = np.where(norms > 0, norms, 1.0)
    return norms, diff / safe[..., None]


def constraint_terms(u: np.ndarray, ctx: VfeoContext) -> dict:
    """Raw equality residuals and inequality violations (≥ 0) at candidate positions."""
    u = np.asarray(u, dtype=float)
    planar = u[:, :2] - ctx.leader_position[:2]
    step = u - ctx.current_positions
    obstacle = u - ctx.obstacle.position
    pairs = list(combinations(range(ctx.p), 2))
    separation = np.array([np.linalg.norm(u[i] - u[j]) for i, j in pairs]) if pairs else np.zeros(0)
    return {
        "circle": np.linalg.norm(planar, axis=1) - ctx.r_f,
        "altitude": u[:, 2] - ctx.leader_position[2],
        "speed": np.maximum(0.0, np.linalg.norm(step, axis=1) - ctx.v_max * ctx.dt),
        "separation": np.maximum(0.0, ctx.r_min - separation),
        "clearance": np.maximum(0.0, ctx.r_s - np.linalg.norm(obstacle, axis=1)),
    }


def _violation(terms: dict) -> float:
    return float(sum(np.sum(v**2) for v in terms.values()))


def penalty(u: np.ndarray, ctx: VfeoContext, mu: float) -> float:
    """𝒬(u) = ε_P(u) + μ·(squared equality residuals + squared inequality violations)."""
    if mu <= 0:
        raise InvalidArgumentError(f"penalty coefficient must be positive, got {mu}")
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        return math.inf
    try:
        eps_p = predicted_crlb(ctx, u).eps_p
    except (UnobservableGeometryError, DegenerateGeometryError):
        return math.inf
    return eps_p + mu * _violation(constraint_terms(u, ctx))


def penalty_gradient(u: np.ndarray, ctx: VfeoContext, mu: float) -> np.ndarray:
    """∇𝒬 with respect to every UAV position (P×3)."""
    u = np.asarray(u, dtype=float)
    velocities = formation_velocities(ctx.leader_velocity, ctx.p)
    _, grad = crlb_formation_gradient(u, velocities, ctx.obstacle, _covariance(ctx))
    terms = constraint_terms(u, ctx)

    planar = np.zeros_like(u)
    planar[:, :2] = u[:, :2] - ctx.leader_position[:2]
    _, radial = _unit_rows(planar)
    grad = grad + 2 * mu * terms["circle"][:, None] * radial
    grad[:, 2] += 2 * mu * terms["altitude"]

    _, step_dir = _unit_rows(u - ctx.current_positions)
    grad = grad + 2 * mu * terms["speed"][:, None] * step_dir

    _, away = _unit_rows(u - ctx.obstacle.position)
    grad = grad - 2 * mu * terms["clearance"][:, None] * away

    for (i, j), violation in zip(combinations(range(ctx.p), 2), terms["separation"]):
        if violation > 0:
            _, direction = _unit_rows(u[i] - u[j])
            grad[i] -= 2 * mu * violation * direction
            grad[j] += 2 * mu * violation * direction
    return grad


def is_feasible(u: np.ndarray, ctx: VfeoContext, tol: float = FEASIBILITY_TOLERANCE) -> bool:
    terms = constraint_terms(u, ctx)
    return bool(
        np.all(np.abs(terms["circle"]) <= tol)
        and np.all(np.abs(terms["altitude"]) <= tol)
        and all(np.all(terms[name] <= tol) for name in ("speed", "separation", "clearance"))
    )


def project_to_circle(u: np.ndarray, ctx: VfeoContext) -> np.ndarray:
    """Radial snap onto the formation circle and altitude snap to the leader's."""
    u = np.asarray(u, dtype=float)
    planar = u[:, :2] - ctx.leader_position[:2]
    angles = np.arctan2(planar[:, 1], planar[:, 0])
    return circle_points(ctx.leader_position, ctx.r_f, angles)


# --- Parameterizations ---
class _Problem:
    """Maps optimisation variables to positions and 𝒬 for one parameterization."""

    def __init__(self, ctx: VfeoContext, parameterization: str):
        if parameterization not in MAX_MOVE:
            raise InvalidArgumentError(f"unknown parameterization '{parameterization}'")
        self.ctx = ctx
        self.kind = parameterization

    def start(self) -> np.ndarray:
        angles = _uniform_angles(self.ctx)
        if self.kind == "angle":
            return angles
        return circle_points(self.ctx.leader_position, self.ctx.r_f, angles).ravel()

    def positions(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "angle":
            return circle_points(self.ctx.leader_position, self.ctx.r_f, x)
        return x.reshape(self.ctx.p, 3)

    def value(self, x: np.ndarray, mu: float) -> float:
        return penalty(self.positions(x), self.ctx, mu)

    def gradient(self, x: np.ndarray, mu: float) -> np.ndarray:
        grad_u = penalty_gradient(self.positions(x), self.ctx, mu)
        if self.kind == "cartesian":
            return grad_u.ravel()
        tangent = self.ctx.r_f * np.stack([-np.sin(x), np.cos(x)], axis=1)
        return np.sum(grad_u[:, :2] * tangent, axis=1)

    def direction(self, x: np.ndarray, grad: np.ndarray, mu: float) -> np.ndarray:
        """
        Descent direction before the step length is chosen.

        Cartesian gradients are rescaled per UAV: r_f² along the circle tangent, so a unit
        step moves a UAV as far as the angle parameterization would, and 1/(2μ) across the
        circle and in altitude, where the equality penalty has curvature 2μ.
        """
        if self.kind == "angle":
            return grad
        u = self.positions(x)
        radial = np.zeros_like(u)
        radial[:, :2] = u[:, :2] - self.ctx.leader_position[:2]
        _, radial = _unit_rows(radial)
        tangent = np.stack([-radial[:, 1], radial[:, 0], np.zeros(self.ctx.p)], axis=1)
        vertical = np.zeros_like(u)
        vertical[:, 2] = 1.0
        g = grad.reshape(u.shape)

        def along(axis):
            return np.sum(g * axis, axis=1)[:, None] * axis

        scaled = self.ctx.r_f**2 * along(tangent) + (along(radial) + along(vertical)) / (2 * mu)
        return scaled.ravel()


def _line_search(
    value_fn: Callable[[np.ndarray], float],
    x: np.ndarray,
    value: float,
    grad: np.ndarray,
    direction: np.ndarray,
    max_move: float,
) -> Optional[Tuple[np.ndarray, float]]:
    """Backtracking along −direction with halving steps until the sufficient-decrease test passes."""
    step = max_move / max(float(np.max(np.abs(direction))), 1e-300)
    slope = float(grad @ direction)
    while step > MIN_STEP:
        candidate = x - step * direction
        candidate_value = value_fn(candidate)
        if candidate_value <= value - ARMIJO * step * slope:
            return candidate, candidate_value
        step *= 0.5
    return None


@validate_schema(input_model=VfeoContext, output_model=VfeoResult)
def optimize(
    ctx: VfeoContext,
    mu_schedule: Sequence[float] = DEFAULT_MU_SCHEDULE,
    eps_term: float = DEFAULT_EPS_TERM,
    max_iters: int = DEFAULT_MAX_ITERS,
    parameterization: str = "angle",
) -> VfeoResult:
    """
    Minimise ε_P over the k+1 layout when the uniform layout misses the threshold.

    μ escalates through `mu_schedule`, each stage warm-started from the last.
    The best feasible layout seen (the uniform one included) is returned after
    projection onto the circle and the leader altitude.
    """
    if not mu_schedule or any(mu <= 0 for mu in mu_schedule):
        raise InvalidArgumentError("μ schedule must be non-empty and positive")
    uniform = formula_vfts(ctx)
    triggered, eps_uniform = should_trigger(ctx)
    if not triggered:
        return VfeoResult(positions=uniform, eps_p=eps_uniform, eps_p_uniform=eps_uniform)

    problem = _Problem(ctx, parameterization)
    best, best_eps = (uniform, eps_uniform) if is_feasible(uniform, ctx) else (None, math.inf)

    def consider(positions: np.ndarray):
        nonlocal best, best_eps
        snapped = project_to_circle(positions, ctx)
        if not is_feasible(snapped, ctx):
            return
        try:
            eps_p = predicted_crlb(ctx, snapped).eps_p
        except (UnobservableGeometryError, DegenerateGeometryError):
            return
        if eps_p < best_eps:
            best, best_eps = snapped, eps_p

    x = problem.start()
    iterations = 0
    for stage, mu in enumerate(mu_schedule):
        value = problem.value(x, mu)
        for it in range(max_iters):
            grad = problem.gradient(x, mu)
            if not np.all(np.isfinite(grad)) or np.linalg.norm(grad) < eps_term:
                break
            direction = problem.direction(x, grad, mu)
            accepted = _line_search(
                lambda c: problem.value(c, mu), x, value, grad, direction, MAX_MOVE[problem.kind]
            )
            if accepted is None:
                if stage == 0 and it == 0:
                    logger.warning("VFEO line search failed at μ=%g; keeping formula VFTs", mu)
                    return VfeoResult(
                        positions=uniform,
                        eps_p=eps_uniform,
                        eps_p_uniform=eps_uniform,
                        diagnostic=f"line search failed at mu={mu:g}",
                    )
                break
            x, value = accepted
            iterations += 1
            consider(problem.positions(x))

    consider(problem.positions(x))
    if best is None:
        logger.warning("VFEO found no feasible layout; keeping formula VFTs")
        return VfeoResult(
            positions=uniform,
            eps_p=eps_uniform,
            eps_p_uniform=eps_uniform,
            iterations=iterations,
            diagnostic="no feasible layout",
        )

    logger.info("VFEO: ε_P %.4f → %.4f m in %d iterations", eps_uniform, best_eps, iterations)
    return VfeoResult(
        positions=best,
        eps_p=best_eps,
        eps_p_uniform=eps_uniform,
        iterations=iterations,
        triggered=True,
    )


def positions_to_velocity(current: np.ndarray, target: np.ndarray, dt: float, v_max: float) -> np.ndarray:
    """v₂ᵢ = clip((targetᵢ − currentᵢ)/ΔT, v_max)."""
    current = np.asarray(current, dtype=float)
    target = np.asarray(target, dtype=float)
    if current.shape != target.shape:
        raise InvalidArgumentError(f"shape mismatch {current.shape} vs {target.shape}")
    return np.array([clip_norm(row, v_max) for row in (target - current) / dt]).reshape(current.shape)
