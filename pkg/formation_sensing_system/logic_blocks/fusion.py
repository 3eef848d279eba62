"""
Fusion Block - information-level fusion of per-link range/rate estimates at the MUAV.

Range and rate differences referenced to UAV 1 are solved for obstacle position
and velocity by two-step weighted least squares; the formation CRLB follows from
the Jacobian of the differences with respect to (s, ṡ).
"""

import logging
import math
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import block_diag

from ..core.exceptions import (
    DegenerateGeometryError,
    InsufficientDataError,
    InvalidArgumentError,
    SingularMatrixError,
    UnobservableGeometryError,
)
from ..core.models import (
    FormationCrlb,
    LinkMeasurement,
    MeasurementSet,
    ObstacleEstimate,
    ObstacleState,
)
from .numerics import inv_spd, solve_spd

logger = logging.getLogger("Fusion")

COLLINEAR_TOLERANCE = 1e-6
PLANAR_TOLERANCE = 1e-3
RANGE_TOLERANCE = 1e-9
PLANAR_PASSES = 3
SIGN_CONFIDENCE = 3.0


# --- Geometry helpers ---
def link_geometry(
    s: np.ndarray, s_dot: np.ndarray, positions: np.ndarray, velocities: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """True ranges ‖s − uᵢ‖ and range rates (positive = receding) for every UAV."""
    diff = np.asarray(s, dtype=float) - np.asarray(positions, dtype=float)
    ranges = np.linalg.norm(diff, axis=1)
    if np.any(ranges <= RANGE_TOLERANCE):
        raise DegenerateGeometryError("obstacle co-located with a UAV")
    rel_velocity = np.asarray(s_dot, dtype=float) - np.asarray(velocities, dtype=float)
    rates = np.sum(diff * rel_velocity, axis=1) / ranges
    return ranges, rates


def formation_velocities(leader_velocity: np.ndarray, p: int) -> np.ndarray:
    """Every UAV moving with the leader: the linearization used for k+1 predictions."""
    return np.tile(np.asarray(leader_velocity, dtype=float), (p, 1))


def measurement_covariance(var_r: Sequence[float], var_v: Sequence[float]) -> np.ndarray:
    """Q = diag(Q_r, Q_v), each block σ₁²·11ᵀ + diag(σ₂², …, σ_P²)."""
    var_r = np.asarray(var_r, dtype=float)
    var_v = np.asarray(var_v, dtype=float)

    def block(variances):
        k = variances.size - 1
        return variances[0] * np.ones((k, k)) + np.diag(variances[1:])

    return block_diag(block(var_r), block(var_v))


def build_measurements(links: Sequence[LinkMeasurement]) -> MeasurementSet:
    """Differences against link 1 (the MUAV) with their covariance."""
    if len(links) < 2:
        raise InsufficientDataError(f"need at least 2 links, got {len(links)}")
    r_hat = np.array([link.r_hat for link in links])
    v_hat = np.array([link.v_hat for link in links])
    q = measurement_covariance(
        [link.crlb.crlb_r for link in links], [link.crlb.crlb_v for link in links]
    )
    return MeasurementSet(
        r_diffs=r_hat[1:] - r_hat[0],
        v_diffs=v_hat[1:] - v_hat[0],
        q=q,
        r_ref=float(r_hat[0]),
        v_ref=float(v_hat[0]),
    )


def exact_measurements(
    obstacle: ObstacleState,
    positions: np.ndarray,
    velocities: np.ndarray,
    var_r: Sequence[float],
    var_v: Sequence[float],
) -> MeasurementSet:
    """Noise-free differences from the true geometry (zero-noise oracle)."""
    ranges, rates = link_geometry(obstacle.position, obstacle.velocity, positions, velocities)
    return MeasurementSet(
        r_diffs=ranges[1:] - ranges[0],
        v_diffs=rates[1:] - rates[0],
        q=measurement_covariance(var_r, var_v),
        r_ref=float(ranges[0]),
        v_ref=float(rates[0]),
    )


# --- TWLS ---
def _principal_frame(positions: np.ndarray) -> Tuple[np.ndarray, bool]:
    """Orthonormal frame of the baselines uᵢ − u₁ and whether the array is planar."""
    baselines = positions[1:] - positions[0]
    _, singular, vt = np.linalg.svd(baselines, full_matrices=True)
    singular = np.concatenate([singular, np.zeros(3 - singular.size)])
    if singular[0] <= 0 or singular[1] <= COLLINEAR_TOLERANCE * singular[0]:
        raise DegenerateGeometryError("UAV array is collinear: obstacle position not identifiable")
    return vt.T, bool(singular[2] <= PLANAR_TOLERANCE * singular[0])


def _wls(design: np.ndarray, target: np.ndarray, weight: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    normal = design.T @ weight @ design
    try:
        theta = solve_spd(normal, design.T @ weight @ target)
        covariance = inv_spd(normal)
    except SingularMatrixError as e:
        raise DegenerateGeometryError(f"rank-deficient design matrix: {e}") from e
    return theta, covariance


def _sign(value: float) -> float:
    return -1.0 if value < 0 else 1.0


class _Stage1:
    """Linearized range/rate-difference system in the principal frame (u₁ at the origin)."""

    def __init__(self, meas: MeasurementSet, rel_u: np.ndarray, rel_ud: np.ndarray, dims):
        self.meas = meas
        self.dims = list(dims)
        self.n_id = len(self.dims)
        self.ui = rel_u[1:]
        self.udi = rel_ud[1:]
        r_i1, v_i1 = meas.r_diffs, meas.v_diffs
        k = r_i1.size
        n = self.n_id

        design = np.zeros((2 * k, 2 * n + 2))
        design[:k, :n] = -2 * self.ui[:, self.dims]
        design[:k, n] = -2 * r_i1
        design[k:, :n] = -2 * self.udi[:, self.dims]
        design[k:, n] = -2 * v_i1
        design[k:, n + 1 : 2 * n + 1] = -2 * self.ui[:, self.dims]
        design[k:, -1] = -2 * r_i1
        self.design = design
        self.target = np.concatenate(
            [
                r_i1**2 - np.sum(self.ui**2, axis=1),
                2 * (r_i1 * v_i1 - np.sum(self.udi * self.ui, axis=1)),
            ]
        )
        self.hidden = [axis for axis in range(3) if axis not in self.dims]

    def solve(self, hidden_s: float = 0.0, hidden_sd: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
        target = self.target.copy()
        k = self.meas.r_diffs.size
        for axis in self.hidden:
            target[:k] += 2 * self.ui[:, axis] * hidden_s
            target[k:] += 2 * self.udi[:, axis] * hidden_s + 2 * self.ui[:, axis] * hidden_sd

        q = self.meas.q
        try:
            weight = inv_spd(q)
        except SingularMatrixError as e:
            raise InvalidArgumentError(f"measurement covariance is not positive definite: {e}") from e
        theta, covariance = _wls(self.design, target, weight)

        # One reweighting pass with B₁ evaluated at the stage-1 ranges.
        r1, rd1 = theta[self.n_id], theta[-1]
        ranges = self.meas.r_diffs + r1
        rates = self.meas.v_diffs + rd1
        if np.all(ranges > 0):
            b = np.diag(2 * ranges)
            b_dot = np.diag(2 * rates)
            b1 = np.block([[b, np.zeros_like(b)], [b_dot, b]])
            try:
                weight = inv_spd(b1 @ q @ b1.T)
                theta, covariance = _wls(self.design, target, weight)
            except SingularMatrixError:
                logger.warning("Stage-1 reweighting skipped: singular B₁QB₁ᵀ")
        return theta, covariance


def twls_estimate(
    meas: MeasurementSet,
    positions: np.ndarray,
    velocities: np.ndarray,
    hint: Optional[np.ndarray] = None,
    side: float = 1.0,
) -> ObstacleEstimate:
    """
    Obstacle position and velocity from range/rate differences.

    Works in the principal frame of the UAV array. A planar array leaves the
    out-of-plane coordinate to stage 2 (through r₁² = ‖s − u₁‖²), its side of
    the plane chosen by `hint` or, without one, by `side` (+1 above, −1 below).
    """
    positions = np.asarray(positions, dtype=float)
    velocities = np.asarray(velocities, dtype=float)
    p = positions.shape[0]
    if meas.r_diffs.size != p - 1:
        raise InvalidArgumentError(f"{meas.r_diffs.size} differences for {p} UAVs")

    frame, planar = _principal_frame(positions)
    rel_u = (positions - positions[0]) @ frame
    rel_ud = (velocities - velocities[0]) @ frame
    dims = [0, 1] if planar else [0, 1, 2]
    n_id = len(dims)
    if 2 * (p - 1) < 2 * n_id + 2:
        raise InsufficientDataError(f"{p} UAVs cannot resolve {2 * n_id + 2} stage-1 unknowns")

    hint_rel = None if hint is None else frame.T @ (np.asarray(hint, dtype=float) - positions[0])
    default_side = _sign(side) * _sign(frame[2, 2])

    stage1 = _Stage1(meas, rel_u, rel_ud, dims)
    needs_passes = planar and (np.any(rel_u[:, 2] != 0) or np.any(rel_ud[:, 2] != 0))
    hidden_s = hidden_sd = 0.0
    for _ in range(PLANAR_PASSES if needs_passes else 1):
        theta1, cov1 = stage1.solve(hidden_s, hidden_sd)
        r1 = theta1[n_id]
        if r1 <= RANGE_TOLERANCE * max(1.0, float(np.max(np.abs(rel_u)))):
            raise DegenerateGeometryError("obstacle co-located with the MUAV (r₁ ≈ 0)")
        s_rel, sd_rel, ok = _stage2(theta1, cov1, dims, hint_rel, default_side)
        converged = abs(s_rel[2] - hidden_s) <= 1e-9 * r1 and abs(sd_rel[2] - hidden_sd) <= 1e-9 * r1
        hidden_s, hidden_sd = s_rel[2], sd_rel[2]
        last_cov = cov1
        if converged:
            break

    if not ok:
        logger.warning("TWLS stage 2 failed; using stage-1 estimate")
    return ObstacleEstimate(
        s=positions[0] + frame @ s_rel,
        s_dot=velocities[0] + frame @ sd_rel,
        covariance=last_cov,
        stage2_ok=ok,
    )


def _stage2(theta1, cov1, dims, hint_rel, default_side) -> Tuple[np.ndarray, np.ndarray, bool]:
    n_id = len(dims)
    s_id = theta1[:n_id]
    r1 = theta1[n_id]
    sd_id = theta1[n_id + 1 : 2 * n_id + 1]
    rd1 = theta1[-1]

    signs = np.ones(3)
    for axis in range(3):
        if axis in dims:
            a = dims.index(axis)
            spread = math.sqrt(max(cov1[a, a], 0.0))
            if hint_rel is not None and abs(s_id[a]) < SIGN_CONFIDENCE * spread:
                signs[axis] = _sign(hint_rel[axis])
            else:
                signs[axis] = _sign(s_id[a])
        else:
            signs[axis] = _sign(hint_rel[axis]) if hint_rel is not None else default_side

    rows = 2 * n_id + 2
    target = np.concatenate([s_id**2, [r1**2], s_id * sd_id, [r1 * rd1]])
    design = np.zeros((rows, 6))
    for a, axis in enumerate(dims):
        design[a, axis] = 1.0
        design[n_id + 1 + a, 3 + axis] = 1.0
    design[n_id, :3] = 1.0
    design[-1, 3:] = 1.0

    ok = True
    try:
        if rows == 6:
            theta2 = np.linalg.solve(design, target)
        else:
            b2 = np.zeros((rows, 2 * n_id + 2))
            for a in range(n_id):
                b2[a, a] = 2 * s_id[a]
                b2[n_id + 1 + a, a] = sd_id[a]
                b2[n_id + 1 + a, n_id + 1 + a] = s_id[a]
            b2[n_id, n_id] = 2 * r1
            b2[-1, n_id] = rd1
            b2[-1, -1] = r1
            weight = inv_spd(b2 @ cov1 @ b2.T)
            theta2 = solve_spd(design.T @ weight @ design, design.T @ weight @ target)
    except (SingularMatrixError, np.linalg.LinAlgError):
        ok = False
        theta2 = None

    if theta2 is not None and np.any(theta2[:3] < 0):
        ok = False

    s_rel = np.zeros(3)
    sd_rel = np.zeros(3)
    if ok:
        s_rel = signs * np.sqrt(theta2[:3])
        for axis in range(3):
            if abs(s_rel[axis]) > RANGE_TOLERANCE * r1:
                sd_rel[axis] = theta2[3 + axis] / s_rel[axis]
            elif axis in dims:
                sd_rel[axis] = sd_id[dims.index(axis)]
        return s_rel, sd_rel, True

    # Stage-1 fallback; a hidden coordinate comes from the r₁ constraint, clamped at 0.
    for a, axis in enumerate(dims):
        s_rel[axis] = s_id[a]
        sd_rel[axis] = sd_id[a]
    for axis in range(3):
        if axis in dims:
            continue
        s_rel[axis] = signs[axis] * math.sqrt(max(r1**2 - float(s_id @ s_id), 0.0))
        if abs(s_rel[axis]) > RANGE_TOLERANCE * r1:
            sd_rel[axis] = (r1 * rd1 - float(s_id @ sd_id)) / s_rel[axis]
    return s_rel, sd_rel, False


# --- Formation CRLB ---
def _link_directions(positions, velocities, s, s_dot, ranges=None, rates=None):
    """Unit LOS eᵢ, rate sensitivity bᵢ, ranges and rates at the linearization point."""
    true_ranges, true_rates = link_geometry(s, s_dot, positions, velocities)
    ranges = true_ranges if ranges is None else np.asarray(ranges, dtype=float)
    rates = true_rates if rates is None else np.asarray(rates, dtype=float)
    if np.any(ranges <= RANGE_TOLERANCE):
        raise DegenerateGeometryError("non-positive range at the linearization point")
    e = (s - positions) / ranges[:, None]
    d = s_dot - velocities
    b = (d - rates[:, None] * e) / ranges[:, None]
    return e, b, ranges, rates


def formation_jacobian(positions, velocities, s, s_dot, ranges=None, rates=None) -> np.ndarray:
    """∂(r_i1, ṙ_i1)/∂(s, ṡ) = [[A, 0], [B, A]]."""
    e, b, _, _ = _link_directions(positions, velocities, s, s_dot, ranges, rates)
    a_block = e[1:] - e[0]
    b_block = b[1:] - b[0]
    return np.block([[a_block, np.zeros_like(a_block)], [b_block, a_block]])


def _crlb_from_jacobian(jacobian: np.ndarray, q: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    try:
        weight = inv_spd(q)
    except SingularMatrixError as e:
        raise InvalidArgumentError(f"measurement covariance is not positive definite: {e}") from e
    try:
        crlb = inv_spd(jacobian.T @ weight @ jacobian)
    except SingularMatrixError as e:
        raise UnobservableGeometryError(f"formation Fisher information is singular: {e}") from e
    return crlb, weight


def crlb_formation(
    positions: np.ndarray,
    velocities: np.ndarray,
    ref: ObstacleState,
    q: np.ndarray,
    ranges: Optional[np.ndarray] = None,
    rates: Optional[np.ndarray] = None,
) -> FormationCrlb:
    """6×6 CRLB of (s, ṡ) with ε_P, ε_V; measured ranges/rates may replace the true ones."""
    positions = np.asarray(positions, dtype=float)
    velocities = np.asarray(velocities, dtype=float)
    jacobian = formation_jacobian(positions, velocities, ref.position, ref.velocity, ranges, rates)
    crlb, _ = _crlb_from_jacobian(jacobian, np.asarray(q, dtype=float))
    return FormationCrlb(
        crlb_pv=crlb,
        eps_p=math.sqrt(float(np.trace(crlb[:3, :3]))),
        eps_v=math.sqrt(float(np.trace(crlb[3:, 3:]))),
    )


def crlb_formation_gradient(
    positions: np.ndarray, velocities: np.ndarray, ref: ObstacleState, q: np.ndarray
) -> Tuple[FormationCrlb, np.ndarray]:
    """ε_P and its analytic gradient with respect to every UAV position (P×3), velocities held."""
    positions = np.asarray(positions, dtype=float)
    velocities = np.asarray(velocities, dtype=float)
    s, s_dot = ref.position, ref.velocity
    e, b, ranges, rates = _link_directions(positions, velocities, s, s_dot)
    a_block = e[1:] - e[0]
    b_block = b[1:] - b[0]
    jacobian = np.block([[a_block, np.zeros_like(a_block)], [b_block, a_block]])
    crlb, weight = _crlb_from_jacobian(jacobian, np.asarray(q, dtype=float))
    eps_p = math.sqrt(float(np.trace(crlb[:3, :3])))

    # d tr(C_pp) / dD = −2·W·D·G with G = C·EᵀE·C
    g = crlb[:, :3] @ crlb[:3, :]
    coef = -2.0 * weight @ jacobian @ g
    k = positions.shape[0] - 1
    coef_e = coef[:k, :3] + coef[k:, 3:]
    coef_b = coef[k:, :3]

    def sensitivities(i):
        projector = np.eye(3) - np.outer(e[i], e[i])
        de_du = -projector / ranges[i]
        db_du = (np.outer(e[i], b[i]) + np.outer(b[i], e[i])) / ranges[i] + rates[i] * projector / ranges[i] ** 2
        return de_du, db_du

    grad = np.zeros_like(positions)
    for i in range(1, k + 1):
        de_du, db_du = sensitivities(i)
        grad[i] = de_du.T @ coef_e[i - 1] + db_du.T @ coef_b[i - 1]
    de_du, db_du = sensitivities(0)
    grad[0] = -(de_du.T @ coef_e.sum(axis=0) + db_du.T @ coef_b.sum(axis=0))

    result = FormationCrlb(
        crlb_pv=crlb,
        eps_p=eps_p,
        eps_v=math.sqrt(float(np.trace(crlb[3:, 3:]))),
    )
    return result, grad / (2.0 * eps_p)
