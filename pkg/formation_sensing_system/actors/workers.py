"""Per-cycle workers - each owns one CycleStage and is routed by can_handle()."""

import logging
from typing import List, Optional

import numpy as np

from ..cognition.environment import normalize_observation, observe
from ..cognition.networks import actor_forward
from ..core.event_bus import EventBus, Events
from ..core.models import (
    CycleContext,
    CycleStage,
    LinkMeasurement,
    MissionPhase,
    ObstacleState,
    StepRecord,
    SubtaskVelocities,
    UavRecord,
    VfeoContext,
)
from ..core.validators import validate_context
from ..infrastructure.logger import get_logger
from ..logic_blocks.dynamics import integrate_uav, obstacle_step
from ..logic_blocks.formation import assign_vfts, follow_errors, safety_report
from ..logic_blocks.fusion import build_measurements, crlb_formation, link_geometry, twls_estimate
from ..logic_blocks.isac import estimate_range_velocity, synthesize_channel
from ..logic_blocks.nsb import avoidance_velocity, command_to_acceleration, fuse
from ..logic_blocks.vfeo import optimize, positions_to_velocity
from .base_worker import BaseWorker

logger = logging.getLogger("Workers")
slog = get_logger("Simulation")

FOLLOWING_THRESHOLD = 3.0  # m


def _positions(context: CycleContext) -> np.ndarray:
    return np.array([uav.position for uav in context.uavs])


def _velocities(context: CycleContext) -> np.ndarray:
    return np.array([uav.velocity for uav in context.uavs])


class LeaderWorker(BaseWorker):
    """Advance the virtual leader and bring obstacle events in and out of the scene."""

    stage = CycleStage.LEADER

    @validate_context
    def execute(self, context: CycleContext) -> str:
        context.leader = self.runtime.trajectory.state(context.t)

        events = self.runtime.config.obstacles
        present = next((i for i, event in enumerate(events) if event.present(context.t)), None)
        if present is None:
            context.obstacle = None
            context.obstacle_estimate = None
        elif present != context.obstacle_event or context.obstacle is None:
            context.obstacle = events[present].initial_state()
            context.obstacle_estimate = None
            logger.info(f"Obstacle {present} appears at t={context.t:g}s")
        context.obstacle_event = present
        return "leader advanced"


class SensingWorker(BaseWorker):
    """
    ISAC per link, TWLS at the MUAV, formation CRLB, and the VFEO decision
    for the k+1 layout.
    """

    stage = CycleStage.SENSING
    critical = False

    def can_handle(self, context: CycleContext) -> bool:
        if context.stage != self.stage or context.obstacle is None or context.obstacle_event is None:
            return False
        event = self.runtime.config.obstacles[context.obstacle_event]
        if not event.sensing(context.t):
            return False
        distance = np.linalg.norm(context.obstacle.position - context.uavs[0].position)
        return bool(distance <= self.runtime.config.isac.detection_radius)

    def _links(self, context: CycleContext, positions, velocities) -> List[LinkMeasurement]:
        runtime = self.runtime
        ranges, rates = link_geometry(context.obstacle.position, context.obstacle.velocity, positions, velocities)
        links = []
        for r, r_dot in zip(ranges, rates):
            grid = synthesize_channel(
                runtime.pattern, r, r_dot, xi=runtime.config.isac.xi, snr=runtime.snr, rng=runtime.noise_rng
            )
            r_hat, v_hat = estimate_range_velocity(grid, refine=runtime.config.isac.refine)
            links.append(LinkMeasurement(r_hat=r_hat, v_hat=v_hat, crlb=runtime.link_crlb))
        return links

    @validate_context
    def execute(self, context: CycleContext) -> str:
        runtime = self.runtime
        cfg = runtime.config
        positions, velocities = _positions(context), _velocities(context)

        meas = build_measurements(self._links(context, positions, velocities))
        hint = context.obstacle_estimate.s if context.obstacle_estimate is not None else None
        side = 1.0 if cfg.isac.plane_side == "above" else -1.0
        estimate = twls_estimate(meas, positions, velocities, hint=hint, side=side)
        context.obstacle_estimate = estimate
        context.stage2_ok = estimate.stage2_ok
        context.sensing_ran = True
        # Bound at the fused estimate, with the measured link ranges and rates.
        ranges = meas.r_ref + np.concatenate([[0.0], meas.r_diffs])
        rates = meas.v_ref + np.concatenate([[0.0], meas.v_diffs])
        context.formation_crlb = crlb_formation(
            positions, velocities, estimate.as_state(), meas.q, ranges=ranges, rates=rates
        )
        slog.sensing_result(
            context.t, context.formation_crlb.eps_p, context.formation_crlb.eps_v, estimate.stage2_ok
        )
        EventBus.emit(
            Events.SENSING_COMPLETE,
            {"t": context.t, "eps_p": context.formation_crlb.eps_p, "stage2_ok": estimate.stage2_ok},
            context.trace_id,
        )

        if cfg.vfeo.enabled:
            self._variable_formation(context, estimate.as_state())
        return f"eps_p={context.formation_crlb.eps_p:.4f}"

    def _variable_formation(self, context: CycleContext, estimate: ObstacleState):
        runtime = self.runtime
        cfg = runtime.config
        dt = cfg.dt
        leader_next = runtime.trajectory.state(context.t + dt)
        predicted = obstacle_step(estimate, cfg.obstacles[context.obstacle_event].model(dt))
        variances_r = np.full(runtime.formation.p, runtime.link_crlb.crlb_r)
        variances_v = np.full(runtime.formation.p, runtime.link_crlb.crlb_v)
        vfeo_ctx = VfeoContext(
            current_positions=_positions(context),
            leader_position=leader_next.position,
            leader_velocity=leader_next.velocity,
            obstacle=predicted,
            link_variances_r=variances_r,
            link_variances_v=variances_v,
            r_f=runtime.formation.r_f,
            r_min=runtime.formation.r_min,
            r_s=runtime.formation.r_s,
            v_max=cfg.v_max,
            dt=dt,
            zeta=cfg.vfeo.zeta,
            betas=runtime.formation.betas,
        )
        result = optimize(
            vfeo_ctx,
            mu_schedule=cfg.vfeo.mu_schedule,
            eps_term=cfg.vfeo.eps_term,
            max_iters=cfg.vfeo.max_iters,
            parameterization=cfg.vfeo.parameterization,
        )
        context.vfeo = result
        slog.vfeo_decision(context.t, result.triggered, result.eps_p_uniform, result.eps_p, result.iterations)
        if not result.triggered:
            return

        EventBus.emit(
            Events.VFEO_TRIGGERED,
            {"t": context.t, "eps_before": result.eps_p_uniform, "eps_after": result.eps_p},
            context.trace_id,
        )
        context.sensing_active = True
        if cfg.vfeo.sensing_mode == "vft_override":
            context.vft_override = np.array(result.positions)
        else:
            context.v2 = positions_to_velocity(_positions(context), result.positions, dt, cfg.v_max)


class FormationWorker(BaseWorker):
    """VFTs on the formation circle, or the VFEO layout when one was chosen this cycle."""

    stage = CycleStage.FORMATION

    @validate_context
    def execute(self, context: CycleContext) -> str:
        context.vfts = assign_vfts(context.leader, self.runtime.formation, overrides=context.vft_override)
        return "override" if context.vft_override is not None else "formula"


class PathFollowingWorker(BaseWorker):
    """Shared policy evaluated per UAV: v3ᵢ = μ(sᵢ)."""

    stage = CycleStage.FOLLOWING

    @validate_context
    def execute(self, context: CycleContext) -> str:
        observations = np.array(
            [
                normalize_observation(observe(uav, vft, context.leader))
                for uav, vft in zip(context.uavs, context.vfts)
            ]
        )
        context.v3 = actor_forward(self.runtime.policy, observations)
        return f"{len(context.uavs)} velocities"


class FusionWorker(BaseWorker):
    """Avoidance velocities and null-space fusion into commanded velocities."""

    stage = CycleStage.FUSION

    def _obstacle_position(self, context: CycleContext) -> Optional[np.ndarray]:
        if context.obstacle is None:
            return None
        if self.runtime.config.avoid_with_estimate and context.obstacle_estimate is not None:
            return context.obstacle_estimate.s
        return context.obstacle.position

    @validate_context
    def execute(self, context: CycleContext) -> str:
        runtime = self.runtime
        s = self._obstacle_position(context)
        v2 = context.v2 if context.v2 is not None else np.zeros((len(context.uavs), 3))
        commands, avoiding = [], []
        for i, uav in enumerate(context.uavs):
            v1, active = np.zeros(3), False
            if s is not None:
                v1, active = avoidance_velocity(uav.position, s, runtime.formation.r_s, runtime.gains.lambda1)
            subtasks = SubtaskVelocities(
                v1=v1,
                v2=v2[i],
                v3=context.v3[i],
                avoidance_active=active,
                sensing_active=context.sensing_active,
            )
            commands.append(fuse(subtasks, runtime.gains, uav.position, s, runtime.config.v_max).velocity)
            avoiding.append(active)
            if active:
                distance = float(np.linalg.norm(uav.position - s))
                slog.avoidance(context.t, i, distance)
                EventBus.emit(
                    Events.AVOIDANCE_ACTIVE, {"t": context.t, "uav": i, "distance": distance}, context.trace_id
                )
        context.commands = np.array(commands)
        context.avoiding = avoiding
        return f"{sum(avoiding)} avoiding"


class IntegrationWorker(BaseWorker):
    """Advance every UAV and the obstacle by ΔT."""

    stage = CycleStage.INTEGRATION

    @validate_context
    def execute(self, context: CycleContext) -> str:
        cfg = self.runtime.config
        next_uavs = []
        for uav, command in zip(context.uavs, context.commands):
            alpha = command_to_acceleration(command, uav.velocity, cfg.dt)
            next_uavs.append(integrate_uav(uav, alpha, cfg.dt, cfg.v_max))
        context.next_uavs = next_uavs

        if context.obstacle is not None:
            event = cfg.obstacles[context.obstacle_event]
            context.next_obstacle = obstacle_step(context.obstacle, event.model(cfg.dt), self.runtime.obstacle_rng)
        return "integrated"


class RecordWorker(BaseWorker):
    """One StepRecord per cycle, plus mission-phase bookkeeping."""

    stage = CycleStage.RECORD

    def _phase(self, context: CycleContext, e_d: List[float]) -> MissionPhase:
        if not context.ever_formed and all(e < FOLLOWING_THRESHOLD for e in e_d):
            context.ever_formed = True
        if any(context.avoiding):
            return MissionPhase.AVOIDING
        if context.sensing_ran:
            return MissionPhase.SENSING
        if not context.ever_formed:
            return MissionPhase.CHASING
        return MissionPhase.FOLLOWING

    @validate_context
    def execute(self, context: CycleContext) -> str:
        positions = _positions(context)
        errors = [follow_errors(uav, vft, context.leader) for uav, vft in zip(context.uavs, context.vfts)]
        phase = self._phase(context, [e.e_d for e in errors])
        if phase != context.phase:
            slog.cycle_phase(context.t, phase.value)
            EventBus.emit(Events.PHASE_CHANGE, {"t": context.t, "phase": phase.value}, context.trace_id)
        context.phase = phase

        obstacle_position = context.obstacle.position if context.obstacle is not None else None
        safety = safety_report(positions, obstacle_position, self.runtime.formation)
        vfeo = context.vfeo
        record = StepRecord(
            t=context.t,
            phase=phase,
            leader_position=context.leader.position.tolist(),
            leader_velocity=context.leader.velocity.tolist(),
            uavs=[
                UavRecord(
                    position=uav.position.tolist(),
                    velocity=uav.velocity.tolist(),
                    vft=np.asarray(vft).tolist(),
                    e_d=err.e_d,
                    e_v=err.e_v,
                    avoiding=avoid,
                )
                for uav, vft, err, avoid in zip(context.uavs, context.vfts, errors, context.avoiding)
            ],
            obstacle_present=context.obstacle is not None,
            obstacle_true=context.obstacle.o.tolist() if context.obstacle is not None else None,
            obstacle_estimate=(
                np.concatenate([context.obstacle_estimate.s, context.obstacle_estimate.s_dot]).tolist()
                if context.sensing_ran
                else None
            ),
            eps_p=context.formation_crlb.eps_p if context.formation_crlb is not None else None,
            eps_v=context.formation_crlb.eps_v if context.formation_crlb is not None else None,
            stage2_ok=context.stage2_ok,
            sensing_active=context.sensing_active,
            vfeo_triggered=bool(vfeo is not None and vfeo.triggered),
            eps_p_uniform=vfeo.eps_p_uniform if vfeo is not None else None,
            eps_p_optimized=vfeo.eps_p if vfeo is not None else None,
            vfeo_iterations=vfeo.iterations if vfeo is not None else 0,
            avoidance_active=any(context.avoiding),
            min_pair_distance=safety.min_pair_distance,
            min_obstacle_distance=safety.min_obstacle_distance,
            pairs_ok=safety.pairs_ok,
            obstacle_ok=safety.obstacle_ok,
        )
        context.record = record
        self.runtime.records.append(record)
        return f"t={context.t:g}"


def default_workers(runtime) -> List[BaseWorker]:
    """Workers in routing priority order."""
    return [
        LeaderWorker(runtime),
        SensingWorker(runtime),
        FormationWorker(runtime),
        PathFollowingWorker(runtime),
        FusionWorker(runtime),
        IntegrationWorker(runtime),
        RecordWorker(runtime),
    ]
