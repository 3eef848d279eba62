"""
Orchestrator: Stage-based routing of the per-cycle workers.
Emits events for traceability.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from ..actors.base_worker import BaseWorker, ScenarioRuntime
from ..actors.workers import default_workers
from ..cognition.ddpg import convergence_episode, evaluate, make_env, train
from ..cognition.networks import PolicyParams
from ..infrastructure.logger import system_logger
from ..logic_blocks.formation import assign_vfts
from ..logic_blocks.fusion import (
    build_measurements,
    crlb_formation,
    exact_measurements,
    formation_velocities,
    link_geometry,
    twls_estimate,
)
from ..logic_blocks.isac import estimate_range_velocity, synthesize_channel
from ..logic_blocks.numerics import Rng
from ..logic_blocks.trajectory import build_trajectory
from .config import ScenarioConfig
from .event_bus import EventBus, Events
from .exceptions import InvalidArgumentError, TrainingDivergenceError
from .models import CycleContext, CycleStage, LinkMeasurement, RewardMode, StepRecord, UavState, WorkerStatus
from .router import StageRouter

logger = logging.getLogger("Orchestrator")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SAFETY = 3
EXIT_DIVERGENCE = 4

SAFETY_FRACTION = 0.5  # violation below 0.5·r_s
FOLLOWING_LIMIT = 2.5  # m, following-phase mean e_d a trained policy should reach
MIN_TRIALS = 100


class Orchestrator:
    """
    Stage-based orchestrator for one scenario run.
    Each control cycle walks LEADER → … → COMPLETE on a shared CycleContext.
    """

    def __init__(self, runtime: ScenarioRuntime, max_steps: int = 20):
        self.runtime = runtime
        self.workers: Dict[str, BaseWorker] = {}
        self.max_steps = max_steps
        self.router: Optional[StageRouter] = None
        self.failure: Optional[str] = None

    def register_worker(self, worker: BaseWorker):
        """Add worker to pool (registration order is routing priority)."""
        self.workers[worker.name] = worker
        logger.debug(f"Registered: {worker.name}")

    def initial_context(self) -> CycleContext:
        uavs = [
            UavState(position=init.position, velocity=init.velocity, mass=init.mass)
            for init in self.runtime.config.uavs
        ]
        return CycleContext(uavs=uavs)

    def run_cycle(self, context: CycleContext) -> CycleContext:
        """
        Route workers until the cycle reaches COMPLETE.
        A critical worker error stops the cycle and sets `failure`.
        """
        if not self.workers:
            raise ValueError("No workers registered")
        if self.router is None:
            self.router = StageRouter(list(self.workers.values()))
            uncovered = self.router.uncovered()
            if uncovered:
                logger.warning(f"No worker for stages {[stage.value for stage in uncovered]}; they will be skipped")

        EventBus.emit(Events.CYCLE_START, {"k": context.k, "t": context.t}, context.trace_id)
        step = 0
        while step < self.max_steps:
            step += 1

            if context.stage == CycleStage.COMPLETE:
                break

            worker = self.router.select_next(context)
            if not worker:
                self._advance_stage_if_stuck(context)
                continue

            context.log_step(worker.name)
            result = worker.run(context)
            context = result.context

            if result.status == WorkerStatus.ERROR:
                EventBus.emit(
                    Events.WORKER_ERROR,
                    {"worker": worker.name, "t": context.t, "message": result.message},
                    context.trace_id,
                )
                if worker.critical:
                    self.failure = f"{worker.name} at t={context.t:g}s: {result.message}"
                    logger.error(f"Critical failure: {self.failure}")
                    break
                logger.warning(f"{worker.name} skipped at t={context.t:g}s: {result.message}")
                self._advance_stage_if_stuck(context)

        if step >= self.max_steps and context.stage != CycleStage.COMPLETE and self.failure is None:
            self.failure = f"cycle {context.k} stuck at stage {context.stage.value}"
            logger.error(self.failure)

        if self.failure is None:
            EventBus.emit(Events.CYCLE_COMPLETE, {"k": context.k, "t": context.t}, context.trace_id)
        return context

    def _advance_stage_if_stuck(self, context: CycleContext):
        """Advance stage if no worker handles it."""
        stage_order = list(CycleStage)
        current_idx = stage_order.index(context.stage)
        if current_idx < len(stage_order) - 1:
            context.advance_stage(stage_order[current_idx + 1])
            logger.debug(f"Advanced stage to {context.stage.value}")


@dataclass
class ScenarioOutcome:
    records: List[StepRecord]
    summary: Dict[str, Any]
    exit_code: int = EXIT_OK
    errors: List[str] = field(default_factory=list)


def build_orchestrator(config: ScenarioConfig, policy: PolicyParams) -> Orchestrator:
    runtime = ScenarioRuntime.build(config, policy)
    orchestrator = Orchestrator(runtime)
    for worker in default_workers(runtime):
        orchestrator.register_worker(worker)
    return orchestrator


def run_scenario(config: ScenarioConfig, policy: PolicyParams) -> ScenarioOutcome:
    """
    Run every control cycle of the scenario; deterministic from config.seed.

    Exit code 3 flags any UAV closer than 0.5·r_s to the obstacle; exit code 4
    flags a critical worker failure (the run stops at that cycle).
    """
    from ..templates.summary_template import SummaryTemplate

    orchestrator = build_orchestrator(config, policy)
    runtime = orchestrator.runtime
    context = orchestrator.initial_context()
    safety_floor = SAFETY_FRACTION * runtime.formation.r_s
    violations = 0

    logger.info(f"=== Scenario '{config.name}': {config.cycles} cycles, seed {config.seed} ===")
    for k in range(config.cycles):
        context.reset_for_cycle(k, k * config.dt)
        context = orchestrator.run_cycle(context)
        if orchestrator.failure is not None:
            EventBus.emit(Events.DIVERGENCE, {"t": context.t, "reason": orchestrator.failure}, context.trace_id)
            break
        if context.record is not None and context.record.min_obstacle_distance < safety_floor:
            violations += 1
            EventBus.emit(
                Events.SAFETY_VIOLATION,
                {"t": context.t, "distance": context.record.min_obstacle_distance},
                context.trace_id,
            )
        context.commit()

    if orchestrator.failure is not None:
        exit_code = EXIT_DIVERGENCE
    elif violations:
        exit_code = EXIT_SAFETY
    else:
        exit_code = EXIT_OK

    summary = SummaryTemplate().render(
        {"records": runtime.records, "config": config, "exit_code": exit_code, "errors": context.errors}
    )
    EventBus.emit(Events.RUN_COMPLETE, {"cycles": len(runtime.records), "exit_code": exit_code}, context.trace_id)
    logger.info(f"=== Scenario ended: {len(runtime.records)} records, exit code {exit_code} ===")
    return ScenarioOutcome(records=runtime.records, summary=summary, exit_code=exit_code, errors=list(context.errors))


# --- Monte Carlo validation of the formation CRLB ---
def frozen_geometry(config: ScenarioConfig):
    """
    Formula VFTs around the leader at the first obstacle event, every UAV
    moving with the leader, and the event's initial obstacle state.
    """
    if not config.obstacles:
        raise InvalidArgumentError("scenario has no obstacle event to validate against")
    event = config.obstacles[0]
    formation = config.formation.to_config()
    leader = build_trajectory(config.leader).state(event.appear_s)
    positions = assign_vfts(leader, formation)
    velocities = formation_velocities(leader.velocity, formation.p)
    return positions, velocities, event.initial_state()


def monte_carlo_crlb(
    config: ScenarioConfig,
    trials: int,
    pipeline: str = "gaussian",
    q_scale: float = 1.0,
    noise_free: bool = False,
) -> Dict[str, Any]:
    """
    RMSE of the TWLS estimate against the formation CRLB at a frozen geometry.

    `gaussian` perturbs the true per-link range and rate with N(0, q_scale·CRLB);
    `isac` synthesizes and estimates every link. Fusion errors propagate.
    """
    if trials < MIN_TRIALS:
        raise InvalidArgumentError(f"need at least {MIN_TRIALS} trials, got {trials}")
    if pipeline not in ("gaussian", "isac"):
        raise InvalidArgumentError(f"unknown pipeline '{pipeline}'")
    if q_scale <= 0:
        raise InvalidArgumentError(f"q_scale must be positive, got {q_scale}")

    runtime = ScenarioRuntime.build(config, PolicyParams.zeros())
    positions, velocities, obstacle = frozen_geometry(config)
    p = positions.shape[0]
    ranges, rates = link_geometry(obstacle.position, obstacle.velocity, positions, velocities)
    link_crlb = runtime.link_crlb
    if pipeline == "gaussian":
        link_crlb = link_crlb.model_copy(
            update={name: q_scale * getattr(link_crlb, name) for name in ("crlb_r", "crlb_v", "crlb_tau", "crlb_fd")}
        )
    var_r = np.full(p, link_crlb.crlb_r)
    var_v = np.full(p, link_crlb.crlb_v)
    q = exact_measurements(obstacle, positions, velocities, var_r, var_v).q
    bound = crlb_formation(positions, velocities, obstacle, q)

    rng = Rng(config.seed).substream("montecarlo")
    side = 1.0 if config.isac.plane_side == "above" else -1.0
    pos_sq, vel_sq = 0.0, 0.0
    for _ in range(trials):
        if noise_free:
            meas = exact_measurements(obstacle, positions, velocities, var_r, var_v)
        elif pipeline == "gaussian":
            r_hat = ranges + rng.normal(0.0, np.sqrt(link_crlb.crlb_r), p)
            v_hat = rates + rng.normal(0.0, np.sqrt(link_crlb.crlb_v), p)
            meas = build_measurements(
                [LinkMeasurement(r_hat=r, v_hat=v, crlb=link_crlb) for r, v in zip(r_hat, v_hat)]
            )
        else:
            links = []
            for r, r_dot in zip(ranges, rates):
                grid = synthesize_channel(runtime.pattern, r, r_dot, xi=config.isac.xi, snr=runtime.snr, rng=rng)
                r_hat, v_hat = estimate_range_velocity(grid, refine=True)
                links.append(LinkMeasurement(r_hat=r_hat, v_hat=v_hat, crlb=link_crlb))
            meas = build_measurements(links)

        estimate = twls_estimate(meas, positions, velocities, hint=obstacle.position, side=side)
        pos_sq += float(np.sum((estimate.s - obstacle.position) ** 2))
        vel_sq += float(np.sum((estimate.s_dot - obstacle.velocity) ** 2))

    rmse_pos = float(np.sqrt(pos_sq / trials))
    rmse_vel = float(np.sqrt(vel_sq / trials))
    report = {
        "pipeline": pipeline,
        "trials": trials,
        "q_scale": q_scale,
        "noise_free": noise_free,
        "rmse_pos": rmse_pos,
        "rmse_vel": rmse_vel,
        "eps_p": bound.eps_p,
        "eps_v": bound.eps_v,
        "ratio_pos": rmse_pos / bound.eps_p,
        "ratio_vel": rmse_vel / bound.eps_v,
    }
    system_logger.info("Monte Carlo CRLB check", extra={**report, "type": "montecarlo"})
    return report


# --- Reward-mode comparison ---
def compare_baselines(
    config: ScenarioConfig,
    modes: Sequence[RewardMode],
    seeds: Sequence[int],
    episodes: Optional[int] = None,
    steps: Optional[int] = None,
) -> pd.DataFrame:
    """
    Train every mode with every seed on the same budget. A diverged cell is
    reported with status 'diverged' and NaN metrics; the table is still built.
    """
    modes = [RewardMode(mode) for mode in modes]
    if len(modes) < 2:
        raise InvalidArgumentError("compare_baselines needs at least two modes")
    if not seeds:
        raise InvalidArgumentError("compare_baselines needs at least one seed")

    overrides = {}
    if episodes is not None:
        overrides["episodes"] = episodes
    if steps is not None:
        overrides["steps_per_episode"] = steps

    rows = []
    for mode in modes:
        spec = config.training.model_copy(update={**overrides, "mode": mode})
        for seed in seeds:
            row = {"mode": mode.value, "seed": seed}
            try:
                result = train(
                    spec,
                    seed,
                    r_f=config.formation.r_f,
                    dt=config.dt,
                    v_max=config.v_max,
                    on_episode=lambda episode, reward, m=mode: system_logger.training_episode(m.value, episode, reward),
                )
                env = make_env(spec, Rng(seed).substream("evaluation"), config.formation.r_f, config.dt, config.v_max)
                evaluation = evaluate(result.params, env, spec.eval_steps)
                converged = convergence_episode(result.rewards)
                row.update(
                    following_error=evaluation.following_error,
                    convergence_episode=float(converged) if converged is not None else np.nan,
                    status="ok",
                )
            except TrainingDivergenceError as e:
                logger.warning(f"{mode.value} seed {seed} diverged: {e} {e.diagnostics}")
                EventBus.emit(Events.DIVERGENCE, {"mode": mode.value, "seed": seed, "reason": str(e)})
                row.update(following_error=np.nan, convergence_episode=np.nan, status="diverged")
            rows.append(row)

    return pd.DataFrame(rows, columns=["mode", "seed", "following_error", "convergence_episode", "status"])


def baseline_ordering(table: pd.DataFrame, following_limit: float = FOLLOWING_LIMIT) -> Dict[str, Any]:
    """
    Per-mode medians over seeds from a `compare_baselines` table, and the
    orderings they should show. Diverged cells are left out of the medians;
    an ordering involving a mode with no finite value is None.
    """
    ok = table[table["status"] == "ok"]
    errors = ok.groupby("mode")["following_error"].median()
    convergence = ok.dropna(subset=["convergence_episode"]).groupby("mode")["convergence_episode"].median()

    def compare(series: pd.Series, left: str, right: str, strict: bool) -> Optional[bool]:
        if left not in series.index or right not in series.index:
            return None
        return bool(series[left] < series[right]) if strict else bool(series[left] <= series[right])

    awpf_errors = ok[ok["mode"] == RewardMode.AWPF.value]["following_error"].dropna()
    best = float(awpf_errors.min()) if not awpf_errors.empty else math.nan
    return {
        "median_following_error": {mode: float(value) for mode, value in errors.items()},
        "median_convergence_episode": {mode: float(value) for mode, value in convergence.items()},
        "awpf_more_accurate": compare(errors, RewardMode.AWPF.value, RewardMode.FWPF_D_ONLY.value, strict=True),
        "awpf_converges_no_later": compare(
            convergence, RewardMode.AWPF.value, RewardMode.FWPF_DV_FIXED.value, strict=False
        ),
        "best_awpf_following_error": best,
        "following_within_limit": bool(best <= following_limit) if math.isfinite(best) else None,
    }
