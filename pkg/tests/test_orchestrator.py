import math
import threading
from unittest.mock import patch

import numpy as np
import pandas as pd
import pytest

from formation_sensing_system.actors.workers import IntegrationWorker
from formation_sensing_system.cognition.environment import ERROR_SCALE
from formation_sensing_system.cognition.networks import PolicyParams
from formation_sensing_system.core.config import parse_scenario
from formation_sensing_system.core.event_bus import EventBus, Events
from formation_sensing_system.core.exceptions import (
    InvalidArgumentError,
    SingularMatrixError,
    TrainingDivergenceError,
)
from formation_sensing_system.core.models import CycleStage, MissionPhase
from formation_sensing_system.core.orchestrator import (
    EXIT_DIVERGENCE,
    EXIT_OK,
    EXIT_SAFETY,
    Orchestrator,
    baseline_ordering,
    build_orchestrator,
    compare_baselines,
    frozen_geometry,
    monte_carlo_crlb,
    run_scenario,
)
from formation_sensing_system.core.router import StageRouter
from formation_sensing_system.infrastructure.persistence import records_to_frame

from .conftest import LEADER_START, pentagon_starts


@pytest.fixture
def policy():
    return PolicyParams.zeros()


# --- Cycle routing ---
def test_default_workers_cover_every_stage(scenario, policy):
    orchestrator = build_orchestrator(scenario, policy)
    stages = [worker.stage for worker in orchestrator.workers.values()]
    assert stages == [stage for stage in CycleStage if stage != CycleStage.COMPLETE]
    assert StageRouter(list(orchestrator.workers.values())).uncovered() == []


def test_router_skips_workers_that_cannot_handle_the_stage(scenario, policy):
    orchestrator = build_orchestrator(scenario, policy)
    router = StageRouter(list(orchestrator.workers.values()))
    context = orchestrator.initial_context()
    context.advance_stage(CycleStage.SENSING)
    # No obstacle yet.
    assert router.select_next(context) is None
    context.advance_stage(CycleStage.FORMATION)
    assert router.select_next(context).name == "FormationWorker"
    assert StageRouter(list(orchestrator.workers.values())[:2]).uncovered()[0] == CycleStage.FORMATION


def test_run_cycle_walks_to_complete(scenario, policy):
    orchestrator = build_orchestrator(scenario, policy)
    context = orchestrator.initial_context()
    context.reset_for_cycle(0, 0.0)
    context = orchestrator.run_cycle(context)

    assert context.stage == CycleStage.COMPLETE
    assert orchestrator.failure is None
    # No obstacle at t=0, so sensing is skipped.
    assert "SensingWorker" not in context.execution_history
    assert context.execution_history[0] == "LeaderWorker"
    assert context.execution_history[-1] == "RecordWorker"
    assert len(orchestrator.runtime.records) == 1
    assert EventBus.get_events(Events.CYCLE_COMPLETE)


def test_run_cycle_without_workers_fails(scenario, policy):
    orchestrator = Orchestrator(build_orchestrator(scenario, policy).runtime)
    with pytest.raises(ValueError):
        orchestrator.run_cycle(orchestrator.initial_context())


# --- Scenario runs ---
def test_scenario_records_one_row_per_cycle(scenario, policy):
    outcome = run_scenario(scenario, policy)
    assert outcome.exit_code == EXIT_OK
    assert len(outcome.records) == scenario.cycles
    assert [r.t for r in outcome.records] == [float(k) for k in range(scenario.cycles)]
    assert not outcome.records[0].obstacle_present
    assert all(r.obstacle_present for r in outcome.records[1:])


def test_scenario_senses_inside_the_observation_window(scenario, policy):
    outcome = run_scenario(scenario, policy)
    sensed = [r.t for r in outcome.records if r.obstacle_estimate is not None]
    assert sensed == [1.0, 2.0, 3.0]
    for record in outcome.records:
        if record.obstacle_estimate is None:
            continue
        assert record.phase == MissionPhase.SENSING
        assert record.eps_p > 0 and record.eps_v > 0
        error = np.linalg.norm(np.array(record.obstacle_estimate[:3]) - np.array(record.obstacle_true[:3]))
        assert error < 10.0
    assert EventBus.get_events(Events.SENSING_COMPLETE)


def test_scenario_is_deterministic(scenario, policy):
    first = records_to_frame(run_scenario(scenario, policy).records)
    second = records_to_frame(run_scenario(scenario, policy).records)
    pd.testing.assert_frame_equal(first, second)


def test_scenario_seed_changes_sensing_noise(scenario, policy):
    reseeded = scenario.model_copy(update={"seed": scenario.seed + 1})
    a = run_scenario(scenario, policy).records[1]
    b = run_scenario(reseeded, policy).records[1]
    assert a.obstacle_estimate != b.obstacle_estimate


def test_scenario_summary(scenario, policy):
    summary = run_scenario(scenario, policy).summary
    assert summary["scenario"] == "unit-sensing"
    assert summary["cycles"] == scenario.cycles
    assert summary["exit_code"] == EXIT_OK
    assert len(summary["following_error"]["mean_per_uav"]) == 5
    assert summary["sensing"]["sensing_cycles"] == 3
    assert summary["safety"]["safety_violations"] == 0
    assert sum(summary["phases"].values()) == scenario.cycles


def test_velocity_sensing_mode_moves_the_formation(scenario_data, policy):
    scenario_data["vfeo"] = {"zeta": 1e-9, "max_iters": 10, "sensing_mode": "velocity"}
    outcome = run_scenario(parse_scenario(scenario_data), policy)
    triggered = [r for r in outcome.records if r.vfeo_triggered]
    assert triggered
    assert all(r.sensing_active for r in triggered)
    assert all(r.eps_p_optimized <= r.eps_p_uniform for r in triggered)
    # The zero policy never moves a UAV; only the sensing velocity does.
    after = outcome.records[int(triggered[0].t) + 1]
    assert max(np.linalg.norm(u.velocity) for u in after.uavs) > 0


def test_vft_override_replaces_formula_targets(scenario_data, policy):
    scenario_data["vfeo"] = {"zeta": 1e-9, "max_iters": 10}
    outcome = run_scenario(parse_scenario(scenario_data), policy)
    triggered = [r for r in outcome.records if r.vfeo_triggered]
    assert triggered
    assert EventBus.get_events(Events.VFEO_TRIGGERED)
    record = triggered[0]
    # Override targets stay on the formation circle around the next leader position.
    leader_next = outcome.records[int(record.t) + 1].leader_position
    for uav in record.uavs:
        assert np.hypot(uav.vft[0] - leader_next[0], uav.vft[1] - leader_next[1]) == pytest.approx(20.0, abs=1e-3)


def test_sensing_failure_is_not_fatal(scenario_data, policy):
    # Every UAV on one line: the obstacle cannot be located, the run carries on.
    scenario_data["uavs"] = [{"position": [float(10 * i), float(10 * i), 0.0]} for i in range(5)]
    scenario_data["isac"]["detection_radius"] = 1000.0
    outcome = run_scenario(parse_scenario(scenario_data), policy)
    assert outcome.exit_code != EXIT_DIVERGENCE
    assert len(outcome.records) == 6
    assert any("SensingWorker" in error for error in outcome.errors)
    assert EventBus.get_events(Events.WORKER_ERROR)
    assert all(r.obstacle_estimate is None for r in outcome.records)


def test_critical_failure_ends_the_run(scenario, policy):
    with patch.object(IntegrationWorker, "execute", side_effect=SingularMatrixError("boom")):
        outcome = run_scenario(scenario, policy)
    assert outcome.exit_code == EXIT_DIVERGENCE
    assert outcome.records == []
    assert EventBus.get_events(Events.DIVERGENCE)
    assert outcome.summary["cycles"] == 0


def test_close_obstacle_is_a_safety_violation(scenario_data, policy):
    starts = pentagon_starts()
    scenario_data["obstacles"] = [{"position": (starts[0] + [1.0, 0.0, 0.0]).tolist()}]
    scenario_data["isac"]["detection_radius"] = 1e-3
    delivered = threading.Event()

    def on_event(event, payload):
        if event == Events.SAFETY_VIOLATION:
            delivered.set()

    EventBus.subscribe(on_event)
    outcome = run_scenario(parse_scenario(scenario_data), policy)
    assert delivered.wait(timeout=5.0)
    EventBus.unsubscribe(on_event)
    assert on_event not in EventBus._subscribers
    assert outcome.exit_code == EXIT_SAFETY
    first = outcome.records[0]
    assert first.avoidance_active and first.uavs[0].avoiding
    assert first.phase == MissionPhase.AVOIDING
    assert first.min_obstacle_distance == pytest.approx(1.0)
    assert EventBus.get_events(Events.SAFETY_VIOLATION)
    # Avoidance pushes the UAV away from the obstacle.
    assert outcome.records[1].min_obstacle_distance > first.min_obstacle_distance


def test_following_recovers_after_avoidance(scenario_data, policy):
    starts = pentagon_starts()
    outward = (starts[0] - LEADER_START) / np.linalg.norm(starts[0] - LEADER_START)
    scenario_data.update(duration=35.0)
    scenario_data["leader"]["waypoints"] = [
        {"t": 0, "position": LEADER_START.tolist()},
        {"t": 100, "position": LEADER_START.tolist()},
    ]
    # Head-on approach to UAV0 from outside the formation, gone at t=11 s.
    scenario_data["obstacles"] = [
        {
            "position": (starts[0] + 8.0 * outward).tolist(),
            "velocity": (-1.0 * outward).tolist(),
            "appear_s": 1.0,
            "disappear_s": 11.0,
            "observe_s": 1.0,
        }
    ]
    scenario_data["vfeo"] = {"enabled": False}

    def pursue(params, observations):
        return 0.5 * ERROR_SCALE * np.asarray(observations)[:, 8:11]

    with patch("formation_sensing_system.actors.workers.actor_forward", side_effect=pursue):
        outcome = run_scenario(parse_scenario(scenario_data), policy)

    assert outcome.exit_code == EXIT_OK
    records = outcome.records
    avoiding = [k for k, record in enumerate(records) if record.avoidance_active]
    assert avoiding
    first, last = avoiding[0], avoiding[-1]
    assert all(record.min_obstacle_distance >= 2.5 for record in records)
    assert not any(record.avoidance_active for record in records[last + 1 :])

    before = np.mean([record.uavs[0].e_d for record in records[:first]])
    displaced = max(record.uavs[0].e_d for record in records[first : last + 2])
    assert displaced > 1.0
    assert records[last + 20].uavs[0].e_d <= 1.1 * before + 1e-3


# --- Monte Carlo CRLB validation ---
def test_frozen_geometry_needs_an_obstacle(scenario_data):
    scenario_data["obstacles"] = []
    with pytest.raises(InvalidArgumentError):
        frozen_geometry(parse_scenario(scenario_data))


def test_noise_free_monte_carlo_is_exact(scenario):
    report = monte_carlo_crlb(scenario, 100, noise_free=True)
    assert report["rmse_pos"] < 1e-4
    assert report["rmse_vel"] < 1e-4
    assert report["eps_p"] > 0


def test_gaussian_monte_carlo_tracks_the_bound(scenario):
    report = monte_carlo_crlb(scenario, 400)
    assert 0.5 < report["ratio_pos"] < 2.0
    assert 0.5 < report["ratio_vel"] < 2.0


def test_monte_carlo_bound_scales_with_link_noise(scenario):
    base = monte_carlo_crlb(scenario, 100, noise_free=True)
    scaled = monte_carlo_crlb(scenario, 100, q_scale=4.0, noise_free=True)
    assert scaled["eps_p"] == pytest.approx(2 * base["eps_p"])


@pytest.mark.parametrize(
    "kwargs", [{"trials": 99}, {"trials": 100, "pipeline": "matlab"}, {"trials": 100, "q_scale": 0.0}]
)
def test_monte_carlo_rejects_bad_arguments(scenario, kwargs):
    with pytest.raises(InvalidArgumentError):
        monte_carlo_crlb(scenario, **kwargs)


# --- Reward-mode comparison ---
def test_compare_baselines_is_reproducible(scenario):
    table = compare_baselines(scenario, modes=["awpf", "fwpf_d_only"], seeds=[1, 1])
    assert list(table.columns) == ["mode", "seed", "following_error", "convergence_episode", "status"]
    assert len(table) == 4
    assert set(table["status"]) == {"ok"}
    for mode in ("awpf", "fwpf_d_only"):
        errors = table[table["mode"] == mode]["following_error"].tolist()
        assert errors[0] == errors[1]
        assert math.isfinite(errors[0])


def test_compare_baselines_needs_two_modes_and_a_seed(scenario):
    with pytest.raises(InvalidArgumentError):
        compare_baselines(scenario, modes=["awpf"], seeds=[0])
    with pytest.raises(InvalidArgumentError):
        compare_baselines(scenario, modes=["awpf", "fwpf_d_only"], seeds=[])


def test_compare_baselines_reports_divergence(scenario):
    with patch(
        "formation_sensing_system.core.orchestrator.train",
        side_effect=TrainingDivergenceError("non-finite training loss", {"episode": 0}),
    ):
        table = compare_baselines(scenario, modes=["awpf", "fwpf_dv_fixed"], seeds=[0])
    assert list(table["status"]) == ["diverged", "diverged"]
    assert table["following_error"].isna().all()


def _baseline_table(rows):
    return pd.DataFrame(rows, columns=["mode", "seed", "following_error", "convergence_episode", "status"])


def test_baseline_ordering_uses_medians_over_seeds():
    table = _baseline_table(
        [
            ("awpf", 0, 1.0, 3.0, "ok"),
            ("awpf", 1, 2.0, 4.0, "ok"),
            ("awpf", 2, 9.0, np.nan, "ok"),
            ("awpf", 3, np.nan, np.nan, "diverged"),
            ("fwpf_d_only", 0, 2.5, 5.0, "ok"),
            ("fwpf_d_only", 1, 3.0, 5.0, "ok"),
            ("fwpf_d_only", 2, 1.0, 5.0, "ok"),
            ("fwpf_dv_fixed", 0, 4.0, 4.0, "ok"),
            ("fwpf_dv_fixed", 1, 4.0, 6.0, "ok"),
            ("fwpf_dv_fixed", 2, 4.0, 8.0, "ok"),
        ]
    )
    ordering = baseline_ordering(table)
    assert ordering["median_following_error"] == {"awpf": 2.0, "fwpf_d_only": 2.5, "fwpf_dv_fixed": 4.0}
    assert ordering["median_convergence_episode"]["awpf"] == 3.5
    assert ordering["awpf_more_accurate"] is True
    assert ordering["awpf_converges_no_later"] is True
    assert ordering["best_awpf_following_error"] == 1.0
    assert ordering["following_within_limit"] is True
    assert baseline_ordering(table, following_limit=0.5)["following_within_limit"] is False


def test_baseline_ordering_without_a_comparison_mode():
    table = _baseline_table([("awpf", 0, 3.0, np.nan, "ok"), ("fwpf_d_only", 0, 2.0, 1.0, "ok")])
    ordering = baseline_ordering(table)
    assert ordering["awpf_more_accurate"] is False
    assert ordering["awpf_converges_no_later"] is None


def test_baseline_ordering_on_a_scaled_comparison(scenario):
    table = compare_baselines(scenario, modes=["awpf", "fwpf_d_only", "fwpf_dv_fixed"], seeds=[0, 1, 2])
    ordering = baseline_ordering(table)
    assert set(ordering["median_following_error"]) == {"awpf", "fwpf_d_only", "fwpf_dv_fixed"}
    assert isinstance(ordering["awpf_more_accurate"], bool)
    assert math.isfinite(ordering["best_awpf_following_error"])
    assert isinstance(ordering["following_within_limit"], bool)
