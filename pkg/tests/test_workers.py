from unittest.mock import patch

import numpy as np
import pytest

from formation_sensing_system.actors.base_worker import ScenarioRuntime
from formation_sensing_system.actors.workers import (
    FormationWorker,
    FusionWorker,
    LeaderWorker,
    PathFollowingWorker,
    RecordWorker,
    SensingWorker,
)
from formation_sensing_system.cognition.networks import PolicyParams
from formation_sensing_system.core.config import parse_scenario
from formation_sensing_system.core.models import (
    CycleContext,
    CycleStage,
    LinkMeasurement,
    MissionPhase,
    ObstacleState,
    UavState,
    WorkerStatus,
)
from formation_sensing_system.core.orchestrator import build_orchestrator
from formation_sensing_system.logic_blocks.fusion import build_measurements, crlb_formation, link_geometry

from .conftest import pentagon_starts


@pytest.fixture
def runtime(scenario):
    return ScenarioRuntime.build(scenario, PolicyParams.zeros())


@pytest.fixture
def context():
    ctx = CycleContext(uavs=[UavState(position=p, velocity=np.zeros(3)) for p in pentagon_starts()])
    ctx.reset_for_cycle(1, 1.0)
    return ctx


def test_leader_worker_brings_obstacles_into_the_scene(runtime, context):
    worker = LeaderWorker(runtime)
    context.reset_for_cycle(0, 0.0)
    assert worker.run(context).status == WorkerStatus.COMPLETE
    assert context.obstacle is None
    assert context.stage == CycleStage.SENSING

    context.reset_for_cycle(1, 1.0)
    worker.run(context)
    assert context.obstacle_event == 0
    np.testing.assert_allclose(context.obstacle.position, [172.0, 113.0, 94.0])
    np.testing.assert_allclose(context.leader.position, [154.0, 129.0, 102.2])


def test_sensing_worker_waits_for_an_observable_obstacle(runtime, context):
    sensing = SensingWorker(runtime)
    context.advance_stage(CycleStage.SENSING)
    assert not sensing.can_handle(context)

    LeaderWorker(runtime).execute(context)
    assert sensing.can_handle(context)
    context.reset_for_cycle(4, 4.0)
    LeaderWorker(runtime).execute(context)
    context.advance_stage(CycleStage.SENSING)
    # Past the observation window.
    assert not sensing.can_handle(context)


def test_sensing_worker_respects_detection_radius(scenario_data):
    scenario_data["isac"]["detection_radius"] = 1.0
    orchestrator = build_orchestrator(parse_scenario(scenario_data), PolicyParams.zeros())
    sensing = SensingWorker(orchestrator.runtime)
    context = orchestrator.initial_context()
    context.reset_for_cycle(1, 1.0)
    LeaderWorker(orchestrator.runtime).execute(context)
    context.advance_stage(CycleStage.SENSING)
    assert not sensing.can_handle(context)


def test_sensing_worker_estimates_and_bounds(runtime, context):
    LeaderWorker(runtime).execute(context)
    context.advance_stage(CycleStage.SENSING)
    result = SensingWorker(runtime).run(context)

    assert result.status == WorkerStatus.COMPLETE
    assert context.sensing_ran
    assert context.formation_crlb.eps_p > 0
    assert context.vfeo is not None
    assert context.stage == CycleStage.FORMATION


def test_sensing_bound_uses_the_measured_ranges(runtime, context):
    LeaderWorker(runtime).execute(context)
    context.advance_stage(CycleStage.SENSING)
    positions = np.array([uav.position for uav in context.uavs])
    velocities = np.array([uav.velocity for uav in context.uavs])
    ranges, rates = link_geometry(context.obstacle.position, context.obstacle.velocity, positions, velocities)
    # A common bias leaves the differences, and so the fused estimate, untouched.
    links = [
        LinkMeasurement(r_hat=r + 5.0, v_hat=v + 0.5, crlb=runtime.link_crlb) for r, v in zip(ranges, rates)
    ]
    with patch.object(SensingWorker, "_links", return_value=links):
        assert SensingWorker(runtime).run(context).status == WorkerStatus.COMPLETE

    q = build_measurements(links).q
    expected = crlb_formation(
        positions, velocities, context.obstacle_estimate.as_state(), q, ranges=ranges + 5.0, rates=rates + 0.5
    )
    at_truth = crlb_formation(positions, velocities, context.obstacle, q)
    assert context.formation_crlb.eps_p == pytest.approx(expected.eps_p)
    assert context.formation_crlb.eps_p != pytest.approx(at_truth.eps_p, rel=1e-3)


def test_sensing_worker_failure_is_not_critical(runtime):
    collinear = CycleContext(
        uavs=[UavState(position=[150.0 + 10 * i, 130.0, 102.0], velocity=np.zeros(3)) for i in range(5)]
    )
    collinear.reset_for_cycle(1, 1.0)
    LeaderWorker(runtime).execute(collinear)
    collinear.advance_stage(CycleStage.SENSING)
    worker = SensingWorker(runtime)
    result = worker.run(collinear)

    assert result.status == WorkerStatus.ERROR
    assert not worker.critical
    assert collinear.errors and collinear.errors[0].startswith("SensingWorker@1")
    assert not collinear.sensing_ran


def test_formation_worker_applies_overrides(runtime, context):
    LeaderWorker(runtime).execute(context)
    FormationWorker(runtime).execute(context)
    formula = context.vfts
    assert formula.shape == (5, 3)

    override = formula + 1.0
    context.vft_override = override
    assert FormationWorker(runtime).execute(context) == "override"
    np.testing.assert_array_equal(context.vfts, override)


def test_zero_policy_commands_no_motion(runtime, context):
    LeaderWorker(runtime).execute(context)
    FormationWorker(runtime).execute(context)
    PathFollowingWorker(runtime).execute(context)
    np.testing.assert_array_equal(context.v3, np.zeros((5, 3)))


def test_fusion_worker_avoids_a_close_obstacle(runtime, context):
    LeaderWorker(runtime).execute(context)
    context.obstacle = ObstacleState.from_parts(context.uavs[2].position + [0.0, 0.0, -2.0], np.zeros(3))
    context.v3 = np.zeros((5, 3))
    FusionWorker(runtime).execute(context)

    assert context.avoiding == [False, False, True, False, False]
    # Straight up, away from the obstacle below.
    direction = context.commands[2] / np.linalg.norm(context.commands[2])
    np.testing.assert_allclose(direction, [0.0, 0.0, 1.0], atol=1e-12)


def test_record_worker_marks_a_formed_formation(scenario):
    orchestrator = build_orchestrator(scenario, PolicyParams.zeros())
    context = orchestrator.initial_context()
    context.reset_for_cycle(0, 0.0)
    context = orchestrator.run_cycle(context)

    assert context.phase == MissionPhase.FOLLOWING
    assert context.ever_formed
    assert max(uav.e_d for uav in context.record.uavs) < 1e-9


def test_record_worker_chases_until_formed(scenario_data):
    scenario_data["uavs"] = [{"position": [float(10 * i), 0.0, 0.0]} for i in range(5)]
    orchestrator = build_orchestrator(parse_scenario(scenario_data), PolicyParams.zeros())
    context = orchestrator.initial_context()
    context.reset_for_cycle(0, 0.0)
    context = orchestrator.run_cycle(context)

    assert context.phase == MissionPhase.CHASING
    assert not context.ever_formed
    assert isinstance(orchestrator.workers["RecordWorker"], RecordWorker)
