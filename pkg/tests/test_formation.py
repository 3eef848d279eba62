import math

import numpy as np
import pytest

from formation_sensing_system.core.config import LeaderTrajectorySpec
from formation_sensing_system.core.exceptions import HeadingUndefinedError, InvalidArgumentError
from formation_sensing_system.core.models import FormationConfig, UavState, VirtualLeader
from formation_sensing_system.logic_blocks.formation import (
    assign_vfts,
    follow_errors,
    formation_heading,
    safety_report,
)
from formation_sensing_system.logic_blocks.trajectory import SerpentineTrajectory, build_trajectory


@pytest.fixture
def leader():
    return VirtualLeader(position=np.array([100.0, 100.0, 50.0]), velocity=np.array([5.0, 0.0, 0.0]))


def test_vfts_lie_on_the_formation_circle(leader):
    cfg = FormationConfig(p=5, r_f=20.0)
    vfts = assign_vfts(leader, cfg)
    assert vfts.shape == (5, 3)
    planar = np.linalg.norm(vfts[:, :2] - leader.position[:2], axis=1)
    np.testing.assert_allclose(planar, 20.0)
    np.testing.assert_allclose(vfts[:, 2], 50.0)
    # The MUAV sits on the bearing of the leader from the origin.
    np.testing.assert_allclose(vfts[0], leader.position + 20.0 * np.array([math.sqrt(0.5), math.sqrt(0.5), 0.0]))


def test_vft_overrides_are_returned_verbatim(leader):
    cfg = FormationConfig(p=5)
    overrides = np.arange(15.0).reshape(5, 3)
    np.testing.assert_array_equal(assign_vfts(leader, cfg, overrides=overrides), overrides)
    with pytest.raises(InvalidArgumentError):
        assign_vfts(leader, cfg, overrides=np.zeros((4, 3)))


def test_heading_undefined_at_origin():
    with pytest.raises(HeadingUndefinedError):
        formation_heading(np.array([0.0, 0.0, 30.0]))


def test_follow_errors(leader):
    uav = UavState(position=np.array([103.0, 104.0, 50.0]), velocity=np.array([5.0, 3.0, 4.0]))
    errors = follow_errors(uav, np.array([100.0, 100.0, 50.0]), leader)
    assert errors.e_d == pytest.approx(5.0)
    assert errors.e_v == pytest.approx(5.0)


def test_safety_report_bounds_are_inclusive():
    cfg = FormationConfig(p=3, r_min=5.0, r_s=5.0)
    positions = np.array([[0.0, 0.0, 0.0], [5.0, 0.0, 0.0], [0.0, 10.0, 0.0]])
    report = safety_report(positions, [0.0, -5.0, 0.0], cfg)
    assert report.min_pair_distance == pytest.approx(5.0)
    assert report.min_obstacle_distance == pytest.approx(5.0)
    assert report.pairs_ok and report.obstacle_ok

    report = safety_report(positions, [0.0, -4.9, 0.0], cfg)
    assert not report.obstacle_ok


def test_safety_report_without_obstacle():
    cfg = FormationConfig(p=2)
    report = safety_report([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]], None, cfg)
    assert math.isinf(report.min_obstacle_distance)
    assert report.obstacle_ok
    assert not report.pairs_ok


def test_safety_report_count_mismatch():
    with pytest.raises(InvalidArgumentError):
        safety_report(np.zeros((2, 3)), None, FormationConfig(p=5))


def test_waypoint_leader_interpolates_and_holds():
    trajectory = build_trajectory(LeaderTrajectorySpec())
    start = trajectory.state(0.0)
    np.testing.assert_allclose(start.position, [100.0, 100.0, 50.0])
    np.testing.assert_allclose(start.velocity, np.array([300.0, 100.0, 10.0]) / 60.0)
    np.testing.assert_allclose(trajectory.state(30.0).position, [250.0, 150.0, 55.0])

    end = trajectory.state(1000.0)
    np.testing.assert_allclose(end.position, [-100.0, 100.0, 110.0])
    np.testing.assert_allclose(end.velocity, np.zeros(3))


def test_serpentine_velocity_is_the_position_derivative():
    trajectory = SerpentineTrajectory(
        start=[100.0, 100.0, 50.0],
        speed=12.0,
        heading=math.radians(30.0),
        lateral_amplitude=40.0,
        lateral_period=120.0,
        vertical_amplitude=8.0,
        vertical_period=200.0,
    )
    np.testing.assert_allclose(trajectory.state(0.0).position, [100.0, 100.0, 50.0])
    h = 1e-4
    for t in (0.0, 37.0, 150.0):
        derivative = (trajectory.state(t + h).position - trajectory.state(t - h).position) / (2 * h)
        np.testing.assert_allclose(trajectory.state(t).velocity, derivative, rtol=1e-6, atol=1e-6)


def test_build_trajectory_overrides_start_and_heading():
    spec = LeaderTrajectorySpec(kind="serpentine", lateral_amplitude=0.0, vertical_amplitude=0.0)
    trajectory = build_trajectory(spec, start=[0.0, 0.0, 10.0], heading=0.0)
    np.testing.assert_allclose(trajectory.state(2.0).position, [24.0, 0.0, 10.0])
