import numpy as np
import pytest

from formation_sensing_system.core.exceptions import DegenerateGeometryError, InvalidArgumentError
from formation_sensing_system.core.models import FusionGains, SubtaskVelocities
from formation_sensing_system.logic_blocks.nsb import (
    avoidance_velocity,
    command_to_acceleration,
    fuse,
    null_projector,
)

UAV = np.array([10.0, 0.0, 50.0])
OBSTACLE = np.array([13.0, 4.0, 50.0])


def test_avoidance_pushes_away_inside_the_radius():
    v1, active = avoidance_velocity(UAV, OBSTACLE, r_s=8.0, lambda1=2.0)
    assert active
    # Distance 5, so the push is λ₁·(r_s − r) = 6 along the LOS away from the obstacle.
    np.testing.assert_allclose(v1, 6.0 * np.array([-0.6, -0.8, 0.0]))


def test_avoidance_inactive_on_the_boundary():
    v1, active = avoidance_velocity(UAV, OBSTACLE, r_s=5.0, lambda1=2.0)
    assert not active
    np.testing.assert_array_equal(v1, np.zeros(3))


def test_avoidance_rejects_coincident_points():
    with pytest.raises(DegenerateGeometryError):
        avoidance_velocity(UAV, UAV, r_s=5.0, lambda1=1.0)


def test_null_projector_removes_the_los_component():
    projector = null_projector(UAV, OBSTACLE)
    los = (UAV - OBSTACLE) / 5.0
    np.testing.assert_allclose(projector @ los, np.zeros(3), atol=1e-12)
    np.testing.assert_allclose(projector @ projector, projector, atol=1e-12)
    tangent = np.array([0.0, 0.0, 1.0])
    np.testing.assert_allclose(projector @ tangent, tangent)


def test_fusion_without_avoidance_sums_sensing_and_following():
    velocities = SubtaskVelocities(v2=[1.0, 0.0, 0.0], v3=[0.0, 2.0, 0.0])
    command = fuse(velocities, FusionGains(k2=0.5), UAV, None, v_max=78.0)
    np.testing.assert_allclose(command.velocity, [0.5, 2.0, 0.0])
    assert not command.avoidance_active


def test_fusion_projects_following_while_avoiding():
    v1, active = avoidance_velocity(UAV, OBSTACLE, r_s=8.0, lambda1=1.0)
    # Path following straight at the obstacle.
    toward = (OBSTACLE - UAV) / 5.0 * 10.0
    velocities = SubtaskVelocities(v1=v1, v3=toward, avoidance_active=active)
    command = fuse(velocities, FusionGains(), UAV, OBSTACLE, v_max=78.0)
    np.testing.assert_allclose(command.velocity, v1, atol=1e-12)
    assert command.avoidance_active


def test_fusion_clips_to_the_speed_limit():
    velocities = SubtaskVelocities(v3=[100.0, 0.0, 0.0])
    command = fuse(velocities, FusionGains(), UAV, None, v_max=78.0)
    assert np.linalg.norm(command.velocity) == pytest.approx(78.0)


def test_fusion_needs_an_obstacle_while_avoiding():
    with pytest.raises(InvalidArgumentError):
        fuse(SubtaskVelocities(avoidance_active=True), FusionGains(), UAV, None, v_max=78.0)


def test_command_to_acceleration():
    np.testing.assert_allclose(command_to_acceleration([4.0, 0.0, 0.0], [2.0, 0.0, 0.0], 0.5), [4.0, 0.0, 0.0])
    with pytest.raises(InvalidArgumentError):
        command_to_acceleration(np.zeros(3), np.zeros(3), 0.0)
