import numpy as np
import pytest

from formation_sensing_system.core.config import parse_scenario
from formation_sensing_system.core.event_bus import EventBus
from formation_sensing_system.logic_blocks.formation import circle_points, formation_heading

LEADER_START = np.array([150.0, 130.0, 102.0])


def pentagon_starts():
    """Formula VFTs of a five-UAV formation around the leader's start."""
    angles = formation_heading(LEADER_START) + 2 * np.pi * np.arange(5) / 5
    return circle_points(LEADER_START, 20.0, angles)


@pytest.fixture(autouse=True)
def clean_event_bus():
    EventBus.clear()
    yield
    EventBus.clear()


@pytest.fixture
def scenario_data():
    """Short sensing scenario: formed pentagon, obstacle below it from t=1 s, sensed for 3 s."""
    return {
        "name": "unit-sensing",
        "seed": 3,
        "duration": 6.0,
        "dt": 1.0,
        "leader": {
            "kind": "waypoints",
            "waypoints": [
                {"t": 0, "position": LEADER_START.tolist()},
                {"t": 10, "position": [190.0, 120.0, 104.0]},
            ],
        },
        "uavs": [{"position": p.tolist()} for p in pentagon_starts()],
        "obstacles": [
            {"position": [172.0, 113.0, 94.0], "velocity": [-3.0, 3.0, 1.0], "appear_s": 1.0, "observe_s": 3.0}
        ],
        "isac": {"plane_side": "below"},
        "vfeo": {"max_iters": 20},
        "training": {
            "episodes": 2,
            "steps_per_episode": 10,
            "eval_steps": 50,
            "batch_size": 8,
            "memory": 64,
        },
    }


@pytest.fixture
def scenario(scenario_data):
    return parse_scenario(scenario_data)
