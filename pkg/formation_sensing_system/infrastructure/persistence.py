"""
CSV/JSON persistence for record streams, reward curves and reports.

Record CSV column order:
    t, phase,
    leader_{x,y,z}, leader_{vx,vy,vz},
    per UAV i: uav{i}_{x,y,z}, uav{i}_{vx,vy,vz}, uav{i}_vft_{x,y,z}, uav{i}_e_d, uav{i}_e_v, uav{i}_avoiding,
    obstacle_present, obstacle_{x,y,z,vx,vy,vz}, estimate_{x,y,z,vx,vy,vz},
    eps_p, eps_v, stage2_ok, sensing_active, vfeo_triggered, eps_p_uniform, eps_p_optimized,
    vfeo_iterations, avoidance_active, min_pair_distance, min_obstacle_distance, pairs_ok, obstacle_ok
Missing values (no obstacle, no sensing) are empty cells.
"""

import json
import logging
import os
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd

from ..core.models import StepRecord

logger = logging.getLogger("Persistence")

AXES = ("x", "y", "z")
STATE_AXES = ("x", "y", "z", "vx", "vy", "vz")
TRAILING_FIELDS = (
    "eps_p",
    "eps_v",
    "stage2_ok",
    "sensing_active",
    "vfeo_triggered",
    "eps_p_uniform",
    "eps_p_optimized",
    "vfeo_iterations",
    "avoidance_active",
    "min_pair_distance",
    "min_obstacle_distance",
    "pairs_ok",
    "obstacle_ok",
)


def _named(prefix: str, axes: Sequence[str], values: Optional[Sequence[float]]) -> Dict[str, Any]:
    if values is None:
        return {f"{prefix}_{axis}": None for axis in axes}
    return {f"{prefix}_{axis}": float(value) for axis, value in zip(axes, values)}


def flatten_record(record: StepRecord) -> Dict[str, Any]:
    row: Dict[str, Any] = {"t": record.t, "phase": record.phase.value}
    row.update(_named("leader", AXES, record.leader_position))
    row.update(_named("leader", ("vx", "vy", "vz"), record.leader_velocity))
    for i, uav in enumerate(record.uavs):
        row.update(_named(f"uav{i}", AXES, uav.position))
        row.update(_named(f"uav{i}", ("vx", "vy", "vz"), uav.velocity))
        row.update(_named(f"uav{i}_vft", AXES, uav.vft))
        row[f"uav{i}_e_d"] = uav.e_d
        row[f"uav{i}_e_v"] = uav.e_v
        row[f"uav{i}_avoiding"] = uav.avoiding
    row["obstacle_present"] = record.obstacle_present
    row.update(_named("obstacle", STATE_AXES, record.obstacle_true))
    row.update(_named("estimate", STATE_AXES, record.obstacle_estimate))
    for name in TRAILING_FIELDS:
        row[name] = getattr(record, name)
    return row


def records_to_frame(records: Sequence[StepRecord]) -> pd.DataFrame:
    """One row per control cycle, columns in the documented order."""
    return pd.DataFrame([flatten_record(record) for record in records])


def uav_count(frame: pd.DataFrame) -> int:
    return sum(1 for column in frame.columns if column.startswith("uav") and column.endswith("_e_d"))


def _ensure_parent(path: str):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)


def write_records(records: Sequence[StepRecord], path: str) -> str:
    _ensure_parent(path)
    records_to_frame(records).to_csv(path, index=False)
    logger.info(f"Wrote {len(records)} records to {path}")
    return path


def read_records(path: str) -> pd.DataFrame:
    if not os.path.exists(path):
        raise FileNotFoundError(f"Records file not found: {path}")
    return pd.read_csv(path)


def write_reward_curve(rewards: List[float], path: str) -> str:
    _ensure_parent(path)
    pd.DataFrame({"episode": range(len(rewards)), "mean_reward": rewards}).to_csv(path, index=False)
    return path


def read_reward_curve(path: str) -> pd.DataFrame:
    if not os.path.exists(path):
        raise FileNotFoundError(f"Reward curve not found: {path}")
    return pd.read_csv(path)


def write_table(frame: pd.DataFrame, path: str) -> str:
    _ensure_parent(path)
    frame.to_csv(path, index=False)
    return path


def write_json(data: Dict[str, Any], path: str) -> str:
    _ensure_parent(path)
    with open(path, "w") as f:
        json.dump(data, f, indent=2, default=str)
    logger.info(f"Saved: {path}")
    return path
