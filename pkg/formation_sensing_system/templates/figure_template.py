"""
Figure Template - projects a record stream onto the series behind each plot.
Plotting itself happens elsewhere; every dataset is written as CSV.
"""

import math
from typing import Any, Callable, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from ..core.exceptions import InvalidArgumentError
from ..core.models import FIGURE_IDS, FigureDataset, StepRecord
from ..infrastructure.persistence import records_to_frame, uav_count
from .base_template import ReportTemplate

REWARD_WINDOW = 10

Records = Union[Sequence[StepRecord], pd.DataFrame]


def _series(values) -> List[Any]:
    out = []
    for value in np.asarray(values, dtype=float):
        out.append(None if math.isnan(value) else float(value))
    return out


def _norm(frame: pd.DataFrame, columns: Sequence[str]) -> np.ndarray:
    return np.sqrt(sum(frame[column].astype(float) ** 2 for column in columns)).to_numpy()


def _xyz(prefix: str) -> List[str]:
    return [f"{prefix}_{axis}" for axis in ("x", "y", "z")]


def _velocity(prefix: str) -> List[str]:
    return [f"{prefix}_{axis}" for axis in ("vx", "vy", "vz")]


# --- Per-figure projections (frame in, named series out) ---
def _trajectories(frame: pd.DataFrame) -> Dict[str, Any]:
    columns = {"t": frame["t"]}
    for column in _xyz("leader"):
        columns[column] = frame[column]
    for i in range(uav_count(frame)):
        for column in _xyz(f"uav{i}") + _xyz(f"uav{i}_vft"):
            columns[column] = frame[column]
    return columns


def _following_errors(frame: pd.DataFrame) -> Dict[str, Any]:
    columns = {"t": frame["t"]}
    for i in range(uav_count(frame)):
        columns[f"uav{i}_e_d"] = frame[f"uav{i}_e_d"]
    return columns


def _speeds(frame: pd.DataFrame) -> Dict[str, Any]:
    p = uav_count(frame)
    speeds = {f"uav{i}_speed": _norm(frame, _velocity(f"uav{i}")) for i in range(p)}
    return {
        "t": frame["t"],
        "mean_speed": np.mean(np.vstack(list(speeds.values())), axis=0),
        "leader_speed": _norm(frame, _velocity("leader")),
        **speeds,
    }


def _reward_curve(frame: pd.DataFrame) -> Dict[str, Any]:
    if "mean_reward" not in frame.columns:
        raise InvalidArgumentError("fig8 needs a reward curve table (episode, mean_reward)")
    rewards = frame["mean_reward"].astype(float)
    return {
        "episode": frame["episode"],
        "mean_reward": rewards,
        "moving_average": rewards.rolling(REWARD_WINDOW, min_periods=1).mean(),
    }


def _mean_errors(frame: pd.DataFrame) -> Dict[str, Any]:
    p = uav_count(frame)
    return {
        "t": frame["t"],
        "mean_e_d": frame[[f"uav{i}_e_d" for i in range(p)]].astype(float).mean(axis=1),
        "mean_e_v": frame[[f"uav{i}_e_v" for i in range(p)]].astype(float).mean(axis=1),
    }


def _sensed(frame: pd.DataFrame) -> pd.DataFrame:
    return frame[frame["estimate_x"].notna()]


def _sensing_plan_view(frame: pd.DataFrame) -> Dict[str, Any]:
    sensed = _sensed(frame)
    columns = {"t": sensed["t"]}
    for column in ("obstacle_x", "obstacle_y", "estimate_x", "estimate_y"):
        columns[column] = sensed[column]
    for i in range(uav_count(frame)):
        columns[f"uav{i}_x"] = sensed[f"uav{i}_x"]
        columns[f"uav{i}_y"] = sensed[f"uav{i}_y"]
    return columns


def _positioning_error(frame: pd.DataFrame) -> Dict[str, Any]:
    sensed = _sensed(frame)
    position_error = np.sqrt(
        sum((sensed[f"estimate_{a}"] - sensed[f"obstacle_{a}"]) ** 2 for a in ("x", "y", "z"))
    )
    velocity_error = np.sqrt(
        sum((sensed[f"estimate_{a}"] - sensed[f"obstacle_{a}"]) ** 2 for a in ("vx", "vy", "vz"))
    )
    return {
        "t": sensed["t"],
        "position_error": position_error,
        "velocity_error": velocity_error,
        "eps_p": sensed["eps_p"],
        "eps_v": sensed["eps_v"],
        "eps_p_uniform": sensed["eps_p_uniform"],
        "eps_p_optimized": sensed["eps_p_optimized"],
    }


def _formation_comparison(variable: pd.DataFrame, fixed: pd.DataFrame) -> Dict[str, Any]:
    """Obstacle positioning error and ε_P of a variable-formation run beside a fixed-formation run."""

    def side(frame: pd.DataFrame, tag: str) -> pd.DataFrame:
        columns = _positioning_error(frame)
        return pd.DataFrame(
            {
                "t": columns["t"].to_numpy(),
                f"{tag}_position_error": np.asarray(columns["position_error"], dtype=float),
                f"{tag}_eps_p": columns["eps_p"].to_numpy(dtype=float),
            }
        )

    merged = pd.merge(side(variable, "vf"), side(fixed, "ff"), on="t", how="outer").sort_values("t")
    return {name: merged[name] for name in ("t", "vf_position_error", "ff_position_error", "vf_eps_p", "ff_eps_p")}


def _avoidance_paths(frame: pd.DataFrame) -> Dict[str, Any]:
    present = frame[frame["obstacle_present"].astype(bool)]
    columns = {"t": present["t"]}
    for column in _xyz("obstacle"):
        columns[column] = present[column]
    for i in range(uav_count(frame)):
        for column in _xyz(f"uav{i}"):
            columns[column] = present[column]
        columns[f"uav{i}_avoiding"] = present[f"uav{i}_avoiding"].astype(float)
    columns["min_obstacle_distance"] = present["min_obstacle_distance"]
    return columns


def _avoidance_errors(frame: pd.DataFrame) -> Dict[str, Any]:
    columns = _following_errors(frame)
    columns["avoidance_active"] = frame["avoidance_active"].astype(float)
    columns["min_obstacle_distance"] = frame["min_obstacle_distance"]
    return columns


PROJECTIONS: Dict[str, Callable[[pd.DataFrame], Dict[str, Any]]] = {
    "fig6": _trajectories,
    "fig7": _following_errors,
    "figv": _speeds,
    "fig8": _reward_curve,
    "fig9": _mean_errors,
    "fig10": _sensing_plan_view,
    "fig11": _positioning_error,
    "fig14": _avoidance_paths,
    "fig15": _avoidance_errors,
    "fig16": _avoidance_paths,
    "fig17": _avoidance_errors,
}


class FigureTemplate(ReportTemplate):
    """Template for figure datasets: one projection per figure id."""

    def render(self, data: Dict[str, Any]) -> FigureDataset:
        """
        Expected data format:
        {
            "records": list of StepRecord, or the flattened record / reward-curve table,
            "id": one of FIGURE_IDS,
            "baseline": optional fixed-formation records (fig11 only),
        }
        """
        self.validate_required_fields(data, ["records", "id"])
        return extract(data["records"], data["id"], baseline=data.get("baseline"))


def _frame(records: Records) -> pd.DataFrame:
    frame = records if isinstance(records, pd.DataFrame) else records_to_frame(records)
    if frame.empty:
        raise InvalidArgumentError("no records to extract from")
    return frame


def extract(records: Records, fig_id: str, baseline: Optional[Records] = None) -> FigureDataset:
    """
    Deterministic projection of a record stream (or its CSV table) onto one figure's series.

    `baseline` is a fixed-formation run of the same scenario; fig11 then compares the two.
    """
    if fig_id not in FIGURE_IDS:
        raise InvalidArgumentError(f"unknown figure id '{fig_id}' (expected one of {', '.join(FIGURE_IDS)})")
    frame = _frame(records)
    if baseline is None:
        columns = PROJECTIONS[fig_id](frame)
    elif fig_id == "fig11":
        columns = _formation_comparison(frame, _frame(baseline))
    else:
        raise InvalidArgumentError(f"{fig_id} takes a single record stream")
    return FigureDataset(id=fig_id, columns={name: _series(values) for name, values in columns.items()})


def dataset_to_frame(dataset: FigureDataset) -> pd.DataFrame:
    return pd.DataFrame(dataset.columns)
