"""
Summary Template - Uses Jinja2 for the run summary JSON.
"""

import json
import math
import os
from collections import Counter
from typing import Any, Dict, List, Optional

import numpy as np
from jinja2 import Environment, FileSystemLoader

from ..core.models import MissionPhase, StepRecord
from .base_template import ReportTemplate

FINAL_WINDOW = 50
SAFETY_FRACTION = 0.5


def _finite(value: Optional[float]) -> Optional[float]:
    if value is None or not math.isfinite(value):
        return None
    return float(value)


def _mean(values: List[float]) -> Optional[float]:
    return float(np.mean(values)) if values else None


class SummaryTemplate(ReportTemplate):
    """Template for the per-run summary using Jinja2."""

    def __init__(self):
        template_dir = os.path.dirname(os.path.abspath(__file__))
        self.env = Environment(loader=FileSystemLoader(template_dir))
        self.template = self.env.get_template("summary.j2")

    def render(self, data: Dict[str, Any]) -> Dict[str, Any]:
        """
        Expected data format:
        {
            "records": List[StepRecord],
            "config": ScenarioConfig,
            "exit_code": int,
            "errors": List[str],   # optional
        }
        """
        self.validate_required_fields(data, ["records", "config", "exit_code"])
        records: List[StepRecord] = data["records"]
        config = data["config"]
        p = config.formation.p

        e_d = np.array([[uav.e_d for uav in r.uavs] for r in records]).reshape(len(records), p)
        following = [float(np.mean(row)) for row, r in zip(e_d, records) if r.phase == MissionPhase.FOLLOWING]
        sensed = [r for r in records if r.eps_p is not None]
        floor = SAFETY_FRACTION * config.formation.r_s

        rendered = self.template.render(
            scenario=config.name,
            seed=config.seed,
            cycles=len(records),
            duration=config.duration,
            exit_code=data["exit_code"],
            mean_per_uav=[float(v) for v in e_d.mean(axis=0)] if len(records) else [],
            max_per_uav=[float(v) for v in e_d.max(axis=0)] if len(records) else [],
            mean_e_d=_finite(float(e_d.mean())) if len(records) else None,
            following_phase_mean=_mean(following),
            final_mean=_finite(float(e_d[-FINAL_WINDOW:].mean())) if len(records) else None,
            min_obstacle_distance=_finite(min((r.min_obstacle_distance for r in records), default=math.inf)),
            min_pair_distance=_finite(min((r.min_pair_distance for r in records), default=math.inf)),
            safety_violations=sum(1 for r in records if r.min_obstacle_distance < floor),
            pair_violations=sum(1 for r in records if not r.pairs_ok),
            avoidance_cycles=sum(1 for r in records if r.avoidance_active),
            sensing_cycles=len(sensed),
            vfeo_triggers=sum(1 for r in records if r.vfeo_triggered),
            mean_eps_p=_mean([r.eps_p for r in sensed]),
            mean_eps_p_uniform=_mean([r.eps_p_uniform for r in sensed if r.eps_p_uniform is not None]),
            mean_eps_p_optimized=_mean([r.eps_p_optimized for r in records if r.vfeo_triggered]),
            stage2_fallbacks=sum(1 for r in sensed if r.stage2_ok is False),
            phases=dict(sorted(Counter(r.phase.value for r in records).items())),
            errors=list(data.get("errors", [])),
        )
        return json.loads(rendered)
