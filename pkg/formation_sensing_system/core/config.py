"""
Scenario configuration: pydantic models for the JSON scenario file and its loader.
Defaults reproduce the five-UAV evaluation scenario.
"""

import json
import logging
import os
from typing import Annotated, List, Literal, Optional

import numpy as np
from pydantic import AfterValidator, BaseModel, Field, ValidationError, field_validator, model_validator

from .exceptions import ConfigValidationError
from .models import DmrsPattern, FormationConfig, FusionGains, ObstacleModel, ObstacleState, RewardMode

logger = logging.getLogger("Config")

DEFAULT_CONFIG_PATH = "config/scenario_config.json"
CONFIG_ENV_VAR = "SCENARIO_CONFIG"


def _vec3(v: List[float]) -> List[float]:
    if len(v) != 3:
        raise ValueError(f"expected 3 components, got {len(v)}")
    if not all(np.isfinite(v)):
        raise ValueError("components must be finite")
    return v


Point3 = Annotated[List[float], AfterValidator(_vec3)]


class FormationSettings(BaseModel):
    p: int = Field(default=5, ge=1)
    r_f: float = Field(default=20.0, gt=0)
    r_min: float = Field(default=5.0, gt=0)
    r_s: float = Field(default=5.0, gt=0)
    betas: Optional[List[float]] = None

    def to_config(self) -> FormationConfig:
        return FormationConfig(p=self.p, r_f=self.r_f, r_min=self.r_min, r_s=self.r_s, betas=self.betas)


class Waypoint(BaseModel):
    t: float = Field(ge=0)
    position: Point3


def _default_waypoints() -> List[Waypoint]:
    return [
        Waypoint(t=0, position=[100, 100, 50]),
        Waypoint(t=60, position=[400, 200, 60]),
        Waypoint(t=150, position=[500, 500, 80]),
        Waypoint(t=230, position=[250, 350, 95]),
        Waypoint(t=290, position=[145, 140, 102]),
        Waypoint(t=400, position=[-100, 100, 110]),
    ]


class LeaderTrajectorySpec(BaseModel):
    """Timed waypoints, or a constant-speed serpentine about a straight base line."""

    kind: Literal["waypoints", "serpentine"] = "waypoints"
    waypoints: List[Waypoint] = Field(default_factory=_default_waypoints)

    start: Point3 = Field(default_factory=lambda: [100.0, 100.0, 50.0])
    speed: float = Field(default=12.0, gt=0, le=20.0, description="m/s")
    heading_deg: float = 30.0
    lateral_amplitude: float = Field(default=40.0, ge=0)
    lateral_period: float = Field(default=120.0, gt=0)
    vertical_amplitude: float = Field(default=8.0, ge=0)
    vertical_period: float = Field(default=200.0, gt=0)

    @model_validator(mode="after")
    def validate_waypoints(self):
        if self.kind == "waypoints":
            if len(self.waypoints) < 2:
                raise ValueError("waypoint trajectory needs at least 2 waypoints")
            times = [w.t for w in self.waypoints]
            if any(b <= a for a, b in zip(times, times[1:])):
                raise ValueError("waypoint times must be strictly increasing")
        return self


class UavInit(BaseModel):
    position: Point3
    velocity: Point3 = Field(default_factory=lambda: [0.0, 0.0, 0.0])
    mass: float = Field(default=1.5, gt=0)


def _default_uavs() -> List[UavInit]:
    return [
        UavInit(position=[0, 20, 0]),
        UavInit(position=[20, 0, 0]),
        UavInit(position=[10, 10, 0]),
        UavInit(position=[15, 5, 0]),
        UavInit(position=[5, 15, 0]),
    ]


class ObstacleEvent(BaseModel):
    """Obstacle state at `appear_s`; sensed for `observe_s` seconds after it appears."""

    position: Point3
    velocity: Point3 = Field(default_factory=lambda: [0.0, 0.0, 0.0])
    appear_s: float = Field(default=0.0, ge=0)
    disappear_s: Optional[float] = None
    observe_s: Optional[float] = Field(default=None, gt=0)
    sigma_v: float = Field(default=0.0, ge=0, description="process-noise sd per axis (m/s²)")

    @model_validator(mode="after")
    def validate_window(self):
        if self.disappear_s is not None and self.disappear_s <= self.appear_s:
            raise ValueError("disappear_s must follow appear_s")
        return self

    def initial_state(self) -> ObstacleState:
        return ObstacleState.from_parts(self.position, self.velocity)

    def model(self, dt: float) -> ObstacleModel:
        return ObstacleModel(dt=dt, sigma_v=self.sigma_v**2 * np.eye(3))

    def present(self, t: float) -> bool:
        return t >= self.appear_s and (self.disappear_s is None or t < self.disappear_s)

    def sensing(self, t: float) -> bool:
        return self.present(t) and (self.observe_s is None or t < self.appear_s + self.observe_s)


class DmrsSettings(BaseModel):
    """Explicit index sets, or a comb over subcarriers with evenly spread symbols."""

    w_set: Optional[List[int]] = None
    q_set: Optional[List[int]] = None
    comb: int = Field(default=2, ge=1)
    offset: int = Field(default=0, ge=0)
    m_j: int = Field(default=40, ge=1)
    n_total: int = Field(default=256, ge=1)
    m_total: int = Field(default=140, ge=1)
    delta_f: float = Field(default=120e3, gt=0)
    t_s: float = Field(default=8.92e-6, gt=0)
    f_c: float = Field(default=24e9, gt=0)

    @model_validator(mode="after")
    def validate_comb(self):
        if self.offset >= self.comb:
            raise ValueError("comb offset must be smaller than the comb")
        if self.m_j > self.m_total:
            raise ValueError("m_j cannot exceed m_total")
        return self

    def to_pattern(self) -> DmrsPattern:
        from ..logic_blocks.isac import comb_pattern

        if self.w_set is not None and self.q_set is not None:
            return DmrsPattern(
                w_set=self.w_set,
                q_set=self.q_set,
                delta_f=self.delta_f,
                t_s=self.t_s,
                f_c=self.f_c,
                n_total=self.n_total,
                m_total=self.m_total,
            )
        return comb_pattern(
            n_total=self.n_total,
            m_total=self.m_total,
            comb=self.comb,
            offset=self.offset,
            m_j=self.m_j,
            w_indices=self.w_set,
            delta_f=self.delta_f,
            t_s=self.t_s,
            f_c=self.f_c,
        )


class IsacSettings(BaseModel):
    snr_db: float = 20.0
    xi: float = Field(default=1.0, gt=0)
    refine: bool = True
    detection_radius: float = Field(default=200.0, gt=0, description="m")
    plane_side: Literal["above", "below"] = Field(
        default="above", description="obstacle side of a planar formation before the first estimate"
    )


class TrainingSpec(BaseModel):
    mode: RewardMode = RewardMode.AWPF
    episodes: int = Field(default=300, ge=0)
    steps_per_episode: int = Field(default=200, ge=1)
    eval_steps: int = Field(default=200, ge=50)
    batch_size: int = Field(default=128, ge=1)
    gamma: float = Field(default=0.99, ge=0, le=1)
    tau_soft: float = Field(default=0.01, ge=0, le=1)
    lr_actor: float = Field(default=1e-4, gt=0)
    lr_critic: float = Field(default=1e-3, gt=0)
    memory: int = Field(default=50000, ge=1)
    noise_start: float = Field(default=20.0, ge=0)
    noise_end: float = Field(default=2.0, ge=0)
    start_jitter: float = Field(default=20.0, ge=0, description="leader start spread (m)")
    leader: LeaderTrajectorySpec = Field(default_factory=lambda: LeaderTrajectorySpec(kind="serpentine"))
    checkpoint: Optional[str] = None


class GainSettings(BaseModel):
    k1: float = Field(default=1.0, ge=0)
    k2: float = Field(default=1.0, ge=0)
    lambda1: float = Field(default=1.0, ge=0)

    def to_gains(self) -> FusionGains:
        return FusionGains(k1=self.k1, k2=self.k2, lambda1=self.lambda1)


class VfeoSettings(BaseModel):
    enabled: bool = True
    zeta: float = Field(default=0.5, gt=0, description="ε_P threshold (m)")
    mu_schedule: List[float] = Field(default_factory=lambda: [1e2, 1e4, 1e6])
    eps_term: float = Field(default=1e-3, gt=0)
    max_iters: int = Field(default=500, ge=1)
    parameterization: Literal["angle", "cartesian"] = "angle"
    sensing_mode: Literal["vft_override", "velocity"] = "vft_override"

    @field_validator("mu_schedule")
    @classmethod
    def validate_schedule(cls, v):
        if not v or any(mu <= 0 for mu in v):
            raise ValueError("μ schedule must be non-empty and positive")
        return v


class ScenarioConfig(BaseModel):
    name: str = "formation-sensing"
    seed: int = Field(default=0, ge=0)
    duration: float = Field(default=400.0, gt=0, description="s")
    dt: float = Field(default=1.0, gt=0, description="control cycle ΔT (s)")
    v_max: float = Field(default=78.0, gt=0, description="m/s")
    formation: FormationSettings = Field(default_factory=FormationSettings)
    leader: LeaderTrajectorySpec = Field(default_factory=LeaderTrajectorySpec)
    uavs: List[UavInit] = Field(default_factory=_default_uavs)
    obstacles: List[ObstacleEvent] = Field(default_factory=list)
    dmrs: DmrsSettings = Field(default_factory=DmrsSettings)
    isac: IsacSettings = Field(default_factory=IsacSettings)
    training: TrainingSpec = Field(default_factory=TrainingSpec)
    gains: GainSettings = Field(default_factory=GainSettings)
    vfeo: VfeoSettings = Field(default_factory=VfeoSettings)
    avoid_with_estimate: bool = False

    @model_validator(mode="after")
    def validate_scenario(self):
        errors = []
        if len(self.uavs) != self.formation.p:
            errors.append(f"uavs: {len(self.uavs)} initial states for p={self.formation.p}")
        if self.formation.betas is not None and len(self.formation.betas) != self.formation.p:
            errors.append("formation.betas: one angle per UAV required")
        for i, event in enumerate(self.obstacles):
            if event.appear_s > self.duration:
                errors.append(f"obstacles.{i}.appear_s: beyond duration {self.duration}")
            if event.disappear_s is not None and event.disappear_s > self.duration:
                errors.append(f"obstacles.{i}.disappear_s: beyond duration {self.duration}")
        if self.obstacles and self.formation.p < 5:
            errors.append("formation.p: obstacle sensing needs at least 5 UAVs")
        if errors:
            raise ValueError("; ".join(errors))
        return self

    @property
    def cycles(self) -> int:
        return int(round(self.duration / self.dt))


def _describe(error: ValidationError) -> List[str]:
    described = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or "<root>"
        described.append(f"{location}: {item['msg']}")
    return described


def parse_scenario(data: dict) -> ScenarioConfig:
    """Validate raw scenario data, collecting every violated field."""
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigValidationError(_describe(e)) from e


def resolve_config_path(cli_path: Optional[str] = None) -> str:
    """--config flag, else SCENARIO_CONFIG, else the bundled scenario."""
    return cli_path or os.getenv(CONFIG_ENV_VAR, DEFAULT_CONFIG_PATH)


def load_scenario(path: str) -> ScenarioConfig:
    if not os.path.exists(path):
        raise FileNotFoundError(
            f"Config file not found: {path}. "
            f"Create {DEFAULT_CONFIG_PATH} or set {CONFIG_ENV_VAR} env variable."
        )
    with open(path, "r") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigValidationError([f"<file>: invalid JSON ({e})"]) from e
    config = parse_scenario(data)
    logger.info("Loaded scenario '%s' from %s", config.name, path)
    return config
