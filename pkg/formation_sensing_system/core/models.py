import uuid
from datetime import datetime
from enum import Enum
from typing import Annotated, Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    PlainSerializer,
    field_validator,
    model_validator,
)


# --- Array field types ---
def _array(shape: Optional[Tuple[Optional[int], ...]] = None, dtype=float):
    """Validator that copies input into a read-only, finite numpy array of the given shape."""

    def coerce(value: Any) -> np.ndarray:
        arr = np.array(value, dtype=dtype)
        if shape is not None:
            if arr.ndim != len(shape) or any(
                want is not None and got != want for got, want in zip(arr.shape, shape)
            ):
                raise ValueError(f"expected shape {shape}, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("array has non-finite entries")
        arr.setflags(write=False)
        return arr

    return coerce


def _to_list(arr: np.ndarray) -> list:
    if np.iscomplexobj(arr):
        return np.stack([arr.real, arr.imag], axis=-1).tolist()
    return arr.tolist()


_serialize = PlainSerializer(_to_list, return_type=list)

Vec3 = Annotated[np.ndarray, BeforeValidator(_array((3,))), _serialize]
Vec6 = Annotated[np.ndarray, BeforeValidator(_array((6,))), _serialize]
Vector = Annotated[np.ndarray, BeforeValidator(_array((None,))), _serialize]
Mat3 = Annotated[np.ndarray, BeforeValidator(_array((3, 3))), _serialize]
Mat6 = Annotated[np.ndarray, BeforeValidator(_array((6, 6))), _serialize]
Matrix = Annotated[np.ndarray, BeforeValidator(_array((None, None))), _serialize]
Positions = Annotated[np.ndarray, BeforeValidator(_array((None, 3))), _serialize]
ComplexMatrix = Annotated[
    np.ndarray, BeforeValidator(_array((None, None), dtype=complex)), _serialize
]


class ValueModel(BaseModel):
    """Immutable value type carrying numpy arrays."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)


# --- Dynamics ---
class UavState(ValueModel):
    """Point-mass state of one UAV."""

    position: Vec3
    velocity: Vec3
    track_angle: float = 0.0
    heading_angle: float = 0.0
    mass: float = Field(default=1.5, gt=0, description="kg")

    @property
    def speed(self) -> float:
        return float(np.linalg.norm(self.velocity))

    @classmethod
    def at_rest(cls, position, mass: float = 1.5) -> "UavState":
        return cls(position=position, velocity=np.zeros(3), mass=mass)


class ActualControls(ValueModel):
    bank_angle: float
    load_factor: float
    thrust: float

    @field_validator("bank_angle")
    @classmethod
    def validate_bank(cls, v):
        if not abs(v) < np.pi / 2:
            raise ValueError(f"bank angle must satisfy |φ| < π/2, got {v}")
        return v


class ObstacleState(ValueModel):
    """Obstacle position and velocity stacked as o = [s; ṡ]."""

    o: Vec6

    @property
    def position(self) -> np.ndarray:
        return self.o[:3]

    @property
    def velocity(self) -> np.ndarray:
        return self.o[3:]

    @classmethod
    def from_parts(cls, position, velocity) -> "ObstacleState":
        return cls(o=np.concatenate([np.asarray(position, float), np.asarray(velocity, float)]))


class ObstacleModel(ValueModel):
    dt: float = Field(default=1.0, gt=0)
    sigma_v: Mat3 = Field(default_factory=lambda: np.zeros((3, 3)))

    @field_validator("sigma_v")
    @classmethod
    def validate_covariance(cls, v):
        if np.max(np.abs(v - v.T)) > 1e-12 * max(1.0, np.max(np.abs(v))):
            raise ValueError("Σ_v must be symmetric")
        if np.min(np.linalg.eigvalsh(v)) < -1e-12 * max(1.0, np.max(np.abs(v))):
            raise ValueError("Σ_v must be positive semi-definite")
        return v


# --- Formation ---
class VirtualLeader(ValueModel):
    position: Vec3
    velocity: Vec3 = Field(default_factory=lambda: np.zeros(3))


class FormationConfig(ValueModel):
    p: int = Field(default=5, ge=1, description="UAV count")
    r_f: float = Field(default=20.0, gt=0, description="formation radius (m)")
    r_min: float = Field(default=5.0, gt=0, description="min inter-UAV distance (m)")
    r_s: float = Field(default=5.0, gt=0, description="min obstacle distance (m)")
    betas: Optional[Vector] = None

    @model_validator(mode="before")
    @classmethod
    def fill_betas(cls, data):
        if isinstance(data, dict) and data.get("betas") is None:
            data = {**data, "betas": default_betas(int(data.get("p", 5)))}
        return data

    @model_validator(mode="after")
    def validate_betas(self):
        if len(self.betas) != self.p:
            raise ValueError(f"betas must have {self.p} entries, got {len(self.betas)}")
        return self


def default_betas(p: int) -> np.ndarray:
    """Evenly distributed circle angles, index 0 is the MUAV."""
    return 2.0 * np.pi * np.arange(p) / p


class FollowErrors(ValueModel):
    e_d: float = Field(ge=0)
    e_v: float = Field(ge=0)


class SafetyReport(ValueModel):
    min_pair_distance: float
    min_obstacle_distance: float
    pairs_ok: bool
    obstacle_ok: bool


# --- ISAC ---
class DmrsPattern(ValueModel):
    """DM-RS symbol (w) and subcarrier (q) index sets plus OFDM numerology."""

    w_set: Vector
    q_set: Vector
    delta_f: float = Field(default=120e3, gt=0, description="Hz")
    t_s: float = Field(default=8.92e-6, gt=0, description="s")
    f_c: float = Field(default=24e9, gt=0, description="Hz")
    n_total: int = Field(default=256, ge=1)
    m_total: int = Field(default=140, ge=1)

    @model_validator(mode="after")
    def validate_indices(self):
        for name, values, bound in (
            ("w_set", self.w_set, self.m_total),
            ("q_set", self.q_set, self.n_total),
        ):
            if values.size == 0:
                raise ValueError(f"{name} must not be empty")
            if np.any(np.diff(values) <= 0):
                raise ValueError(f"{name} must be strictly increasing")
            if values[0] < 0 or values[-1] > bound - 1:
                raise ValueError(f"{name} must lie in 0..{bound - 1}")
            if np.any(values != np.round(values)):
                raise ValueError(f"{name} must hold integer indices")
        return self

    @property
    def n_j(self) -> int:
        return int(self.q_set.size)

    @property
    def m_j(self) -> int:
        return int(self.w_set.size)


class ChannelGrid(ValueModel):
    pattern: DmrsPattern
    entries: ComplexMatrix
    xi: float = 1.0
    snr: float = Field(gt=0)

    @model_validator(mode="after")
    def validate_shape(self):
        expected = (self.pattern.m_j, self.pattern.n_j)
        if self.entries.shape != expected:
            raise ValueError(f"entries must be {expected}, got {self.entries.shape}")
        return self


class LinkCrlb(ValueModel):
    crlb_r: float = Field(gt=0, description="m²")
    crlb_v: float = Field(gt=0, description="(m/s)²")
    crlb_tau: float = Field(gt=0, description="s²")
    crlb_fd: float = Field(gt=0, description="Hz²")


class LinkMeasurement(ValueModel):
    """One UAV's range and radial-velocity estimate with its per-link CRLB."""

    r_hat: float
    v_hat: float
    crlb: LinkCrlb


# --- Fusion ---
class MeasurementSet(ValueModel):
    r_diffs: Vector
    v_diffs: Vector
    q: Matrix
    r_ref: Optional[float] = Field(default=None, description="MUAV range, when known")
    v_ref: Optional[float] = None

    @model_validator(mode="after")
    def validate_shapes(self):
        k = self.r_diffs.size
        if self.v_diffs.size != k or self.q.shape != (2 * k, 2 * k):
            raise ValueError("r_diffs, v_diffs and Q dimensions disagree")
        return self


class ObstacleEstimate(ValueModel):
    s: Vec3
    s_dot: Vec3
    covariance: Optional[Matrix] = Field(default=None, description="stage-1 covariance")
    stage2_ok: bool = True

    def as_state(self) -> ObstacleState:
        return ObstacleState.from_parts(self.s, self.s_dot)


class FormationCrlb(ValueModel):
    crlb_pv: Mat6
    eps_p: float = Field(gt=0)
    eps_v: float = Field(gt=0)


# --- AWPF ---
class RewardWeights(ValueModel):
    w1: float = Field(ge=0, le=1)
    w2: float = Field(ge=0, le=1)

    @model_validator(mode="after")
    def validate_sum(self):
        if abs(self.w1 + self.w2 - 1.0) > 1e-12:
            raise ValueError("reward weights must sum to 1")
        return self


class RewardMode(str, Enum):
    AWPF = "awpf"
    FWPF_DV_FIXED = "fwpf_dv_fixed"
    FWPF_D_ONLY = "fwpf_d_only"
    FWPF_D_F = "fwpf_d_f"


# --- VFEO ---
class VfeoContext(ValueModel):
    current_positions: Positions
    leader_position: Vec3
    leader_velocity: Vec3
    obstacle: ObstacleState
    link_variances_r: Vector
    link_variances_v: Vector
    r_f: float = 20.0
    r_min: float = 5.0
    r_s: float = 5.0
    v_max: float = 78.0
    dt: float = 1.0
    zeta: float = Field(default=0.5, ge=0)
    betas: Optional[Vector] = None

    @model_validator(mode="after")
    def validate_sizes(self):
        p = self.current_positions.shape[0]
        if self.link_variances_r.size != p or self.link_variances_v.size != p:
            raise ValueError("link variances must have one entry per UAV")
        if self.betas is not None and self.betas.size != p:
            raise ValueError("betas must have one entry per UAV")
        return self

    @property
    def p(self) -> int:
        return int(self.current_positions.shape[0])


class VfeoResult(ValueModel):
    positions: Positions
    eps_p: float
    eps_p_uniform: float
    iterations: int = 0
    triggered: bool = False
    diagnostic: str = ""


# --- NSB ---
class SubtaskVelocities(ValueModel):
    v1: Vec3 = Field(default_factory=lambda: np.zeros(3))
    v2: Vec3 = Field(default_factory=lambda: np.zeros(3))
    v3: Vec3 = Field(default_factory=lambda: np.zeros(3))
    avoidance_active: bool = False
    sensing_active: bool = False


class FusionGains(ValueModel):
    k1: float = Field(default=1.0, ge=0)
    k2: float = Field(default=1.0, ge=0)
    lambda1: float = Field(default=1.0, ge=0, description="1/s")


class FusedCommand(ValueModel):
    velocity: Vec3
    avoidance_active: bool = False
    sensing_active: bool = False


# --- Runner blackboard ---
class CycleStage(str, Enum):
    """Stages of one control cycle (blackboard pattern)."""

    LEADER = "LEADER"  # Leader advanced
    SENSING = "SENSING"  # ISAC + TWLS, VFEO trigger
    FORMATION = "FORMATION"  # VFTs assigned (overrides applied)
    FOLLOWING = "FOLLOWING"  # Path-following velocities v3
    FUSION = "FUSION"  # Avoidance and N-HSF fusion
    INTEGRATION = "INTEGRATION"  # Kinematics advanced
    RECORD = "RECORD"  # StepRecord appended
    COMPLETE = "COMPLETE"


class MissionPhase(str, Enum):
    CHASING = "CHASING"
    FOLLOWING = "FOLLOWING"
    SENSING = "SENSING"
    AVOIDING = "AVOIDING"


class WorkerStatus(Enum):
    COMPLETE = "COMPLETE"
    SKIPPED = "SKIPPED"
    ERROR = "ERROR"


class UavRecord(BaseModel):
    position: List[float]
    velocity: List[float]
    vft: List[float]
    e_d: float
    e_v: float
    avoiding: bool = False


class StepRecord(BaseModel):
    """Everything observable about one control cycle: the state at t and the commands issued."""

    t: float
    phase: MissionPhase
    leader_position: List[float]
    leader_velocity: List[float]
    uavs: List[UavRecord]
    obstacle_present: bool = False
    obstacle_true: Optional[List[float]] = None
    obstacle_estimate: Optional[List[float]] = None
    eps_p: Optional[float] = None
    eps_v: Optional[float] = None
    stage2_ok: Optional[bool] = None
    sensing_active: bool = False
    vfeo_triggered: bool = False
    eps_p_uniform: Optional[float] = None
    eps_p_optimized: Optional[float] = None
    vfeo_iterations: int = 0
    avoidance_active: bool = False
    min_pair_distance: float = float("inf")
    min_obstacle_distance: float = float("inf")
    pairs_ok: bool = True
    obstacle_ok: bool = True


class CycleContext(BaseModel):
    """
    The Blackboard for one control cycle - shared by every worker.
    Inputs from the previous cycle + per-cycle artifacts + flags.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    stage: CycleStage = CycleStage.LEADER
    k: int = 0
    t: float = 0.0

    # State carried across cycles
    uavs: List[UavState] = Field(default_factory=list)
    obstacle: Optional[ObstacleState] = None
    obstacle_event: Optional[int] = None
    obstacle_estimate: Optional[ObstacleEstimate] = None
    ever_formed: bool = False
    phase: Optional[MissionPhase] = None

    # Per-cycle artifacts
    leader: Optional[VirtualLeader] = None
    sensing_ran: bool = False
    vft_override: Optional[np.ndarray] = None
    vfts: Optional[np.ndarray] = None
    v3: Optional[np.ndarray] = None
    v2: Optional[np.ndarray] = None
    commands: Optional[np.ndarray] = None
    avoiding: List[bool] = Field(default_factory=list)
    sensing_active: bool = False
    formation_crlb: Optional[FormationCrlb] = None
    vfeo: Optional[VfeoResult] = None
    stage2_ok: Optional[bool] = None
    record: Optional[StepRecord] = None
    next_uavs: List[UavState] = Field(default_factory=list)
    next_obstacle: Optional[ObstacleState] = None

    # Metadata
    trace_id: str = Field(default_factory=lambda: str(uuid.uuid4()))
    execution_history: List[str] = Field(default_factory=list)
    errors: List[str] = Field(default_factory=list)

    def log_step(self, step_name: str):
        self.execution_history.append(step_name)

    def advance_stage(self, new_stage: CycleStage):
        self.stage = new_stage

    def reset_for_cycle(self, k: int, t: float):
        """Clear per-cycle artifacts before cycle k."""
        self.k = k
        self.t = t
        self.stage = CycleStage.LEADER
        self.leader = None
        self.vfts = None
        self.v3 = None
        self.v2 = None
        self.commands = None
        self.avoiding = []
        self.sensing_active = False
        self.formation_crlb = None
        self.vfeo = None
        self.stage2_ok = None
        self.sensing_ran = False
        self.vft_override = None
        self.record = None
        self.next_uavs = []
        self.next_obstacle = None
        self.execution_history = []

    def commit(self):
        """Carry the integrated state into the next cycle."""
        if self.next_uavs:
            self.uavs = self.next_uavs
        self.obstacle = self.next_obstacle


class WorkerResult(BaseModel):
    """Standardized return object for all workers."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    worker_name: str
    status: WorkerStatus
    context: CycleContext
    message: str = ""
    created_at: str = Field(default_factory=lambda: datetime.now().isoformat())

    @field_validator("message")
    @classmethod
    def validate_error_message(cls, v, info):
        if info.data.get("status") == WorkerStatus.ERROR and not v:
            return "Unknown error"
        return v


FIGURE_IDS = ("fig6", "fig7", "figv", "fig8", "fig9", "fig10", "fig11", "fig14", "fig15", "fig16", "fig17")


class FigureDataset(BaseModel):
    """Named, equal-length numeric series behind one figure."""

    id: str
    columns: Dict[str, List[Optional[float]]]

    @field_validator("id")
    @classmethod
    def validate_id(cls, v):
        if v not in FIGURE_IDS:
            raise ValueError(f"unknown figure id '{v}'")
        return v

    @model_validator(mode="after")
    def validate_lengths(self):
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise ValueError(f"series lengths differ: {sorted(lengths)}")
        return self

    @property
    def rows(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0
