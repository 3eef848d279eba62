"""
Worker contract and the run-wide services every worker reads.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import List, Optional

from ..cognition.networks import PolicyParams
from ..core.config import ScenarioConfig
from ..core.models import (
    CycleContext,
    CycleStage,
    DmrsPattern,
    FormationConfig,
    FusionGains,
    LinkCrlb,
    StepRecord,
    WorkerResult,
    WorkerStatus,
)
from ..logic_blocks.isac import crlb_link, snr_from_db
from ..logic_blocks.numerics import Rng
from ..logic_blocks.trajectory import LeaderTrajectory, build_trajectory

logger = logging.getLogger("BaseWorker")


@dataclass
class ScenarioRuntime:
    """Immutable scenario services plus the append-only record stream."""

    config: ScenarioConfig
    policy: PolicyParams
    formation: FormationConfig
    trajectory: LeaderTrajectory
    pattern: DmrsPattern
    snr: float
    link_crlb: LinkCrlb
    gains: FusionGains
    noise_rng: Rng
    obstacle_rng: Rng
    records: List[StepRecord] = field(default_factory=list)

    @classmethod
    def build(cls, config: ScenarioConfig, policy: PolicyParams) -> "ScenarioRuntime":
        root = Rng(config.seed)
        pattern = config.dmrs.to_pattern()
        snr = snr_from_db(config.isac.snr_db)
        return cls(
            config=config,
            policy=policy,
            formation=config.formation.to_config(),
            trajectory=build_trajectory(config.leader),
            pattern=pattern,
            snr=snr,
            link_crlb=crlb_link(pattern, config.isac.xi, snr),
            gains=config.gains.to_gains(),
            noise_rng=root.substream("noise"),
            obstacle_rng=root.substream("obstacle"),
        )


class BaseWorker(ABC):
    """
    A worker owns one cycle stage. It never raises into the orchestrator:
    failures come back as an ERROR WorkerResult.
    """

    stage: CycleStage
    critical = True  # an ERROR ends the run as a numeric divergence

    def __init__(self, runtime: ScenarioRuntime, name: Optional[str] = None):
        self.runtime = runtime
        self.name = name or type(self).__name__

    def can_handle(self, context: CycleContext) -> bool:
        return context.stage == self.stage

    @abstractmethod
    def execute(self, context: CycleContext) -> str:
        """Do the stage's work on the blackboard; returns a short status message."""

    def next_stage(self, context: CycleContext) -> CycleStage:
        order = list(CycleStage)
        return order[order.index(self.stage) + 1]

    def run(self, context: CycleContext) -> WorkerResult:
        try:
            message = self.execute(context)
            context.advance_stage(self.next_stage(context))
            return WorkerResult(
                worker_name=self.name,
                status=WorkerStatus.COMPLETE,
                context=context,
                message=message,
            )
        except Exception as e:
            logger.error(f"{self.name} failed at t={context.t:g}s: {e}")
            context.errors.append(f"{self.name}@{context.t:g}: {e}")
            return WorkerResult(
                worker_name=self.name,
                status=WorkerStatus.ERROR,
                context=context,
                message=f"{type(e).__name__}: {e}",
            )
