"""
Stage Router - picks the worker for the blackboard's current cycle stage.
Workers are grouped by the stage they own; within a stage, registration order is priority.
"""

import logging
from collections import defaultdict
from typing import Dict, List, Optional, Sequence

from .models import CycleContext, CycleStage

logger = logging.getLogger("Router")


class StageRouter:
    def __init__(self, workers: Sequence):
        self.by_stage: Dict[CycleStage, List] = defaultdict(list)
        for worker in workers:
            self.by_stage[worker.stage].append(worker)
        logger.debug(f"StageRouter: {len(workers)} workers over {len(self.by_stage)} stages")

    def uncovered(self) -> List[CycleStage]:
        """Stages (other than COMPLETE) that no worker owns."""
        return [stage for stage in CycleStage if stage != CycleStage.COMPLETE and stage not in self.by_stage]

    def select_next(self, context: CycleContext) -> Optional[object]:
        for worker in self.by_stage.get(context.stage, []):
            if worker.can_handle(context):
                logger.debug(f"Selected: {worker.name} (stage={context.stage.value})")
                return worker
        return None
