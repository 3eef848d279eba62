"""
Structured Logging for the formation sensing simulator.
JSON-formatted log entries for run monitoring; never read back by the simulation.
"""

import json
import logging
import os
from datetime import datetime, timezone
from typing import Any, Dict, Optional


class StructuredLogger:
    """Structured logger with JSON output for observability."""

    def __init__(self, name: str, log_dir: str = "logs"):
        self.name = name
        self.logger = logging.getLogger(name)
        self.logger.setLevel(logging.INFO)

        # Prevent duplicate handlers
        if not self.logger.handlers:
            console_handler = logging.StreamHandler()
            console_handler.setFormatter(
                logging.Formatter("%(asctime)s | %(levelname)-8s | %(name)s | %(message)s")
            )
            self.logger.addHandler(console_handler)

            if os.path.exists(log_dir):
                self.logger.addHandler(logging.FileHandler(f"{log_dir}/simulation.log"))

    def _build_log_entry(self, level: str, message: str, extra: Optional[Dict[str, Any]] = None) -> str:
        log_data = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "level": level,
            "logger": self.name,
            "message": message,
            **(extra or {}),
        }
        return json.dumps(log_data, default=str)

    def info(self, message: str, extra: Optional[Dict[str, Any]] = None):
        self.logger.info(self._build_log_entry("INFO", message, extra))

    def warning(self, message: str, extra: Optional[Dict[str, Any]] = None):
        self.logger.warning(self._build_log_entry("WARNING", message, extra))

    def error(self, message: str, extra: Optional[Dict[str, Any]] = None):
        self.logger.error(self._build_log_entry("ERROR", message, extra))

    def debug(self, message: str, extra: Optional[Dict[str, Any]] = None):
        self.logger.debug(self._build_log_entry("DEBUG", message, extra))

    # --- Specialized Simulation Logging ---

    def cycle_phase(self, t: float, phase: str):
        """Mission phase change (chasing, following, sensing, avoiding)."""
        self.info(f"Phase: {phase} at t={t:g}s", extra={"t": t, "phase": phase, "type": "phase"})

    def sensing_result(self, t: float, eps_p: float, eps_v: float, stage2_ok: bool):
        self.info(
            f"Sensing at t={t:g}s: eps_p={eps_p:.4f} m",
            extra={"t": t, "eps_p": eps_p, "eps_v": eps_v, "stage2_ok": stage2_ok, "type": "sensing"},
        )

    def vfeo_decision(self, t: float, triggered: bool, eps_before: float, eps_after: float, iterations: int):
        self.info(
            f"VFEO at t={t:g}s: {'triggered' if triggered else 'idle'}",
            extra={
                "t": t,
                "triggered": triggered,
                "eps_before": eps_before,
                "eps_after": eps_after,
                "iterations": iterations,
                "type": "vfeo",
            },
        )

    def avoidance(self, t: float, uav: int, distance: float):
        self.warning(
            f"Avoidance: UAV {uav} at {distance:.2f} m",
            extra={"t": t, "uav": uav, "distance": distance, "type": "avoidance"},
        )

    def training_episode(self, mode: str, episode: int, mean_reward: float):
        self.info(
            f"Training [{mode}] episode {episode}: {mean_reward:.4f}",
            extra={"mode": mode, "episode": episode, "mean_reward": mean_reward, "type": "training"},
        )


# Global logger instance
system_logger = StructuredLogger("FSS")


def get_logger(name: str = "FSS") -> StructuredLogger:
    """Get or create a structured logger."""
    return StructuredLogger(name)
