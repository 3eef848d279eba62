"""
Policy Provider Abstraction.
Loads and stores the shared path-following policy as a JSON checkpoint.
"""

import json
import logging
import os
from abc import ABC, abstractmethod
from typing import Any, Dict, Optional

from ..cognition.networks import PolicyParams
from ..core.exceptions import InvalidArgumentError

logger = logging.getLogger("Providers")

CHECKPOINT_FORMAT = "formation-sensing-policy"
CHECKPOINT_VERSION = 1


# ============================================================================
# Base Interface
# ============================================================================


class IPolicyProvider(ABC):
    """Abstract base for policy sources."""

    @property
    @abstractmethod
    def name(self) -> str:
        pass

    @abstractmethod
    def load(self) -> PolicyParams:
        pass

    @abstractmethod
    def save(self, params: PolicyParams, meta: Optional[Dict[str, Any]] = None) -> str:
        pass


# ============================================================================
# JSON Checkpoint Provider
# ============================================================================


class JsonCheckpointProvider(IPolicyProvider):
    """
    Text checkpoint: layer weights as nested lists, floats at repr precision,
    so a checkpoint reloads bit-identically on any platform.
    """

    def __init__(self, path: str):
        self.path = path

    @property
    def name(self) -> str:
        return f"JsonCheckpoint({self.path})"

    def is_available(self) -> bool:
        if not os.path.exists(self.path):
            logger.warning(f"Checkpoint not found: {self.path}")
            return False
        return True

    def load(self) -> PolicyParams:
        if not self.is_available():
            raise FileNotFoundError(f"Checkpoint not found: {self.path}")
        with open(self.path, "r") as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as e:
                raise InvalidArgumentError(f"{self.path}: not a JSON checkpoint ({e})") from e

        if data.get("format") != CHECKPOINT_FORMAT:
            raise InvalidArgumentError(f"{self.path}: unexpected format {data.get('format')!r}")
        if data.get("version") != CHECKPOINT_VERSION:
            raise InvalidArgumentError(f"{self.path}: unsupported version {data.get('version')!r}")

        params = PolicyParams.from_dict(data)
        if not params.is_finite():
            raise InvalidArgumentError(f"{self.path}: checkpoint holds non-finite weights")
        logger.info(f"Loaded policy from {self.path}")
        return params

    def save(self, params: PolicyParams, meta: Optional[Dict[str, Any]] = None) -> str:
        directory = os.path.dirname(self.path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        payload = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            **params.to_dict(),
            "meta": meta or {},
        }
        with open(self.path, "w") as f:
            json.dump(payload, f)
        logger.info(f"Saved policy to {self.path}")
        return self.path


# ============================================================================
# Provider Factory
# ============================================================================


def get_provider(path: str) -> IPolicyProvider:
    """Get the checkpoint provider for a path."""
    if not path:
        raise InvalidArgumentError("a policy checkpoint path is required")
    return JsonCheckpointProvider(path)
