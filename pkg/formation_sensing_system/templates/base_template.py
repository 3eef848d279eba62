"""
Base template protocol for reporting.
All templates are pure projections of a run into JSON-serializable or tabular data.
"""

from abc import ABC, abstractmethod
from typing import Any, Dict

from ..core.exceptions import InvalidArgumentError


class ReportTemplate(ABC):
    """
    Base template protocol. A template reads records, never the live simulation.
    """

    @abstractmethod
    def render(self, data: Dict[str, Any]) -> Any:
        """Project run data into the template's output."""

    def validate_required_fields(self, data: Dict[str, Any], required_fields: list) -> None:
        missing = [field for field in required_fields if field not in data]
        if missing:
            raise InvalidArgumentError(f"Missing required fields: {', '.join(missing)}")
