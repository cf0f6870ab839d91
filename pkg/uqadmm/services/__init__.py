"""Service layer for the experiment harness."""

from .experiment_service import (
    BatchRow,
    ExperimentError,
    ExperimentService,
    OracleResult,
    SolveSummary,
)

__all__ = [
    "BatchRow",
    "ExperimentError",
    "ExperimentService",
    "OracleResult",
    "SolveSummary",
]
