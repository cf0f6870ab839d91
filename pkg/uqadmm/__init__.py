"""
Uncertainty-weighted consensus ADMM for linear and mildly nonlinear inverse problems
"""
from .admm import AdmmConfig, AdmmRunError, AdmmTrace, run_sync
from .async_engine import AsyncConfig, WorkerCrashError, run_async
from .config import Config, ConfigError, RunConfig, load_run_config
from .core import (
    ConsensusState,
    DiagonalWeight,
    NoiseCov,
    PriorSpec,
    Subproblem,
    dense_map_estimate,
    dense_posterior_covariance,
)
from .uq_weights import WeightReport, compute_weights

__all__ = [
    'AdmmConfig',
    'AdmmRunError',
    'AdmmTrace',
    'run_sync',
    'AsyncConfig',
    'WorkerCrashError',
    'run_async',
    'Config',
    'ConfigError',
    'RunConfig',
    'load_run_config',
    'ConsensusState',
    'DiagonalWeight',
    'NoiseCov',
    'PriorSpec',
    'Subproblem',
    'dense_map_estimate',
    'dense_posterior_covariance',
    'WeightReport',
    'compute_weights',
]
