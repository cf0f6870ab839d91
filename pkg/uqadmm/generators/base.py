"""
Base interface for test-problem generators
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple
import logging

import numpy as np

from ..config import RunConfig
from ..core import NoiseCov, PriorSpec, Subproblem
from ..operators import MatrixOperator, row_partition

logger = logging.getLogger(__name__)

SPLITTINGS = ("quadrant", "row_blocks")


@dataclass
class GeneratedProblem:
    """A split linear inverse problem ready for weights and solvers"""

    name: str
    subproblems: List[Subproblem]
    truth: Optional[np.ndarray]
    image_shape: Optional[Tuple[int, int]] = None
    noise_level: float = 0.0

    @property
    def n(self) -> int:
        return self.subproblems[0].n

    @property
    def n_sub(self) -> int:
        return len(self.subproblems)


def build_prior(cfg: RunConfig, n: int, image_shape: Optional[Tuple[int, int]] = None) -> PriorSpec:
    """Smallness or diffusion prior around x_ref = 0"""
    if cfg.prior == "smallness":
        return PriorSpec.smallness(n, cfg.alpha)
    if cfg.prior == "diffusion":
        return PriorSpec.diffusion(image_shape or (n,), cfg.alpha)
    raise ValueError(f"Unknown prior '{cfg.prior}'. Known priors: ['smallness', 'diffusion']")


def noise_variance(y_clean: np.ndarray, noise_level: float) -> float:
    """Variance of relative Gaussian noise; unit weighting for noiseless data"""
    if noise_level <= 0:
        return 1.0
    sigma = noise_level * float(np.linalg.norm(y_clean)) / np.sqrt(y_clean.shape[0])
    return sigma * sigma


class ProblemGenerator(ABC):
    """Abstract base class for problem generators"""

    name = "unknown"
    default_noise = 0.0
    default_splitting = "row_blocks"

    @abstractmethod
    def build(self, cfg: RunConfig) -> GeneratedProblem:
        """
        Construct the split problem described by ``cfg``

        Args:
            cfg: Run configuration (problem parameters, splitting, prior, seed)

        Returns:
            GeneratedProblem: subproblems, truth and image shape
        """

    def noise_level(self, cfg: RunConfig) -> float:
        return self.default_noise if cfg.noise_level is None else float(cfg.noise_level)

    def splitting(self, cfg: RunConfig) -> str:
        splitting = cfg.splitting or self.default_splitting
        if splitting not in SPLITTINGS:
            raise ValueError(f"Unknown splitting '{splitting}'. Known splittings: {list(SPLITTINGS)}")
        return splitting

    def noisy_data(self, y_clean: np.ndarray, cfg: RunConfig) -> Tuple[np.ndarray, float]:
        """Add seeded relative Gaussian noise; returns (y, variance)"""
        level = self.noise_level(cfg)
        variance = noise_variance(y_clean, level)
        if level <= 0:
            return np.array(y_clean, dtype=np.float64), variance
        rng = np.random.default_rng(cfg.seed)
        return y_clean + np.sqrt(variance) * rng.standard_normal(y_clean.shape[0]), variance

    @staticmethod
    def subproblems_from_blocks(
        blocks: Sequence[Tuple[MatrixOperator, np.ndarray]], variance: float, prior: PriorSpec
    ) -> List[Subproblem]:
        return [
            Subproblem(operator, y, NoiseCov.constant(operator.n_out, variance), prior)
            for operator, y in blocks
        ]

    def split_rows(self, operator: MatrixOperator, y: np.ndarray, cfg: RunConfig):
        return row_partition(operator, y, cfg.n_splits)

    def describe(self) -> str:
        return f"{self.name} (splitting={self.default_splitting}, noise={self.default_noise})"
