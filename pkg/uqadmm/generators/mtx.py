"""
Least-squares problems read from MatrixMarket files
"""
import logging

from ..config import ConfigError, RunConfig
from ..operators import load_matrix_market
from .base import GeneratedProblem, ProblemGenerator, build_prior

logger = logging.getLogger(__name__)


class MatrixMarketGenerator(ProblemGenerator):
    """Noiseless by default; x_true is unknown when the rhs comes from a file"""

    name = "mtx"
    default_splitting = "row_blocks"

    def build(self, cfg: RunConfig) -> GeneratedProblem:
        if not cfg.matrix:
            raise ConfigError("The mtx generator needs the 'matrix' config key")
        if self.splitting(cfg) != "row_blocks":
            raise ValueError("mtx only supports the row_blocks splitting")
        loaded = load_matrix_market(cfg.matrix, seed=cfg.seed)
        y, variance = self.noisy_data(loaded.y, cfg)
        prior = build_prior(cfg, loaded.operator.n_in)

        blocks = self.split_rows(loaded.operator, y, cfg)
        return GeneratedProblem(loaded.name, self.subproblems_from_blocks(blocks, variance, prior),
                                loaded.x_true, None, self.noise_level(cfg))
