"""
Separable Gaussian deblurring
"""
import logging

from ..config import RunConfig
from ..operators import blur_truth, gaussian_blur_operator, quadrant_rows
from .base import GeneratedProblem, ProblemGenerator, build_prior

logger = logging.getLogger(__name__)


class DeblurGenerator(ProblemGenerator):
    name = "deblur"
    default_noise = 0.01
    default_splitting = "quadrant"

    def build(self, cfg: RunConfig) -> GeneratedProblem:
        truth = blur_truth(cfg.grid_n)
        operator = gaussian_blur_operator(cfg.grid_n, cfg.band, cfg.sigma)
        y, variance = self.noisy_data(operator.apply(truth.pixels), cfg)
        prior = build_prior(cfg, truth.n, (truth.height, truth.width))

        if self.splitting(cfg) == "quadrant":
            if cfg.n_splits != 4:
                raise ValueError(f"Quadrant splitting produces exactly 4 subproblems, got n_splits={cfg.n_splits}")
            blocks = quadrant_rows(operator, y, truth.width, truth.height)
        else:
            blocks = self.split_rows(operator, y, cfg)

        logger.info("Generated deblur grid_n=%s with %s subproblems", cfg.grid_n, len(blocks))
        return GeneratedProblem(self.name, self.subproblems_from_blocks(blocks, variance, prior),
                                truth.pixels, (truth.height, truth.width), self.noise_level(cfg))
