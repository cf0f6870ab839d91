"""
Identity forward model split into the four image quadrants
"""
import logging

from ..config import RunConfig
from ..operators import identity_partition, shepp_phantom
from .base import GeneratedProblem, ProblemGenerator, build_prior

logger = logging.getLogger(__name__)


class IdentityQuadrantsGenerator(ProblemGenerator):
    """Each subproblem observes one quadrant of the phantom directly"""

    name = "identity_quadrants"
    default_splitting = "quadrant"

    def build(self, cfg: RunConfig) -> GeneratedProblem:
        if self.splitting(cfg) != "quadrant":
            raise ValueError("identity_quadrants only supports the quadrant splitting")
        truth = shepp_phantom(cfg.grid_n)
        prior = build_prior(cfg, truth.n, (truth.height, truth.width))
        y, variance = self.noisy_data(truth.pixels, cfg)

        blocks = [(operator, y[indices]) for operator, indices in
                  identity_partition(truth.width, truth.height, cfg.n_splits)]
        subproblems = self.subproblems_from_blocks(blocks, variance, prior)
        logger.info("Generated identity_quadrants %sx%s", truth.width, truth.height)
        return GeneratedProblem(self.name, subproblems, truth.pixels,
                                (truth.height, truth.width), self.noise_level(cfg))
