"""
Parallel-beam tomography on the phantom
"""
import logging

from ..config import RunConfig
from ..operators import quadrant_rows, shepp_phantom, tomo_ray_operator
from .base import GeneratedProblem, ProblemGenerator, build_prior

logger = logging.getLogger(__name__)


class TomoGenerator(ProblemGenerator):
    """
    Rays are ordered angle-major, so the rows form an (angles x detectors)
    grid. The quadrant splitting cuts that grid into halves of the angular
    range times halves of the detector array; row blocks are contiguous
    angle sectors.
    """

    name = "tomo"
    default_noise = 0.01
    default_splitting = "quadrant"

    def build(self, cfg: RunConfig) -> GeneratedProblem:
        truth = shepp_phantom(cfg.grid_n)
        n_detectors = cfg.n_detectors or cfg.grid_n
        operator = tomo_ray_operator(cfg.grid_n, cfg.n_angles, n_detectors)
        y, variance = self.noisy_data(operator.apply(truth.pixels), cfg)
        prior = build_prior(cfg, truth.n, (truth.height, truth.width))

        if self.splitting(cfg) == "quadrant":
            if cfg.n_splits != 4:
                raise ValueError(f"Quadrant splitting produces exactly 4 subproblems, got n_splits={cfg.n_splits}")
            blocks = quadrant_rows(operator, y, n_detectors, cfg.n_angles)
        else:
            blocks = self.split_rows(operator, y, cfg)

        logger.info("Generated tomo grid_n=%s rays=%s split=%s", cfg.grid_n, operator.n_out,
                    [block.n_out for block, _ in blocks])
        return GeneratedProblem(self.name, self.subproblems_from_blocks(blocks, variance, prior),
                                truth.pixels, (truth.height, truth.width), self.noise_level(cfg))
