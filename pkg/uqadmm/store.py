"""Helpers for storing and loading experiment artifacts in an output directory."""

from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .config import RunConfig
from .core import DiagonalWeight, NoiseCov, Subproblem
from .generators import GeneratedProblem, build_prior
from .operators import GridImage, MatrixOperator, read_matrix_market, save_image, write_matrix_market
from .uq_weights import WeightReport, read_weights_csv

logger = logging.getLogger(__name__)


class ArtifactStore:
    """Manager for the files one run configuration produces under its ``out`` directory"""

    PROBLEM_DIR = "problem"
    WEIGHTS_FILE = "weights/weights.csv"
    ORACLE_DIR = "oracle"
    BATCH_FILE = "batch/results.csv"

    def __init__(self, root):
        self.root = Path(root)

    # ------------------------------------------------------------------
    # Generic writers
    # ------------------------------------------------------------------
    def path(self, relative: str) -> Path:
        target = self.root / relative
        target.parent.mkdir(parents=True, exist_ok=True)
        return target

    @staticmethod
    def write_vector(path: Path, vector: np.ndarray, header: Iterable[str] = ()) -> None:
        np.savetxt(path, np.asarray(vector, dtype=np.float64), fmt="%.17g",
                   header="\n".join(header), comments="# ", encoding="utf-8")

    @staticmethod
    def read_vector(path: Path) -> np.ndarray:
        return np.atleast_1d(np.loadtxt(path, comments="#", dtype=np.float64, encoding="utf-8"))

    def save_solution(self, relative_stem: str, vector: np.ndarray, header: Sequence[str],
                      image_shape: Optional[Tuple[int, int]] = None) -> Path:
        """Write ``stem``.csv as a vector and, for images, ``stem``_image.pgm/.csv"""
        target = self.path(f"{relative_stem}.csv")
        self.write_vector(target, vector, header)
        if image_shape is not None:
            height, width = image_shape
            save_image(self.path(f"{relative_stem}_image"), GridImage(width, height, vector), header)
        return target

    def write_table(self, relative: str, columns: Sequence[str], rows: Iterable[Sequence],
                    header: Iterable[str] = ()) -> Path:
        target = self.path(relative)
        with open(target, "w", newline="", encoding="utf-8") as handle:
            for line in header:
                handle.write(f"# {line}\n")
            writer = csv.writer(handle)
            writer.writerow(columns)
            writer.writerows(rows)
        return target

    # ------------------------------------------------------------------
    # Problems
    # ------------------------------------------------------------------
    def save_problem(self, problem: GeneratedProblem, header: Sequence[str]) -> Path:
        """Persist operators, data, noise and truth of a generated problem"""
        base = f"{self.PROBLEM_DIR}/"
        height, width = problem.image_shape or (0, 0)
        variances = ",".join(repr(float(sub.noise.diag[0])) for sub in problem.subproblems)
        lines = [
            f"name={problem.name}",
            f"n={problem.n}",
            f"n_sub={problem.n_sub}",
            f"height={height}",
            f"width={width}",
            f"noise_level={problem.noise_level}",
            f"noise_variances={variances}",
            f"has_truth={int(problem.truth is not None)}",
        ]
        conf = self.path(base + "problem.conf")
        conf.write_text("\n".join([f"# {line}" for line in header] + lines) + "\n", encoding="utf-8")

        for j, sub in enumerate(problem.subproblems):
            write_matrix_market(self.path(f"{base}sub_{j:02d}.mtx"), sub.operator.to_sparse(), header)
            self.write_vector(self.path(f"{base}sub_{j:02d}_y.csv"), sub.y, header)
        if problem.truth is not None:
            self.save_solution(base + "truth", problem.truth, header, problem.image_shape)
        logger.info("Saved problem '%s' (%s subproblems) to %s", problem.name, problem.n_sub, self.root)
        return conf

    def load_problem(self, cfg: RunConfig) -> GeneratedProblem:
        conf = self.root / self.PROBLEM_DIR / "problem.conf"
        if not conf.is_file():
            raise FileNotFoundError(f"No generated problem at {conf}; run 'gen' first")

        from dotenv import dotenv_values

        meta = dotenv_values(conf)
        n = int(meta["n"])
        height, width = int(meta["height"]), int(meta["width"])
        shape = (height, width) if height and width else None
        variances = [float(v) for v in meta["noise_variances"].split(",")]
        prior = build_prior(cfg, n, shape)

        subproblems: List[Subproblem] = []
        for j, variance in enumerate(variances):
            operator = MatrixOperator(read_matrix_market(self.root / self.PROBLEM_DIR / f"sub_{j:02d}.mtx"))
            y = self.read_vector(self.root / self.PROBLEM_DIR / f"sub_{j:02d}_y.csv")
            subproblems.append(Subproblem(operator, y, NoiseCov.constant(operator.n_out, variance), prior))

        truth = None
        if meta.get("has_truth") == "1":
            truth = self.read_vector(self.root / self.PROBLEM_DIR / "truth.csv")
        return GeneratedProblem(meta["name"], subproblems, truth, shape, float(meta["noise_level"]))

    # ------------------------------------------------------------------
    # Weights
    # ------------------------------------------------------------------
    def save_weights(self, report: WeightReport, header: Sequence[str]) -> Path:
        target = self.path(self.WEIGHTS_FILE)
        report.write_csv(target, header)
        return target

    def load_weights(self) -> List[DiagonalWeight]:
        target = self.root / self.WEIGHTS_FILE
        if not target.is_file():
            raise FileNotFoundError(f"No weights at {target}; run 'weights' first")
        return read_weights_csv(target)
