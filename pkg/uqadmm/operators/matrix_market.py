"""
MatrixMarket ingestion and the bundled synthetic matrix collection
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Tuple
import logging

import numpy as np
import scipy.io
import scipy.sparse as sp

from .base import MatrixOperator

logger = logging.getLogger(__name__)

_FORMATS = ("coordinate", "array")
_FIELDS = ("real", "integer")
_SYMMETRIES = ("general", "symmetric", "skew-symmetric")


class MatrixMarketError(ValueError):
    """Raised when a MatrixMarket file cannot be parsed."""

    def __init__(self, path, line_number: int, message: str):
        self.path = str(path)
        self.line_number = line_number
        super().__init__(f"{self.path}, line {line_number}: {message}")


@dataclass
class MatrixProblem:
    """A linear least-squares problem read from disk"""

    name: str
    operator: MatrixOperator
    y: np.ndarray
    x_true: Optional[np.ndarray]
    rhs_from_file: bool


def _parse_banner(path, line: str) -> Tuple[str, str, str]:
    parts = line.strip().split()
    if len(parts) != 5 or parts[0] != "%%MatrixMarket" or parts[1].lower() != "matrix":
        raise MatrixMarketError(path, 1, f"malformed header {line.strip()!r}")
    layout, field, symmetry = (p.lower() for p in parts[2:])
    if layout not in _FORMATS:
        raise MatrixMarketError(path, 1, f"unsupported format '{layout}'")
    if field in ("complex", "pattern"):
        raise MatrixMarketError(path, 1, f"{field} matrices are not supported")
    if field not in _FIELDS:
        raise MatrixMarketError(path, 1, f"unknown field '{field}'")
    if symmetry not in _SYMMETRIES:
        raise MatrixMarketError(path, 1, f"unsupported symmetry '{symmetry}'")
    return layout, field, symmetry


def read_matrix_market(path) -> sp.csr_matrix:
    """
    Parse a real MatrixMarket file into a general CSR matrix

    Symmetric and skew-symmetric storage is expanded explicitly.

    Raises:
        MatrixMarketError: with the offending line number
    """
    path = Path(path)
    with open(path, "r", encoding="ascii", errors="replace") as handle:
        lines = handle.readlines()
    if not lines:
        raise MatrixMarketError(path, 1, "empty file")

    layout, _, symmetry = _parse_banner(path, lines[0])

    body = [
        (number, text.split())
        for number, text in enumerate(lines[1:], start=2)
        if text.strip() and not text.lstrip().startswith("%")
    ]
    if not body:
        raise MatrixMarketError(path, len(lines), "missing size line")

    size_line, size_tokens = body[0]
    expected = 3 if layout == "coordinate" else 2
    try:
        if len(size_tokens) != expected:
            raise ValueError
        dims = [int(token) for token in size_tokens]
    except ValueError:
        raise MatrixMarketError(path, size_line, f"expected {expected} integers in size line") from None
    m, n = dims[0], dims[1]

    rows: List[int] = []
    cols: List[int] = []
    vals: List[float] = []
    entries = body[1:]

    if layout == "coordinate":
        nnz = dims[2]
        if len(entries) != nnz:
            raise MatrixMarketError(path, size_line, f"declared {nnz} entries, found {len(entries)}")
        for number, tokens in entries:
            try:
                if len(tokens) != 3:
                    raise ValueError
                i, j, value = int(tokens[0]) - 1, int(tokens[1]) - 1, float(tokens[2])
            except ValueError:
                raise MatrixMarketError(path, number, "expected 'row col value'") from None
            if not (0 <= i < m and 0 <= j < n):
                raise MatrixMarketError(path, number, f"index ({i + 1}, {j + 1}) out of range")
            rows.append(i)
            cols.append(j)
            vals.append(value)
    else:
        positions = [
            (i, j) for j in range(n) for i in range(m)
            if symmetry == "general" or i > j or (symmetry == "symmetric" and i == j)
        ]
        if len(entries) != len(positions):
            raise MatrixMarketError(path, size_line, f"expected {len(positions)} values, found {len(entries)}")
        for (i, j), (number, tokens) in zip(positions, entries):
            try:
                if len(tokens) != 1:
                    raise ValueError
                value = float(tokens[0])
            except ValueError:
                raise MatrixMarketError(path, number, "expected a single value") from None
            rows.append(i)
            cols.append(j)
            vals.append(value)

    if symmetry != "general":
        sign = 1.0 if symmetry == "symmetric" else -1.0
        mirrored = [(j, i, sign * v) for i, j, v in zip(rows, cols, vals) if i != j]
        for i, j, v in mirrored:
            rows.append(i)
            cols.append(j)
            vals.append(v)

    matrix = sp.csr_matrix((vals, (rows, cols)), shape=(m, n), dtype=np.float64)
    matrix.sum_duplicates()
    matrix.sort_indices()
    return matrix


def write_matrix_market(path, matrix, comments: Iterable[str] = ()) -> None:
    """Write a real general coordinate file with full double precision"""
    scipy.io.mmwrite(
        str(path),
        sp.coo_matrix(matrix),
        comment="\n".join(comments),
        field="real",
        precision=17,
        symmetry="general",
    )


def rhs_path_for(path) -> Path:
    path = Path(path)
    return path.with_name(f"{path.stem}_b.mtx")


def load_matrix_market(path, seed: int = 0) -> MatrixProblem:
    """
    Load an operator and its right-hand side

    A sibling ``<stem>_b.mtx`` is used as the data when present; otherwise
    y = A x_true with x_true drawn from a seeded standard normal.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Matrix file not found: {path}")
    matrix = read_matrix_market(path)
    operator = MatrixOperator(matrix)

    rhs_file = rhs_path_for(path)
    if rhs_file.is_file():
        rhs = read_matrix_market(rhs_file).toarray().ravel()
        if rhs.shape[0] != operator.n_out:
            raise MatrixMarketError(rhs_file, 2, f"rhs length {rhs.shape[0]} != {operator.n_out} rows")
        logger.info("Loaded %s with rhs from %s", path.name, rhs_file.name)
        return MatrixProblem(path.stem, operator, rhs, None, True)

    x_true = np.random.default_rng(seed).standard_normal(operator.n_in)
    logger.info("Loaded %s (%sx%s), synthesized rhs with seed %s", path.name, operator.n_out, operator.n_in, seed)
    return MatrixProblem(path.stem, operator, operator.apply(x_true), x_true, False)


# ----------------------------------------------------------------------
# Bundled collection
# ----------------------------------------------------------------------
def _banded(rng: np.random.Generator, m: int, n: int) -> sp.csr_matrix:
    offsets = [-2, -1, 0, 1, 2]
    lengths = [min(m + k, n) if k < 0 else min(m, n - k) for k in offsets]
    diagonals = [rng.uniform(0.5, 1.5, size=length) for length in lengths]
    return sp.diags(diagonals, offsets, shape=(m, n), format="csr")


def _random_sparse(rng: np.random.Generator, m: int, n: int) -> sp.csr_matrix:
    matrix = sp.random(m, n, density=0.05, random_state=rng, data_rvs=rng.standard_normal, format="csr")
    return (matrix + sp.eye(m, n, format="csr")).tocsr()


def _graded(rng: np.random.Generator, m: int, n: int) -> sp.csr_matrix:
    scales = np.logspace(0, -3, n)
    base = sp.random(m, n, density=0.08, random_state=rng, data_rvs=rng.standard_normal, format="csr")
    return (sp.eye(m, n, format="csr") + base) @ sp.diags(scales)


def _laplacian(rng: np.random.Generator, m: int, n: int) -> sp.csr_matrix:
    shift = rng.uniform(0.05, 0.5)
    return sp.diags([-1.0, 2.0 + shift, -1.0], [-1, 0, 1],
                    shape=(m, n), format="csr")


_FAMILIES = (("banded", _banded), ("sprand", _random_sparse), ("graded", _graded), ("lap", _laplacian))


def matrix_collection(out_dir, seed: int = 0, count: int = 12) -> List[Path]:
    """
    Write ``count`` deterministic sparse least-squares matrices and a manifest

    Sizes lie in [100, 300] with m >= n; the manifest lists one file per line.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for k in range(count):
        rng = np.random.default_rng(seed * 1000 + k)
        family, build = _FAMILIES[k % len(_FAMILIES)]
        n = int(rng.integers(100, 201))
        m = int(rng.integers(n, 301))
        matrix = build(rng, m, n)
        path = out_dir / f"{family}_{k:02d}.mtx"
        write_matrix_market(path, matrix, [f"synthetic family={family} seed={seed} index={k}"])
        paths.append(path)

    manifest = out_dir / "manifest.txt"
    manifest.write_text("\n".join(p.name for p in paths) + "\n", encoding="utf-8")
    logger.info("Wrote %s collection matrices to %s", count, out_dir)
    return paths


def read_manifest(path) -> List[Path]:
    """Matrix paths listed in a manifest (relative entries resolve against its directory)"""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Manifest not found: {path}")
    entries = []
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            entry = Path(line)
            entries.append(entry if entry.is_absolute() else path.parent / entry)
    return entries
