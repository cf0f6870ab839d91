"""
Imaging test problems: separable Gaussian blur, parallel-beam tomography,
ground-truth images and GridImage file formats
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Tuple
import logging

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .base import MatrixOperator, OperatorError

logger = logging.getLogger(__name__)

# Modified Shepp-Logan ellipses: (value, semi-axis a, semi-axis b, x0, y0, angle in degrees)
_SHEPP_LOGAN = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
)
# Keeps the outer ellipse clear of a boundary ring of width grid_n/16.
_PHANTOM_SCALE = 0.85


@dataclass(frozen=True, eq=False)
class GridImage:
    """Row-major image of width x height pixels"""

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=np.float64).reshape(-1)
        if pixels.shape[0] != self.width * self.height:
            raise OperatorError(
                f"GridImage expects {self.width * self.height} pixels, got {pixels.shape[0]}"
            )
        if not np.all(np.isfinite(pixels)):
            raise OperatorError("GridImage pixels must be finite")
        object.__setattr__(self, "pixels", pixels)

    @classmethod
    def from_array(cls, array: np.ndarray) -> "GridImage":
        array = np.asarray(array, dtype=np.float64)
        return cls(array.shape[1], array.shape[0], array.ravel())

    def as_array(self) -> np.ndarray:
        return self.pixels.reshape(self.height, self.width)

    @property
    def n(self) -> int:
        return self.width * self.height


# ----------------------------------------------------------------------
# Forward operators
# ----------------------------------------------------------------------
def blur_toeplitz(grid_n: int, band: int, sigma: float) -> np.ndarray:
    """Banded symmetric Toeplitz factor T of the separable blur"""
    if sigma <= 0:
        raise OperatorError(f"Blur sigma must be positive, got {sigma}")
    if band < 1 or band >= grid_n:
        raise OperatorError(f"Blur band must satisfy 1 <= band < grid_n, got band={band}, grid_n={grid_n}")

    k = np.arange(grid_n, dtype=np.float64)
    column = np.exp(-(k ** 2) / (2.0 * sigma ** 2)) / (sigma * np.sqrt(2.0 * np.pi))
    column[band:] = 0.0
    return scipy.linalg.toeplitz(column)


def gaussian_blur_operator(grid_n: int, band: int, sigma: float) -> MatrixOperator:
    """Separable blur A = T kron T acting on row-major grid_n x grid_n images"""
    factor = sp.csr_matrix(blur_toeplitz(grid_n, band, sigma))
    operator = MatrixOperator(sp.kron(factor, factor, format="csr"))
    logger.info("Built blur operator grid_n=%s band=%s sigma=%s (nnz=%s)",
                grid_n, band, sigma, operator.matrix.nnz)
    return operator


def tomo_geometry(grid_n: int, n_angles: int, n_detectors: int) -> Tuple[np.ndarray, np.ndarray]:
    """Angles uniform in [0, pi) and detector offsets at cell-centre spacing across the grid"""
    angles = np.arange(n_angles) * np.pi / n_angles
    offsets = -grid_n / 2.0 + (np.arange(n_detectors) + 0.5) * grid_n / n_detectors
    return angles, offsets


def _ray_segments(grid_n: int, theta: float, offset: float):
    """Siddon traversal of one ray; returns (cell indices, intersection lengths)"""
    half = grid_n / 2.0
    direction = np.array([np.cos(theta), np.sin(theta)])
    direction[np.abs(direction) < 1e-12] = 0.0
    origin = offset * np.array([-np.sin(theta), np.cos(theta)])

    t_enter, t_exit = -np.inf, np.inf
    for axis in range(2):
        if direction[axis] == 0.0:
            if abs(origin[axis]) >= half:
                return np.empty(0, dtype=np.int64), np.empty(0)
            continue
        t1 = (-half - origin[axis]) / direction[axis]
        t2 = (half - origin[axis]) / direction[axis]
        t_enter = max(t_enter, min(t1, t2))
        t_exit = min(t_exit, max(t1, t2))
    if not t_exit > t_enter:
        return np.empty(0, dtype=np.int64), np.empty(0)

    planes = np.arange(grid_n + 1) - half
    crossings = [np.array([t_enter, t_exit])]
    for axis in range(2):
        if direction[axis] != 0.0:
            t = (planes - origin[axis]) / direction[axis]
            crossings.append(t[(t > t_enter) & (t < t_exit)])
    ts = np.unique(np.concatenate(crossings))

    lengths = np.diff(ts)
    keep = lengths > 1e-12
    mids = 0.5 * (ts[:-1] + ts[1:])[keep]
    lengths = lengths[keep]
    xs = origin[0] + mids * direction[0]
    ys = origin[1] + mids * direction[1]
    cols = np.clip(np.floor(xs + half).astype(np.int64), 0, grid_n - 1)
    rows = np.clip(np.floor(half - ys).astype(np.int64), 0, grid_n - 1)
    return rows * grid_n + cols, lengths


def tomo_ray_operator(grid_n: int, n_angles: int, n_detectors: int) -> MatrixOperator:
    """Parallel-beam ray/cell intersection-length matrix on a unit-cell grid"""
    if grid_n < 4:
        raise OperatorError(f"Tomography grid must be at least 4x4, got {grid_n}")
    angles, offsets = tomo_geometry(grid_n, n_angles, n_detectors)

    row_idx, col_idx, values = [], [], []
    ray = 0
    for theta in angles:
        for offset in offsets:
            cells, lengths = _ray_segments(grid_n, float(theta), float(offset))
            row_idx.append(np.full(cells.shape[0], ray, dtype=np.int64))
            col_idx.append(cells)
            values.append(lengths)
            ray += 1

    matrix = sp.csr_matrix(
        (np.concatenate(values), (np.concatenate(row_idx), np.concatenate(col_idx))),
        shape=(ray, grid_n * grid_n),
    )
    logger.info("Built tomography operator grid_n=%s rays=%s (nnz=%s)", grid_n, ray, matrix.nnz)
    return MatrixOperator(matrix)


# ----------------------------------------------------------------------
# Ground-truth images
# ----------------------------------------------------------------------
def _pixel_centres(grid_n: int) -> Tuple[np.ndarray, np.ndarray]:
    centres = (np.arange(grid_n) + 0.5) / grid_n
    return np.meshgrid(centres, centres)  # (u across columns, v down rows)


def shepp_phantom(grid_n: int) -> GridImage:
    """Piecewise-constant ellipse phantom with values in [0, 1]"""
    if grid_n < 16:
        raise OperatorError(f"Phantoms need grid_n >= 16, got {grid_n}")
    u, v = _pixel_centres(grid_n)
    x = (2.0 * u - 1.0) / _PHANTOM_SCALE
    y = (1.0 - 2.0 * v) / _PHANTOM_SCALE

    image = np.zeros((grid_n, grid_n))
    for value, a, b, x0, y0, angle in _SHEPP_LOGAN:
        phi = np.deg2rad(angle)
        dx, dy = x - x0, y - y0
        xr = dx * np.cos(phi) + dy * np.sin(phi)
        yr = -dx * np.sin(phi) + dy * np.cos(phi)
        image[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += value
    return GridImage.from_array(np.clip(image, 0.0, 1.0))


def blur_truth(grid_n: int) -> GridImage:
    """Piecewise-smooth deblurring target: a ramp block, a cosine disc and a bump"""
    if grid_n < 16:
        raise OperatorError(f"Test images need grid_n >= 16, got {grid_n}")
    u, v = _pixel_centres(grid_n)
    image = np.zeros((grid_n, grid_n))

    block = (u >= 0.2) & (u <= 0.45) & (v >= 0.2) & (v <= 0.8)
    image[block] = 0.3 + 0.4 * (v[block] - 0.2) / 0.6

    radius = np.hypot(u - 0.68, v - 0.35)
    disc = radius <= 0.15
    image[disc] = 0.75 + 0.25 * np.cos(np.pi * radius[disc] / 0.15)

    bump_radius = np.hypot(u - 0.68, v - 0.7)
    bump = bump_radius <= 0.15
    image[bump] += 0.8 * np.exp(-(bump_radius[bump] ** 2) / (2 * 0.06 ** 2))
    return GridImage.from_array(np.clip(image, 0.0, 1.0))


# ----------------------------------------------------------------------
# File formats
# ----------------------------------------------------------------------
def write_pgm(path, image: GridImage, comments: Iterable[str] = ()) -> None:
    """Binary 16-bit PGM (P5); values are clipped to [0, 1] and scaled to 65535"""
    scaled = np.round(np.clip(image.as_array(), 0.0, 1.0) * 65535).astype(">u2")
    header = ["P5"] + [f"# {line}" for line in comments]
    header.append(f"{image.width} {image.height}")
    header.append("65535")
    with open(path, "wb") as handle:
        handle.write(("\n".join(header) + "\n").encode("latin-1", errors="replace"))
        handle.write(scaled.tobytes())


def read_pgm(path) -> GridImage:
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        # skip whitespace and comments between header tokens
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos].decode("ascii"))
    pos += 1  # single whitespace byte before the raster

    if tokens[0] != "P5":
        raise OperatorError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    dtype = ">u2" if maxval > 255 else "u1"
    raster = np.frombuffer(data[pos:], dtype=dtype, count=width * height)
    return GridImage(width, height, raster.astype(np.float64) / maxval)


def write_image_csv(path, image: GridImage, comments: Iterable[str] = ()) -> None:
    np.savetxt(path, image.as_array(), delimiter=",", fmt="%.17g",
               header="\n".join(comments), comments="# ", encoding="utf-8")


def read_image_csv(path) -> GridImage:
    values = np.loadtxt(path, delimiter=",", comments="#", encoding="utf-8")
    return GridImage.from_array(np.atleast_2d(values))


def save_image(stem, image: GridImage, comments: Iterable[str] = ()) -> None:
    """Write ``stem``.pgm and ``stem``.csv"""
    comments = list(comments)
    write_pgm(f"{stem}.pgm", image, comments)
    write_image_csv(f"{stem}.csv", image, comments)
