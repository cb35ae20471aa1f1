"""In-memory representation and CSV ingestion of functional regression data.

A dataset is an n x T response matrix observed on a common grid of T
sampling locations, together with an n x d design matrix. Everything is
validated eagerly and immutable afterwards, so datasets can be shared
read-only across parallel workers.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

RANK_TOLERANCE = 1e-10


class DataValidationError(ValueError):
    """Raised when an ingested matrix violates a dataset invariant."""


@dataclass(frozen=True)
class SamplingGrid:
    """Strictly increasing sampling locations t_1 < ... < t_T, T >= 2."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        object.__setattr__(self, "points", pts)
        if pts.ndim != 1 or pts.size < 2:
            raise DataValidationError("grid must be a 1-d vector with at least 2 points")
        if not np.all(np.isfinite(pts)):
            idx = int(np.flatnonzero(~np.isfinite(pts))[0])
            raise DataValidationError(f"non-finite grid value at index {idx}")
        gaps = np.diff(pts)
        if np.any(gaps <= 0):
            idx = int(np.flatnonzero(gaps <= 0)[0]) + 1
            raise DataValidationError(f"non-increasing grid at index {idx}")

    def __len__(self):
        return self.points.size

    @property
    def max_gap(self) -> float:
        """Largest adjacent spacing delta_T = max_l (t_{l+1} - t_l)."""
        return float(np.max(np.diff(self.points)))

    @property
    def domain_length(self) -> float:
        return float(self.points[-1] - self.points[0])


@dataclass(frozen=True)
class FunctionalDataset:
    """n curves sampled on a common grid plus the n x d design matrix.

    The design is required to have full column rank (singular value ratio
    above RANK_TOLERANCE); an intercept column is never added implicitly.
    """

    responses: np.ndarray
    design: np.ndarray
    grid: SamplingGrid

    def __post_init__(self):
        y = np.ascontiguousarray(self.responses, dtype=float)
        x = np.ascontiguousarray(self.design, dtype=float)
        object.__setattr__(self, "responses", y)
        object.__setattr__(self, "design", x)
        if y.ndim != 2:
            raise DataValidationError("responses must be a 2-d matrix")
        if x.ndim != 2:
            raise DataValidationError("design must be a 2-d matrix")
        if y.shape[0] != x.shape[0]:
            raise DataValidationError(
                f"responses have {y.shape[0]} rows but design has {x.shape[0]}"
            )
        if y.shape[1] != len(self.grid):
            raise DataValidationError(
                f"responses have {y.shape[1]} columns but grid has {len(self.grid)} points"
            )
        for name, m in (("responses", y), ("design", x)):
            bad = ~np.isfinite(m)
            if bad.any():
                i, j = np.argwhere(bad)[0]
                raise DataValidationError(f"non-finite {name} cell at row {i}, column {j}")
        sv = np.linalg.svd(x, compute_uv=False)
        if sv[-1] <= RANK_TOLERANCE * sv[0]:
            raise DataValidationError(
                "rank-deficient design: singular value ratio "
                f"{sv[-1] / sv[0]:.3e} <= {RANK_TOLERANCE:g}"
            )
        y.setflags(write=False)
        x.setflags(write=False)
        self.grid.points.setflags(write=False)

    @property
    def n(self) -> int:
        return self.responses.shape[0]

    @property
    def d(self) -> int:
        return self.design.shape[1]

    @property
    def t(self) -> int:
        return self.responses.shape[1]


@dataclass(frozen=True)
class Contrast:
    """Unit-norm linear combination of design columns; normalized on construction."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        nrm = np.linalg.norm(w)
        if not np.isfinite(nrm) or nrm == 0.0:
            raise DataValidationError("contrast weights must be finite and nonzero")
        w = w / nrm
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def unit(cls, index: int, d: int) -> "Contrast":
        w = np.zeros(d)
        w[index] = 1.0
        return cls(w)


@dataclass(frozen=True)
class DatasetSummary:
    n: int
    d: int
    t: int
    max_gap: float
    response_ranges: tuple = field(repr=False)  # per grid column (min, max)


def _read_numeric_csv(path) -> np.ndarray:
    """Read an RFC-4180-subset CSV into a float matrix.

    An optional single header row is detected by a non-numeric first row and
    skipped. Malformed cells are reported with row/column coordinates.
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataValidationError(f"{path}: empty file")

    def parse_row(cells, row_idx):
        out = []
        for j, c in enumerate(cells):
            try:
                out.append(float(c))
            except ValueError:
                raise DataValidationError(
                    f"{path}: non-numeric cell at row {row_idx}, column {j}: {c!r}"
                ) from None
        return out

    start = 0
    try:
        first = parse_row(rows[0], 0)
    except DataValidationError:
        start = 1  # header row
        if len(rows) == 1:
            raise DataValidationError(f"{path}: no data rows after header") from None
        first = parse_row(rows[1], 1)
    width = len(first)
    data = [first]
    for i in range(start + 1, len(rows)):
        row = parse_row(rows[i], i)
        if len(row) != width:
            raise DataValidationError(
                f"{path}: row {i} has {len(row)} cells, expected {width}"
            )
        data.append(row)
    return np.asarray(data, dtype=float)


def load_dataset(responses_path, design_path, grid_path) -> FunctionalDataset:
    """Load and validate a dataset from three CSV files.

    The grid file holds a single column; it is checked for monotonicity, never
    re-sorted. One row per subject in the response and design files.
    """
    responses = _read_numeric_csv(responses_path)
    design = _read_numeric_csv(design_path)
    grid_mat = _read_numeric_csv(grid_path)
    if grid_mat.shape[1] != 1:
        raise DataValidationError(f"{grid_path}: grid must be a single-column file")
    grid = SamplingGrid(grid_mat[:, 0])
    return FunctionalDataset(responses=responses, design=design, grid=grid)


def save_dataset(ds: FunctionalDataset, responses_path, design_path, grid_path) -> None:
    """Write a dataset back to CSV with 17 significant digits (lossless round trip)."""
    np.savetxt(responses_path, ds.responses, delimiter=",", fmt="%.17g")
    np.savetxt(design_path, ds.design, delimiter=",", fmt="%.17g")
    np.savetxt(grid_path, ds.grid.points[:, None], delimiter=",", fmt="%.17g")


def summarize(ds: FunctionalDataset) -> DatasetSummary:
    y = ds.responses
    ranges = tuple((float(lo), float(hi)) for lo, hi in zip(y.min(axis=0), y.max(axis=0)))
    return DatasetSummary(n=ds.n, d=ds.d, t=ds.t, max_gap=ds.grid.max_gap,
                          response_ranges=ranges)
