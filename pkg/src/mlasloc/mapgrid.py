"""Rectangular x-y evaluation grids and the likelihood-map container."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .textio import fmt

# Floor used when exporting a map in normalized dB (cells with zero or
# sentinel values would otherwise be -inf).
DB_FLOOR = -300.0


@dataclass(frozen=True)
class GridSpec:
    """Uniform rectangular grid: nodes at min + i * spacing, max inclusive."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    spacing: float = 0.25

    def __post_init__(self):
        if self.spacing <= 0:
            raise ValueError("spacing must be > 0")
        if self.x_max <= self.x_min or self.y_max <= self.y_min:
            raise ValueError("grid bounds must satisfy max > min")

    @property
    def nx(self) -> int:
        return int(np.floor((self.x_max - self.x_min) / self.spacing + 1e-9)) + 1

    @property
    def ny(self) -> int:
        return int(np.floor((self.y_max - self.y_min) / self.spacing + 1e-9)) + 1

    def xs(self) -> np.ndarray:
        return self.x_min + self.spacing * np.arange(self.nx)

    def ys(self) -> np.ndarray:
        return self.y_min + self.spacing * np.arange(self.ny)


@dataclass(frozen=True)
class LikelihoodMap:
    """Scalar field sampled on a GridSpec; values[i, j] sits at (xs[i], ys[j]).

    Out-of-view cells carry a -inf sentinel and are skipped by peak search;
    NaN values are rejected.
    """

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        expected = (self.grid.nx, self.grid.ny)
        if self.values.shape != expected:
            raise ValueError(
                f"values shape {self.values.shape} inconsistent with grid {expected}"
            )
        if np.isnan(self.values).any():
            raise ValueError("map values must not contain NaN")

    def xs(self) -> np.ndarray:
        return self.grid.xs()

    def ys(self) -> np.ndarray:
        return self.grid.ys()

    def cell_position(self, i: int, j: int) -> np.ndarray:
        return np.array(
            [self.grid.x_min + i * self.grid.spacing, self.grid.y_min + j * self.grid.spacing]
        )

    def argmax_cell(self) -> tuple[int, int]:
        flat = int(np.argmax(self.values))
        return np.unravel_index(flat, self.values.shape)

    def normalized_db(self) -> np.ndarray:
        """Values as 10*log10(v / peak), floored at DB_FLOOR."""
        finite = self.values[np.isfinite(self.values)]
        peak = float(finite.max())
        if peak <= 0:
            return np.full_like(self.values, DB_FLOOR)
        with np.errstate(divide="ignore", invalid="ignore"):
            db = 10.0 * np.log10(np.maximum(self.values, 0.0) / peak)
        return np.maximum(np.nan_to_num(db, nan=DB_FLOOR, neginf=DB_FLOOR), DB_FLOOR)

    def to_csv(self, path, values: np.ndarray | None = None, header: str = "x,y,value"):
        vals = self.values if values is None else values
        xs, ys = self.xs(), self.ys()
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(header + "\n")
            for i, x in enumerate(xs):
                for j, y in enumerate(ys):
                    fh.write(f"{fmt(float(x))},{fmt(float(y))},{fmt(float(vals[i, j]))}\n")

    def to_csv_db(self, path):
        self.to_csv(path, values=self.normalized_db(), header="x,y,db")


def local_maxima_2d(values: np.ndarray) -> list[tuple[int, int]]:
    """Cells strictly greater than each of their (up to 8) neighbors.

    Non-finite cells are never maxima; non-finite neighbors never block a
    finite cell. Plateau cells fail the strict comparison.
    """
    nx, ny = values.shape
    padded = np.full((nx + 2, ny + 2), -np.inf)
    padded[1:-1, 1:-1] = values
    center = padded[1:-1, 1:-1]
    is_max = np.isfinite(center)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            neigh = padded[1 + di : 1 + di + nx, 1 + dj : 1 + dj + ny]
            is_max &= center > neigh
    return [(int(i), int(j)) for i, j in zip(*np.nonzero(is_max))]
