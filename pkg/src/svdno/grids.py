"""Uniform tensor-product grids and augmented coordinates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ShapeError

__all__ = ["Grid", "make_augmented_coordinates"]


@dataclass(frozen=True)
class Grid:
    """Uniform grid on a box; 1 or 2 spatial dimensions, row-major point order."""

    extents: tuple  # points per axis
    bounds: tuple = None  # ((lo, hi), ...) per axis, defaults to [0, 1] each

    def __post_init__(self):
        extents = tuple(int(e) for e in self.extents)
        object.__setattr__(self, "extents", extents)
        if not 1 <= len(extents) <= 2:
            raise ConfigurationError(f"grid must be 1D or 2D, got {len(extents)} axes")
        if any(e < 2 for e in extents):
            raise ConfigurationError(f"each axis needs >= 2 points, got extents {extents}")
        bounds = self.bounds or tuple((0.0, 1.0) for _ in extents)
        bounds = tuple((float(lo), float(hi)) for lo, hi in bounds)
        if len(bounds) != len(extents):
            raise ConfigurationError("bounds must match the number of axes")
        if any(hi <= lo for lo, hi in bounds):
            raise ConfigurationError(f"bounds must be increasing, got {bounds}")
        object.__setattr__(self, "bounds", bounds)

    @property
    def ndim(self):
        return len(self.extents)

    @property
    def num_points(self):
        return int(np.prod(self.extents))

    @property
    def spacing(self):
        return tuple((hi - lo) / (e - 1) for (lo, hi), e in zip(self.bounds, self.extents))

    def axis_coords(self, axis):
        lo, hi = self.bounds[axis]
        return np.linspace(lo, hi, self.extents[axis])

    def coords(self):
        """All grid points as an (n, ndim) array in row-major order."""
        axes = [self.axis_coords(i) for i in range(self.ndim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    def to_dict(self):
        return {"extents": list(self.extents), "bounds": [list(b) for b in self.bounds]}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["extents"]), tuple(tuple(b) for b in d["bounds"]))


def make_augmented_coordinates(grid: Grid, a: np.ndarray) -> np.ndarray:
    """Stack each grid point with the input-field value there: row j = (x_j, a_j).

    `a` may be shaped (n,), (n, d_a) or (extents..., d_a); returns (n, ndim + d_a).
    """
    a = np.asarray(a, dtype=np.float64)
    n = grid.num_points
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    else:
        a = a.reshape(-1, a.shape[-1])
    if a.shape[0] != n:
        raise ShapeError(f"input field has {a.shape[0]} values for a grid of {n} points")
    return np.concatenate([grid.coords(), a], axis=1)
