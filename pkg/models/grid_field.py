from dataclasses import dataclass
from typing import Tuple

import torch


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid x_j = j * dx, j = 0..N-1, with N * dx = length."""

    length: float
    dx: float

    def __post_init__(self):
        if not (self.dx > 0 and self.length > 0):
            raise ValueError(f"grid needs positive length and spacing, got length={self.length}, dx={self.dx}")
        n_points = int(round(self.length / self.dx))
        if abs(n_points * self.dx - self.length) > 1e-9 * self.length:
            raise ValueError(f"length {self.length} is not a multiple of dx {self.dx}")
        if n_points < 16:
            raise ValueError(f"grid needs at least 16 points, got {n_points}")

    @property
    def n_points(self) -> int:
        return int(round(self.length / self.dx))

    def coordinates(self) -> torch.Tensor:
        return torch.arange(self.n_points, dtype=torch.float64) * self.dx

    def zeros(self) -> "GridField":
        return GridField(self, torch.zeros(self.n_points, dtype=torch.float64))


@dataclass(frozen=True)
class GridField:
    grid: GridSpec
    values: torch.Tensor

    def __post_init__(self):
        if self.values.dim() != 1 or self.values.numel() != self.grid.n_points:
            raise ValueError(
                f"field has shape {tuple(self.values.shape)}, grid expects ({self.grid.n_points},)"
            )
        if self.values.dtype != torch.float64:
            object.__setattr__(self, "values", self.values.to(torch.float64))
        if not bool(torch.isfinite(self.values).all()):
            raise ValueError("field contains non-finite values")

    @property
    def length(self) -> float:
        return self.grid.length

    @property
    def dx(self) -> float:
        return self.grid.dx

    @property
    def n_points(self) -> int:
        return self.grid.n_points

    @property
    def x(self) -> torch.Tensor:
        return self.grid.coordinates()

    def with_values(self, values: torch.Tensor) -> "GridField":
        return GridField(self.grid, values)

    def interpolate(self, x: float) -> float:
        """Periodic linear interpolation of the field at position x."""
        s = (x % self.length) / self.dx
        j = int(s) % self.n_points
        w = s - int(s)
        u = self.values
        return float((1.0 - w) * u[j] + w * u[(j + 1) % self.n_points])

    def locate_peak(self) -> Tuple[float, float]:
        """Position and value of the maximum, refined by a parabola through the
        discrete max and its two periodic neighbours."""
        u = self.values
        n = self.n_points
        j = int(torch.argmax(u))
        ym, y0, yp = float(u[(j - 1) % n]), float(u[j]), float(u[(j + 1) % n])
        curvature = ym - 2.0 * y0 + yp
        if curvature < 0.0:
            offset = 0.5 * (ym - yp) / curvature
            peak = y0 - 0.25 * (ym - yp) * offset
        else:
            offset, peak = 0.0, y0
        return ((j + offset) * self.dx) % self.length, peak
