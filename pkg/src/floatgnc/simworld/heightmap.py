"""Floor height maps and the slope force they induce."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import _kernels_py


@dataclass(frozen=True)
class Heightmap:
    """Heights on a uniform grid; ``grid[i, j]`` sits at ``(x0 + i*cell, y0 + j*cell)``.

    Heights are bilinearly interpolated, so the gradient is continuous
    along grid lines and bounded by the steepest cell.
    """

    grid: np.ndarray
    cell: float
    x0: float
    y0: float
    rows: list = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        g = np.ascontiguousarray(self.grid, dtype=float)
        if g.ndim != 2 or min(g.shape) < 2 or not np.all(np.isfinite(g)):
            raise ValueError("height grid must be a finite 2-D array of at least 2x2")
        if not self.cell > 0:
            raise ValueError("cell size must be positive")
        g.setflags(write=False)
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "rows", g.tolist())

    @property
    def extent(self):
        nx, ny = self.grid.shape
        return (self.x0, self.x0 + (nx - 1) * self.cell, self.y0, self.y0 + (ny - 1) * self.cell)

    def gradient(self, x: float, y: float):
        """``(dh/dx, dh/dy, inside)``; zero gradient outside the map."""
        return _kernels_py.height_gradient(self.rows, self.x0, self.y0, self.cell, float(x), float(y))

    def height(self, x: float, y: float) -> float:
        nx, ny = self.grid.shape
        u = (x - self.x0) / self.cell
        v = (y - self.y0) / self.cell
        if not (0 <= u <= nx - 1 and 0 <= v <= ny - 1):
            return float("nan")
        i, j = min(int(u), nx - 2), min(int(v), ny - 2)
        fu, fv = u - i, v - j
        g = self.grid
        return float((1 - fu) * (1 - fv) * g[i, j] + fu * (1 - fv) * g[i + 1, j]
                     + (1 - fu) * fv * g[i, j + 1] + fu * fv * g[i + 1, j + 1])

    def max_slope(self) -> float:
        """Upper bound of the gradient norm over the map (per-axis cell-edge maxima)."""
        g = self.grid
        gx = np.diff(g, axis=0) / self.cell
        gy = np.diff(g, axis=1) / self.cell
        # corners of each cell combine one edge difference per axis
        cx = np.maximum(np.abs(gx[:, :-1]), np.abs(gx[:, 1:]))
        cy = np.maximum(np.abs(gy[:-1, :]), np.abs(gy[1:, :]))
        return float(np.max(np.hypot(cx, cy)))

    @classmethod
    def _axes(cls, half_extent, cell):
        n = int(round(2 * half_extent / cell)) + 1
        return np.linspace(-half_extent, half_extent, n), -half_extent

    @classmethod
    def flat(cls, half_extent: float = 20.0, cell: float = 0.5) -> Heightmap:
        ax, o = cls._axes(half_extent, cell)
        return cls(np.zeros((len(ax), len(ax))), cell, o, o)

    @classmethod
    def uniform_slope(cls, gradient, half_extent: float = 20.0, cell: float = 0.5) -> Heightmap:
        """Plane ``h = gx*x + gy*y``; bilinear interpolation reproduces it exactly."""
        gx, gy = (float(v) for v in gradient)
        ax, o = cls._axes(half_extent, cell)
        X, Y = np.meshgrid(ax, ax, indexing="ij")
        return cls(gx * X + gy * Y, cell, o, o)

    @classmethod
    def random_field(cls, rng: np.random.Generator, max_slope: float = 1e-3,
                     half_extent: float = 20.0, cell: float = 0.5, n_modes: int = 6,
                     wavelength=(4.0, 16.0)) -> Heightmap:
        """Smooth random floor: a few long-wavelength sinusoids scaled to ``max_slope``."""
        ax, o = cls._axes(half_extent, cell)
        X, Y = np.meshgrid(ax, ax, indexing="ij")
        h = np.zeros_like(X)
        for _ in range(n_modes):
            lam = rng.uniform(*wavelength)
            ang = rng.uniform(0.0, np.pi)
            phase = rng.uniform(0.0, 2 * np.pi)
            k = 2 * np.pi / lam
            h += rng.normal() * np.sin(k * (np.cos(ang) * X + np.sin(ang) * Y) + phase) / k
        hm = cls(h, cell, o, o)
        s = hm.max_slope()
        return cls(h * (max_slope / s) if s > 0 else h, cell, o, o)


def slope_force(pos, heightmap: Heightmap, mass: float, gravity: float):
    """Small-slope gravity force ``-m g grad h`` in the world frame.

    Returns:
        ``(force (2,), inside)``; outside the map the force is zero and
        ``inside`` is False.
    """
    gx, gy, inside = heightmap.gradient(pos[0], pos[1])
    return np.array([-mass * gravity * gx, -mass * gravity * gy]), inside
