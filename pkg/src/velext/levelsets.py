"""Analytic initial level-set profiles.

Sign convention throughout the package: the level-set function is positive in
the enclosed phase (inside the circle/sphere) and negative outside, so the
unit normal ``-grad(phi)/|grad(phi)|`` points out of the enclosed phase.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid, ScalarField


@dataclass(frozen=True)
class Ball:
    """``scale * (radius - |x - center|)``: the signed distance of a circle or sphere, times ``scale``."""

    center: tuple
    radius: float
    scale: float = 1.0

    @property
    def dim(self) -> int:
        return len(self.center)

    def value(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.scale * (self.radius - np.linalg.norm(x - np.asarray(self.center), axis=-1))

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        d = x - np.asarray(self.center)
        r = np.linalg.norm(d, axis=-1, keepdims=True)
        return -self.scale * d / np.where(r > 0, r, 1.0)

    def signed_distance(self, x) -> np.ndarray:
        return self.value(x) / self.scale

    def interface_points(self, spacing: float) -> np.ndarray:
        """Points exactly on the zero set with neighbour distance about ``spacing``."""
        c = np.asarray(self.center, dtype=float)
        if self.dim == 2:
            n = max(8, int(np.ceil(2 * np.pi * self.radius / spacing)))
            a = 2 * np.pi * np.arange(n) / n
            return c + self.radius * np.column_stack([np.cos(a), np.sin(a)])
        # Fibonacci sphere
        n = max(16, int(np.ceil(4 * np.pi * self.radius**2 / spacing**2)))
        k = np.arange(n) + 0.5
        z = 1 - 2 * k / n
        phi = np.pi * (1 + 5**0.5) * k
        rr = np.sqrt(1 - z * z)
        return c + self.radius * np.column_stack([rr * np.cos(phi), rr * np.sin(phi), z])

    def translated(self, shift) -> "Ball":
        return Ball(tuple(np.asarray(self.center) + np.asarray(shift)), self.radius, self.scale)


def circle(center=(0.0, 0.0), radius=1.0, scale=1.0) -> Ball:
    return Ball(tuple(float(c) for c in center), float(radius), float(scale))


def sphere(center=(0.0, 0.0, 0.0), radius=1.0, scale=1.0) -> Ball:
    return Ball(tuple(float(c) for c in center), float(radius), float(scale))


@dataclass(frozen=True)
class Ellipse:
    """Implicit ellipse ``1 - |(x - c)/radii|`` scaled to unit normal slope on average.

    Not a signed distance; used as a non-circular test shape whose exact
    signed distance is computed by brute force from ``boundary_points``.
    """

    center: tuple
    radii: tuple

    @property
    def dim(self) -> int:
        return len(self.center)

    def value(self, x) -> np.ndarray:
        q = (np.asarray(x, dtype=float) - np.asarray(self.center)) / np.asarray(self.radii)
        return np.mean(self.radii) * (1.0 - np.linalg.norm(q, axis=-1))

    def gradient(self, x) -> np.ndarray:
        radii = np.asarray(self.radii)
        q = (np.asarray(x, dtype=float) - np.asarray(self.center)) / radii
        r = np.linalg.norm(q, axis=-1, keepdims=True)
        return -np.mean(radii) * q / (radii * np.where(r > 0, r, 1.0))

    def boundary_points(self, n: int) -> np.ndarray:
        a = 2 * np.pi * np.arange(n) / n
        return np.asarray(self.center) + np.column_stack([np.cos(a), np.sin(a)]) * np.asarray(self.radii)


@dataclass(frozen=True)
class FieldProfile:
    """Adapter giving a sampled field the ``value``/``gradient`` interface."""

    field: ScalarField

    @property
    def dim(self) -> int:
        return self.field.grid.dim

    def value(self, x):
        return self.field(x)

    def gradient(self, x):
        return self.field.gradient_at(x)


def clamp_to_box(profile, grid: Grid):
    """Profile that equals ``profile`` near its zero set and tapers to 0 on the box boundary.

    ``max(phi, -dist(x, boundary))`` on the negative side keeps the zero set,
    the sign structure and the local signed-distance property, and vanishes
    on the boundary (the setting of the whole-domain viscosity problem).
    """

    def value(x):
        phi = profile.value(x)
        return np.maximum(phi, -grid.distance_to_boundary(x))

    return value


def sample_profile(profile, grid: Grid, clamp: bool = False, t: float = 0.0) -> ScalarField:
    func = clamp_to_box(profile, grid) if clamp else profile.value
    values = func(grid.nodes())
    if clamp:
        values[grid.boundary_mask()] = 0.0
    return ScalarField(grid, values, t)
