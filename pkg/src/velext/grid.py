"""Node-centred Cartesian grids, sampled scalar fields and finite differences."""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
from scipy.interpolate import RegularGridInterpolator


class GridError(ValueError):
    """Raised for malformed grids or fields."""


@dataclass(frozen=True)
class Grid:
    """Axis-aligned box sampled at ``shape`` nodes per axis.

    Node ``i`` along axis ``a`` sits at ``origin[a] + i * spacing[a]``; the
    first and last nodes lie on the box boundary.
    """

    origin: np.ndarray
    spacing: np.ndarray
    shape: tuple

    def __post_init__(self):
        origin = np.asarray(self.origin, dtype=float).reshape(-1)
        spacing = np.asarray(self.spacing, dtype=float).reshape(-1)
        shape = tuple(int(n) for n in self.shape)
        if origin.size not in (2, 3):
            raise GridError(f"grid dimension must be 2 or 3, got {origin.size}")
        if spacing.size == 1:
            spacing = np.full(origin.size, spacing[0])
        if spacing.size != origin.size or len(shape) != origin.size:
            raise GridError("origin, spacing and shape must agree in dimension")
        if np.any(spacing <= 0):
            raise GridError("grid spacing must be positive on every axis")
        if min(shape) < 4:
            raise GridError("need at least 4 nodes per axis")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "shape", shape)

    @classmethod
    def from_box(cls, lower, upper, n) -> "Grid":
        """Grid with ``n`` nodes per axis (int or sequence) spanning ``[lower, upper]``."""
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        n = np.broadcast_to(np.asarray(n, dtype=int), lower.shape)
        if np.any(upper <= lower):
            raise GridError("upper corner must exceed lower corner")
        return cls(lower, (upper - lower) / (n - 1), tuple(n))

    @classmethod
    def from_spacing(cls, lower, upper, h) -> "Grid":
        """Grid of spacing ``h`` covering ``[lower, upper]`` (upper is rounded to a node)."""
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        n = np.rint((upper - lower) / h).astype(int) + 1
        return cls(lower, np.full(lower.shape, float(h)), tuple(n))

    @property
    def dim(self) -> int:
        return self.origin.size

    @property
    def h(self) -> float:
        """Largest spacing; the scale used for O(h) tolerances."""
        return float(self.spacing.max())

    @property
    def upper(self) -> np.ndarray:
        return self.origin + self.spacing * (np.asarray(self.shape) - 1)

    @property
    def domain_box(self) -> tuple:
        return self.origin.copy(), self.upper

    def axes(self) -> list:
        return [self.origin[a] + self.spacing[a] * np.arange(n) for a, n in enumerate(self.shape)]

    def nodes(self) -> np.ndarray:
        """Node coordinates, shape ``shape + (dim,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def contains(self, x, pad: float = 0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo, hi = self.origin - pad, self.upper + pad
        return np.all((x >= lo) & (x <= hi), axis=-1)

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        for a in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[a] = 0
            mask[tuple(idx)] = True
            idx[a] = -1
            mask[tuple(idx)] = True
        return mask

    def distance_to_boundary(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.minimum(x - self.origin, self.upper - x).min(axis=-1)

    def refine(self, factor: int = 2) -> "Grid":
        shape = tuple((n - 1) * factor + 1 for n in self.shape)
        return Grid(self.origin, self.spacing / factor, shape)


@dataclass
class ScalarField:
    """Nodal samples of a scalar function on ``grid`` at time ``t``."""

    grid: Grid
    values: np.ndarray
    t: float = 0.0
    _interp: dict = dc_field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise GridError(f"values shape {self.values.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise GridError("field contains non-finite values")
        self._interp = {}

    @classmethod
    def sample(cls, grid: Grid, func, t: float = 0.0) -> "ScalarField":
        """Evaluate ``func(points)`` at every node."""
        return cls(grid, np.asarray(func(grid.nodes()), dtype=float), t)

    def with_values(self, values, t=None) -> "ScalarField":
        return ScalarField(self.grid, values, self.t if t is None else t)

    def _interpolator(self, key, data):
        if key not in self._interp:
            self._interp[key] = RegularGridInterpolator(
                self.grid.axes(), data, method="linear", bounds_error=False, fill_value=None
            )
        return self._interp[key]

    def __call__(self, x) -> np.ndarray:
        """Multilinear interpolation at points ``x`` (shape ``(..., dim)``)."""
        x = np.asarray(x, dtype=float)
        return self._interpolator("value", self.values)(x.reshape(-1, self.grid.dim)).reshape(x.shape[:-1])

    def gradient_at(self, x) -> np.ndarray:
        """Central-difference gradient interpolated multilinearly to ``x``."""
        x = np.asarray(x, dtype=float)
        g = gradient(self)
        out = self._interpolator("grad", g)(x.reshape(-1, self.grid.dim))
        return out.reshape(x.shape)


def _pad_linear(u: np.ndarray, axis: int) -> np.ndarray:
    """One ghost layer per side along ``axis`` by linear extrapolation."""
    first = np.take(u, [0], axis=axis)
    second = np.take(u, [1], axis=axis)
    last = np.take(u, [-1], axis=axis)
    before = np.take(u, [-2], axis=axis)
    return np.concatenate([2 * first - second, u, 2 * last - before], axis=axis)


def one_sided_differences(values: np.ndarray, spacing, pad: str = "linear"):
    """Backward and forward differences per axis, each of shape ``(dim,) + shape``.

    ``pad`` selects the ghost value: ``"linear"`` extrapolation, ``"edge"`` copy,
    or ``"zero"`` (homogeneous Dirichlet ghosts).
    """
    dim = values.ndim
    dminus = np.empty((dim,) + values.shape)
    dplus = np.empty((dim,) + values.shape)
    for a in range(dim):
        if pad == "linear":
            up = _pad_linear(values, a)
        else:
            width = [(0, 0)] * dim
            width[a] = (1, 1)
            up = np.pad(values, width, mode="edge" if pad == "edge" else "constant")
        lo = [slice(None)] * dim
        mid = [slice(None)] * dim
        hi = [slice(None)] * dim
        lo[a], mid[a], hi[a] = slice(0, -2), slice(1, -1), slice(2, None)
        centre = up[tuple(mid)]
        dminus[a] = (centre - up[tuple(lo)]) / spacing[a]
        dplus[a] = (up[tuple(hi)] - centre) / spacing[a]
    return dminus, dplus


def central_gradient(values: np.ndarray, spacing) -> np.ndarray:
    """Central differences of a nodal array, shape ``values.shape + (ndim,)``."""
    dminus, dplus = one_sided_differences(values, spacing)
    return np.moveaxis(0.5 * (dminus + dplus), 0, -1)


def interpolate(grid: Grid, values: np.ndarray, x) -> np.ndarray:
    """Multilinear interpolation of nodal ``values`` (trailing component axes allowed)."""
    x = np.asarray(x, dtype=float)
    interp = RegularGridInterpolator(grid.axes(), values, method="linear", bounds_error=False, fill_value=None)
    out = interp(x.reshape(-1, grid.dim))
    return out.reshape(x.shape[:-1] + values.shape[grid.dim :])


def gradient(field: ScalarField, scheme: str = "central", direction=None) -> np.ndarray:
    """Nodal gradient, shape ``shape + (dim,)``.

    ``scheme="central"`` is second order in the interior and exact on affine
    fields everywhere (linear ghost extrapolation). ``scheme="upwind"`` takes
    the backward difference where ``direction`` (a vector, or a nodal vector
    field) is positive along an axis and the forward difference elsewhere.
    """
    grid = field.grid
    if min(grid.shape) < 4:
        raise GridError("need at least 4 nodes per axis")
    dminus, dplus = one_sided_differences(field.values, grid.spacing)
    if scheme == "central":
        g = 0.5 * (dminus + dplus)
    elif scheme == "upwind":
        if direction is None:
            raise ValueError("upwind gradient needs a direction")
        d = np.asarray(direction, dtype=float)
        d = np.moveaxis(np.broadcast_to(d, field.values.shape + (grid.dim,)), -1, 0)
        g = np.where(d > 0, dminus, dplus)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return np.moveaxis(g, 0, -1)


# -- text / CSV export -------------------------------------------------------

def write_field(path, field: ScalarField) -> None:
    """Plain-text dump: a commented header followed by row-major node values."""
    g = field.grid
    header = "\n".join(
        [
            f"dim {g.dim}",
            "origin " + " ".join(repr(float(v)) for v in g.origin),
            "h " + " ".join(repr(float(v)) for v in g.spacing),
            "extents " + " ".join(str(n) for n in g.shape),
            f"t {field.t!r}",
        ]
    )
    np.savetxt(path, field.values.reshape(-1), header=header, fmt="%.17g")


def read_field(path) -> ScalarField:
    meta = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, *rest = line[1:].split()
            meta[key] = rest
    values = np.loadtxt(path, comments="#")
    shape = tuple(int(v) for v in meta["extents"])
    grid = Grid([float(v) for v in meta["origin"]], [float(v) for v in meta["h"]], shape)
    return ScalarField(grid, values.reshape(shape), float(meta["t"][0]))


def write_slice_csv(path, field: ScalarField, axis: int = 2, index=None) -> None:
    """CSV of node coordinates and values; 3D fields are cut at ``index`` along ``axis``."""
    nodes = field.grid.nodes()
    values = field.values
    if field.grid.dim == 3:
        index = field.grid.shape[axis] // 2 if index is None else index
        nodes = np.take(nodes, index, axis=axis)
        values = np.take(values, index, axis=axis)
    cols = ["x", "y", "z"][: nodes.shape[-1]]
    data = np.column_stack([nodes.reshape(-1, nodes.shape[-1]), values.reshape(-1)])
    np.savetxt(Path(path), data, delimiter=",", header=",".join(cols + ["value"]), comments="", fmt="%.10g")
