"""Zero-level-set extraction, normals, curvature, metric projection and the
brute-force signed-distance oracle.

Normals follow ``nu = -grad(phi)/|grad(phi)|`` (pointing from the positive
phase into the negative one) and curvature is ``kappa = -div(nu)``, i.e.
``div(grad(phi)/|grad(phi)|)``, which equals ``laplacian(phi)`` for a signed
distance. A circle of radius R with phi positive inside therefore has
``kappa = -1/R``; a sphere has ``kappa = -2/R`` (twice the mean curvature).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import Grid, ScalarField, central_gradient, gradient, interpolate

DEGENERATE_GRAD = 1e-10


class OutOfTubeError(ValueError):
    """The signed-distance precondition ``|grad(phi)| ~ 1`` fails at a query point."""


class DegenerateGradientError(ValueError):
    pass


@dataclass
class InterfaceMesh:
    """Piecewise-linear sample of the zero level set at time ``t``.

    ``cells`` holds segments (2D, shape ``(m, 2)``) or triangles (3D, shape
    ``(m, 3)``) indexing into ``points``.
    """

    t: float
    points: np.ndarray
    normals: np.ndarray
    curvature: np.ndarray | None = None
    cells: np.ndarray | None = None
    degenerate: bool = False

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.normals = np.asarray(self.normals, dtype=float)

    def __len__(self):
        return len(self.points)

    @property
    def empty(self) -> bool:
        return len(self.points) == 0

    @property
    def dim(self) -> int:
        return self.points.shape[1] if self.points.ndim == 2 else 0

    def to_csv(self, path) -> None:
        d = self.dim or 2
        names = ["x", "y", "z"][:d]
        cols = ["t"] + names + ["n" + c for c in names] + ["kappa"]
        kappa = self.curvature if self.curvature is not None else np.full(len(self), np.nan)
        data = np.column_stack([np.full(len(self), self.t), self.points.reshape(-1, d), self.normals.reshape(-1, d), kappa])
        np.savetxt(Path(path), data, delimiter=",", header=",".join(cols), comments="", fmt="%.12g")


def read_mesh_csv(path) -> InterfaceMesh:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    d = (data.shape[1] - 2) // 2
    return InterfaceMesh(float(data[0, 0]) if len(data) else 0.0, data[:, 1 : 1 + d], data[:, 1 + d : 1 + 2 * d], data[:, -1])


def curvature_field(field: ScalarField) -> np.ndarray:
    """Nodal ``div(grad(phi)/|grad(phi)|)`` by central differences (NaN where the gradient degenerates)."""
    g = gradient(field)
    norm = np.linalg.norm(g, axis=-1)
    safe = np.where(norm > 1e-6, norm, np.nan)
    n = g / safe[..., None]
    n = np.nan_to_num(n)
    div = sum(central_gradient(n[..., a], field.grid.spacing)[..., a] for a in range(field.grid.dim))
    div[~np.isfinite(safe)] = np.nan
    return div


def curvature(field: ScalarField, at) -> np.ndarray:
    """Curvature ``-div(nu)`` interpolated to the points ``at``."""
    at = np.asarray(at, dtype=float)
    gnorm = np.linalg.norm(field.gradient_at(at), axis=-1)
    if np.any(gnorm <= 1e-6):
        raise DegenerateGradientError("|grad(phi)| too small for curvature")
    return interpolate(field.grid, np.nan_to_num(curvature_field(field)), at)


def _normals_at(field: ScalarField, points: np.ndarray):
    g = field.gradient_at(points)
    norm = np.linalg.norm(g, axis=-1, keepdims=True)
    degenerate = bool(np.any(norm < DEGENERATE_GRAD))
    return -g / np.where(norm < DEGENERATE_GRAD, 1.0, norm), degenerate


def _marching_squares(field: ScalarField):
    v = field.values
    g = field.grid
    pos = v > 0
    points = []
    edge_index = {}

    def crossings(axis):
        a = v[:-1, :] if axis == 0 else v[:, :-1]
        b = v[1:, :] if axis == 0 else v[:, 1:]
        pa = pos[:-1, :] if axis == 0 else pos[:, :-1]
        pb = pos[1:, :] if axis == 0 else pos[:, 1:]
        i, j = np.nonzero(pa != pb)
        s = a[i, j] / (a[i, j] - b[i, j])
        base = np.column_stack([i, j]).astype(float)
        base[:, axis] += s
        return i, j, g.origin + base * g.spacing

    for axis in (0, 1):
        i, j, pts = crossings(axis)
        start = sum(len(p) for p in points)
        for k, key in enumerate(zip(i.tolist(), j.tolist())):
            edge_index[(axis,) + key] = start + k
        points.append(pts)
    points = np.concatenate(points) if points else np.zeros((0, 2))

    segments = []
    nx, ny = v.shape
    ci, cj = np.nonzero(
        (pos[:-1, :-1] != pos[1:, :-1]) | (pos[:-1, :-1] != pos[:-1, 1:]) | (pos[1:, 1:] != pos[1:, :-1]) | (pos[1:, 1:] != pos[:-1, 1:])
    )
    for i, j in zip(ci.tolist(), cj.tolist()):
        # edges: bottom (axis0, i, j), top (axis0, i, j+1), left (axis1, i, j), right (axis1, i+1, j)
        e = [edge_index.get(k) for k in ((0, i, j), (1, i + 1, j), (0, i, j + 1), (1, i, j))]
        present = [k for k in e if k is not None]
        if len(present) == 2:
            segments.append(present)
        elif len(present) == 4:
            centre = v[i : i + 2, j : j + 2].mean()
            # corner (i, j) sign decides which pairs join
            if (centre > 0) == pos[i, j]:
                segments += [[e[0], e[1]], [e[2], e[3]]]
            else:
                segments += [[e[0], e[3]], [e[1], e[2]]]
    return points, np.asarray(segments, dtype=int).reshape(-1, 2)


def extract_interface(field: ScalarField, with_curvature: bool = True) -> InterfaceMesh:
    """Zero isocontour by marching squares (2D) or marching cubes (3D).

    Edge crossings are linearly interpolated, so affine fields are resolved
    exactly. Returns an empty mesh when the field does not change sign.
    """
    g = field.grid
    v = field.values
    if not (np.any(v > 0) and np.any(v <= 0)):
        d = g.dim
        return InterfaceMesh(field.t, np.zeros((0, d)), np.zeros((0, d)), np.zeros(0), np.zeros((0, d), dtype=int))
    if g.dim == 2:
        points, cells = _marching_squares(field)
    else:
        from skimage.measure import marching_cubes

        verts, cells, _, _ = marching_cubes(v, level=0.0, spacing=tuple(g.spacing))
        points = verts + g.origin
    normals, degenerate = _normals_at(field, points)
    kappa = None
    if with_curvature:
        kappa = interpolate(g, np.nan_to_num(curvature_field(field)), points)
    return InterfaceMesh(field.t, points, normals, kappa, cells, degenerate)


def metric_projection(field: ScalarField, x, tol: float = 0.1) -> np.ndarray:
    """``x - phi(x) grad(phi)(x)``: the nearest point on the zero set for a signed distance.

    Raises :class:`OutOfTubeError` where ``|grad(phi)|`` leaves ``[1 - tol, 1 + tol]``.
    """
    x = np.asarray(x, dtype=float)
    phi = field(x)
    g = field.gradient_at(x)
    norm = np.linalg.norm(g, axis=-1)
    if np.any(np.abs(norm - 1.0) > tol):
        raise OutOfTubeError(f"|grad phi| = {norm.min():.3g}..{norm.max():.3g} outside signed-distance band")
    return x - phi[..., None] * g


def _segment_distance(x: np.ndarray, a: np.ndarray, b: np.ndarray, chunk: int = 2048):
    """Distance and closest-point parameters from each ``x`` to the nearest segment."""
    ab = b - a
    len2 = np.einsum("ij,ij->i", ab, ab)
    len2 = np.where(len2 > 0, len2, 1.0)
    dist = np.empty(len(x))
    best = np.empty(len(x), dtype=int)
    param = np.empty(len(x))
    for s in range(0, len(x), chunk):
        xs = x[s : s + chunk, None, :]
        u = np.clip(np.einsum("nmk,mk->nm", xs - a[None], ab) / len2, 0.0, 1.0)
        d2 = np.sum((a[None] + u[..., None] * ab[None] - xs) ** 2, axis=-1)
        k = np.argmin(d2, axis=1)
        rows = np.arange(len(k))
        dist[s : s + chunk] = np.sqrt(d2[rows, k])
        best[s : s + chunk] = k
        param[s : s + chunk] = u[rows, k]
    return dist, best, param


def distance_to_mesh(mesh: InterfaceMesh, x) -> np.ndarray:
    """Unsigned distance to the mesh: to segments in 2D, to vertices in 3D."""
    x = np.asarray(x, dtype=float)
    flat = x.reshape(-1, x.shape[-1])
    if mesh.empty:
        raise ValueError("empty interface mesh")
    if mesh.dim == 2 and mesh.cells is not None and len(mesh.cells):
        d, _, _ = _segment_distance(flat, mesh.points[mesh.cells[:, 0]], mesh.points[mesh.cells[:, 1]])
    else:
        from scipy.spatial import cKDTree

        d, _ = cKDTree(mesh.points).query(flat)
    return d.reshape(x.shape[:-1])


def closest_on_mesh(mesh: InterfaceMesh, x):
    """Closest mesh point and its linearly interpolated unit normal (2D segments or 3D vertices)."""
    x = np.asarray(x, dtype=float).reshape(-1, mesh.dim)
    if mesh.dim == 2 and mesh.cells is not None and len(mesh.cells):
        i0, i1 = mesh.cells[:, 0], mesh.cells[:, 1]
        d, k, u = _segment_distance(x, mesh.points[i0], mesh.points[i1])
        pts = mesh.points[i0[k]] + u[:, None] * (mesh.points[i1[k]] - mesh.points[i0[k]])
        n = (1 - u[:, None]) * mesh.normals[i0[k]] + u[:, None] * mesh.normals[i1[k]]
    else:
        from scipy.spatial import cKDTree

        d, k = cKDTree(mesh.points).query(x)
        pts, n = mesh.points[k], mesh.normals[k]
    n = n / np.linalg.norm(n, axis=-1, keepdims=True)
    return pts, n, d


def signed_distance_oracle(mesh: InterfaceMesh, sign_reference, x) -> np.ndarray:
    """Brute-force signed distance: ``sign(reference(x)) * dist(x, mesh)``.

    ``sign_reference`` is a :class:`ScalarField` or any callable on points.
    """
    x = np.asarray(x, dtype=float)
    s = np.sign(sign_reference(x))
    return s * distance_to_mesh(mesh, x)


@dataclass
class PhaseMask:
    """Per-node phase labels: +1 positive phase, -1 negative phase, 0 interface-adjacent."""

    grid: Grid
    labels: np.ndarray


def phase_mask(field: ScalarField) -> PhaseMask:
    pos = field.values > 0
    adjacent = np.zeros(field.grid.shape, dtype=bool)
    for a in range(field.grid.dim):
        lo = [slice(None)] * field.grid.dim
        hi = [slice(None)] * field.grid.dim
        lo[a], hi[a] = slice(0, -1), slice(1, None)
        change = pos[tuple(lo)] != pos[tuple(hi)]
        adjacent[tuple(lo)] |= change
        adjacent[tuple(hi)] |= change
    labels = np.where(pos, 1, -1).astype(np.int8)
    labels[adjacent] = 0
    return PhaseMask(field.grid, labels)


def hausdorff(a: InterfaceMesh, b: InterfaceMesh) -> float:
    """Symmetric Hausdorff distance between two meshes (vertices of one to cells of the other)."""
    if a.empty or b.empty:
        return float("inf") if a.empty != b.empty else 0.0
    return float(max(distance_to_mesh(b, a.points).max(), distance_to_mesh(a, b.points).max()))
