"""Local method-of-characteristics solver on a tube around the moving interface.

Seeds are laid on a lattice inside a band ``|phi0| / |grad phi0| <= eps`` around
the initial zero set and carried along the characteristic system. Time is cut
into legs of length at most ``t*`` (recomputed from sampled bounds at the start
of every leg). Each leg checks that the seed map stays injective: simplices of
a triangulation of the seeds keep their orientation and no two seeds collapse
onto each other. On failure the band is halved and the leg retried.

Every characteristic keeps the label of its initial point, so the solution at
``(t, x)`` is recovered by solving ``x(t; xi) = x`` for ``xi`` with Newton's
method and reading off ``phi = Phi(t; xi)`` and ``grad phi = p(t; xi)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from .characteristics import (
    CharacteristicBounds,
    _packed_rhs,
    _rk4,
    bound_samples,
    bounds_from_maxima,
)
from .interface import InterfaceMesh

log = logging.getLogger(__name__)


class InjectivityError(RuntimeError):
    """Seed map lost injectivity even after shrinking the band."""


@dataclass
class TubeLeg:
    t0: float
    t1: float
    eps: float
    bounds: CharacteristicBounds
    n_seeds: int
    retries: int = 0


@dataclass
class _Snapshot:
    t: float
    positions: np.ndarray
    ids: np.ndarray
    interface: np.ndarray  # packed states of the interface seeds
    _tree: cKDTree | None = None

    def tree(self) -> cKDTree:
        if self._tree is None:
            self._tree = cKDTree(self.positions)
        return self._tree


def _initial_states(profile, xi):
    p = profile.gradient(xi)
    Phi = profile.value(xi)
    return np.concatenate([xi, p, Phi[:, None]], axis=-1)


def _lattice(lower, upper, spacing):
    axes = [np.arange(lo, hi + 0.5 * spacing, spacing) for lo, hi in zip(lower, upper)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lower))


def _interface_seeds(profile, lattice, spacing):
    if hasattr(profile, "interface_points"):
        return profile.interface_points(spacing), True
    # generic profile: Newton-project near-zero seeds onto the zero set
    phi = profile.value(lattice)
    g = profile.gradient(lattice)
    near = np.abs(phi) / np.linalg.norm(g, axis=-1) < spacing
    x = lattice[near]
    for _ in range(6):
        g = profile.gradient(x)
        x = x - (profile.value(x) / np.sum(g * g, axis=-1))[:, None] * g
    return x, False


def _simplex_volumes(points, simplices):
    edges = points[simplices[:, 1:]] - points[simplices[:, :1]]
    return np.linalg.det(edges)


def check_injectivity(start: np.ndarray, end: np.ndarray, simplices=None, collapse: float = 0.5):
    """Discrete injectivity test for the map ``start -> end`` of seed positions.

    Returns ``(ok, min_volume_ratio, separation_ratio)``. Orientation is tested
    on ``simplices`` (default: well-shaped simplices of a Delaunay triangulation
    of ``start``); the separation ratio compares the smallest neighbour distance
    after and before.
    """
    if simplices is None:
        simplices = _good_simplices(start)
    v0 = _simplex_volumes(start, simplices)
    v1 = _simplex_volumes(end, simplices)
    ratio = float(np.min(v1 / v0)) if len(v0) else 1.0
    d0 = cKDTree(start).query(start, k=2)[0][:, 1].min()
    d1 = cKDTree(end).query(end, k=2)[0][:, 1].min()
    sep = float(d1 / d0)
    return (ratio > 0 and sep >= collapse), ratio, sep


def _good_simplices(points):
    tri = Delaunay(points)
    s = tri.simplices
    pts = points[s]
    d = points.shape[1]
    lengths = [np.linalg.norm(pts[:, i] - pts[:, j], axis=-1) for i in range(d + 1) for j in range(i + 1, d + 1)]
    longest = np.max(lengths, axis=0)
    vol = np.abs(_simplex_volumes(points, s))
    keep = (longest <= 3 * np.median(longest)) & (vol >= 0.1 * np.median(vol))
    return s[keep]


@dataclass
class TubeSolution:
    """Characteristic tube solution; query it with :meth:`evaluate`."""

    v: object
    profile: object
    horizon: float
    dt: float
    spacing: float
    labels: np.ndarray
    legs: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    interface_ordered: bool = True
    box: tuple | None = None

    @property
    def dim(self) -> int:
        return self.labels.shape[1]

    def leg_at(self, t: float) -> TubeLeg:
        for leg in self.legs:
            if t <= leg.t1 + 1e-12:
                return leg
        return self.legs[-1]

    def eps_at(self, t) -> np.ndarray:
        t1 = np.array([leg.t1 for leg in self.legs])
        eps = np.array([leg.eps for leg in self.legs])
        k = np.clip(np.searchsorted(t1 - 1e-12, np.asarray(t, dtype=float)), 0, len(eps) - 1)
        return eps[k]

    # -- flow of labelled characteristics ---------------------------------

    def flow(self, xi0, t) -> np.ndarray:
        """Packed states ``(x, p, Phi)`` at times ``t`` of characteristics starting at ``xi0``."""
        xi0 = np.asarray(xi0, dtype=float)
        t = np.broadcast_to(np.asarray(t, dtype=float), xi0.shape[:-1])
        y = _initial_states(self.profile, xi0.reshape(-1, self.dim)).reshape(xi0.shape[:-1] + (-1,))
        n = np.maximum(1, np.ceil(t / self.dt - 1e-9)).astype(int)
        h = t / n
        f = _packed_rhs(self.v)
        for k in range(int(n.max(initial=0))):
            hk = np.where(k < n, h, 0.0)
            y = _rk4(f, k * h, y, hk)
        return y

    def _initial_guess(self, t, x):
        times = np.array([s.t for s in self.snapshots])
        k = np.abs(times[None, :] - t[:, None]).argmin(axis=1)
        guess = np.empty_like(x)
        for j in np.unique(k):
            snap = self.snapshots[j]
            sel = k == j
            _, idx = snap.tree().query(x[sel])
            guess[sel] = self.labels[snap.ids[idx]]
        return guess

    def evaluate(self, t, x, tol: float = 1e-12, max_iter: int = 12):
        """``(phi, grad_phi, inside)`` at query points ``x`` and times ``t``.

        ``inside`` marks queries whose Newton solve converged and that lie in
        the band tracked by the leg containing ``t``.
        """
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1]
        d = self.dim
        xq = x.reshape(-1, d)
        tq = np.broadcast_to(np.asarray(t, dtype=float), shape).reshape(-1).copy()
        xi = self._initial_guess(tq, xq)
        scale = max(1.0, float(np.abs(xq).max(initial=0.0)))
        delta = 1e-7 * scale
        y = np.empty((len(xq), 2 * d + 1))
        J = np.empty((len(xq), d, d))
        todo = np.arange(len(xq))
        for it in range(max_iter + 1):
            if len(todo) == 0:
                break
            last = it == max_iter
            if it % 3 == 0 and not last:
                # full finite-difference Jacobian every third iteration, chord steps otherwise
                pert = xi[todo, None, :] + delta * np.concatenate([np.zeros((1, d)), np.eye(d)])[None]
                ys = self.flow(pert, np.repeat(tq[todo, None], d + 1, axis=1))
                J[todo] = np.swapaxes((ys[:, 1:, :d] - ys[:, :1, :d]) / delta, -1, -2)
                yt = ys[:, 0]
            else:
                yt = self.flow(xi[todo], tq[todo])
            y[todo] = yt
            r = yt[:, :d] - xq[todo]
            done = np.linalg.norm(r, axis=-1) < tol * scale
            if last:
                break
            upd = todo[~done]
            xi[upd] = xi[upd] - np.linalg.solve(J[upd], r[~done][..., None])[..., 0]
            todo = upd
        res = np.linalg.norm(y[:, :d] - xq, axis=-1)
        phi, grad = y[:, 2 * d], y[:, d : 2 * d]
        band = np.abs(phi) / np.linalg.norm(grad, axis=-1) <= self.eps_at(tq)
        inside = (res < 1e-9 * scale) & band
        return phi.reshape(shape), grad.reshape(shape + (d,)), inside.reshape(shape)

    def interface_mesh(self, t: float) -> InterfaceMesh:
        """Positions of the interface characteristics at ``t`` with normals ``-p/|p|``."""
        times = np.array([s.t for s in self.snapshots])
        k = int(np.searchsorted(times, t + 1e-12) - 1)
        snap = self.snapshots[max(k, 0)]
        y = snap.interface
        span = t - snap.t
        if span > 1e-14:
            n = max(1, int(np.ceil(span / self.dt - 1e-9)))
            h = span / n
            f = _packed_rhs(self.v)
            for j in range(n):
                y = _rk4(f, snap.t + j * h, y, h)
        d = self.dim
        pts, p = y[:, :d], y[:, d : 2 * d]
        normals = -p / np.linalg.norm(p, axis=-1, keepdims=True)
        cells = None
        if d == 2 and self.interface_ordered:
            m = len(pts)
            cells = np.column_stack([np.arange(m), (np.arange(m) + 1) % m])
        return InterfaceMesh(float(t), pts, normals, None, cells)

    def sample_tube(self, t: float, count: int, rng, fraction: float = 0.5) -> np.ndarray:
        """Random points ``x + a nu`` with ``x`` on the interface at ``t`` and ``|a| <= fraction * eps``."""
        mesh = self.interface_mesh(t)
        k = rng.integers(0, len(mesh), count)
        a = rng.uniform(-fraction, fraction, count) * self.eps_at(t)
        return mesh.points[k] + a[:, None] * mesh.normals[k]


def solve_tube(
    profile,
    v,
    horizon: float,
    box,
    spacing: float,
    eps0: float | None = None,
    dt: float = 1e-3,
    grad_range=None,
    max_retries: int = 3,
    bounds_span: float = 1.0,
) -> TubeSolution:
    """Carry a seed band around the zero set of ``profile`` to time ``horizon``.

    ``profile`` supplies ``value(x)`` and ``gradient(x)`` (analytic initial data);
    ``box`` is the domain ``(lower, upper)``; ``spacing`` the seed lattice
    spacing; ``eps0`` the initial band half-width (default ``5 * spacing``).
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    lower, upper = (np.asarray(b, dtype=float) for b in box)
    eps = 5 * spacing if eps0 is None else float(eps0)
    lattice = _lattice(lower, upper, spacing)
    phi = profile.value(lattice)
    g = np.linalg.norm(profile.gradient(lattice), axis=-1)
    band = (g > 0) & (np.abs(phi) <= eps * g)
    labels = lattice[band]
    if len(labels) < labels.shape[1] + 2:
        raise ValueError("seed band is empty; refine the spacing or widen eps0")
    gband = g[band]
    if grad_range is None:
        grad_range = (float(gband.min()), float(gband.max()))
    if grad_range[0] <= 0:
        raise ValueError("|grad phi0| must be positive on the seed band")
    iface_pts, ordered = _interface_seeds(profile, lattice, spacing)
    iface = _initial_states(profile, iface_pts)
    iface[:, -1] = 0.0

    n_total = max(1, int(np.ceil(horizon / dt - 1e-9)))
    h = horizon / n_total
    f = _packed_rhs(v)
    states = _initial_states(profile, labels)
    ids = np.arange(len(labels))
    sol = TubeSolution(v, profile, float(horizon), h, float(spacing), labels, interface_ordered=ordered, box=(lower, upper))
    sol.snapshots.append(_Snapshot(0.0, states[:, : labels.shape[1]].copy(), ids.copy(), iface.copy()))
    d = labels.shape[1]
    # the bound expressions are sampled once along the interface trajectories;
    # each leg takes the maxima over its own window [t0, t0 + bounds_span]
    sample_t, sample_acc = bound_samples(v, iface[:, :d], iface[:, d : 2 * d], 0.0, horizon + bounds_span)
    # orientation is tracked on a fixed triangulation of the initial seeds
    simplices = _good_simplices(labels)

    step = 0
    while step < n_total:
        t0 = step * h
        window = (sample_t >= t0 - 1e-12) & (sample_t <= t0 + bounds_span + 1e-12)
        bounds = bounds_from_maxima(sample_acc[window].max(axis=0), grad_range)
        nsteps = int(min(n_total - step, max(1, np.floor(bounds.t_star / h + 1e-9))))
        for attempt in range(max_retries + 1):
            width = np.abs(states[:, 2 * d]) / np.linalg.norm(states[:, d : 2 * d], axis=-1)
            keep = width <= eps
            y = states[keep]
            start = y[:, :d].copy()
            for k in range(nsteps):
                y = _rk4(f, (step + k) * h, y, h)
            # simplices whose vertices all survive the pruning, in local indexing
            local = np.full(len(labels), -1)
            local[ids[keep]] = np.arange(int(keep.sum()))
            simp = local[simplices]
            simp = simp[np.all(simp >= 0, axis=1)]
            ok, vol_ratio, sep = check_injectivity(start, y[:, :d], simp)
            if ok and np.all(np.isfinite(y)):
                break
            log.info("leg at t=%.4g not injective (volume ratio %.3g, separation %.3g); halving band", t0, vol_ratio, sep)
            eps *= 0.5
        else:
            raise InjectivityError(f"seed map not injective on leg starting at t={t0:.4g} after {max_retries} retries")
        yi = iface
        for k in range(nsteps):
            yi = _rk4(f, (step + k) * h, yi, h)
        states, ids, iface = y, ids[keep], yi
        step += nsteps
        sol.legs.append(TubeLeg(t0, step * h, eps, bounds, int(keep.sum()), attempt))
        sol.snapshots.append(_Snapshot(step * h, states[:, :d].copy(), ids.copy(), iface.copy()))
    return sol
