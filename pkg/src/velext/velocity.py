"""Velocity fields: evaluation contract, analytic catalogue, Lipschitz extension
to the whole space and the normal-constant extended velocity."""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .interface import metric_projection


class VelocityField:
    """Base class for ``v(t, x)`` with spatial Jacobian ``grad[..., i, j] = dv_i/dx_j``.

    Subclasses implement ``_eval`` and ``_grad`` for ``t >= 0``; both accept a
    scalar ``t`` or an array broadcastable against ``x[..., 0]``. For negative
    times the field is continued as ``v(t, x) = -v(-t, x) + 2 v(0, x)`` so that
    characteristics can be integrated backwards past ``t = 0``.
    """

    dim = 3
    lipschitz: float | None = None
    subtangential_certified = False
    time_dependent = False

    def _eval(self, t, x):
        raise NotImplementedError

    def _grad(self, t, x):
        raise NotImplementedError

    def _continued(self, method, t, x):
        x = np.asarray(x, dtype=float)
        if not self.time_dependent:
            return method(0.0, x)
        t = np.asarray(t, dtype=float)
        if np.all(t >= 0):
            return method(t, x)
        neg = t < 0
        tt = np.abs(t)
        out = method(tt, x)
        flip = -out + 2 * method(np.zeros_like(tt), x)
        extra = out.ndim - np.ndim(neg)
        return np.where(np.reshape(neg, np.shape(neg) + (1,) * extra), flip, out)

    def eval(self, t, x) -> np.ndarray:
        return self._continued(self._eval, t, x)

    def grad(self, t, x) -> np.ndarray:
        return self._continued(self._grad, t, x)

    __call__ = eval


def _t_col(t, x):
    """Broadcast ``t`` against the point axes of ``x``."""
    return np.asarray(t, dtype=float)[..., None] if np.ndim(t) else float(t)


class RigidRotation(VelocityField):
    """Rotation about ``center`` with angular speed ``omega`` (about the z axis in 3D)."""

    def __init__(self, omega: float = 1.0, center=(0.0, 0.0), dim: int = 2):
        self.omega = float(omega)
        self.dim = dim
        c = np.zeros(dim)
        c[: len(center)] = center
        self.center = c
        self.lipschitz = abs(self.omega)
        m = np.zeros((dim, dim))
        m[0, 1], m[1, 0] = -self.omega, self.omega
        self._m = m

    def _eval(self, t, x):
        return (x - self.center) @ self._m.T

    def _grad(self, t, x):
        return np.broadcast_to(self._m, x.shape + (self.dim,))


class Translation(VelocityField):
    def __init__(self, c=(1.0, 0.0)):
        self.c = np.asarray(c, dtype=float)
        self.dim = self.c.size
        self.lipschitz = 0.0

    def _eval(self, t, x):
        return np.broadcast_to(self.c, x.shape).copy()

    def _grad(self, t, x):
        return np.zeros(x.shape + (self.dim,))


class Shear(VelocityField):
    """Planar shear ``(sigma * x_2, 0[, 0])``."""

    def __init__(self, sigma: float = 1.0, dim: int = 2):
        self.sigma = float(sigma)
        self.dim = dim
        self.lipschitz = abs(self.sigma)
        m = np.zeros((dim, dim))
        m[0, 1] = self.sigma
        self._m = m

    def _eval(self, t, x):
        return x @ self._m.T

    def _grad(self, t, x):
        return np.broadcast_to(self._m, x.shape + (self.dim,))


class SingleVortex(VelocityField):
    """Time-reversing single vortex on the unit square.

    ``v = cos(pi t / period) * (-sin^2(pi x) sin(2 pi y), sin^2(pi y) sin(2 pi x))``;
    the normal component vanishes on the boundary of ``[0, 1]^2``.
    """

    time_dependent = True
    subtangential_certified = True

    def __init__(self, period: float = 2.0):
        self.period = float(period)
        self.dim = 2
        self.lipschitz = 2 * np.pi

    def _eval(self, t, x):
        px, py = np.pi * x[..., 0], np.pi * x[..., 1]
        s = np.cos(np.pi * np.asarray(t, dtype=float) / self.period)
        u = -np.sin(px) ** 2 * np.sin(2 * py)
        w = np.sin(py) ** 2 * np.sin(2 * px)
        return s[..., None] * np.stack([u, w], axis=-1) if np.ndim(s) else s * np.stack([u, w], axis=-1)

    def _grad(self, t, x):
        px, py = np.pi * x[..., 0], np.pi * x[..., 1]
        s = np.cos(np.pi * np.asarray(t, dtype=float) / self.period)
        g = np.empty(x.shape + (2,))
        g[..., 0, 0] = -np.pi * np.sin(2 * px) * np.sin(2 * py)
        g[..., 0, 1] = -2 * np.pi * np.sin(px) ** 2 * np.cos(2 * py)
        g[..., 1, 0] = 2 * np.pi * np.sin(py) ** 2 * np.cos(2 * px)
        g[..., 1, 1] = np.pi * np.sin(2 * py) * np.sin(2 * px)
        return s[..., None, None] * g if np.ndim(s) else s * g


class ExpressionField(VelocityField):
    """Field given by component expressions in ``x, y[, z], t`` (exact Jacobian via sympy)."""

    def __init__(self, components, lipschitz: float | None = None):
        import sympy

        self.dim = len(components)
        names = ["x", "y", "z"][: self.dim]
        syms = sympy.symbols(names)
        tsym = sympy.Symbol("t")
        exprs = [sympy.sympify(c, locals={n: s for n, s in zip(names, syms)} | {"t": tsym}) for c in components]
        self.time_dependent = any(e.has(tsym) for e in exprs)
        jac = [[sympy.diff(e, s) for s in syms] for e in exprs]
        self._f = [sympy.lambdify((tsym, *syms), e, "numpy") for e in exprs]
        self._j = [[sympy.lambdify((tsym, *syms), d, "numpy") for d in row] for row in jac]
        self.components = list(components)
        self.lipschitz = lipschitz

    def _call(self, fn, t, x):
        args = [x[..., k] for k in range(self.dim)]
        return np.broadcast_to(np.asarray(fn(t, *args), dtype=float), x.shape[:-1])

    def _eval(self, t, x):
        return np.stack([self._call(f, t, x) for f in self._f], axis=-1)

    def _grad(self, t, x):
        return np.stack([np.stack([self._call(f, t, x) for f in row], axis=-1) for row in self._j], axis=-2)


@dataclass
class AnalyticFieldSpec:
    """Named catalogue entry: ``kind`` plus numeric parameters."""

    kind: str
    params: dict = dc_field(default_factory=dict)

    KINDS = ("rigid_rotation", "translation", "shear", "single_vortex", "user_expression")

    def build(self, dim: int = 2) -> VelocityField:
        p = self.params
        if self.kind == "rigid_rotation":
            return RigidRotation(p.get("omega", 1.0), p.get("center", (0.0,) * dim), dim)
        if self.kind == "translation":
            c = p.get("c", (1.0,) + (0.0,) * (dim - 1))
            return Translation(c)
        if self.kind == "shear":
            return Shear(p.get("sigma", 1.0), dim)
        if self.kind == "single_vortex":
            if dim != 2:
                raise ValueError("single_vortex is two-dimensional")
            return SingleVortex(p.get("period", 2.0))
        if self.kind == "user_expression":
            return ExpressionField(p["components"], p.get("lipschitz"))
        raise ValueError(f"unknown velocity kind {self.kind!r}; expected one of {self.KINDS}")


def lipschitz_estimate(v: VelocityField, box, samples: int = 4096, times=(0.0,), seed: int = 0, margin: float = 0.05) -> float:
    """Largest sampled spectral norm of ``grad v`` over ``box x times``, inflated by ``margin``."""
    if samples < 1000:
        raise ValueError("need at least 1e3 samples")
    rng = np.random.default_rng(seed)
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    x = rng.uniform(lo, hi, size=(samples, lo.size))
    best = 0.0
    for t in np.atleast_1d(times):
        g = v.grad(float(t), x)
        best = max(best, float(np.linalg.norm(g, ord=2, axis=(-2, -1)).max()))
    return best * (1.0 + margin)


class LipschitzExtension:
    """Componentwise inf-convolution ``min_z v_i(t, z) + lam |x - z|`` over a finite sample of the closed domain.

    The infimum over a finite sample is exactly ``lam``-Lipschitz and reproduces
    ``v`` on every sample point whenever ``lam`` bounds the Lipschitz constant
    of ``v`` on the sample.
    """

    def __init__(self, v: VelocityField, lam: float, samples):
        self.v = v
        self.lam = float(lam)
        self.samples = np.asarray(samples, dtype=float)
        self.dim = self.samples.shape[1]
        self.lipschitz = self.lam

    @classmethod
    def on_box(cls, v: VelocityField, lam: float, box, spacing: float):
        lo, hi = (np.asarray(b, dtype=float) for b in box)
        axes = [np.linspace(a, b, int(np.ceil((b - a) / spacing)) + 1) for a, b in zip(lo, hi)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, lo.size)
        return cls(v, lam, pts)

    def eval(self, t, x, chunk: int = 512) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, self.dim)
        vz = self.v.eval(t, self.samples)
        out = np.empty_like(flat)
        for s in range(0, len(flat), chunk):
            d = np.linalg.norm(flat[s : s + chunk, None, :] - self.samples[None], axis=-1)
            out[s : s + chunk] = np.min(vz[None, :, :] + self.lam * d[..., None], axis=1)
        return out.reshape(x.shape)

    __call__ = eval


def lipschitz_extend(v: VelocityField, lam: float, t, x, samples) -> np.ndarray:
    return LipschitzExtension(v, lam, samples).eval(t, x)


def extended_velocity(field, v: VelocityField, t, x, tol: float = 0.1) -> np.ndarray:
    """``v(t, P x)`` with ``P`` the metric projection onto the zero set of ``field``."""
    return v.eval(t, metric_projection(field, x, tol))
