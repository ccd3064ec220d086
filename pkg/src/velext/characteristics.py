"""Characteristic system of the velocity-extension Hamilton-Jacobi equation.

With ``H(t, x, p, Phi) = v(t, y) . p`` and base point ``y = x - Phi p / |p|^2``
the characteristics solve

    x'   =  dH/dp            = v(y) - Phi / |p|^4 (G B(p))^T p
    p'   = -dH/dx - dH/dPhi p = -G^T p + <G^T p / |p|^2, p> p
    Phi' =  dH/dp . p - H    = -Phi / |p|^4 <(G B(p))^T p, p>

where ``G = grad v(t, y)`` and ``B(p) = |p|^2 I - 2 p p^T``. Along every curve
``p' . p = 0`` so ``|p|`` is conserved, and ``Phi`` keeps its sign.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

DEGENERATE_P = 1e-12


class DegenerateMomentumError(ValueError):
    """``|p|`` too small for the characteristic system."""


class BlowUpError(RuntimeError):
    """A trajectory left the inflated domain box."""


@dataclass
class CharacteristicState:
    """States ``(x, p, Phi)`` at time(s) ``s``; arrays carry leading batch axes."""

    s: np.ndarray
    x: np.ndarray
    p: np.ndarray
    Phi: np.ndarray

    def pack(self) -> np.ndarray:
        return np.concatenate([self.x, self.p, self.Phi[..., None]], axis=-1)

    @classmethod
    def unpack(cls, s, y: np.ndarray) -> "CharacteristicState":
        d = (y.shape[-1] - 1) // 2
        return cls(s, y[..., :d], y[..., d : 2 * d], y[..., 2 * d])


def eval_B(p) -> np.ndarray:
    """``|p|^2 I - 2 p p^T`` for every vector in the batch."""
    p = np.asarray(p, dtype=float)
    d = p.shape[-1]
    pp = np.einsum("...i,...j->...ij", p, p)
    return np.einsum("...i,...i->...", p, p)[..., None, None] * np.eye(d) - 2 * pp


def _check_p(p):
    if np.any(np.linalg.norm(p, axis=-1) <= DEGENERATE_P):
        raise DegenerateMomentumError("|p| <= 1e-12")


def base_point(x, p, Phi):
    p2 = np.einsum("...i,...i->...", p, p)
    return x - (Phi / p2)[..., None] * p


def hamiltonian(t, x, p, Phi, v) -> np.ndarray:
    """``v(t, x - Phi p / |p|^2) . p``."""
    x, p, Phi = (np.asarray(a, dtype=float) for a in (x, p, Phi))
    _check_p(p)
    return np.einsum("...i,...i->...", v.eval(t, base_point(x, p, Phi)), p)


def characteristic_rhs(t, x, p, Phi, v, check: bool = True):
    """Right-hand sides ``(x', p', Phi')``; ``t`` may be an array over the batch."""
    if check:
        _check_p(p)
    p2 = np.einsum("...i,...i->...", p, p)
    y = x - (Phi / p2)[..., None] * p
    vy = v.eval(t, y)
    G = v.grad(t, y)
    Gtp = np.einsum("...ji,...j->...i", G, p)  # G^T p
    pGp = np.einsum("...i,...i->...", Gtp, p)
    # (G B(p))^T p = B(p) G^T p since B is symmetric
    GBtp = p2[..., None] * Gtp - 2 * pGp[..., None] * p
    p4 = p2 * p2
    dx = vy - (Phi / p4)[..., None] * GBtp
    dp = -Gtp + (pGp / p2)[..., None] * p
    dPhi = -Phi / p4 * np.einsum("...i,...i->...", GBtp, p)
    return dx, dp, dPhi


def _rk4(f, t, y, h):
    """One classical RK4 step; ``t`` and ``h`` broadcast over the batch."""
    hc = np.asarray(h)[..., None] if np.ndim(h) else h
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + 0.5 * hc * k1)
    k3 = f(t + 0.5 * h, y + 0.5 * hc * k2)
    k4 = f(t + h, y + hc * k3)
    return y + hc / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _packed_rhs(v):
    def f(t, y):
        st = CharacteristicState.unpack(t, y)
        dx, dp, dPhi = characteristic_rhs(t, st.x, st.p, st.Phi, v, check=False)
        return np.concatenate([dx, dp, dPhi[..., None]], axis=-1)

    return f


@dataclass
class Trajectory:
    s: np.ndarray  # (n_steps + 1,)
    x: np.ndarray  # (n_steps + 1, ..., d)
    p: np.ndarray
    Phi: np.ndarray

    def state(self, k: int = -1) -> CharacteristicState:
        return CharacteristicState(self.s[k], self.x[k], self.p[k], self.Phi[k])

    def p2_drift(self) -> np.ndarray:
        p2 = np.sum(self.p**2, axis=-1)
        return np.abs(p2 - p2[0])

    def to_csv(self, path) -> None:
        """Rows ``seed_id, s, x.., p.., Phi, |p|^2 drift``."""
        n, d = self.x.shape[0], self.x.shape[-1]
        x = self.x.reshape(n, -1, d)
        p = self.p.reshape(n, -1, d)
        Phi = self.Phi.reshape(n, -1)
        drift = self.p2_drift().reshape(n, -1)
        m = x.shape[1]
        ids = np.broadcast_to(np.arange(m), (n, m))
        ss = np.broadcast_to(self.s[:, None], (n, m))
        data = np.column_stack([ids.ravel(), ss.ravel(), x.reshape(-1, d), p.reshape(-1, d), Phi.ravel(), drift.ravel()])
        names = ["x", "y", "z"][:d]
        header = ",".join(["seed_id", "s"] + names + ["p" + c for c in names] + ["Phi", "p2_drift"])
        np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.15g")


def _steps(s0, s1, dt):
    n = max(1, int(np.ceil(abs(s1 - s0) / dt - 1e-12)))
    return n, (s1 - s0) / n


def integrate_characteristic(xi, p0, Phi0, v, s_range, dt: float = 1e-3, box=None, store: bool = True):
    """RK4 integration of the characteristic system from ``(xi, p0, Phi0)``.

    ``s_range = (s0, s1)``; ``s1 < s0`` integrates backwards. ``box`` (lower,
    upper) enables the blow-up guard on the box inflated by 10 %.
    """
    if dt > 1e-2:
        raise ValueError("dt must be <= 1e-2")
    xi, p0, Phi0 = (np.asarray(a, dtype=float) for a in (xi, p0, Phi0))
    _check_p(p0)
    s0, s1 = (float(s) for s in s_range)
    n, h = _steps(s0, s1, dt)
    y = np.concatenate([xi, p0, Phi0[..., None]], axis=-1)
    f = _packed_rhs(v)
    guard = None
    if box is not None:
        lo, hi = (np.asarray(b, dtype=float) for b in box)
        pad = 0.1 * (hi - lo)
        guard = (lo - pad, hi + pad)
    out = [y] if store else None
    for k in range(n):
        y = _rk4(f, s0 + k * h, y, h)
        if guard is not None:
            xk = y[..., : xi.shape[-1]]
            if np.any(xk < guard[0]) or np.any(xk > guard[1]) or not np.all(np.isfinite(y)):
                raise BlowUpError(f"trajectory left the domain box at s = {s0 + (k + 1) * h:.4g}")
        if store:
            out.append(y)
    d = xi.shape[-1]
    if store:
        ys = np.stack(out)
        s = s0 + h * np.arange(n + 1)
    else:
        ys = y[None]
        s = np.array([s1])
    return Trajectory(s, ys[..., :d], ys[..., d : 2 * d], ys[..., 2 * d])


# -- variational equations on interface seeds ---------------------------------

def variational_rhs(t, x, p, J, q, v):
    """Derivatives of ``J = dx/dxi`` and ``q = dPhi/dxi`` along a characteristic with ``Phi = 0``."""
    G = v.grad(t, x)
    p2 = np.einsum("...i,...i->...", p, p)
    GBtp = np.einsum("...ij,...i->...j", G @ eval_B(p), p)
    Gp = np.einsum("...ij,...j->...i", G, p)
    dJ = G @ J - np.einsum("...i,...j->...ij", Gp / p2[..., None] + GBtp / (p2 * p2)[..., None], q)
    dq = -(np.einsum("...i,...i->...", GBtp, p) / (p2 * p2))[..., None] * q
    return dJ, dq


def variational_system(xi, p0, grad_phi0, v, s_range, dt: float = 1e-3):
    """Integrate ``(x, p)`` together with ``dx/dxi`` and ``dPhi/dxi`` for seeds on the zero set.

    Returns ``(s, J, q)`` with ``J[k, ..., i, j] = dx_i/dxi_j`` and ``q[k] = dPhi/dxi``.
    """
    xi, p0, q0 = (np.asarray(a, dtype=float) for a in (xi, p0, grad_phi0))
    d = xi.shape[-1]
    s0, s1 = (float(s) for s in s_range)
    n, h = _steps(s0, s1, dt)
    J0 = np.broadcast_to(np.eye(d), xi.shape + (d,))

    def f(t, y):
        x, p = y[..., :d], y[..., d : 2 * d]
        J = y[..., 2 * d : 2 * d + d * d].reshape(x.shape + (d,))
        q = y[..., 2 * d + d * d :]
        dx, dp, _ = characteristic_rhs(t, x, p, np.zeros(x.shape[:-1]), v, check=False)
        dJ, dq = variational_rhs(t, x, p, J, q, v)
        return np.concatenate([dx, dp, dJ.reshape(x.shape[:-1] + (d * d,)), dq], axis=-1)

    y = np.concatenate([xi, p0, J0.reshape(xi.shape[:-1] + (d * d,)), q0], axis=-1)
    ys = [y]
    for k in range(n):
        y = _rk4(f, s0 + k * h, y, h)
        ys.append(y)
    ys = np.stack(ys)
    J = ys[..., 2 * d : 2 * d + d * d].reshape(ys.shape[:-1] + (d, d))
    return s0 + h * np.arange(n + 1), J, ys[..., 2 * d + d * d :]


# -- a priori bounds and t* ----------------------------------------------------

A_STAR = brentq(lambda a: 6 * a**3 + 6 * a**2 + 3 * a - 1.0, 0.0, 1.0, xtol=1e-15)


def t_star_margin(U7: float, t: float) -> float:
    """``1 - (3a + 6a^2 + 6a^3)`` with ``a = 2 U7 t``; positive for admissible leg lengths."""
    a = 2 * U7 * t
    return 1.0 - (3 * a + 6 * a**2 + 6 * a**3)


def estimate_t_star(U7: float, safety: float = 0.9) -> float:
    """Largest admissible leg length with a safety factor, capped at 1."""
    if U7 < 0:
        raise ValueError("U7 must be nonnegative")
    if U7 == 0:
        return 1.0
    return min(1.0, safety * A_STAR / (2 * U7))


@dataclass
class CharacteristicBounds:
    U: tuple  # (U0, ..., U7)
    t_star: float
    delta: float

    def __getattr__(self, name):
        if name.startswith("U") and name[1:].isdigit():
            return self.U[int(name[1:])]
        raise AttributeError(name)

    def as_dict(self) -> dict:
        out = {f"U{k}": float(u) for k, u in enumerate(self.U)}
        out.update(t_star=self.t_star, delta=self.delta)
        return out


def _gronwall_U6(U1, U2, U3, U4, U5) -> float:
    """``sqrt(y(1))`` for ``y' = a y + b exp(c s)``, ``y(0) = 1``."""
    a = 2 * (1 + U1)
    b = (U2**2 + U3**2) * U5**2
    c = 2 * U4
    if abs(c - a) < 1e-12:
        y1 = np.exp(a) * (1 + b)
    else:
        y1 = np.exp(a) + b * (np.exp(c) - np.exp(a)) / (c - a)
    return float(np.sqrt(y1))


def bound_samples(v, points, normals, t0: float, t1: float, dt: float = 1e-2, max_points: int = 64):
    """Per-time maxima of the five sampled gradient expressions along interface trajectories.

    Returns ``(times, acc)`` with ``acc[k] = (|G|, rho(sym G), |G n|, |(G B(n))^T n|,
    |<(G B(n))^T n, n>|)`` maximised over the advected points at ``times[k]``.
    """
    x = np.asarray(points, dtype=float)
    n = np.asarray(normals, dtype=float)
    stride = max(1, len(x) // max_points)
    x, n = x[::stride], n[::stride]
    n = n / np.linalg.norm(n, axis=-1, keepdims=True)
    d = x.shape[-1]
    steps, h = _steps(t0, t1, dt)
    f = _packed_rhs(v)
    y = np.concatenate([x, n, np.zeros((len(x), 1))], axis=-1)
    acc = np.empty((steps + 1, 5))
    for k in range(steps + 1):
        t = t0 + k * h
        xs, ns = y[:, :d], y[:, d : 2 * d]
        ns = ns / np.linalg.norm(ns, axis=-1, keepdims=True)
        G = v.grad(t, xs)
        sym = 0.5 * (G + np.swapaxes(G, -1, -2))
        GBtn = np.einsum("...ij,...i->...j", G @ eval_B(ns), ns)
        acc[k] = [
            np.linalg.norm(G, ord=2, axis=(-2, -1)).max(),
            np.abs(np.linalg.eigvalsh(sym)).max(),
            np.linalg.norm(np.einsum("...ij,...j->...i", G, ns), axis=-1).max(),
            np.linalg.norm(GBtn, axis=-1).max(),
            np.abs(np.einsum("...i,...i->...", GBtn, ns)).max(),
        ]
        if k < steps:
            y = _rk4(f, t, y, h)
    return t0 + h * np.arange(steps + 1), acc


def bounds_from_maxima(acc, grad_phi0_range, inflate: float = 1.1) -> CharacteristicBounds:
    """Assemble ``U0..U7`` and ``t*`` from the sampled maxima of :func:`bound_samples`."""
    gmin, gmax = (float(g) for g in grad_phi0_range)
    if gmin <= 0:
        raise ValueError("minimum of |grad phi0| must be positive")
    U0, U1, u2, u3, U4 = inflate * np.asarray(acc, dtype=float)
    U2, U3 = u2 / gmin, u3 / gmin
    U5 = inflate * gmax
    U6 = _gronwall_U6(U1, U2, U3, U4, U5)
    U7 = U0 * U6 + (U2 + U3) * U5 * np.exp(U4)
    U = tuple(float(u) for u in (U0, U1, U2, U3, U4, U5, U6, U7))
    ts = estimate_t_star(U[7])
    return CharacteristicBounds(U, ts, delta=ts)


def estimate_bounds(
    v, seed_surface, grad_phi0_range, t0: float = 0.0, span: float = 1.0, dt: float = 1e-2, inflate: float = 1.1, max_points: int = 64
) -> CharacteristicBounds:
    """Sampled constants ``U0..U7`` and ``t*`` for a leg starting at ``t0``.

    Points of ``seed_surface`` (an :class:`InterfaceMesh`) are advected by the
    characteristic system with their normals over ``[t0, t0 + span]``; every
    bound is the sampled maximum of the corresponding expression, inflated by
    ``inflate``.
    """
    if float(grad_phi0_range[0]) <= 0:
        raise ValueError("minimum of |grad phi0| must be positive")
    _, acc = bound_samples(v, seed_surface.points, seed_surface.normals, t0, t0 + span, dt, max_points)
    return bounds_from_maxima(acc.max(axis=0), grad_phi0_range, inflate)
