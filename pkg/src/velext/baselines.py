"""Reference schemes: exact linear transport along the flow map, the nonlinear
modification PDEs (full and beta variants) and the reinitialization corrector."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .characteristics import _rk4
from .grid import ScalarField, central_gradient, one_sided_differences
from .hjsolver import SolverConfig, llf_operator, march
from .interface import DegenerateGradientError


@dataclass(frozen=True)
class BaselineKind:
    kind: str
    beta: float | None = None

    KINDS = ("linear_transport", "nmm_full", "nmm_beta", "reinit_corrector")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown baseline {self.kind!r}")
        if self.kind == "nmm_beta" and (self.beta is None or self.beta <= 0):
            raise ValueError("nmm_beta needs beta > 0")


# -- linear transport ----------------------------------------------------------

def backward_flow(v, t: float, x, dt: float = 1e-3, box=None):
    """Foot points ``X(0, t, x)`` and Jacobians ``dX(0, t, x)/dx`` by RK4.

    Returns ``(X0, M, exited)``; ``exited`` flags paths that left ``box``.
    """
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    flat = x.reshape(-1, d)
    y = np.concatenate([flat, np.broadcast_to(np.eye(d).reshape(-1), (len(flat), d * d))], axis=-1)
    exited = np.zeros(len(flat), dtype=bool)
    if t != 0:
        n = max(1, int(np.ceil(abs(t) / dt - 1e-12)))
        h = -t / n

        def f(s, y):
            X = y[:, :d]
            M = y[:, d:].reshape(-1, d, d)
            return np.concatenate([v.eval(s, X), (v.grad(s, X) @ M).reshape(-1, d * d)], axis=-1)

        lo = hi = None
        if box is not None:
            lo, hi = (np.asarray(b, dtype=float) for b in box)
        for k in range(n):
            y = _rk4(f, t + k * h, y, h)
            if lo is not None:
                exited |= np.any((y[:, :d] < lo - 1e-12) | (y[:, :d] > hi + 1e-12), axis=-1)
    X0 = y[:, :d].reshape(x.shape)
    M = y[:, d:].reshape(x.shape[:-1] + (d, d))
    return X0, M, exited.reshape(x.shape[:-1])


def linear_transport(phi0, v, t: float, x, dt: float = 1e-3, box=None, outside: float = 0.0):
    """``f(t, x) = phi0(X(0, t, x))`` and its gradient ``M^T grad(phi0)(X0)``.

    ``phi0`` is a callable on points or a profile with ``value``/``gradient``.
    Points whose backward path leaves ``box`` take the value ``outside``.
    """
    X0, M, exited = backward_flow(v, t, x, dt, box)
    value = phi0.value if hasattr(phi0, "value") else phi0
    f = np.asarray(value(X0), dtype=float)
    if hasattr(phi0, "gradient"):
        grad = np.einsum("...ji,...j->...i", M, phi0.gradient(X0))
    else:
        grad = None
    if np.any(exited):
        f = np.where(exited, outside, f)
        if grad is not None:
            grad = np.where(exited[..., None], 0.0, grad)
    return f, grad


def linear_transport_exact(phi0, v, t: float, x, dt: float = 1e-3, box=None) -> np.ndarray:
    return linear_transport(phi0, v, t, x, dt, box)[0]


def gradient_along_characteristic(v, xi, grad0, t: float, dt: float = 1e-3):
    """``|grad f|`` along forward characteristics by integrating ``q' = -grad(v)^T q``.

    The squared norm then obeys ``d/ds |q|^2 / 2 = -<grad(v) q, q>``. Returns
    ``(s, x, q)`` histories.
    """
    xi, q0 = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (xi, grad0))
    d = xi.shape[-1]
    n = max(1, int(np.ceil(t / dt - 1e-12)))
    h = t / n

    def f(s, y):
        X, q = y[:, :d], y[:, d:]
        return np.concatenate([v.eval(s, X), -np.einsum("...ji,...j->...i", v.grad(s, X), q)], axis=-1)

    y = np.concatenate([xi, q0], axis=-1)
    hist = [y]
    for k in range(n):
        y = _rk4(f, k * h, y, h)
        hist.append(y)
    hist = np.stack(hist)
    return h * np.arange(n + 1), hist[..., :d], hist[..., d:]


# -- nonlinear modification -----------------------------------------------------

def _unit_gradient(field: ScalarField, strict: bool):
    g = central_gradient(field.values, field.grid.spacing)
    norm = np.linalg.norm(g, axis=-1)
    bad = norm <= 1e-10
    if strict and np.any(bad):
        raise DegenerateGradientError("|grad phi| <= 1e-10 at some node")
    return g / np.where(bad, 1.0, norm)[..., None], norm, bad


def nmm_rhs(field: ScalarField, v, t: float | None = None, strict: bool = True) -> np.ndarray:
    """Nodal source ``phi <grad(v) n, n>`` with ``n = grad(phi)/|grad(phi)|``.

    With ``strict=False`` degenerate nodes get a zero source instead of raising.
    """
    t = field.t if t is None else t
    n, _, bad = _unit_gradient(field, strict)
    G = v.grad(t, field.grid.nodes())
    src = field.values * np.einsum("...i,...ij,...j->...", n, G, n)
    return np.where(bad, 0.0, src)


def nmm_beta_source(phi, grad_norm, beta: float):
    """``phi (beta - |grad phi|)``."""
    return np.asarray(phi) * (beta - np.asarray(grad_norm))


def nmm_beta_rhs(field: ScalarField, beta: float) -> np.ndarray:
    _, norm, _ = _unit_gradient(field, strict=False)
    return nmm_beta_source(field.values, norm, beta)


def _transport_hamiltonian(v):
    def ham(t, x, p, u):
        vx = v.eval(t, x)
        return np.einsum("...i,...i->...", vx, p), vx, np.zeros(u.shape)

    return ham


def nmm_operator(v, kind: str = "nmm_full", beta: float | None = None, boundary: str = "dirichlet"):
    """LLF transport operator minus the explicit source, for :func:`hjsolver.march`."""
    ham = _transport_hamiltonian(v)

    def op(field):
        Hhat, rate = llf_operator(field, ham, field.t, boundary)
        if kind == "nmm_full":
            src = nmm_rhs(field, v, strict=False)
            G = v.grad(field.t, field.grid.nodes())
            rate = rate + np.linalg.norm(G, ord=2, axis=(-2, -1))
        elif kind == "nmm_beta":
            _, norm, _ = _unit_gradient(field, strict=False)
            src = nmm_beta_source(field.values, norm, beta)
            rate = rate + np.abs(beta - norm)
        elif kind == "linear_transport":
            src = 0.0
        else:
            raise ValueError(f"unknown kind {kind!r}")
        return Hhat - src, rate

    return op


def solve_nmm(phi0: ScalarField, v, T: float, kind: str = "nmm_full", beta: float | None = None, config: SolverConfig | None = None) -> list:
    config = config or SolverConfig(horizon=T)
    return march(phi0, nmm_operator(v, kind, beta, config.boundary), SolverConfig(config.cfl, T, config.output_every, config.boundary))


# -- reinitialization corrector -------------------------------------------------

def smoothed_sign(psi, width: float):
    psi = np.asarray(psi, dtype=float)
    return psi / np.sqrt(psi**2 + width**2)


def godunov_norm(values: np.ndarray, spacing, sign: np.ndarray) -> np.ndarray:
    """Upwind ``|grad psi|`` for the eikonal corrector, selected by ``sign``."""
    dm, dp = one_sided_differences(values, spacing, pad="linear")
    pos = sign[None] > 0
    a = np.where(pos, np.maximum(np.maximum(dm, 0) ** 2, np.minimum(dp, 0) ** 2), np.maximum(np.minimum(dm, 0) ** 2, np.maximum(dp, 0) ** 2))
    return np.sqrt(a.sum(axis=0))


def reinit_corrector_step(psi: ScalarField, dtau: float) -> ScalarField:
    """One explicit step of ``psi_s = sign(psi) (1 - |grad psi|)`` with smoothed sign of width ``h``."""
    h = psi.grid.h
    if dtau > 0.5 * psi.grid.spacing.min() + 1e-15:
        raise ValueError(f"dtau = {dtau:.3g} exceeds h/2")
    s = smoothed_sign(psi.values, h)
    norm = godunov_norm(psi.values, psi.grid.spacing, s)
    return psi.with_values(psi.values + dtau * s * (1.0 - norm))


def reinitialize(psi: ScalarField, pseudo_time: float, dtau: float | None = None) -> ScalarField:
    dtau = 0.5 * psi.grid.spacing.min() if dtau is None else dtau
    n = max(1, int(np.ceil(pseudo_time / dtau - 1e-12)))
    for _ in range(n):
        psi = reinit_corrector_step(psi, pseudo_time / n)
    return psi
