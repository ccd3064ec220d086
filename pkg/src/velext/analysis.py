"""Diagnostics: sub/supersolution envelopes, the monotonized Hamiltonian and its
regularity constants, tube error norms and a serializable report."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field as dc_field

import numpy as np

from .baselines import linear_transport
from .grid import Grid, ScalarField, central_gradient
from .hjsolver import Regularizer


@dataclass
class EnvelopePair:
    rho: ScalarField
    rho_tilde: ScalarField
    V0: float


def envelope_values(f, V0: float, t: float):
    """``(rho, rho_tilde)`` from transported values ``f``: damped/inflated by ``exp(-/+ V0 t)`` in the positive phase."""
    f = np.asarray(f, dtype=float)
    lo, hi = np.exp(-V0 * t), np.exp(V0 * t)
    pos = f >= 0
    return np.where(pos, f * lo, f * hi), np.where(pos, f * hi, f * lo)


def compute_envelopes(phi0, v, t: float, grid: Grid, V0: float, dt: float = 1e-3) -> EnvelopePair:
    """Envelopes at the nodes of ``grid``; ``phi0`` is a callable or profile (boundary value 0)."""
    f, _ = linear_transport(phi0, v, t, grid.nodes(), dt=dt, box=grid.domain_box)
    f[grid.boundary_mask()] = 0.0
    rho, rho_t = envelope_values(f, V0, t)
    return EnvelopePair(ScalarField(grid, rho, t), ScalarField(grid, rho_t, t), V0)


@dataclass
class SandwichReport:
    times: list
    lower: list  # max(rho - phi, 0)
    upper: list  # max(phi - rho_tilde, 0)
    tolerance: float

    @property
    def passed(self) -> bool:
        return max(self.lower + self.upper, default=0.0) <= self.tolerance

    @property
    def worst(self) -> float:
        return max(self.lower + self.upper, default=0.0)


def check_sandwich(phis, envs, tolerance: float) -> SandwichReport:
    """Per-time violations of ``rho <= phi <= rho_tilde`` against ``tolerance``."""
    if len(phis) != len(envs):
        raise ValueError("need one envelope pair per field")
    rep = SandwichReport([], [], [], float(tolerance))
    for phi, env in zip(phis, envs):
        if phi.grid != env.rho.grid or abs(phi.t - env.rho.t) > 1e-9:
            raise ValueError("field and envelope grids or times differ")
        rep.times.append(float(phi.t))
        rep.lower.append(float(np.max(env.rho.values - phi.values, initial=0.0)))
        rep.upper.append(float(np.max(phi.values - env.rho_tilde.values, initial=0.0)))
    return rep


def _R(t, p, reg: Regularizer, V0: float):
    e = np.exp(2 * V0 * np.asarray(t, dtype=float))
    p2 = np.einsum("...i,...i->...", p, p)
    return (e / (e * p2 + reg.eta(e * p2)))[..., None] * p


def monotonized_G(t, x, p, u, v, reg: Regularizer, V0: float) -> np.ndarray:
    """``v(t, x - u R(t, p)) . p + V0 u`` with ``R = e^{2V0t} p / (e^{2V0t}|p|^2 + eta(e^{2V0t}|p|^2))``."""
    x, p, u = (np.asarray(a, dtype=float) for a in (x, p, u))
    y = x - np.asarray(u)[..., None] * _R(t, p, reg, V0)
    return np.einsum("...i,...i->...", v.eval(t, y), p) + V0 * u


def g_regularity_terms(t, x, p, q, u, v, reg: Regularizer, V0: float):
    """Left-hand sides ``|(i) - v(t,x).q|`` and ``|(ii)|`` of the two G estimates."""
    u = np.asarray(u, dtype=float)[..., None]
    y1 = x - u * _R(t, p + q, reg, V0)
    y0 = x - u * _R(t, p, reg, V0)
    v1 = v.eval(t, y1)
    term_i = np.einsum("...i,...i->...", v1, q)
    lhs1 = np.abs(term_i - np.einsum("...i,...i->...", v.eval(t, x), q))
    lhs2 = np.abs(np.einsum("...i,...i->...", v1 - v.eval(t, y0), p))
    return lhs1, lhs2


@dataclass
class GRegularity:
    c1: float
    c2: float
    samples: int


def _random_vectors(n, dim, rng, rmax, rmin=1e-3):
    """Random directions with log-uniform lengths in ``[rmin, rmax]``, so small vectors are sampled as densely as large ones."""
    d = rng.normal(size=(n, dim))
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    return d * np.exp(rng.uniform(np.log(rmin), np.log(rmax), (n, 1)))


def _random_G_samples(n, dim, box, T, rng, pmax=3.0, umax=2.0):
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    t = rng.uniform(0, T, n)
    x = rng.uniform(lo, hi, (n, dim))
    p = _random_vectors(n, dim, rng, pmax)
    u = rng.uniform(-umax, umax, n)
    return t, x, p, u


def check_G_regularity(v, reg: Regularizer, V0: float, T: float, samples: int, box, seed: int = 0) -> GRegularity:
    """Empirical ``c1 = max lhs1 / (|u||q|)`` and ``c2 = max lhs2 / (|u||p||q|)`` over random samples."""
    if samples < 10_000:
        raise ValueError("need at least 1e4 samples")
    rng = np.random.default_rng(seed)
    dim = len(box[0])
    t, x, p, u = _random_G_samples(samples, dim, box, T, rng)
    q = _random_vectors(samples, dim, rng, 3.0)
    lhs1, lhs2 = g_regularity_terms(t, x, p, q, u, v, reg, V0)
    nq = np.linalg.norm(q, axis=-1)
    npp = np.linalg.norm(p, axis=-1)
    den1 = np.abs(u) * nq
    den2 = den1 * npp
    ok1, ok2 = den1 > 1e-12, den2 > 1e-12
    return GRegularity(float(np.max(lhs1[ok1] / den1[ok1])), float(np.max(lhs2[ok2] / den2[ok2])), samples)


def G_monotonicity_margin(v, reg: Regularizer, V0: float, T: float, samples: int, box, seed: int = 0, eps_range=(1e-3, 1.0)) -> float:
    """``min [G(u + eps) - G(u)] / eps`` over random ``(t, x, p, u, eps)``."""
    rng = np.random.default_rng(seed)
    dim = len(box[0])
    t, x, p, u = _random_G_samples(samples, dim, box, T, rng)
    eps = np.exp(rng.uniform(*np.log(eps_range), samples))
    dG = monotonized_G(t, x, p, u + eps, v, reg, V0) - monotonized_G(t, x, p, u, v, reg, V0)
    return float(np.min(dG / eps))


def tube_error_norms(values, reference, grad=None, grad_target: float = 1.0) -> dict:
    """Max and RMS error of ``values`` against ``reference`` on tube samples.

    ``grad`` (optional, shape ``(n, dim)``) adds ``||grad| - grad_target|`` statistics.
    """
    values = np.asarray(values, dtype=float).reshape(-1)
    reference = np.asarray(reference, dtype=float).reshape(-1)
    if values.size == 0:
        raise ValueError("empty tube")
    err = np.abs(values - reference)
    out = {"max": float(err.max()), "l2": float(np.sqrt(np.mean(err**2))), "count": int(values.size)}
    if grad is not None:
        dev = np.abs(np.linalg.norm(np.asarray(grad).reshape(values.size, -1), axis=-1) - grad_target)
        out.update(grad_dev_max=float(dev.max()), grad_dev_mean=float(dev.mean()))
    return out


def field_tube_errors(phi: ScalarField, reference_values: np.ndarray, mask: np.ndarray, grad_target: float = 1.0) -> dict:
    """:func:`tube_error_norms` for a grid field on the nodes selected by ``mask``."""
    g = central_gradient(phi.values, phi.grid.spacing)
    return tube_error_norms(phi.values[mask], reference_values, g[mask], grad_target)


@dataclass
class DiagnosticsReport:
    """Per-output-time diagnostic series plus run metadata."""

    metadata: dict = dc_field(default_factory=dict)
    times: list = dc_field(default_factory=list)
    series: dict = dc_field(default_factory=dict)

    def add(self, t: float, **values) -> None:
        if self.series and set(values) != set(self.series):
            raise ValueError("every record must carry the same keys")
        self.times.append(float(t))
        for k, val in values.items():
            self.series.setdefault(k, []).append(float(val))

    def validate(self) -> None:
        for k, s in self.series.items():
            if len(s) != len(self.times):
                raise ValueError(f"series {k!r} has {len(s)} entries for {len(self.times)} times")
            if not np.all(np.isfinite(s)):
                raise ValueError(f"series {k!r} has non-finite entries")

    def to_dict(self) -> dict:
        return {"metadata": self.metadata, "times": self.times, "series": self.series}

    def to_json(self, path) -> None:
        self.validate()
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    def to_csv(self, path) -> None:
        self.validate()
        keys = sorted(self.series)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + keys)
            for i, t in enumerate(self.times):
                w.writerow([repr(t)] + [repr(self.series[k][i]) for k in keys])
