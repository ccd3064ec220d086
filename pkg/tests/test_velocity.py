import numpy as np
import pytest

from velext.grid import Grid
from velext.levelsets import circle, sample_profile, sphere
from velext.velocity import (
    AnalyticFieldSpec,
    ExpressionField,
    LipschitzExtension,
    RigidRotation,
    Shear,
    SingleVortex,
    Translation,
    VelocityField,
    extended_velocity,
    lipschitz_estimate,
    lipschitz_extend,
)

CATALOG = [
    RigidRotation(1.3, (0.1, -0.2)),
    RigidRotation(1.0, dim=3),
    Translation((0.5, -0.25)),
    Shear(2.0),
    Shear(1.0, dim=3),
    SingleVortex(2.0),
    ExpressionField(["sin(y) + t*x", "x**2 - y"]),
]


@pytest.mark.parametrize("v", CATALOG, ids=lambda v: type(v).__name__)
def test_grad_matches_finite_differences(v, rng):
    x = rng.uniform(0.0, 1.0, (50, v.dim))
    t = 0.3
    h = 1e-6
    fd = np.stack([(v.eval(t, x + h * e) - v.eval(t, x - h * e)) / (2 * h) for e in np.eye(v.dim)], axis=-1)
    np.testing.assert_allclose(v.grad(t, x), fd, atol=1e-7)


@pytest.mark.parametrize("v", CATALOG[:5], ids=lambda v: type(v).__name__)
def test_declared_lipschitz_bounds_pairs(v, rng):
    x, y = rng.uniform(-2, 2, (2, 1000, v.dim))
    ratio = np.linalg.norm(v.eval(0.0, x) - v.eval(0.0, y), axis=-1) / np.linalg.norm(x - y, axis=-1)
    assert ratio.max() <= v.lipschitz + 1e-12


def test_negative_time_continuation():
    v = SingleVortex(2.0)
    x = np.array([[0.3, 0.7], [0.6, 0.2]])
    np.testing.assert_allclose(v.eval(-0.4, x), -v.eval(0.4, x) + 2 * v.eval(0.0, x))
    np.testing.assert_allclose(v.grad(-0.4, x), -v.grad(0.4, x) + 2 * v.grad(0.0, x))
    # time arrays mix signs per point
    mixed = v.eval(np.array([-0.4, 0.4]), x)
    np.testing.assert_allclose(mixed[0], v.eval(-0.4, x[:1])[0])
    np.testing.assert_allclose(mixed[1], v.eval(0.4, x[1:])[0])


def test_single_vortex_normal_component_vanishes_on_boundary():
    s = np.linspace(0, 1, 21)
    v = SingleVortex()
    assert np.abs(v.eval(0.1, np.column_stack([np.zeros(21), s]))[:, 0]).max() < 1e-15
    assert np.abs(v.eval(0.1, np.column_stack([s, np.ones(21)]))[:, 1]).max() < 1e-15


def test_spec_build_and_unknown_kind():
    v = AnalyticFieldSpec("shear", {"sigma": 3.0}).build(3)
    assert isinstance(v, Shear) and v.dim == 3 and v.lipschitz == 3.0
    with pytest.raises(ValueError):
        AnalyticFieldSpec("whirlpool").build()
    with pytest.raises(ValueError):
        AnalyticFieldSpec("single_vortex").build(3)


@pytest.mark.parametrize(
    "v, expected",
    [(RigidRotation(1.0, dim=3), 1.05), (Translation((1.0, 0.0, 0.0)), 0.0), (Shear(2.0, dim=3), 2.1)],
)
def test_lipschitz_estimate_examples(v, expected):
    est = lipschitz_estimate(v, ([-1] * 3, [1] * 3), samples=2000)
    assert est == pytest.approx(expected, rel=1e-12, abs=1e-15)


def test_lipschitz_estimate_needs_samples():
    with pytest.raises(ValueError):
        lipschitz_estimate(Shear(), ([0, 0], [1, 1]), samples=10)


class _Identity1D(VelocityField):
    dim = 1

    def _eval(self, t, x):
        return x.copy()

    def _grad(self, t, x):
        return np.ones(x.shape + (1,))


def test_extension_1d_analog():
    z = np.linspace(0, 1, 1001)[:, None]
    out = lipschitz_extend(_Identity1D(), 1.0, 0.0, np.array([[2.0]]), z)
    brute = np.min(z[:, 0] + np.abs(2.0 - z[:, 0]))
    assert out[0, 0] == pytest.approx(brute, abs=1e-12)
    assert brute == pytest.approx(2.0)  # z + (2 - z) is constant on [0, 1]


def test_extension_of_constant_is_constant(rng):
    ext = LipschitzExtension.on_box(Translation((0.3, -0.7)), 0.0, ([0, 0], [1, 1]), 0.1)
    np.testing.assert_allclose(ext.eval(0.0, rng.uniform(-3, 3, (20, 2))), np.broadcast_to([0.3, -0.7], (20, 2)))


def test_extension_agrees_on_samples_and_is_lipschitz(rng):
    v = SingleVortex()
    lam = lipschitz_estimate(v, ([0, 0], [1, 1]))
    ext = LipschitzExtension.on_box(v, lam, ([0, 0], [1, 1]), 1 / 32)
    np.testing.assert_array_equal(ext.eval(0.2, ext.samples), v.eval(0.2, ext.samples))
    x, y = rng.uniform(-0.5, 1.5, (2, 2000, 2))
    dv = np.abs(ext.eval(0.2, x) - ext.eval(0.2, y))
    assert np.all(dv <= lam * np.linalg.norm(x - y, axis=-1)[:, None] + 1e-9)


def test_extension_time_continuity(rng):
    v = SingleVortex()
    lam = lipschitz_estimate(v, ([0, 0], [1, 1]))
    ext = LipschitzExtension.on_box(v, lam, ([0, 0], [1, 1]), 1 / 16)
    x = rng.uniform(-0.5, 1.5, (300, 2))
    for t, dt in [(0.1, 0.05), (0.5, 0.2)]:
        sup = np.abs(v.eval(t + dt, ext.samples) - v.eval(t, ext.samples)).max(axis=0)
        assert np.all(np.abs(ext.eval(t + dt, x) - ext.eval(t, x)) <= sup + 1e-12)


def test_extended_velocity_examples():
    g = Grid.from_box([-3] * 3, [3] * 3, 61)
    f = sample_profile(sphere((0, 0, 0), 1.0), g)
    v = RigidRotation(1.0, dim=3)
    np.testing.assert_allclose(extended_velocity(f, v, 0.0, [[2.0, 0, 0]]), [[0.0, 1.0, 0.0]], atol=1e-12)
    on = np.array([[0.0, 1.0, 0.0]])
    np.testing.assert_allclose(extended_velocity(f, v, 0.0, on), v.eval(0.0, on), atol=1e-12)


def test_extended_velocity_constant_along_normals():
    h = 1 / 32
    g = Grid.from_spacing([-1.5, -1.5], [1.5, 1.5], h)
    f = sample_profile(circle((0.0, 0.0), 0.7), g)
    v = Shear(1.0)
    a = np.linspace(0, 2 * np.pi, 50, endpoint=False)
    nu = np.column_stack([np.cos(a), np.sin(a)])
    base = 0.7 * nu
    v0 = extended_velocity(f, v, 0.0, base)
    for off in (-2.5 * h, 2.5 * h):
        assert np.abs(extended_velocity(f, v, 0.0, base + off * nu) - v0).max() <= 2 * h
    # directional derivative along the normal vanishes up to O(h)
    dd = (extended_velocity(f, v, 0.0, base + h * nu) - extended_velocity(f, v, 0.0, base - h * nu)) / (2 * h)
    assert np.abs(dd).max() <= 0.5
