import numpy as np
import pytest

from velext.characteristics import hamiltonian
from velext.levelsets import circle, sphere
from velext.tube import InjectivityError, check_injectivity, solve_tube
from velext.velocity import RigidRotation, Shear, Translation

BOX = ([-1.5, -1.5], [1.5, 1.5])


@pytest.fixture(scope="module")
def rotation_solution():
    return solve_tube(circle((0.0, 0.0), 1.0), RigidRotation(1.0), 1.0, BOX, 1 / 32)


def test_rotated_unit_circle_is_stationary(rotation_solution):
    sol = rotation_solution
    rng = np.random.default_rng(0)
    assert len(sol.legs) > 1
    for t in (0.0, 0.37, 1.0):
        x = sol.sample_tube(t, 100, rng)
        phi, grad, inside = sol.evaluate(t, x)
        assert inside.all()
        np.testing.assert_allclose(phi, 1 - np.linalg.norm(x, axis=-1), atol=1e-9)
        np.testing.assert_allclose(np.linalg.norm(grad, axis=-1), 1.0, atol=1e-6)


def test_interface_mesh_and_tube_samples(rotation_solution):
    mesh = rotation_solution.interface_mesh(0.6)
    np.testing.assert_allclose(np.linalg.norm(mesh.points, axis=-1), 1.0, atol=1e-9)
    np.testing.assert_allclose(mesh.normals, mesh.points, atol=1e-9)  # outward, out of the positive phase
    assert mesh.cells is not None and len(mesh.cells) == len(mesh.points)
    pts = rotation_solution.sample_tube(0.6, 50, np.random.default_rng(2), fraction=0.5)
    assert np.abs(np.linalg.norm(pts, axis=-1) - 1).max() <= 0.5 * rotation_solution.eps_at(0.6) + 1e-9


def test_points_outside_the_band_are_flagged(rotation_solution):
    _, _, inside = rotation_solution.evaluate(0.5, np.array([[0.0, 0.0], [1.0, 0.0]]))
    assert inside.tolist() == [False, True]


def test_translated_sphere():
    v = Translation((1.0, 0.0, 0.0))
    sol = solve_tube(sphere((0, 0, 0), 1.0), v, 0.5, ([-1.5, -1.5, -1.5], [2.5, 1.5, 1.5]), 1 / 8, dt=1e-2)
    assert len(sol.legs) == 1
    rng = np.random.default_rng(3)
    x = sol.sample_tube(0.5, 100, rng)
    phi, grad, inside = sol.evaluate(0.5, x)
    assert inside.all()
    np.testing.assert_allclose(phi, 1 - np.linalg.norm(x - [0.5, 0, 0], axis=-1), atol=1e-10)


def test_scaled_profile_keeps_gradient_norm():
    sol = solve_tube(circle((0.0, 0.0), 0.5, scale=2.0), Shear(1.0), 0.5, BOX, 1 / 32)
    rng = np.random.default_rng(4)
    x = sol.sample_tube(0.5, 200, rng)
    _, grad, inside = sol.evaluate(0.5, x)
    assert inside.all()
    np.testing.assert_allclose(np.linalg.norm(grad, axis=-1), 2.0, atol=1e-6)


def test_pde_residual_is_small():
    v = Shear(1.0)
    sol = solve_tube(circle((0.0, 0.0), 0.5), v, 0.6, BOX, 1 / 32)
    x = sol.sample_tube(0.3, 50, np.random.default_rng(5), fraction=0.3)
    k = 1e-4
    phi_p, _, _ = sol.evaluate(0.3 + k, x)
    phi_m, _, _ = sol.evaluate(0.3 - k, x)
    phi, grad, _ = sol.evaluate(0.3, x)
    residual = (phi_p - phi_m) / (2 * k) + hamiltonian(0.3, x, grad, phi, v)
    assert np.abs(residual).max() <= 1e-5


def test_check_injectivity_detects_folds():
    g = np.stack(np.meshgrid(np.linspace(0, 1, 6), np.linspace(0, 1, 6), indexing="ij"), -1).reshape(-1, 2)
    ok, ratio, sep = check_injectivity(g, g @ np.array([[1.0, 0.3], [0.0, 1.0]]))
    assert ok and ratio == pytest.approx(1.0) and sep > 0.5
    ok, ratio, _ = check_injectivity(g, g * np.array([-1.0, 1.0]))
    assert not ok and ratio < 0
    squashed = g * np.array([1.0, 0.1])
    assert not check_injectivity(g, squashed)[0]


def test_injectivity_failure_raises():
    # a strong shear over a long leg folds a wide band; with no retries the solver must give up
    with pytest.raises(InjectivityError):
        solve_tube(circle((0.0, 0.0), 0.5), Shear(40.0), 0.2, ([-3, -3], [3, 3]), 1 / 16, eps0=0.45, max_retries=0)


def test_bad_arguments():
    with pytest.raises(ValueError):
        solve_tube(circle(), RigidRotation(), 0.0, BOX, 0.1)
    with pytest.raises(ValueError):
        solve_tube(circle((0, 0), 0.77), RigidRotation(), 1.0, BOX, 0.5, eps0=1e-3)
