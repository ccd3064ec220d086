import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from velext.grid import (
    Grid,
    GridError,
    ScalarField,
    central_gradient,
    gradient,
    one_sided_differences,
    read_field,
    write_field,
    write_slice_csv,
)


def test_grid_construction_and_nodes():
    g = Grid.from_box([0, 0], [1, 2], [11, 21])
    assert g.dim == 2
    np.testing.assert_allclose(g.spacing, [0.1, 0.1])
    np.testing.assert_allclose(g.upper, [1, 2])
    assert g.nodes().shape == (11, 21, 2)
    assert g.boundary_mask().sum() == 2 * 11 + 2 * 21 - 4


@pytest.mark.parametrize(
    "args",
    [([0, 0], [1, 1], 3), ([0], [1], 10), ([0, 0], [-1, 1], 10)],
)
def test_grid_rejects_bad_input(args):
    with pytest.raises(GridError):
        Grid.from_box(*args)


def test_field_rejects_nonfinite():
    g = Grid.from_box([0, 0], [1, 1], 5)
    vals = np.zeros(g.shape)
    vals[2, 2] = np.nan
    with pytest.raises(GridError):
        ScalarField(g, vals)


def test_gradient_of_constant_is_zero():
    g = Grid.from_box([-1, -1, -1], [1, 1, 1], 9)
    f = ScalarField.sample(g, lambda x: np.full(x.shape[:-1], 3.5))
    assert np.all(gradient(f) == 0)


def test_gradient_exact_on_linear_field():
    g = Grid.from_box([-1, -1, -1], [1, 1, 1], 9)
    f = ScalarField.sample(g, lambda x: x[..., 0])
    gr = gradient(f)
    np.testing.assert_allclose(gr[1:-1, 1:-1, 1:-1], np.broadcast_to([1.0, 0, 0], gr[1:-1, 1:-1, 1:-1].shape), atol=1e-12)


def test_gradient_of_norm_near_unit_point():
    g = Grid.from_box([-1.6, -1.6], [1.55, 1.55], 64)  # h = 0.05
    f = ScalarField.sample(g, lambda x: np.linalg.norm(x, axis=-1))
    gr = gradient(f)
    i = np.argmin(np.abs(g.axes()[0] - 1.0))
    j = np.argmin(np.abs(g.axes()[1]))
    x = g.nodes()[i, j]
    np.testing.assert_allclose(gr[i, j], x / np.linalg.norm(x), atol=1e-3)


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_central_gradient_exact_on_affine(a, b, c):
    g = Grid.from_box([0, 0], [1, 1], 7)
    vals = a * g.nodes()[..., 0] + b * g.nodes()[..., 1] + c
    gr = central_gradient(vals, g.spacing)
    np.testing.assert_allclose(gr[..., 0], a, atol=1e-11)
    np.testing.assert_allclose(gr[..., 1], b, atol=1e-11)


def test_zero_padding_sees_dirichlet_ghosts():
    g = Grid.from_box([0, 0], [1, 1], 5)
    vals = np.ones(g.shape)
    dm, dp = one_sided_differences(vals, g.spacing, pad="zero")
    assert dm[0][0, 2] == pytest.approx(1 / g.spacing[0])
    assert dp[0][-1, 2] == pytest.approx(-1 / g.spacing[0])


def test_interpolation_is_exact_on_bilinear():
    g = Grid.from_box([0, 0], [1, 1], 6)
    f = ScalarField.sample(g, lambda x: 1 + 2 * x[..., 0] - x[..., 1] + 0.5 * x[..., 0] * x[..., 1])
    x = np.array([[0.13, 0.77], [0.5, 0.5], [0.99, 0.01]])
    expected = 1 + 2 * x[:, 0] - x[:, 1] + 0.5 * x[:, 0] * x[:, 1]
    np.testing.assert_allclose(f(x), expected, atol=1e-12)


def test_field_roundtrip(tmp_path):
    g = Grid.from_box([0, -1], [2, 1], [9, 7])
    f = ScalarField.sample(g, lambda x: np.sin(x[..., 0]) * x[..., 1], t=0.25)
    write_field(tmp_path / "f.txt", f)
    back = read_field(tmp_path / "f.txt")
    assert back.t == 0.25
    np.testing.assert_array_equal(back.values, f.values)
    np.testing.assert_allclose(back.grid.spacing, g.spacing)
    write_slice_csv(tmp_path / "f.csv", f)
    rows = np.loadtxt(tmp_path / "f.csv", delimiter=",", skiprows=1)
    assert len(rows) == f.values.size
