import numpy as np
import pytest

from svdno.errors import ConfigurationError, ShapeError
from svdno.grids import Grid, make_augmented_coordinates


def test_grid_validation():
    with pytest.raises(ConfigurationError):
        Grid((1,))
    with pytest.raises(ConfigurationError):
        Grid((4, 4, 4))
    with pytest.raises(ConfigurationError):
        Grid((4,), ((1.0, 0.0),))


def test_grid_spacing_and_coords():
    g = Grid((5,), ((0.0, 1.0),))
    assert g.spacing == (0.25,)
    assert np.allclose(g.coords()[:, 0], [0, 0.25, 0.5, 0.75, 1.0])


def test_grid_coords_row_major_2d():
    g = Grid((3, 3))
    coords = g.coords()
    # independent mesh enumeration, row-major
    ref = [(i / 2, j / 2) for i in range(3) for j in range(3)]
    assert np.allclose(coords, ref)


def test_grid_roundtrip():
    g = Grid((4, 6), ((0.0, 2.0), (-1.0, 1.0)))
    assert Grid.from_dict(g.to_dict()) == g


def test_augmented_coords_zero_field():
    g = Grid((2,))
    z = make_augmented_coordinates(g, np.zeros(2))
    assert np.array_equal(z, [[0.0, 0.0], [1.0, 0.0]])


def test_augmented_coords_linear_field():
    g = Grid((3,))
    x = g.coords()[:, 0]
    z = make_augmented_coordinates(g, x)
    assert np.array_equal(z, [[0.0, 0.0], [0.5, 0.5], [1.0, 1.0]])


def test_augmented_coords_2d_matches_enumeration():
    rng = np.random.default_rng(0)
    g = Grid((3, 3))
    a = rng.standard_normal(9)
    z = make_augmented_coordinates(g, a)
    ref = np.asarray([(i / 2, j / 2) for i in range(3) for j in range(3)])
    assert np.allclose(z[:, :2], ref)
    assert np.allclose(z[:, 2], a)


def test_augmented_coords_shape_error():
    with pytest.raises(ShapeError):
        make_augmented_coordinates(Grid((4,)), np.zeros(5))
