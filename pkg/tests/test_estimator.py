import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from svdno.data import build_dataset
from svdno.estimator import SvdNoRegressor
from svdno.solvers import PdeSpec, periodic_grid_1d


@pytest.fixture(scope="module")
def xy():
    spec = PdeSpec(kind="diffusion_reaction_1d", grid=periodic_grid_1d(16),
                   time_slices=3)
    ds = build_dataset(spec, 10, seed=0)
    X = np.stack([a for a, _ in ds.samples])
    y = np.stack([u.reshape(-1) for _, u in ds.samples])
    return X, y


def small_est(**over):
    base = dict(rank=2, lifting_dim=4, blocks=2, net_layers=1, hidden_dim=8,
                epochs=2, batch_size=4, random_state=0)
    base.update(over)
    return SvdNoRegressor(**base)


def test_get_params_round_trip():
    est = small_est()
    params = est.get_params()
    assert params["rank"] == 2
    est2 = clone(est)
    assert est2.get_params() == params


def test_fit_predict_shapes(xy):
    X, y = xy
    est = small_est().fit(X, y)
    pred = est.predict(X)
    assert pred.shape == y.shape
    assert np.all(np.isfinite(pred))


def test_predict_before_fit_raises(xy):
    X, _ = xy
    with pytest.raises(NotFittedError):
        small_est().predict(X)


def test_predict_rejects_wrong_width(xy):
    X, y = xy
    est = small_est().fit(X, y)
    with pytest.raises(ValueError):
        est.predict(X[:, :-1])


def test_fit_deterministic(xy):
    X, y = xy
    p1 = small_est().fit(X, y).predict(X)
    p2 = small_est().fit(X, y).predict(X)
    assert np.array_equal(p1, p2)


def test_incompatible_column_counts():
    X = np.ones((4, 7))
    y = np.ones((4, 7))
    with pytest.raises(ValueError):
        small_est(grid=None).fit(X, np.ones((4, 5)))
