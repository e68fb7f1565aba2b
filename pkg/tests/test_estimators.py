import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from singflow.estimators import HistogramDensity, PullbackTransformer


def test_pullback_transformer_round_trip():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(50, 4))
    tr = PullbackTransformer(t=2.0, t_b=1.0, alpha=1.0 / 3.0).fit(X)
    Z = tr.transform(X)
    assert Z.shape == (50, 5)
    np.testing.assert_allclose(np.linalg.norm(Z[:, :4], axis=1), 1.0)
    np.testing.assert_allclose(tr.inverse_transform(Z), X, rtol=1e-12)


def test_pullback_transformer_validation():
    with pytest.raises(NotFittedError):
        PullbackTransformer().transform(np.ones((2, 2)))
    with pytest.raises(ValueError):
        PullbackTransformer(t=1.0, t_b=1.0).fit(np.ones((2, 2)))


def test_histogram_density_fit_score_and_clone():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(2000, 2))
    est = HistogramDensity(dims=(0, 1), nx=16, ny=16, n_bootstrap=10).fit(X)
    assert est.histogram_.mass.sum() == pytest.approx(1.0)
    assert est.noise_floor_ > 0
    assert est.score(X) == 0.0
    far = HistogramDensity(dims=(0, 1), nx=16, ny=16, n_bootstrap=10).fit(X + 2.5)
    assert est.distance(far) > 5 * est.noise_floor_
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    assert not hasattr(twin, "histogram_")


def test_histogram_density_sample_weight():
    X = np.array([[0.5, 0.5], [-0.5, -0.5]])
    est = HistogramDensity(dims=(0, 1), bounds=(-1, 1, -1, 1), nx=2, ny=2, n_bootstrap=10)
    est.fit(X, sample_weight=[3.0, 1.0])
    assert est.histogram_.mass[1, 1] == pytest.approx(0.75)
    with pytest.raises(ValueError):
        est.fit(X, sample_weight=[1.0, -1.0])
