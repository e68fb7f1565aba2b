"""scikit-learn style wrappers for the statistical layer.

The dynamical objects (fields, flows, regularizations) do not learn from
data and stay plain functions.  Only the sample-based steps fit the
estimator shape: the pullback to scale-invariant variables is a transformer
and the projected density is an estimator with a bootstrap noise floor.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .analysis import scale_map
from .ensemble import (SampleSet, bootstrap_self_distance, histogram2d, l1_distance,
                       pullback_samples)


def _weights(sample_weight, n):
    if sample_weight is None:
        return None
    w = check_array(sample_weight, ensure_2d=False, dtype=float)
    if w.shape != (n,) or np.any(w < 0) or not w.sum() > 0:
        raise ValueError("sample_weight must be nonnegative with positive sum, one per row")
    return w / w.sum()


class PullbackTransformer(TransformerMixin, BaseEstimator):
    """Map post-blowup states ``x`` at time ``t`` to ``(y, w)`` columns.

    ``transform`` returns ``[y_1 .. y_d, w]`` with ``y = x/|x|`` and
    ``w = (t - t_b)|x|**(alpha-1)``; ``inverse_transform`` applies the scale map.
    """

    def __init__(self, t=2.0, t_b=1.0, alpha=1.0 / 3.0):
        self.t = t
        self.t_b = t_b
        self.alpha = alpha

    def fit(self, X, y=None):
        X = check_array(X)
        if not self.t > self.t_b:
            raise ValueError("t must exceed t_b")
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X)
        Y, W = pullback_samples(SampleSet(self.t, X), self.t_b, self.alpha)
        return np.column_stack([Y, W])

    def inverse_transform(self, Z):
        check_is_fitted(self, "n_features_in_")
        Z = check_array(Z)
        return scale_map(Z[:, :-1], Z[:, -1], self.t - self.t_b, self.alpha)


class HistogramDensity(BaseEstimator):
    """Projected 2D histogram of a (weighted) point cloud.

    After ``fit``, ``histogram_`` holds the normalized grid and
    ``noise_floor_`` the bootstrap self-distance.  ``score`` is the negative
    L1 distance to the histogram of another sample, so larger is closer.
    """

    def __init__(self, dims=(1, 2), bounds=(-4.0, 4.0, -4.0, 4.0), nx=64, ny=64,
                 n_bootstrap=50, random_state=0):
        self.dims = dims
        self.bounds = bounds
        self.nx = nx
        self.ny = ny
        self.n_bootstrap = n_bootstrap
        self.random_state = random_state

    def _grid(self):
        return dict(dims=tuple(self.dims), bounds=tuple(self.bounds), nx=self.nx, ny=self.ny)

    def _samples(self, X, sample_weight):
        X = check_array(X)
        return SampleSet(0.0, X, _weights(sample_weight, len(X)))

    def fit(self, X, y=None, sample_weight=None):
        s = self._samples(X, sample_weight)
        self.n_features_in_ = s.points.shape[1]
        self.histogram_ = histogram2d(s, **self._grid())
        self.noise_floor_ = bootstrap_self_distance(s, B=self.n_bootstrap,
                                                    seed=self.random_state, **self._grid())
        return self

    def distance(self, other):
        """L1 distance to another fitted :class:`HistogramDensity`."""
        check_is_fitted(self, "histogram_")
        check_is_fitted(other, "histogram_")
        return l1_distance(self.histogram_, other.histogram_)

    def score(self, X, y=None, sample_weight=None):
        check_is_fitted(self, "histogram_")
        h = histogram2d(self._samples(X, sample_weight), **self._grid())
        return -l1_distance(self.histogram_, h)
