"""Per-chunk sensitivity weights regressed from rendering MOS."""
from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import nnls
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ..core import DegenerateChunkError, InsufficientDataError, RenderedVideo, VideoSpec
from ..qoe import QoeModelParams, SensitivityProfile


def design_matrix(renderings: Sequence[RenderedVideo], params: QoeModelParams) -> np.ndarray:
    """``X[j, i]``: the base-model QoE of chunk ``i`` in rendering ``j``."""
    rows = []
    for rendered in renderings:
        ladder = rendered.video.ladder
        prev = None
        row = []
        for idx, stall in zip(rendered.bitrate_idx, rendered.stall_s):
            a = params.quality(ladder[idx])
            row.append(params.chunk_value(a, stall, prev))
            prev = a
        rows.append(row)
    return np.asarray(rows, dtype=float)


class SensitivityRegressor(RegressorMixin, BaseEstimator):
    """Fit ``y ~ intercept + scale * X @ w`` with ``w >= 0`` and ``mean(w) == 1``.

    ``y`` is MOS on the rating scale and ``X`` the per-chunk model QoE, so
    ``scale`` and ``intercept`` carry the unit change between the two.  After
    fitting, ``coef_`` holds the mean-1 weights.

    Parameters
    ----------
    positive : bool
        Constrain the weights to be non-negative (active-set NNLS).
    fit_intercept : bool
        Estimate the rating-scale offset.  Without it the fit passes through
        the origin and only the scale links MOS to model units.
    """

    def __init__(self, positive=True, fit_intercept=True):
        self.positive = positive
        self.fit_intercept = fit_intercept

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        n_samples, n_features = X.shape
        needed = n_features + int(self.fit_intercept)
        if n_samples < needed:
            raise InsufficientDataError(
                f"{n_samples} rated renderings for {n_features} chunks; "
                f"need at least {needed} (deficit {needed - n_samples})"
            )
        if self.fit_intercept:
            x_mean, y_mean = X.mean(axis=0), y.mean()
            Xc, yc = X - x_mean, y - y_mean
        else:
            x_mean, y_mean = np.zeros(n_features), 0.0
            Xc, yc = X, y
        scale_cols = np.max(np.abs(Xc), axis=0)
        for i, s in enumerate(scale_cols):
            if s <= 1e-12 * max(1.0, np.abs(X[:, i]).max()):
                raise DegenerateChunkError(i)
        if np.linalg.matrix_rank(Xc / scale_cols) < n_features:
            raise InsufficientDataError("renderings do not identify every chunk weight")

        if self.positive:
            u, _ = nnls(Xc, yc)
        else:
            u = np.linalg.lstsq(Xc, yc, rcond=None)[0]
        scale = float(u.mean())
        if not scale > 0:
            raise InsufficientDataError("ratings carry no sensitivity signal")
        self.coef_ = u / scale
        self.scale_ = scale
        self.intercept_ = float(y_mean - x_mean @ u)
        self.n_features_in_ = n_features
        return self

    def model_qoe(self, X):
        """Weighted session QoE in model units."""
        check_is_fitted(self)
        X = check_array(X, dtype=float)
        return X @ self.coef_

    def predict(self, X):
        """Predicted MOS."""
        return self.intercept_ + self.scale_ * self.model_qoe(X)

    def profile(self) -> SensitivityProfile:
        check_is_fitted(self)
        return SensitivityProfile.normalized(self.coef_)


def infer_weights(video: VideoSpec, params: QoeModelParams,
                  mos_by_rendering: Mapping[str, float],
                  renderings: Mapping[str, RenderedVideo],
                  return_model: bool = False):
    """Regress chunk weights from the MOS of the rated renderings."""
    ids = sorted(rid for rid in mos_by_rendering if rid in renderings)
    for rid in ids:
        if renderings[rid].video.chunk_count != video.chunk_count:
            raise ValueError(f"rendering {rid!r} does not match the video")
    if len(ids) < video.chunk_count + 1:
        raise InsufficientDataError(
            f"{len(ids)} rated renderings for {video.chunk_count} chunks; "
            f"need at least {video.chunk_count + 1}"
        )
    X = design_matrix([renderings[rid] for rid in ids], params)
    y = np.array([mos_by_rendering[rid] for rid in ids], dtype=float)
    model = SensitivityRegressor().fit(X, y)
    profile = model.profile()
    return (profile, model) if return_model else profile
