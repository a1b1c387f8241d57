"""scikit-learn style wrappers around registration, fusion and the oracle detector.

These let the pipeline stages sit in sklearn tooling (``get_params``,
``clone``, pipelines over point arrays) without changing the functional API.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .fusion import FusionPolicy, fuse_pixels
from .imagecore import PixelBuffer, expand_lwir
from .registration import (Homography, WarpPlan, apply_homography_points,
                           estimate_homography_points, invert_homography)
from .synthgen import ORACLE_MODES, oracle_detect_array


def _points(X, name="X"):
    X = check_array(X, dtype=float, ensure_min_samples=1, input_name=name)
    if X.shape[1] != 2:
        raise ValueError(f"{name} must have exactly 2 columns (x, y), got {X.shape[1]}")
    return X


class HomographyEstimator(TransformerMixin, BaseEstimator):
    """Fit an LWIR->RGB homography from point correspondences.

    ``fit(X, y)`` takes LWIR points ``X`` and matching RGB points ``y``, both
    ``(n, 2)`` with n >= 4. ``transform`` maps LWIR points into RGB pixels.
    """

    def fit(self, X, y):
        X = _points(X)
        y = _points(y, "y")
        if len(X) != len(y):
            raise ValueError("X and y must hold the same number of points")
        self.homography_ = estimate_homography_points(X, y)
        self.n_features_in_ = 2
        residuals = np.linalg.norm(apply_homography_points(self.homography_, X) - y, axis=1)
        self.max_residual_ = float(residuals.max())
        return self

    def transform(self, X):
        check_is_fitted(self, "homography_")
        return apply_homography_points(self.homography_, _points(X))

    def inverse_transform(self, X):
        check_is_fitted(self, "homography_")
        return apply_homography_points(invert_homography(self.homography_), _points(X))

    def score(self, X, y):
        """Negative mean reprojection error in pixels (higher is better)."""
        pred = self.transform(X)
        return -float(np.mean(np.linalg.norm(pred - _points(y, "y"), axis=1)))


class SpectralFuser(TransformerMixin, BaseEstimator):
    """Warp LWIR frames into RGB geometry and blend them with the RGB frames.

    Either pass a fixed ``homography`` or fit one from correspondences.
    ``transform`` takes a sequence of ``(lwir, rgb)`` PixelBuffer pairs and
    returns the fused 3-channel buffers.
    """

    def __init__(self, homography=None, alpha=0.5, lut=None):
        self.homography = homography
        self.alpha = alpha
        self.lut = lut

    def fit(self, X=None, y=None):
        FusionPolicy(self.alpha)
        if X is not None:
            if y is None:
                raise ValueError("fitting from correspondences needs both X and y")
            self.homography_ = HomographyEstimator().fit(X, y).homography_
        elif self.homography is not None:
            self.homography_ = (self.homography if isinstance(self.homography, Homography)
                                else Homography(self.homography))
        else:
            raise ValueError("provide a homography or correspondences to fit")
        self._plans = {}
        return self

    def _plan(self, lwir: PixelBuffer, rgb: PixelBuffer) -> WarpPlan:
        key = (lwir.width, lwir.height, rgb.width, rgb.height)
        if key not in self._plans:
            self._plans[key] = WarpPlan.build(self.homography_, *key)
        return self._plans[key]

    def transform(self, X):
        check_is_fitted(self, "homography_")
        policy = FusionPolicy(self.alpha)
        out = []
        for lwir, rgb in X:
            lwir3 = expand_lwir(lwir, self.lut) if lwir.channels == 1 else lwir
            warped = self._plan(lwir, rgb).apply(lwir3)
            out.append(fuse_pixels(rgb, warped.image, warped.mask, policy))
        return out


class BlobDetector(BaseEstimator):
    """Contrast-blob oracle detector with an estimator interface.

    ``predict`` takes a sequence of PixelBuffers or arrays; the frame index
    of each detection is the position of its frame in the sequence.
    """

    def __init__(self, mode="hot_blob"):
        self.mode = mode

    def fit(self, X=None, y=None):
        if self.mode not in ORACLE_MODES:
            raise ValueError(f"mode must be one of {ORACLE_MODES}, got {self.mode!r}")
        self.is_fitted_ = True
        return self

    def predict(self, X):
        check_is_fitted(self, "is_fitted_")
        dets = []
        for i, frame in enumerate(X):
            arr = frame.to_array() if isinstance(frame, PixelBuffer) else np.asarray(frame)
            dets.extend(oracle_detect_array(arr, self.mode, i))
        return dets
