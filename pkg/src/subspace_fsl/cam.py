"""Class activation maps routed through a learned subspace.

The classifier lives in the ``k``-dimensional subspace, so its weight vector
for the predicted class is mapped back to channel space with the training
projection matrix (``x' = U w_i``) and used to weight the last convolutional
feature maps.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DimensionError, NumericError
from .factorize import FactorModel, project_test


@dataclass(frozen=True)
class FeatureMapStack:
    data: np.ndarray  # channels x height x width
    source_id: str = ""

    def __post_init__(self):
        d = np.ascontiguousarray(self.data, dtype=np.float64)
        if d.ndim != 3 or 0 in d.shape:
            raise DimensionError(f"feature maps must be c x h x w, got shape {d.shape}")
        if not np.all(np.isfinite(d)):
            raise NumericError("feature maps contain NaN or Inf")
        d.setflags(write=False)
        object.__setattr__(self, "data", d)

    @property
    def channels(self):
        return self.data.shape[0]

    @property
    def height(self):
        return self.data.shape[1]

    @property
    def width(self):
        return self.data.shape[2]

    def flat(self):
        return self.data.reshape(self.channels, -1)

    def pooled(self):
        """Global average pool: the feature vector a CNN head would see."""
        return self.flat().mean(axis=1)


@dataclass(frozen=True)
class ActivationMap:
    values: np.ndarray
    predicted_class: int
    class_score: float
    raw: np.ndarray
    degenerate: bool = False

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    def sidecar(self):
        return {"predicted_class": self.predicted_class, "class_score": self.class_score,
                "degenerate": self.degenerate}


def bilinear_resize(src, out_h, out_w):
    """Align-corners bilinear interpolation of a 2-D map."""
    src = np.ascontiguousarray(src, dtype=np.float64)
    if src.ndim != 2 or src.shape[0] < 1 or src.shape[1] < 1:
        raise DimensionError(f"expected a non-empty 2-D map, got shape {src.shape}")
    if out_h < 1 or out_w < 1:
        raise DimensionError(f"output size must be positive, got {out_h} x {out_w}")
    return _kernels.bilinear(src, int(out_h), int(out_w))


def cam_raw(fmap: FeatureMapStack, U, w):
    """Unresized map ``reshape((U w)^T M_flat, h x w)``."""
    U = np.asarray(U, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if U.ndim != 2 or U.shape[0] != fmap.channels:
        raise DimensionError(f"U has {U.shape[0]} rows, feature maps have {fmap.channels} channels")
    if w.shape != (U.shape[1],):
        raise DimensionError(f"weight vector must have length {U.shape[1]}")
    x = U @ w
    return (x @ fmap.flat()).reshape(fmap.height, fmap.width)


def _normalise(R):
    lo, hi = R.min(), R.max()
    if hi - lo <= 1e-12 * max(abs(lo), abs(hi)):
        return np.zeros_like(R), True
    return (R - lo) / (hi - lo), False


def cam_generate(fmap: FeatureMapStack, feature_vec, model: FactorModel, head, out_h, out_w,
                 seed=0, iters=None):
    """Activation map for one image.

    ``head`` is a :class:`~subspace_fsl.fewshot.LinearHead` or a bare
    ``k x C`` weight matrix.  ``feature_vec=None`` uses the pooled feature
    maps.  The output is min-max scaled to ``[0, 1]``; a spatially constant
    map cannot be scaled and comes back as zeros with ``degenerate=True``.
    """
    U = model.U
    if U.shape[0] != fmap.channels:
        raise DimensionError(f"model U has {U.shape[0]} rows, feature maps have {fmap.channels} channels")
    x = fmap.pooled() if feature_vec is None else np.asarray(feature_vec, dtype=np.float64)
    if x.shape != (fmap.channels,):
        raise DimensionError(f"feature vector must have length {fmap.channels}")
    if hasattr(head, "weights"):
        W, b = np.asarray(head.weights), np.asarray(head.bias)
    else:
        W = np.asarray(head, dtype=np.float64)
        b = np.zeros(W.shape[1] if W.ndim == 2 else 0)
    if W.ndim != 2 or W.shape[0] != model.k:
        raise DimensionError(f"weight matrix must be k x C with k = {model.k}")
    v = project_test(x[:, None], model, iters=iters, seed=seed)[0]
    z = v @ W + b
    p = np.exp(z - z.max())
    p /= p.sum()
    i = int(np.argmax(z))
    raw = cam_raw(fmap, U, W[:, i])
    values, flat = _normalise(bilinear_resize(raw, out_h, out_w))
    if flat:
        warnings.warn("activation map is spatially constant; returning zeros", RuntimeWarning)
    return ActivationMap(values=values, predicted_class=i, class_score=float(p[i]), raw=raw,
                         degenerate=flat)
