"""Diagnostics for fitted subspaces: CCA similarity, sparsity, reconstruction error."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DimensionError, NumericError
from .factorize import FactorModel, as_matrix

RIDGE_SCALE = 1e-8
# auto-covariances with a larger condition number get the default ridge
MAX_CONDITION = 1e12
ZERO_THRESHOLD = 1e-6


@dataclass(frozen=True)
class CcaResult:
    correlations: tuple
    mean_correlation: float

    def to_dict(self):
        return {"correlations": list(self.correlations),
                "mean_correlation": self.mean_correlation}


@dataclass(frozen=True)
class SparsityReport:
    hoyer: float
    zero_fraction: float
    matrix_tag: str

    def to_dict(self):
        return asdict(self)


def _auto_ridge(S):
    w = np.linalg.eigvalsh(S)
    if w[0] > 0 and w[-1] / w[0] < MAX_CONDITION:
        return 0.0
    return RIDGE_SCALE * np.trace(S) / S.shape[0]


def _whitener(S, ridge):
    S = S + ridge * np.eye(S.shape[0])
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise NumericError("auto-covariance is not positive definite; pass a larger ridge") from None


def cca_similarity(X1, X2, ridge=None):
    """Canonical correlations between two variable sets observed on the same samples.

    ``X1`` is ``M1 x N`` and ``X2`` is ``M2 x N`` (variables in rows).  With
    ``ridge=None`` each auto-covariance is used as is when well conditioned
    and otherwise regularised by ``1e-8 * trace / dim``; a number is added to
    both auto-covariance diagonals verbatim.
    """
    X1 = as_matrix(X1, "X1")
    X2 = as_matrix(X2, "X2")
    N = X1.shape[1]
    if X2.shape[1] != N:
        raise DimensionError(f"sample counts differ: {N} vs {X2.shape[1]}")
    if N < 2:
        raise DimensionError("CCA needs at least two samples")
    A = X1 - X1.mean(axis=1, keepdims=True)
    B = X2 - X2.mean(axis=1, keepdims=True)
    S11 = A @ A.T / (N - 1)
    S22 = B @ B.T / (N - 1)
    S12 = A @ B.T / (N - 1)
    if not (np.all(np.isfinite(S11)) and np.all(np.isfinite(S22)) and np.all(np.isfinite(S12))):
        raise NumericError("covariance is not finite")
    if ridge is None:
        r1, r2 = _auto_ridge(S11), _auto_ridge(S22)
    else:
        if ridge < 0:
            raise ValueError("ridge must be >= 0")
        r1 = r2 = float(ridge)
    L1 = _whitener(S11, r1)
    L2 = _whitener(S22, r2)
    T = np.linalg.solve(L1, S12)
    T = np.linalg.solve(L2, T.T).T
    rho = np.linalg.svd(T, compute_uv=False)
    count = min(X1.shape[0], X2.shape[0], N - 1)
    rho = tuple(float(r) for r in rho[:count])
    return CcaResult(correlations=rho, mean_correlation=float(np.mean(rho)))


def hoyer_sparsity(mtx):
    """Hoyer's l1/l2 sparsity of all entries: 0 for flat magnitudes, 1 for a single spike."""
    m = np.asarray(mtx, dtype=np.float64).ravel()
    if m.size < 2:
        raise DimensionError("sparsity needs at least two entries")
    if not np.all(np.isfinite(m)):
        raise NumericError("matrix contains NaN or Inf")
    a = np.abs(m)
    peak = a.max()
    if peak == 0.0:
        raise NumericError("sparsity of an all-zero matrix is undefined")
    a = a / peak  # the measure is scale-free; this keeps the l2 norm from underflowing
    root_n = math.sqrt(m.size)
    h = (root_n - a.sum() / np.linalg.norm(a)) / (root_n - 1.0)
    return float(min(max(h, 0.0), 1.0))


def zero_fraction(mtx, rel_threshold=ZERO_THRESHOLD):
    m = np.abs(np.asarray(mtx, dtype=np.float64).ravel())
    tau = rel_threshold * m.max()
    return float(np.mean(m < tau)) if tau > 0 else 1.0


def sparsity_report(mtx, tag):
    if tag not in ("U_train", "V_train"):
        raise ValueError(f"matrix tag must be U_train or V_train, got {tag!r}")
    return SparsityReport(hoyer=hoyer_sparsity(mtx), zero_fraction=zero_fraction(mtx),
                          matrix_tag=tag)


def reconstruction_error(X, model: FactorModel):
    """Relative Frobenius error ``||X - U V^T|| / ||X||``."""
    X = as_matrix(X)
    if X.shape != (model.U.shape[0], model.V.shape[0]):
        raise DimensionError(
            f"X has shape {X.shape}, model reconstructs {(model.U.shape[0], model.V.shape[0])}")
    norm = np.linalg.norm(X)
    if norm == 0.0:
        raise NumericError("relative error undefined for X = 0")
    return float(np.linalg.norm(X - model.U @ model.V.T) / norm)


def compare_models(model_a: FactorModel, model_b: FactorModel, ridge=None):
    """CCA between two fitted subspaces, for both ``U`` and ``V``.

    ``U``: the ``k`` basis columns are the variables and the feature rows the
    observations.  ``V``: the subspace coordinates are the variables and the
    training samples the observations.  Sparsity of each factor is included.
    """
    if model_a.U.shape[0] != model_b.U.shape[0]:
        raise DimensionError("models were fitted on different feature dimensions")
    if model_a.V.shape[0] != model_b.V.shape[0]:
        raise DimensionError("models were fitted on different sample counts")
    out = {
        "cca_U": cca_similarity(model_a.U.T, model_b.U.T, ridge).to_dict(),
        "cca_V": cca_similarity(model_a.V.T, model_b.V.T, ridge).to_dict(),
    }
    for name, model in (("a", model_a), ("b", model_b)):
        out[f"sparsity_{name}"] = [
            sparsity_report(model.U, "U_train").to_dict(),
            sparsity_report(model.V, "V_train").to_dict(),
        ]
    return out
