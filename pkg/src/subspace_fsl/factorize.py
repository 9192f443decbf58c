"""Subspace factorizations: truncated SVD, NMF, DNMF and SCNMFS.

All matrices follow the column-per-sample convention: ``X`` is ``M x N``
(features x samples), ``U`` is ``M x k``, ``V`` is ``N x k`` and
``X ~ U @ V.T``.  Label matrices ``Q`` are one-hot ``C x N``.

Each NMF-family fit is a loop over a ``*_sweep`` function; the sweeps are
public so they can be checked one step at a time against other
implementations.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .errors import (
    DimensionError,
    LabelMismatchError,
    NonNegativityError,
    NumericError,
)

DEFAULT_ITERS = 3000
DEFAULT_EPS = 1e-12
DEFAULT_ALPHA = 1.0
DEFAULT_BETA = 0.5
PINV_RCOND = 1e-12


class Method(str, enum.Enum):
    SVD = "svd"
    NMF = "nmf"
    DNMF = "dnmf"
    SCNMFS = "scnmfs"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown method {value!r} (expected one of {names})") from None

    @property
    def nonneg(self):
        return self is not Method.SVD

    @property
    def supervised(self):
        return self in (Method.DNMF, Method.SCNMFS)


# --- input validation -----------------------------------------------------

def as_matrix(X, name="X"):
    """Return ``X`` as a finite, C-contiguous float64 matrix."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise DimensionError(f"{name} must be a non-empty 2-D matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise NumericError(f"{name} contains NaN or Inf")
    return X


def check_nonneg(X, name="X"):
    X = as_matrix(X, name)
    if np.any(X < 0):
        i, j = np.argwhere(X < 0)[0]
        raise NonNegativityError(f"{name}[{i}, {j}] = {X[i, j]!r} is negative")
    return X


def one_hot(labels, n_classes=None):
    """One-hot ``C x N`` label matrix from integer labels in ``[0, C)``."""
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.size == 0:
        raise DimensionError("labels must be a non-empty 1-D sequence")
    if not np.issubdtype(labels.dtype, np.integer):
        if not np.all(labels == np.round(labels)):
            raise LabelMismatchError("labels must be integers")
        labels = labels.astype(np.int64)
    if labels.min() < 0:
        raise LabelMismatchError("labels must be non-negative")
    if n_classes is None:
        n_classes = int(labels.max()) + 1
    if labels.max() >= n_classes:
        raise LabelMismatchError(f"label {labels.max()} out of range for {n_classes} classes")
    Q = np.zeros((n_classes, labels.size))
    Q[labels, np.arange(labels.size)] = 1.0
    return Q


def as_label_matrix(Q, n_samples):
    """Accept a one-hot matrix or a label vector; return a validated ``C x N`` matrix."""
    Q = np.asarray(Q)
    if Q.ndim == 1:
        Q = one_hot(Q)
    Q = as_matrix(Q, "Q")
    if Q.shape[1] != n_samples:
        raise LabelMismatchError(
            f"label matrix has {Q.shape[1]} columns but X has {n_samples} samples")
    if not np.all((Q == 0.0) | (Q == 1.0)) or not np.all(Q.sum(axis=0) == 1.0):
        raise LabelMismatchError("label matrix columns must be one-hot")
    return Q


def _check_k(k, M, N, strict):
    hi = min(M, N) - 1 if strict else min(M, N)
    if not isinstance(k, (int, np.integer)) or isinstance(k, bool):
        raise DimensionError(f"k must be an integer, got {k!r}")
    if not 1 <= k <= hi:
        rel = "<" if strict else "<="
        raise DimensionError(f"k={k} out of range: need 1 <= k {rel} min(M, N) = {min(M, N)}")


def _nonneg_training_input(X):
    X = check_nonneg(X)
    if not np.any(X > 0):
        raise NumericError("X is all zeros; multiplicative updates are undefined")
    return X


def _uniform(rng, shape):
    # (0, 1]: a zero entry would stay zero forever under multiplicative updates
    return 1.0 - rng.random(shape)


# --- model ----------------------------------------------------------------

def _frozen(a):
    if a is None:
        return None
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FactorModel:
    """A fitted subspace.  Arrays are read-only after construction."""

    method: Method
    k: int
    U: np.ndarray
    V: np.ndarray
    A: Optional[np.ndarray] = None
    Z: Optional[np.ndarray] = None
    sigma: Optional[np.ndarray] = None
    objective_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))
    seed: Optional[int] = None
    hyper: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "method", Method.parse(self.method))
        for name in ("U", "V", "A", "Z", "sigma", "objective_trace"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        object.__setattr__(self, "hyper", dict(self.hyper))
        if self.U.shape[1] != self.k or self.V.shape[1] != self.k:
            raise DimensionError("U and V must both have k columns")

    @property
    def n_features(self):
        return self.U.shape[0]

    @property
    def n_samples(self):
        return self.V.shape[0]

    def to_dict(self):
        out = {
            "method": self.method.value,
            "k": int(self.k),
            "hyper": dict(self.hyper),
            "seed": self.seed,
            "U": self.U.tolist(),
            "V": self.V.tolist(),
        }
        for name in ("A", "Z", "sigma"):
            value = getattr(self, name)
            if value is not None:
                out[name] = value.tolist()
        out["objective_trace"] = self.objective_trace.tolist()
        return out

    @classmethod
    def from_dict(cls, d):
        k = int(d["k"])

        def mat(name):
            if d.get(name) is None:
                return None
            return np.asarray(d[name], dtype=np.float64).reshape(-1, k)

        sigma = d.get("sigma")
        return cls(
            method=d["method"],
            k=k,
            U=mat("U"),
            V=mat("V"),
            A=mat("A"),
            Z=mat("Z"),
            sigma=None if sigma is None else np.asarray(sigma, dtype=np.float64),
            objective_trace=np.asarray(d.get("objective_trace", []), dtype=np.float64),
            seed=d.get("seed"),
            hyper=d.get("hyper", {}),
        )


# --- SVD ------------------------------------------------------------------

def _fix_signs(U):
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs


def truncated_svd(X, k):
    """Top-``k`` left singular vectors of ``X`` as a projection basis.

    ``V = X.T @ U``.  Each column of ``U`` is signed so that its
    largest-magnitude entry is positive.
    """
    X = as_matrix(X)
    M, N = X.shape
    _check_k(k, M, N, strict=False)
    left, s, _ = np.linalg.svd(X, full_matrices=False)
    U = np.ascontiguousarray(_fix_signs(left[:, :k]))
    V = X.T @ U
    resid = X - U @ V.T
    return FactorModel(
        method=Method.SVD,
        k=k,
        U=U,
        V=V,
        sigma=s[:k].copy(),
        objective_trace=np.array([float(np.sum(resid * resid))]),
        seed=None,
        hyper={},
    )


# --- objectives -----------------------------------------------------------

def _sqnorm(R):
    return float(np.sum(R * R))


def nmf_objective(X, U, V):
    return _sqnorm(X - U @ V.T)


def dnmf_objective(X, Q, U, V, A, alpha):
    return nmf_objective(X, U, V) + alpha * _sqnorm(Q - A @ V.T)


def scnmfs_objective(X, Q, U, Z, beta):
    return _sqnorm(X - U @ (Z.T @ Q)) + beta * _sqnorm(U)


def _expanded_residual(xx, XV, U, V):
    # ||X - U V^T||^2 = ||X||^2 - 2 <XV, U> + <U^T U, V^T V>, reusing XV
    val = xx - 2.0 * float(np.sum(XV * U)) + float(np.sum((U.T @ U) * (V.T @ V)))
    return max(val, 0.0)


# --- single sweeps --------------------------------------------------------

def _nmf_step(X, U, V, XV, eps):
    U = _kernels.mu_step(U, XV, U @ (V.T @ V), eps)
    V = _kernels.mu_step(V, X.T @ U, V @ (U.T @ U), eps)
    return U, V


def nmf_sweep(X, U, V, eps=DEFAULT_EPS):
    """One U-then-V multiplicative sweep; returns new ``(U, V)``."""
    return _nmf_step(X, U, V, X @ V, eps)


def pinv_gram(G, rcond=PINV_RCOND):
    """Pseudo-inverse of a symmetric Gram matrix via its SVD."""
    left, s, right = np.linalg.svd(G)
    cutoff = rcond * s.max() if s.size else 0.0
    inv = np.zeros_like(s)
    keep = s > cutoff
    inv[keep] = 1.0 / s[keep]
    return (right.T * inv) @ left.T


def label_regression(Q, V):
    """Least-squares ``A`` minimising ``||Q - A V^T||``: ``Q V (V^T V)^+``."""
    return (Q @ V) @ pinv_gram(V.T @ V)


def _dnmf_step(X, Q, U, V, A, XV, alpha, eps):
    U = _kernels.mu_step(U, XV, U @ (V.T @ V), eps)
    V = _kernels.signed_mu_step(
        V, X.T @ U, V @ (U.T @ U), V @ (A.T @ A), Q.T @ A, alpha, eps)
    return U, V, label_regression(Q, V)


def dnmf_sweep(X, Q, U, V, A, alpha, eps=DEFAULT_EPS):
    """One DNMF sweep (U, then V, then A); returns new ``(U, V, A)``."""
    return _dnmf_step(X, Q, U, V, A, X @ V, alpha, eps)


def _scnmfs_step(XQt, QQt, U, Z, beta, eps):
    # X Q^T Z and U Z^T Q Q^T Z, with the constant X Q^T (M x C) precomputed
    U = _kernels.mu_step_ridge(U, XQt @ Z, U @ (Z.T @ (QQt @ Z)), beta, eps)
    Z = _kernels.mu_step(Z, XQt.T @ U, QQt @ (Z @ (U.T @ U)), eps)
    return U, Z


def scnmfs_sweep(X, Q, U, Z, beta, eps=DEFAULT_EPS):
    """One SCNMFS sweep (U, then Z); returns new ``(U, Z)``."""
    return _scnmfs_step(X @ Q.T, Q @ Q.T, U, Z, beta, eps)


# --- fitting --------------------------------------------------------------

def _check_iters(iters, tol, eps):
    if not isinstance(iters, (int, np.integer)) or isinstance(iters, bool) or iters < 0:
        raise ValueError(f"iters must be a non-negative integer, got {iters!r}")
    if not tol >= 0:
        raise ValueError(f"tol must be >= 0, got {tol!r}")
    if not eps > 0:
        raise ValueError(f"eps must be > 0, got {eps!r}")


def _stalled(trace, tol):
    prev, cur = trace[-2], trace[-1]
    scale = abs(prev)
    if scale == 0.0:
        return cur == 0.0 and tol > 0
    return abs(prev - cur) / scale < tol


def _assert_nonneg(*arrays):
    for a in arrays:
        if np.any(a < 0) or not np.all(np.isfinite(a)):
            raise NumericError("factor left the non-negative orthant")


def nmf_fit(X, k, iters=DEFAULT_ITERS, tol=0.0, seed=0, eps=DEFAULT_EPS, debug=False):
    """Fit ``X ~ U V^T`` with ``U, V >= 0`` by Lee-Seung multiplicative updates.

    ``objective_trace[0]`` is the objective at initialisation and
    ``objective_trace[t]`` the objective after sweep ``t``.  Iteration stops
    after ``iters`` sweeps, or earlier once the relative objective change
    drops below ``tol`` (``tol=0`` disables early stopping).
    """
    X = _nonneg_training_input(X)
    M, N = X.shape
    _check_k(k, M, N, strict=True)
    _check_iters(iters, tol, eps)
    rng = np.random.default_rng(seed)
    U = _uniform(rng, (M, k))
    V = _uniform(rng, (N, k))
    xx = _sqnorm(X)
    XV = X @ V
    trace = [_expanded_residual(xx, XV, U, V)]
    for _ in range(iters):
        U, V = _nmf_step(X, U, V, XV, eps)
        if debug:
            _assert_nonneg(U, V)
        XV = X @ V
        trace.append(_expanded_residual(xx, XV, U, V))
        if _stalled(trace, tol):
            break
    return FactorModel(
        method=Method.NMF, k=k, U=U, V=V, objective_trace=np.array(trace), seed=seed,
        hyper={"iters": iters, "tol": tol, "eps": eps},
    )


def dnmf_fit(X, Q, k, alpha=DEFAULT_ALPHA, iters=DEFAULT_ITERS, tol=0.0, seed=0,
             eps=DEFAULT_EPS, debug=False):
    """Discriminative NMF: NMF plus ``alpha * ||Q - A V^T||^2``.

    ``A`` starts as the least-squares fit to the initial ``V`` and is
    recomputed after every (U, V) update.  ``alpha=0`` reproduces
    :func:`nmf_fit` exactly for the same seed.
    """
    X = _nonneg_training_input(X)
    M, N = X.shape
    Q = as_label_matrix(Q, N)
    _check_k(k, M, N, strict=True)
    _check_iters(iters, tol, eps)
    if not alpha >= 0:
        raise ValueError(f"alpha must be >= 0, got {alpha!r}")
    rng = np.random.default_rng(seed)
    U = _uniform(rng, (M, k))
    V = _uniform(rng, (N, k))
    A = label_regression(Q, V)
    xx = _sqnorm(X)

    def objective(XV, U, V, A):
        return _expanded_residual(xx, XV, U, V) + alpha * _sqnorm(Q - A @ V.T)

    XV = X @ V
    trace = [objective(XV, U, V, A)]
    for _ in range(iters):
        U, V, A = _dnmf_step(X, Q, U, V, A, XV, alpha, eps)
        if debug:
            _assert_nonneg(U, V)
        XV = X @ V
        trace.append(objective(XV, U, V, A))
        if _stalled(trace, tol):
            break
    return FactorModel(
        method=Method.DNMF, k=k, U=U, V=V, A=A, objective_trace=np.array(trace), seed=seed,
        hyper={"alpha": alpha, "iters": iters, "tol": tol, "eps": eps},
    )


def scnmfs_fit(X, Q, k, beta=DEFAULT_BETA, iters=DEFAULT_ITERS, tol=0.0, seed=0,
               eps=DEFAULT_EPS, debug=False):
    """Supervised constrained NMF with a ``beta * ||U||^2`` penalty.

    The sample codes are tied per class: ``V = Q^T Z`` with ``Z`` of shape
    ``C x k``, so every sample of a class gets the same (bitwise identical)
    row of ``V``.
    """
    X = _nonneg_training_input(X)
    M, N = X.shape
    Q = as_label_matrix(Q, N)
    _check_k(k, M, N, strict=True)
    _check_iters(iters, tol, eps)
    if not 0 < beta < 1:
        raise ValueError(f"beta must lie in (0, 1), got {beta!r}")
    rng = np.random.default_rng(seed)
    U = _uniform(rng, (M, k))
    Z = _uniform(rng, (Q.shape[0], k))
    xx = _sqnorm(X)
    XQt = X @ Q.T
    QQt = Q @ Q.T

    def objective(U, Z):
        fit_term = xx - 2.0 * float(np.sum((XQt @ Z) * U)) \
            + float(np.sum((U.T @ U) * (Z.T @ (QQt @ Z))))
        return max(fit_term, 0.0) + beta * _sqnorm(U)

    trace = [objective(U, Z)]
    for _ in range(iters):
        U, Z = _scnmfs_step(XQt, QQt, U, Z, beta, eps)
        if debug:
            _assert_nonneg(U, Z)
        trace.append(objective(U, Z))
        if _stalled(trace, tol):
            break
    labels = np.argmax(Q, axis=0)
    return FactorModel(
        method=Method.SCNMFS, k=k, U=U, V=Z[labels], Z=Z, objective_trace=np.array(trace),
        seed=seed, hyper={"beta": beta, "iters": iters, "tol": tol, "eps": eps},
    )


def fit(method, X, k, labels=None, alpha=DEFAULT_ALPHA, beta=DEFAULT_BETA,
        iters=DEFAULT_ITERS, tol=0.0, seed=0, eps=DEFAULT_EPS):
    """Dispatch to the fitting routine for ``method``."""
    method = Method.parse(method)
    if method is Method.SVD:
        return truncated_svd(X, k)
    if method is Method.NMF:
        return nmf_fit(X, k, iters=iters, tol=tol, seed=seed, eps=eps)
    if labels is None:
        raise LabelMismatchError(f"{method.value} needs training labels")
    if method is Method.DNMF:
        return dnmf_fit(X, labels, k, alpha=alpha, iters=iters, tol=tol, seed=seed, eps=eps)
    return scnmfs_fit(X, labels, k, beta=beta, iters=iters, tol=tol, seed=seed, eps=eps)


# --- test-time projection -------------------------------------------------

def project_test(X_test, model, iters=None, tol=None, seed=0, eps=None):
    """Subspace coordinates (``N_t x k``) of new samples with ``U`` frozen.

    SVD models project linearly (``X_test^T U``).  NMF-family models run the
    plain NMF V-update from a seeded uniform start; the label terms of DNMF
    and SCNMFS are not used since test labels are unknown.  ``iters``,
    ``tol`` and ``eps`` default to the values the model was fitted with.
    """
    X = as_matrix(X_test, "X_test")
    U = model.U
    if X.shape[0] != U.shape[0]:
        raise DimensionError(
            f"X_test has {X.shape[0]} features but the model expects {U.shape[0]}")
    if model.method is Method.SVD:
        return X.T @ U
    X = check_nonneg(X, "X_test")
    hyper = model.hyper
    iters = hyper.get("iters", DEFAULT_ITERS) if iters is None else iters
    tol = hyper.get("tol", 0.0) if tol is None else tol
    eps = hyper.get("eps", DEFAULT_EPS) if eps is None else eps
    _check_iters(iters, tol, eps)
    rng = np.random.default_rng(seed)
    V = _uniform(rng, (X.shape[1], model.k))
    XtU = X.T @ U
    UtU = U.T @ U
    prev = nmf_objective(X, U, V) if tol > 0 else None
    for _ in range(iters):
        V = _kernels.mu_step(V, XtU, V @ UtU, eps)
        if tol > 0:
            cur = nmf_objective(X, U, V)
            if _stalled([prev, cur], tol):
                break
            prev = cur
    return V
