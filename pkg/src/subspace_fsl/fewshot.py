"""Few-shot classification over precomputed feature vectors.

The pipeline per run: draw a train/test split, fit a subspace on the
training features, project the test features with the training ``U``
frozen, and classify the test codes by K-nearest neighbours in the
subspace.  Each run draws its randomness from ``(seed, run_index)`` alone,
so runs can be executed in any order or in parallel.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from . import io as _io
from .errors import (
    ConfigError,
    DimensionError,
    InsufficientSamplesError,
    LabelError,
    NumericError,
)
from .factorize import (
    DEFAULT_ALPHA,
    DEFAULT_BETA,
    DEFAULT_EPS,
    DEFAULT_ITERS,
    Method,
    fit,
    project_test,
)

# test-set size relative to the training set (300 -> 80, 600 -> 160)
TEST_RATIO = 80 / 300
TSV_HEADER = "method\tk\tK\trepeats\tseed\tmean\tstd\truns"


# --- datasets ---------------------------------------------------------------

@dataclass(frozen=True)
class FeatureDataset:
    """Features (``M x N``, one column per sample) with integer labels."""

    features: np.ndarray
    labels: np.ndarray
    class_names: tuple
    nonneg: bool = field(init=False)

    def __post_init__(self):
        X = np.ascontiguousarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        names = tuple(str(n) for n in self.class_names)
        if X.ndim != 2 or y.ndim != 1 or X.shape[1] != y.size:
            raise DimensionError(f"features {X.shape} do not match {y.size} labels")
        if not np.all(np.isfinite(X)):
            raise NumericError("features contain NaN or Inf")
        C = len(names)
        if C < 1:
            raise LabelError("dataset needs at least one class")
        if y.size and (y.min() < 0 or y.max() >= C):
            raise LabelError(f"labels must lie in [0, {C})")
        counts = np.bincount(y, minlength=C)
        if np.any(counts == 0):
            raise LabelError(f"class {names[int(np.argmin(counts))]!r} has no samples")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "class_names", names)
        object.__setattr__(self, "nonneg", bool(np.all(X >= 0)))

    @property
    def n_features(self):
        return self.features.shape[0]

    @property
    def n_samples(self):
        return self.features.shape[1]

    @property
    def n_classes(self):
        return len(self.class_names)

    def class_counts(self):
        return np.bincount(self.labels, minlength=self.n_classes)


def load_features(path):
    X, labels, C = _io.read_feature_file(path)
    return FeatureDataset(X, labels, tuple(str(c) for c in range(C)))


def save_features(path, data: FeatureDataset):
    _io.write_feature_file(path, data.features, data.labels, data.n_classes)


def permute_labels(data: FeatureDataset, seed):
    """Same features with the labels shuffled (a chance-level control)."""
    rng = np.random.default_rng(seed)
    return FeatureDataset(data.features, rng.permutation(data.labels), data.class_names)


def gaussian_clusters(n_features=512, per_class=190, n_classes=2, separation=20.0,
                      sigma=1.0, offset=8.0, seed=0):
    """Isotropic Gaussian classes whose centroids are pairwise ``separation * sigma`` apart.

    Centroids are ``offset * sigma`` in every coordinate plus
    ``separation * sigma / sqrt(2)`` along mutually orthogonal random unit
    directions.  The (rare) negative draws are clipped to zero so the
    features suit NMF.
    """
    if n_features < n_classes:
        raise DimensionError(f"{n_classes} orthogonal centroids need n_features >= {n_classes}")
    rng = np.random.default_rng(seed)
    dirs, _ = np.linalg.qr(rng.standard_normal((n_features, n_classes)))
    centres = offset * sigma + (separation * sigma / np.sqrt(2.0)) * dirs
    X = np.concatenate(
        [centres[:, [c]] + sigma * rng.standard_normal((n_features, per_class))
         for c in range(n_classes)], axis=1)
    y = np.repeat(np.arange(n_classes), per_class)
    return FeatureDataset(np.maximum(X, 0.0), y, tuple(f"class_{c}" for c in range(n_classes)))


# --- preprocessing ---------------------------------------------------------

def _zscore(X_train, X_test):
    mean = X_train.mean(axis=1)
    scale = X_train.std(axis=1)
    scale = np.where(scale > 0, scale, 1.0)
    return (X_train - mean[:, None]) / scale[:, None], (X_test - mean[:, None]) / scale[:, None], \
        {"mean": mean, "std": scale}


def standardize(train: FeatureDataset, test: FeatureDataset):
    """Z-score every feature with statistics from ``train`` only.

    Constant features are centred and left unscaled.
    """
    if train.n_features != test.n_features:
        raise DimensionError(
            f"train has {train.n_features} features, test has {test.n_features}")
    Xtr, Xte, stats = _zscore(train.features, test.features)
    return (FeatureDataset(Xtr, train.labels, train.class_names),
            FeatureDataset(Xte, test.labels, test.class_names), stats)


# --- episodes ---------------------------------------------------------------

@dataclass(frozen=True)
class EpisodeSpec:
    ways: int
    shots: int
    query_per_class: int
    repeats: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.ways < 2:
            raise ConfigError("ways must be >= 2")
        if self.shots < 1:
            raise ConfigError("shots must be >= 1")
        if self.query_per_class < 1:
            raise ConfigError("query_per_class must be >= 1")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")


def _run_rng(seed, run_index):
    return np.random.default_rng([int(seed), int(run_index)])


def sample_episode(data: FeatureDataset, spec: EpisodeSpec, run_index):
    """Disjoint support and query sets, ``shots`` and ``query_per_class`` per class.

    With fewer ways than classes a random subset of classes is used and
    relabelled ``0 .. ways-1`` in the order drawn.
    """
    if spec.ways > data.n_classes:
        raise InsufficientSamplesError(
            f"{spec.ways}-way episode requested but the data has {data.n_classes} classes")
    rng = _run_rng(spec.seed, run_index)
    if spec.ways == data.n_classes:
        classes = np.arange(data.n_classes)
    else:
        classes = rng.choice(data.n_classes, size=spec.ways, replace=False)
    need = spec.shots + spec.query_per_class
    support, query = [], []
    for c in classes:
        idx = np.flatnonzero(data.labels == c)
        if idx.size < need:
            raise InsufficientSamplesError(
                f"class {data.class_names[c]!r} has {idx.size} samples, episode needs {need}")
        idx = rng.permutation(idx)
        support.append(idx[:spec.shots])
        query.append(idx[spec.shots:need])
    remap = np.full(data.n_classes, -1)
    remap[classes] = np.arange(classes.size)
    names = tuple(data.class_names[c] for c in classes)

    def take(parts):
        idx = np.concatenate(parts)
        return FeatureDataset(data.features[:, idx], remap[data.labels[idx]], names)

    return take(support), take(query)


# --- classification ---------------------------------------------------------

def knn_predict(support_V, support_labels, query_V, K=5, metric="euclidean"):
    """Majority-vote K-nearest-neighbour labels for the rows of ``query_V``.

    Distance ties go to the lower support index; vote ties go to the tied
    class holding the single nearest neighbour.
    """
    S = np.ascontiguousarray(support_V, dtype=np.float64)
    Qv = np.ascontiguousarray(query_V, dtype=np.float64)
    y = np.asarray(support_labels)
    if S.ndim != 2 or Qv.ndim != 2 or S.shape[1] != Qv.shape[1]:
        raise DimensionError(f"support {S.shape} and query {Qv.shape} disagree")
    if y.shape != (S.shape[0],):
        raise DimensionError("one label per support row is required")
    if K < 1 or K > S.shape[0]:
        raise DimensionError(f"K={K} needs 1 <= K <= {S.shape[0]} support samples")
    if metric == "cosine":
        S = _unit_rows(S)
        Qv = _unit_rows(Qv)
    elif metric != "euclidean":
        raise ConfigError(f"unknown metric {metric!r}")
    classes, codes = np.unique(y, return_inverse=True)
    dist = _kernels.sq_distances(Qv, S)
    pred = _kernels.knn_vote(dist, codes.astype(np.int64), int(K), classes.size)
    return classes[pred]


def _unit_rows(A):
    n = np.linalg.norm(A, axis=1, keepdims=True)
    return A / np.where(n > 0, n, 1.0)


# --- evaluation -------------------------------------------------------------

@dataclass(frozen=True)
class EvalReport:
    per_run_accuracy: tuple
    mean: float
    std: float
    config_echo: dict

    @classmethod
    def from_runs(cls, accs, config):
        accs = tuple(float(a) for a in accs)
        return cls(accs, float(np.mean(accs)), float(np.std(accs)), dict(config))

    def to_dict(self):
        return {"per_run_accuracy": list(self.per_run_accuracy), "mean": self.mean,
                "std": self.std, "config": self.config_echo}

    def to_tsv(self):
        c = self.config_echo
        runs = ",".join(repr(a) for a in self.per_run_accuracy)
        return (f"{c.get('method')}\t{c.get('k')}\t{c.get('K')}\t{c.get('repeats')}\t"
                f"{c.get('seed')}\t{self.mean!r}\t{self.std!r}\t{runs}")


def _balanced_pick(rng, labels, pool, per_class_total, names):
    """Up to ``per_class_total`` indices from ``pool``, split evenly over classes."""
    classes = np.unique(labels[pool])
    base, extra = divmod(per_class_total, classes.size)
    picked = []
    for i, c in enumerate(classes):
        n = base + (1 if i < extra else 0)
        idx = pool[labels[pool] == c]
        if idx.size < n:
            raise InsufficientSamplesError(
                f"class {names[c]!r} has {idx.size} samples, test split needs {n}")
        picked.append(rng.permutation(idx)[:n])
    return np.sort(np.concatenate(picked))


def _split(rng, train, test, train_size, test_size):
    if test is None:
        pool = np.arange(train.n_samples)
        if test_size is None:
            test_size = max(train.n_classes, int(round(train.n_samples * TEST_RATIO / (1 + TEST_RATIO))))
        te = _balanced_pick(rng, train.labels, pool, test_size, train.class_names)
        rest = np.setdiff1d(pool, te)
        n_tr = rest.size if train_size is None else train_size
        if n_tr > rest.size:
            raise InsufficientSamplesError(
                f"train_size={n_tr} but only {rest.size} samples remain after the test split")
        tr = np.sort(rng.choice(rest, size=n_tr, replace=False))
        return (train.features[:, tr], train.labels[tr], train.features[:, te], train.labels[te])
    n_tr = train.n_samples if train_size is None else train_size
    if n_tr > train.n_samples:
        raise InsufficientSamplesError(f"train_size={n_tr} exceeds {train.n_samples} samples")
    tr = np.sort(rng.choice(train.n_samples, size=n_tr, replace=False))
    if test_size is None:
        te = np.arange(test.n_samples)
    else:
        te = _balanced_pick(rng, test.labels, np.arange(test.n_samples), test_size,
                            test.class_names)
    return (train.features[:, tr], train.labels[tr], test.features[:, te], test.labels[te])


def _classify_once(Xtr, ytr, Xte, yte, method, k, hyper, K, metric, rng):
    fit_seed = int(rng.integers(2**32))
    proj_seed = int(rng.integers(2**32))
    _, codes = np.unique(ytr, return_inverse=True)
    model = fit(method, Xtr, k, labels=codes, seed=fit_seed, **hyper)
    Vte = project_test(Xte, model, seed=proj_seed)
    pred = knn_predict(model.V, ytr, Vte, K=K, metric=metric)
    return float(np.mean(pred == yte))


def _resolve_hyper(alpha, beta, iters, tol, eps):
    return {"alpha": alpha, "beta": beta, "iters": iters, "tol": tol, "eps": eps}


def _check_standardize(method, standardize_features):
    if method.nonneg and standardize_features:
        raise ConfigError(
            f"standardization produces negative features; not allowed with {method.value}")


def _run_all(run, repeats, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, range(repeats)))
    return [run(r) for r in range(repeats)]


def evaluate(train: FeatureDataset, test: FeatureDataset | None = None, method="nmf", k=30,
             alpha=DEFAULT_ALPHA, beta=DEFAULT_BETA, iters=DEFAULT_ITERS, tol=0.0,
             eps=DEFAULT_EPS, K=5, repeats=10, seed=0, train_size=None, test_size=None,
             standardize_features=False, metric="euclidean", workers=1):
    """Repeated-split accuracy of subspace + KNN classification.

    With ``test=None`` every run splits ``train`` afresh into a
    class-balanced test set of ``test_size`` samples and a random training
    set of ``train_size`` samples from the remainder.  With a separate
    ``test`` set, each run subsamples ``train_size`` training samples and a
    class-balanced ``test_size`` test subset (``None`` keeps everything).
    """
    method = Method.parse(method)
    if repeats < 1:
        raise ConfigError("repeats must be >= 1")
    if test is not None and test.n_features != train.n_features:
        raise DimensionError("train and test feature dimensions differ")
    _check_standardize(method, standardize_features)
    hyper = _resolve_hyper(alpha, beta, iters, tol, eps)
    config = {"mode": "split", "method": method.value, "k": k, **hyper, "K": K,
              "repeats": repeats, "seed": seed, "train_size": train_size,
              "test_size": test_size, "standardize": standardize_features, "metric": metric}

    def run(r):
        rng = _run_rng(seed, r)
        Xtr, ytr, Xte, yte = _split(rng, train, test, train_size, test_size)
        if standardize_features:
            Xtr, Xte, _ = _zscore(Xtr, Xte)
        return _classify_once(Xtr, ytr, Xte, yte, method, k, hyper, K, metric, rng)

    return EvalReport.from_runs(_run_all(run, repeats, workers), config)


def evaluate_episodes(data: FeatureDataset, spec: EpisodeSpec, method="nmf", k=30,
                      alpha=DEFAULT_ALPHA, beta=DEFAULT_BETA, iters=DEFAULT_ITERS, tol=0.0,
                      eps=DEFAULT_EPS, K=5, metric="euclidean", workers=1):
    """C-way l-shot accuracy: fit on each episode's support set, classify its queries."""
    method = Method.parse(method)
    hyper = _resolve_hyper(alpha, beta, iters, tol, eps)
    config = {"mode": "episodes", "method": method.value, "k": k, **hyper, "K": K,
              "repeats": spec.repeats, "seed": spec.seed, "ways": spec.ways,
              "shots": spec.shots, "query_per_class": spec.query_per_class, "metric": metric}

    def run(r):
        support, query = sample_episode(data, spec, r)
        rng = _run_rng(spec.seed, r)
        rng.integers(2**32)  # decouple from the episode draw
        return _classify_once(support.features, support.labels, query.features, query.labels,
                              method, k, hyper, K, metric, rng)

    return EvalReport.from_runs(_run_all(run, spec.repeats, workers), config)


# --- linear head ------------------------------------------------------------

def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_loss_and_grad(W, V, Y):
    """Mean cross-entropy of ``softmax(V @ W)`` against one-hot ``Y`` and its gradient in ``W``."""
    P = _softmax(V @ W)
    n = V.shape[0]
    loss = -float(np.sum(Y * np.log(np.clip(P, 1e-300, None)))) / n
    return loss, V.T @ (P - Y) / n


@dataclass(frozen=True)
class LinearHead:
    """Fully connected classifier ``z = v @ weights + bias`` on subspace codes."""

    weights: np.ndarray
    bias: np.ndarray
    loss_trace: np.ndarray

    def logits(self, V):
        return np.atleast_2d(V) @ self.weights + self.bias

    def predict_proba(self, V):
        return _softmax(self.logits(V))

    def predict(self, V):
        return np.argmax(self.logits(V), axis=1)

    def to_dict(self):
        return {"weights": self.weights.tolist(), "bias": self.bias.tolist()}


def train_linear_head(V_train, labels, epochs=500, lr=0.1, seed=0):
    """Softmax regression on the rows of ``V_train`` by full-batch gradient descent.

    Codes are standardised internally and the learned map is folded back, so
    ``weights`` (``k x C``) and ``bias`` act on raw codes.  A step that would
    raise the loss is retried with half the learning rate.
    """
    V = np.asarray(V_train, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if V.ndim != 2 or y.shape != (V.shape[0],):
        raise DimensionError("V_train must be N x k with one label per row")
    if np.unique(y).size < 2:
        raise LabelError("a classifier needs at least two classes")
    if y.min() < 0:
        raise LabelError("labels must be non-negative")
    C = int(y.max()) + 1
    Y = np.eye(C)[y]
    mu = V.mean(axis=0)
    sd = V.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    Vs = np.hstack([(V - mu) / sd, np.ones((V.shape[0], 1))])
    rng = np.random.default_rng(seed)
    W = 0.01 * rng.standard_normal((Vs.shape[1], C))
    loss, grad = softmax_loss_and_grad(W, Vs, Y)
    trace = [loss]
    step = lr
    for _ in range(epochs):
        for _ in range(60):
            W_new = W - step * grad
            new_loss, new_grad = softmax_loss_and_grad(W_new, Vs, Y)
            if not np.isfinite(new_loss):
                raise NumericError("linear head diverged (loss is not finite)")
            if new_loss <= loss:
                break
            step *= 0.5
        else:
            break
        W, loss, grad = W_new, new_loss, new_grad
        trace.append(loss)
    k = V.shape[1]
    weights = W[:k] / sd[:, None]
    bias = W[k] - (mu / sd) @ W[:k]
    return LinearHead(weights=weights, bias=bias, loss_trace=np.array(trace))
