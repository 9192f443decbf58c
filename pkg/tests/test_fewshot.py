import numpy as np
import pytest

import oracles
from subspace_fsl import fewshot as fs
from subspace_fsl.errors import (
    ConfigError,
    DimensionError,
    InsufficientSamplesError,
    LabelError,
    NonNegativityError,
)
from subspace_fsl.factorize import fit


def write(path, text):
    path.write_text(text)
    return path


# --- loading ------------------------------------------------------------------

def test_load_small_file(tmp_path):
    p = write(tmp_path / "f.csv", "# features=3 samples=2 classes=2\n0,1,2,3\n1,4,5,6\n")
    d = fs.load_features(p)
    assert (d.n_features, d.n_samples) == (3, 2)
    np.testing.assert_array_equal(d.features, [[1, 4], [2, 5], [3, 6]])


def test_negative_features_fail_at_fit_not_load(tmp_path):
    p = write(tmp_path / "f.csv", "# features=3 samples=3 classes=1\n0,1,-2,3\n0,4,5,6\n0,1,1,1\n")
    d = fs.load_features(p)
    assert not d.nonneg
    with pytest.raises(NonNegativityError):
        fit("nmf", d.features, 1)


def test_empty_class(tmp_path):
    p = write(tmp_path / "f.csv", "# features=2 samples=2 classes=3\n0,1,2\n2,3,4\n")
    with pytest.raises(LabelError):
        fs.load_features(p)


def test_save_load_roundtrip(tmp_path):
    d = fs.gaussian_clusters(n_features=5, per_class=4, n_classes=3, seed=2)
    fs.save_features(tmp_path / "d.csv", d)
    back = fs.load_features(tmp_path / "d.csv")
    assert back.features.tobytes() == d.features.tobytes()
    np.testing.assert_array_equal(back.labels, d.labels)


def test_permute_labels_keeps_counts():
    d = fs.gaussian_clusters(n_features=4, per_class=10, seed=0)
    p = fs.permute_labels(d, 1)
    np.testing.assert_array_equal(p.class_counts(), d.class_counts())
    assert not np.array_equal(p.labels, d.labels)


# --- standardize --------------------------------------------------------------

def test_standardize_train_equals_test():
    X = np.random.default_rng(0).random((4, 30)) * 5
    X[2] = 7.0
    d = fs.FeatureDataset(X, np.arange(30) % 2, ("a", "b"))
    tr, te, _ = fs.standardize(d, d)
    assert np.abs(tr.features.mean(axis=1)).max() < 1e-12
    np.testing.assert_allclose(tr.features[[0, 1, 3]].std(axis=1), 1.0, rtol=1e-12)
    assert np.all(tr.features[2] == 0.0)


def test_standardize_uses_train_stats():
    rng = np.random.default_rng(1)
    Xtr = rng.random((3, 20))
    Xte = rng.random((3, 10)) + 100.0
    tr = fs.FeatureDataset(Xtr, np.zeros(20, int), ("a",))
    te = fs.FeatureDataset(Xte, np.zeros(10, int), ("a",))
    _, te_s, stats = fs.standardize(tr, te)
    expected = (Xte - Xtr.mean(axis=1)[:, None]) / Xtr.std(axis=1)[:, None]
    np.testing.assert_allclose(te_s.features, expected, rtol=1e-13)
    assert te_s.features.mean() > 50


def test_standardize_refused_for_nmf_family():
    d = fs.gaussian_clusters(n_features=8, per_class=20, seed=0)
    with pytest.raises(ConfigError):
        fs.evaluate(d, method="nmf", k=2, standardize_features=True, repeats=1)


# --- episodes -------------------------------------------------------------------

def test_episode_sizes_and_disjointness():
    d = fs.gaussian_clusters(n_features=3, per_class=40, seed=0)
    # tag each column with its index so we can recover it
    X = np.vstack([d.features, np.arange(80.0)])
    d = fs.FeatureDataset(X, d.labels, d.class_names)
    spec = fs.EpisodeSpec(ways=2, shots=10, query_per_class=10)
    s, q = fs.sample_episode(d, spec, 0)
    assert s.n_samples == 20 and q.n_samples == 20
    assert not set(s.features[-1]) & set(q.features[-1])
    s2, q2 = fs.sample_episode(d, spec, 0)
    assert s2.features.tobytes() == s.features.tobytes()
    assert q2.features.tobytes() == q.features.tobytes()


def test_episode_runs_differ():
    d = fs.FeatureDataset(np.arange(80.0)[None], np.repeat([0, 1], 40), ("a", "b"))
    same = 0
    for seed in range(100):
        spec = fs.EpisodeSpec(ways=2, shots=10, query_per_class=10, seed=seed)
        a, _ = fs.sample_episode(d, spec, 0)
        b, _ = fs.sample_episode(d, spec, 1)
        same += set(a.features[0]) == set(b.features[0])
    assert same / 100 < 0.01


def test_episode_way_subset_and_errors():
    d = fs.gaussian_clusters(n_features=4, per_class=6, n_classes=4, seed=0)
    s, q = fs.sample_episode(d, fs.EpisodeSpec(ways=2, shots=2, query_per_class=3), 5)
    assert set(s.labels) == {0, 1} and s.n_classes == 2
    with pytest.raises(InsufficientSamplesError):
        fs.sample_episode(d, fs.EpisodeSpec(ways=2, shots=4, query_per_class=3), 0)
    with pytest.raises(InsufficientSamplesError):
        fs.sample_episode(d, fs.EpisodeSpec(ways=5, shots=1, query_per_class=1), 0)
    with pytest.raises(ConfigError):
        fs.EpisodeSpec(ways=1, shots=1, query_per_class=1)


# --- KNN --------------------------------------------------------------------------

def test_knn_exact_match():
    S = np.random.default_rng(0).standard_normal((6, 3))
    y = np.array([3, 1, 4, 1, 5, 9])
    assert fs.knn_predict(S, y, S[[4]], K=1)[0] == 5


def test_knn_two_clusters():
    rng = np.random.default_rng(0)
    S = np.vstack([rng.normal(0, 0.5, (5, 2)), rng.normal(10, 0.5, (5, 2))])
    y = np.repeat([0, 1], 5)
    assert fs.knn_predict(S, y, np.array([[1.0, 1.0]]), K=5)[0] == 0


def test_knn_vote_tie_goes_to_nearest():
    S = np.array([[1.0], [2.0], [3.0], [4.0]])
    y = np.array([7, 2, 2, 7])
    # distances 0.9, 0.1, 1.1, 2.1 -> nearest is label 2
    assert fs.knn_predict(S, y, np.array([[1.9]]), K=4)[0] == 2
    assert fs.knn_predict(S, y, np.array([[1.05]]), K=4)[0] == 7


@pytest.mark.parametrize("seed", range(20))
def test_knn_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    S = rng.integers(0, 3, size=(15, 2)).astype(float)  # lots of distance ties
    y = rng.integers(0, 3, size=15)
    Qv = rng.integers(0, 3, size=(8, 2)).astype(float)
    K = int(rng.integers(1, 10))
    np.testing.assert_array_equal(fs.knn_predict(S, y, Qv, K=K), oracles.knn_brute(S, y, Qv, K))


def test_knn_cosine_ignores_scale():
    S = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert fs.knn_predict(S, [0, 1], np.array([[0.1, 5.0]]), K=1, metric="cosine")[0] == 1
    assert fs.knn_predict(S, [0, 1], np.array([[50.0, 0.0]]), K=1, metric="cosine")[0] == 0


def test_knn_errors():
    S = np.ones((3, 2))
    with pytest.raises(DimensionError):
        fs.knn_predict(S, [0, 1, 0], np.ones((1, 2)), K=4)
    with pytest.raises(DimensionError):
        fs.knn_predict(S, [0, 1, 0], np.ones((1, 3)), K=1)
    with pytest.raises(ConfigError):
        fs.knn_predict(S, [0, 1, 0], np.ones((1, 2)), K=1, metric="manhattan")


# --- evaluate -----------------------------------------------------------------

@pytest.fixture(scope="module")
def clusters():
    return fs.gaussian_clusters(n_features=32, per_class=60, seed=3)


@pytest.mark.parametrize("method", ["svd", "nmf", "dnmf", "scnmfs"])
def test_separated_clusters_are_easy(clusters, method):
    rep = fs.evaluate(clusters, method=method, k=2, iters=300, repeats=3, seed=1)
    assert rep.mean > 0.99
    assert len(rep.per_run_accuracy) == 3


def full_space_accuracy(train, Xtr, ytr, Xte, yte, K):
    return float(np.mean(fs.knn_predict(Xtr.T, ytr, Xte.T, K=K) == yte))


def test_svd_full_rank_equals_full_space_knn():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((6, 40))
    y = rng.integers(0, 2, size=40)
    d = fs.FeatureDataset(X, y, ("a", "b"))
    rep = fs.evaluate(d, method="svd", k=6, repeats=3, seed=2, test_size=10)
    for r, acc in enumerate(rep.per_run_accuracy):
        Xtr, ytr, Xte, yte = fs._split(fs._run_rng(2, r), d, None, None, 10)
        assert acc == full_space_accuracy(d, Xtr, ytr, Xte, yte, 5)


def test_permuted_labels_are_chance(clusters):
    perm = fs.permute_labels(clusters, 0)
    rep = fs.evaluate(perm, method="svd", k=2, repeats=50, seed=4)
    assert abs(rep.mean - 0.5) <= 3 * rep.std


def test_report_determinism_and_workers(clusters):
    kw = dict(method="nmf", k=2, iters=50, repeats=4, seed=9)
    a = fs.evaluate(clusters, **kw)
    b = fs.evaluate(clusters, workers=3, **kw)
    assert a.to_dict() == b.to_dict()
    assert all(0.0 <= x <= 1.0 for x in a.per_run_accuracy)
    assert a.std == pytest.approx(np.std(a.per_run_accuracy))


def test_default_test_size_ratio():
    d = fs.gaussian_clusters(n_features=4, per_class=190, seed=0)
    Xtr, _, Xte, yte = fs._split(np.random.default_rng(0), d, None, 300, None)
    assert Xtr.shape[1] == 300 and Xte.shape[1] == 80
    np.testing.assert_array_equal(np.bincount(yte), [40, 40])


def test_separate_test_set():
    d = fs.gaussian_clusters(n_features=32, per_class=70, seed=3)
    cols = np.arange(d.n_samples)
    held = (cols % 7) == 0
    train = fs.FeatureDataset(d.features[:, ~held], d.labels[~held], d.class_names)
    test = fs.FeatureDataset(d.features[:, held], d.labels[held], d.class_names)
    rep = fs.evaluate(train, test, method="svd", k=3, repeats=2, train_size=50)
    assert rep.mean > 0.99
    with pytest.raises(InsufficientSamplesError):
        fs.evaluate(train, test, method="svd", k=3, repeats=1, train_size=1000)
    with pytest.raises(DimensionError):
        fs.gaussian_clusters(n_features=2, n_classes=3)


def test_episodic_evaluation(clusters):
    spec = fs.EpisodeSpec(ways=2, shots=10, query_per_class=5, repeats=3, seed=1)
    a = fs.evaluate_episodes(clusters, spec, method="scnmfs", k=2, iters=200)
    b = fs.evaluate_episodes(clusters, spec, method="scnmfs", k=2, iters=200)
    assert a.to_dict() == b.to_dict()
    assert a.mean > 0.99


def test_tsv_row(clusters):
    rep = fs.evaluate(clusters, method="svd", k=2, repeats=2)
    fields = rep.to_tsv().split("\t")
    assert len(fields) == len(fs.TSV_HEADER.split("\t"))
    assert fields[0] == "svd" and float(fields[5]) == rep.mean


# --- linear head --------------------------------------------------------------

def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    V = rng.standard_normal((20, 4))
    Y = np.eye(3)[rng.integers(0, 3, 20)]
    W = rng.standard_normal((4, 3))
    _, g = fs.softmax_loss_and_grad(W, V, Y)
    h = 1e-6
    num = np.empty_like(W)
    for idx in np.ndindex(*W.shape):
        Wp, Wm = W.copy(), W.copy()
        Wp[idx] += h
        Wm[idx] -= h
        num[idx] = (fs.softmax_loss_and_grad(Wp, V, Y)[0] - fs.softmax_loss_and_grad(Wm, V, Y)[0]) / (2 * h)
    assert np.max(np.abs(g - num) / np.maximum(np.abs(num), 1e-8)) < 1e-5


def test_separable_data_fits_perfectly():
    rng = np.random.default_rng(1)
    V = np.vstack([rng.normal(-2, 0.5, (20, 2)), rng.normal(2, 0.5, (20, 2))])
    y = np.repeat([0, 1], 20)
    head = fs.train_linear_head(V, y, epochs=500)
    assert np.mean(head.predict(V) == y) == 1.0
    assert np.all(np.diff(head.loss_trace) < 0)
    assert head.weights.shape == (2, 2)


def test_single_class_rejected():
    with pytest.raises(LabelError):
        fs.train_linear_head(np.ones((4, 2)), np.zeros(4, int))
