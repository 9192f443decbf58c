"""Independent reference implementations used only by the tests.

Written with plain Python loops over list-of-lists, straight from the update
formulas, sharing no code with the package.
"""
import math

import numpy as np


def _mat(A):
    return [list(map(float, row)) for row in np.asarray(A)]


def _mm(A, B):
    n, m, p = len(A), len(B), len(B[0])
    return [[sum(A[i][t] * B[t][j] for t in range(m)) for j in range(p)] for i in range(n)]


def _T(A):
    return [list(col) for col in zip(*A)]


def _pos(A):
    return [[x if x > 0 else 0.0 for x in row] for row in A]


def _neg(A):
    # magnitude of the negative part
    return [[-x if x < 0 else 0.0 for x in row] for row in A]


def _add(*mats, scale=None):
    scale = scale or [1.0] * len(mats)
    n, m = len(mats[0]), len(mats[0][0])
    return [[sum(s * M[i][j] for s, M in zip(scale, mats)) for j in range(m)] for i in range(n)]


def _inverse(G):
    """Gauss-Jordan inverse with partial pivoting."""
    n = len(G)
    A = [row[:] + [1.0 if i == j else 0.0 for j in range(n)] for i, row in enumerate(G)]
    for c in range(n):
        p = max(range(c, n), key=lambda r: abs(A[r][c]))
        A[c], A[p] = A[p], A[c]
        piv = A[c][c]
        A[c] = [x / piv for x in A[c]]
        for r in range(n):
            if r != c:
                f = A[r][c]
                A[r] = [x - f * y for x, y in zip(A[r], A[c])]
    return [row[n:] for row in A]


def nmf_sweep(X, U, V, eps):
    X, U, V = _mat(X), _mat(U), _mat(V)
    num = _mm(X, V)
    den = _mm(_mm(U, _T(V)), V)
    U = [[U[i][j] * num[i][j] / (den[i][j] + eps) for j in range(len(U[0]))] for i in range(len(U))]
    num = _mm(_T(X), U)
    den = _mm(_mm(V, _T(U)), U)
    V = [[V[i][j] * num[i][j] / (den[i][j] + eps) for j in range(len(V[0]))] for i in range(len(V))]
    return np.array(U), np.array(V)


def label_regression(Q, V):
    Q, V = _mat(Q), _mat(V)
    return np.array(_mm(_mm(Q, V), _inverse(_mm(_T(V), V))))


def dnmf_sweep(X, Q, U, V, A, alpha, eps):
    X, Q, U, V, A = map(_mat, (X, Q, U, V, A))
    num = _mm(X, V)
    den = _mm(_mm(U, _T(V)), V)
    U = [[U[i][j] * num[i][j] / (den[i][j] + eps) for j in range(len(U[0]))] for i in range(len(U))]
    VAtA = _mm(_mm(V, _T(A)), A)
    QtA = _mm(_T(Q), A)
    num = _add(_mm(_T(X), U), _neg(VAtA), _pos(QtA), scale=[1.0, alpha, alpha])
    den = _add(_mm(_mm(V, _T(U)), U), _pos(VAtA), _neg(QtA), scale=[1.0, alpha, alpha])
    V = [[V[i][j] * num[i][j] / (den[i][j] + eps) for j in range(len(V[0]))] for i in range(len(V))]
    A = label_regression(Q, V)
    return np.array(U), np.array(V), A


def scnmfs_sweep(X, Q, U, Z, beta, eps):
    X, Q, U, Z = map(_mat, (X, Q, U, Z))
    num = _mm(_mm(X, _T(Q)), Z)
    den = _mm(_mm(_mm(_mm(U, _T(Z)), Q), _T(Q)), Z)
    U = [[U[i][j] * num[i][j] / (den[i][j] + beta * U[i][j] + eps) for j in range(len(U[0]))]
         for i in range(len(U))]
    num = _mm(_mm(Q, _T(X)), U)
    den = _mm(_mm(_mm(_mm(Q, _T(Q)), Z), _T(U)), U)
    Z = [[Z[i][j] * num[i][j] / (den[i][j] + eps) for j in range(len(Z[0]))] for i in range(len(Z))]
    return np.array(U), np.array(Z)


def gram_svd(X, k):
    """Top-k singular values and left vectors from the eigendecomposition of X X^T."""
    X = np.asarray(X, dtype=float)
    w, vecs = np.linalg.eigh(X @ X.T)
    order = np.argsort(w)[::-1][:k]
    return np.sqrt(np.clip(w[order], 0, None)), vecs[:, order]


def principal_angles(A, B):
    Qa, _ = np.linalg.qr(A)
    Qb, _ = np.linalg.qr(B)
    s = np.linalg.svd(Qa.T @ Qb, compute_uv=False)
    return np.arccos(np.clip(s, -1.0, 1.0))


def knn_brute(support, labels, query, K):
    """KNN with the documented tie rules, one query at a time."""
    out = []
    for q in np.asarray(query):
        d = [(math.fsum((a - b) ** 2 for a, b in zip(q, s)), i) for i, s in enumerate(support)]
        d.sort()
        top = [labels[i] for _, i in d[:K]]
        counts = {}
        for lab in top:
            counts[lab] = counts.get(lab, 0) + 1
        best = max(counts.values())
        out.append(next(lab for lab in top if counts[lab] == best))
    return np.array(out)


def cam_loops(fmap, U, w):
    c, h, wd = fmap.shape
    x = [sum(U[n][j] * w[j] for j in range(len(w))) for n in range(c)]
    return np.array([[sum(x[n] * fmap[n, p, q] for n in range(c)) for q in range(wd)]
                     for p in range(h)])


def bilinear_point(src, y, x):
    h, w = src.shape
    y0, x0 = min(int(y), h - 1), min(int(x), w - 1)
    y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
    fy, fx = y - y0, x - x0
    return ((1 - fy) * (1 - fx) * src[y0, x0] + (1 - fy) * fx * src[y0, x1]
            + fy * (1 - fx) * src[y1, x0] + fy * fx * src[y1, x1])
