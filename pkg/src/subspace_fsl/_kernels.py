"""Hot inner loops, in two interchangeable flavours.

Each kernel exists as ``*_nb`` (explicit loops, compiled by numba) and
``*_np`` (vectorised numpy).  Both evaluate the same floating point
expressions in the same order, so for finite inputs they return bitwise
identical results; the tests hold them to that.  The public names at the
bottom dispatch on :data:`subspace_fsl._accel.USE_NUMBA`.

Matrix products are deliberately kept out of here: the callers do them with
numpy (BLAS) on both paths.
"""
import numpy as np

from ._accel import USE_NUMBA, njit


# --- multiplicative steps -------------------------------------------------

@njit(cache=True)
def _mu_step_nb(F, num, den, eps):
    out = np.empty_like(F)
    for i in range(F.shape[0]):
        for j in range(F.shape[1]):
            out[i, j] = F[i, j] * num[i, j] / (den[i, j] + eps)
    return out


def _mu_step_np(F, num, den, eps):
    return F * num / (den + eps)


@njit(cache=True)
def _mu_step_ridge_nb(F, num, den, beta, eps):
    out = np.empty_like(F)
    for i in range(F.shape[0]):
        for j in range(F.shape[1]):
            f = F[i, j]
            out[i, j] = f * num[i, j] / (den[i, j] + beta * f + eps)
    return out


def _mu_step_ridge_np(F, num, den, beta, eps):
    return F * num / (den + beta * F + eps)


@njit(cache=True)
def _signed_mu_step_nb(V, XtU, VUtU, VAtA, QtA, alpha, eps):
    out = np.empty_like(V)
    for i in range(V.shape[0]):
        for j in range(V.shape[1]):
            b = VAtA[i, j]
            c = QtA[i, j]
            b_pos = b if b > 0.0 else 0.0
            b_neg = -b if b < 0.0 else 0.0
            c_pos = c if c > 0.0 else 0.0
            c_neg = -c if c < 0.0 else 0.0
            num = XtU[i, j] + alpha * b_neg + alpha * c_pos
            den = VUtU[i, j] + alpha * b_pos + alpha * c_neg
            out[i, j] = V[i, j] * num / (den + eps)
    return out


def _signed_mu_step_np(V, XtU, VUtU, VAtA, QtA, alpha, eps):
    b_pos = np.where(VAtA > 0.0, VAtA, 0.0)
    b_neg = np.where(VAtA < 0.0, -VAtA, 0.0)
    c_pos = np.where(QtA > 0.0, QtA, 0.0)
    c_neg = np.where(QtA < 0.0, -QtA, 0.0)
    num = XtU + alpha * b_neg + alpha * c_pos
    den = VUtU + alpha * b_pos + alpha * c_neg
    return V * num / (den + eps)


# --- nearest neighbours ---------------------------------------------------

@njit(cache=True)
def _sq_distances_nb(Q, S):
    nq, d = Q.shape
    ns = S.shape[0]
    out = np.empty((nq, ns))
    for i in range(nq):
        for s in range(ns):
            acc = 0.0
            for j in range(d):
                t = Q[i, j] - S[s, j]
                acc += t * t
            out[i, s] = acc
    return out


def _sq_distances_np(Q, S):
    out = np.zeros((Q.shape[0], S.shape[0]))
    # accumulate one coordinate at a time: same summation order as the loop
    for j in range(Q.shape[1]):
        t = Q[:, j, None] - S[None, :, j]
        out += t * t
    return out


@njit(cache=True)
def _knn_vote_nb(dist, labels, K, n_classes):
    nq = dist.shape[0]
    pred = np.empty(nq, dtype=np.int64)
    counts = np.empty(n_classes, dtype=np.int64)
    first = np.empty(n_classes, dtype=np.int64)
    for i in range(nq):
        order = np.argsort(dist[i], kind="mergesort")
        counts[:] = 0
        first[:] = K
        for p in range(K):
            c = labels[order[p]]
            counts[c] += 1
            if first[c] == K:
                first[c] = p
        best = -1
        for c in range(n_classes):
            if counts[c] == 0:
                continue
            if best < 0 or counts[c] > counts[best] or (
                    counts[c] == counts[best] and first[c] < first[best]):
                best = c
        pred[i] = best
    return pred


def _knn_vote_np(dist, labels, K, n_classes):
    order = np.argsort(dist, axis=1, kind="stable")[:, :K]
    nl = labels[order]
    hit = nl[:, :, None] == np.arange(n_classes)[None, None, :]
    counts = hit.sum(axis=1)
    pos = np.where(hit, np.arange(K)[None, :, None], K).min(axis=1)
    tied = counts == counts.max(axis=1, keepdims=True)
    return np.argmin(np.where(tied, pos, K + 1), axis=1).astype(np.int64)


# --- interpolation --------------------------------------------------------

@njit(cache=True)
def _bilinear_nb(src, out_h, out_w):
    h, w = src.shape
    out = np.empty((out_h, out_w))
    for oy in range(out_h):
        y = 0.0 if out_h == 1 else oy * (h - 1) / (out_h - 1)
        y0 = int(np.floor(y))
        y1 = min(y0 + 1, h - 1)
        fy = y - y0
        for ox in range(out_w):
            x = 0.0 if out_w == 1 else ox * (w - 1) / (out_w - 1)
            x0 = int(np.floor(x))
            x1 = min(x0 + 1, w - 1)
            fx = x - x0
            top = (1.0 - fx) * src[y0, x0] + fx * src[y0, x1]
            bot = (1.0 - fx) * src[y1, x0] + fx * src[y1, x1]
            out[oy, ox] = (1.0 - fy) * top + fy * bot
    return out


def _grid(n_out, n_in):
    if n_out == 1:
        pos = np.zeros(1)
    else:
        pos = np.arange(n_out) * (n_in - 1) / (n_out - 1)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, pos - lo


def _bilinear_np(src, out_h, out_w):
    h, w = src.shape
    y0, y1, fy = _grid(out_h, h)
    x0, x1, fx = _grid(out_w, w)
    fy = fy[:, None]
    top = (1.0 - fx) * src[y0][:, x0] + fx * src[y0][:, x1]
    bot = (1.0 - fx) * src[y1][:, x0] + fx * src[y1][:, x1]
    return (1.0 - fy) * top + fy * bot


if USE_NUMBA:
    mu_step = _mu_step_nb
    mu_step_ridge = _mu_step_ridge_nb
    signed_mu_step = _signed_mu_step_nb
    sq_distances = _sq_distances_nb
    knn_vote = _knn_vote_nb
    bilinear = _bilinear_nb
else:
    mu_step = _mu_step_np
    mu_step_ridge = _mu_step_ridge_np
    signed_mu_step = _signed_mu_step_np
    sq_distances = _sq_distances_np
    knn_vote = _knn_vote_np
    bilinear = _bilinear_np

KERNELS = {
    "mu_step": (_mu_step_nb, _mu_step_np),
    "mu_step_ridge": (_mu_step_ridge_nb, _mu_step_ridge_np),
    "signed_mu_step": (_signed_mu_step_nb, _signed_mu_step_np),
    "sq_distances": (_sq_distances_nb, _sq_distances_np),
    "knn_vote": (_knn_vote_nb, _knn_vote_np),
    "bilinear": (_bilinear_nb, _bilinear_np),
}
