"""Pure-Python/numpy implementations of the hot training kernels.

These define the reference semantics. ``_ckernels.pyx`` mirrors every
arithmetic expression in the same order so both backends choose the same
splits and the same SMO trajectory.
"""
import numpy as np

# candidate improvements within TIE_EPS of the best are ties; the first in
# scan order (feature ascending, threshold ascending) wins
TIE_EPS = 1e-12
MIN_ALPHA_STEP = 1e-10

GINI, ENTROPY, LOG_LOSS = 0, 1, 2

_MASK64 = (1 << 64) - 1


def _xlogx(p, log):
    out = np.zeros_like(p)
    nz = p > 0
    out[nz] = p[nz] * log(p[nz])
    return out


def binary_impurity(c1, n, criterion):
    """Impurity of nodes holding ``c1`` positives out of ``n`` (vectorised)."""
    c1 = np.asarray(c1)
    n = np.asarray(n)
    p1 = c1 / n
    p0 = (n - c1) / n
    if criterion == GINI:
        return 1.0 - (p0 * p0 + p1 * p1)
    log = np.log2 if criterion == ENTROPY else np.log
    return -(_xlogx(np.atleast_1d(p0), log) + _xlogx(np.atleast_1d(p1), log)).reshape(
        np.shape(p0)
    )


def _midpoint(a, b):
    t = (a + b) / 2.0
    if t >= b:
        t = a
    return float(t)


def _sorted_block(X, samples, features):
    sub = X[np.ix_(samples, features)]
    order = np.argsort(sub, axis=0, kind="stable")
    return np.take_along_axis(sub, order, axis=0), order


def _pick(scores, vals, m):
    """First candidate within TIE_EPS of the maximum, in feature-major order."""
    flat = scores.T.ravel()
    best = flat.max()
    if not np.isfinite(best):
        return None
    pos = int(np.flatnonzero(flat >= best - TIE_EPS)[0])
    fi, ti = divmod(pos, m - 1)
    return fi, _midpoint(vals[ti, fi], vals[ti + 1, fi]), float(flat[pos])


def best_split_classif(X, y, samples, features, criterion, min_leaf):
    """Best axis-aligned split of a binary classification node.

    Returns ``(feature, threshold, improvement)`` or ``(-1, 0.0, -inf)`` when
    no admissible split exists. ``improvement`` is the parent impurity minus
    the size-weighted child impurities.
    """
    m = samples.shape[0]
    if m < 2 or features.shape[0] == 0:
        return -1, 0.0, -np.inf
    vals, order = _sorted_block(X, samples, features)
    ys = y[samples][order]
    c1_left = np.cumsum(ys, axis=0)[:-1]
    total1 = int(ys[:, 0].sum())
    n_left = np.arange(1, m, dtype=np.intp)[:, None]
    n_right = m - n_left
    parent = float(binary_impurity(total1, m, criterion))
    imp_l = binary_impurity(c1_left, n_left, criterion)
    imp_r = binary_impurity(total1 - c1_left, n_right, criterion)
    scores = parent - ((n_left / m) * imp_l + (n_right / m) * imp_r)
    valid = (vals[1:] > vals[:-1]) & (n_left >= min_leaf) & (n_right >= min_leaf)
    scores = np.where(valid, scores, -np.inf)
    picked = _pick(scores, vals, m)
    if picked is None:
        return -1, 0.0, -np.inf
    fi, thr, score = picked
    return int(features[fi]), thr, score


def best_split_gbt(X, g, h, samples, features, reg_lambda, gamma, min_child_weight):
    """Best second-order split; only splits with strictly positive gain qualify."""
    m = samples.shape[0]
    if m < 2 or features.shape[0] == 0:
        return -1, 0.0, -np.inf
    vals, order = _sorted_block(X, samples, features)
    gs = g[samples][order]
    hs = h[samples][order]
    G = float(np.cumsum(g[samples])[-1])
    H = float(np.cumsum(h[samples])[-1])
    GL = np.cumsum(gs, axis=0)[:-1]
    HL = np.cumsum(hs, axis=0)[:-1]
    GR = G - GL
    HR = H - HL
    gain = 0.5 * (GL * GL / (HL + reg_lambda) + GR * GR / (HR + reg_lambda)
                  - G * G / (H + reg_lambda)) - gamma
    valid = ((vals[1:] > vals[:-1]) & (HL >= min_child_weight)
             & (HR >= min_child_weight) & (gain > 0.0))
    gain = np.where(valid, gain, -np.inf)
    picked = _pick(gain, vals, m)
    if picked is None:
        return -1, 0.0, -np.inf
    fi, thr, score = picked
    return int(features[fi]), thr, score


class SplitMix64:
    """Tiny counter-based generator shared bit-for-bit with the C backend."""

    def __init__(self, seed):
        self.state = int(seed) & _MASK64

    def next(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)


def smo(K, y, C, tol, max_passes, max_iter, seed):
    """Simplified SMO on the soft-margin dual.

    ``K`` is the Gram matrix, ``y`` holds +1/-1. The second index is drawn
    at random; if that pair makes no progress the remaining indices are tried
    cyclically from the drawn offset. Returns ``(alpha, b, sweeps, converged)``.
    """
    n = y.shape[0]
    alpha = np.zeros(n)
    F = np.zeros(n)
    b = 0.0
    rng = SplitMix64(seed)
    passes = 0
    sweeps = 0
    while passes < max_passes and sweeps < max_iter:
        changed = 0
        for i in range(n):
            Ei = F[i] + b - y[i]
            r = y[i] * Ei
            if not ((r < -tol and alpha[i] < C) or (r > tol and alpha[i] > 0.0)):
                continue
            j0 = rng.next() % (n - 1)
            for t in range(n - 1):
                jj = (j0 + t) % (n - 1)
                j = jj + 1 if jj >= i else jj
                Ej = F[j] + b - y[j]
                ai = alpha[i]
                aj = alpha[j]
                if y[i] != y[j]:
                    L = max(0.0, aj - ai)
                    H = min(C, C + aj - ai)
                else:
                    L = max(0.0, ai + aj - C)
                    H = min(C, ai + aj)
                if L >= H:
                    continue
                eta = 2.0 * K[i, j] - K[i, i] - K[j, j]
                if eta >= 0.0:
                    continue
                aj_new = aj - y[j] * (Ei - Ej) / eta
                if aj_new > H:
                    aj_new = H
                elif aj_new < L:
                    aj_new = L
                if abs(aj_new - aj) < MIN_ALPHA_STEP:
                    continue
                ai_new = ai + y[i] * y[j] * (aj - aj_new)
                if ai_new < 0.0:
                    ai_new = 0.0
                elif ai_new > C:
                    ai_new = C
                di = (ai_new - ai) * y[i]
                dj = (aj_new - aj) * y[j]
                b1 = b - Ei - di * K[i, i] - dj * K[i, j]
                b2 = b - Ej - di * K[i, j] - dj * K[j, j]
                if 0.0 < ai_new < C:
                    b = b1
                elif 0.0 < aj_new < C:
                    b = b2
                else:
                    b = (b1 + b2) / 2.0
                alpha[i] = ai_new
                alpha[j] = aj_new
                F += di * K[:, i] + dj * K[:, j]
                changed += 1
                break
        sweeps += 1
        passes = passes + 1 if changed == 0 else 0
    return alpha, b, sweeps, passes >= max_passes
