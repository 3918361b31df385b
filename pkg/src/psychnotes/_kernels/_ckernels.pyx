# cython: language_level=3
"""Compiled training kernels.

Expression order follows ``_fallback.py`` exactly; change both together.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport log, log2, INFINITY
from libc.stdlib cimport malloc, free, qsort
from libc.stdint cimport uint64_t

cnp.import_array()

cdef double TIE_EPS = 1e-12
cdef double MIN_ALPHA_STEP = 1e-10


cdef struct Item:
    double v
    Py_ssize_t pos


cdef int _cmp_item(const void* a, const void* b) noexcept nogil:
    cdef const Item* x = <const Item*> a
    cdef const Item* y = <const Item*> b
    if x.v < y.v:
        return -1
    if x.v > y.v:
        return 1
    if x.pos < y.pos:
        return -1
    if x.pos > y.pos:
        return 1
    return 0


cdef bint _sort_feature(const double[:, ::1] X, const Py_ssize_t[::1] samples,
                        Py_ssize_t f, Item* out, Item* neg, Item* pos) noexcept nogil:
    """Stable order of the node's values for feature ``f``; False if constant.

    Zeros keep sample order; only the (usually few) non-zeros are sorted.
    """
    cdef Py_ssize_t m = samples.shape[0], t, nneg = 0, npos = 0, nz = 0, k
    cdef double v
    for t in range(m):
        v = X[samples[t], f]
        if v < 0.0:
            neg[nneg].v = v
            neg[nneg].pos = t
            nneg += 1
        elif v > 0.0:
            pos[npos].v = v
            pos[npos].pos = t
            npos += 1
    if nneg == 0 and npos == 0:
        return False
    if nneg > 1:
        qsort(neg, nneg, sizeof(Item), _cmp_item)
    if npos > 1:
        qsort(pos, npos, sizeof(Item), _cmp_item)
    k = 0
    for t in range(nneg):
        out[k] = neg[t]
        k += 1
    if nneg + npos < m:
        for t in range(m):
            v = X[samples[t], f]
            if not (v < 0.0 or v > 0.0):
                out[k].v = v
                out[k].pos = t
                k += 1
    for t in range(npos):
        out[k] = pos[t]
        k += 1
    return out[0].v < out[m - 1].v


cdef inline double _xlog2(double p) noexcept nogil:
    return p * log2(p) if p > 0.0 else 0.0


cdef inline double _xln(double p) noexcept nogil:
    return p * log(p) if p > 0.0 else 0.0


cdef inline double _impurity(Py_ssize_t c1, Py_ssize_t n, int criterion) noexcept nogil:
    cdef double p1 = <double> c1 / <double> n
    cdef double p0 = <double> (n - c1) / <double> n
    if criterion == 0:
        return 1.0 - (p0 * p0 + p1 * p1)
    if criterion == 1:
        return -(_xlog2(p0) + _xlog2(p1))
    return -(_xln(p0) + _xln(p1))


cdef inline double _midpoint(double a, double b) noexcept nogil:
    cdef double t = (a + b) / 2.0
    if t >= b:
        t = a
    return t


cdef double _scan_classif(const Py_ssize_t[::1] y, const Py_ssize_t[::1] samples,
                          Item* items, Py_ssize_t total1, double parent, int criterion,
                          Py_ssize_t min_leaf, double target, double* thr) noexcept nogil:
    # target == INFINITY: return feature maximum; otherwise return first
    # candidate >= target and write its threshold
    cdef Py_ssize_t m = samples.shape[0], t, c1 = 0, nl, nr
    cdef double best = -INFINITY, s
    for t in range(m - 1):
        c1 += y[samples[items[t].pos]]
        if not (items[t].v < items[t + 1].v):
            continue
        nl = t + 1
        nr = m - nl
        if nl < min_leaf or nr < min_leaf:
            continue
        s = parent - ((<double> nl / <double> m) * _impurity(c1, nl, criterion)
                      + (<double> nr / <double> m) * _impurity(total1 - c1, nr, criterion))
        if target == INFINITY:
            if s > best:
                best = s
        elif s >= target:
            thr[0] = _midpoint(items[t].v, items[t + 1].v)
            return s
    return best


def best_split_classif(const double[:, ::1] X, const Py_ssize_t[::1] y,
                       const Py_ssize_t[::1] samples, const Py_ssize_t[::1] features,
                       int criterion, Py_ssize_t min_leaf):
    cdef Py_ssize_t m = samples.shape[0], k = features.shape[0], fi, t
    cdef Py_ssize_t total1 = 0, best_fi = -1
    cdef double parent, best = -INFINITY, s, thr = 0.0
    cdef double* fmax
    cdef Item *items
    cdef Item *neg
    cdef Item *pos
    if m < 2 or k == 0:
        return -1, 0.0, -np.inf
    for t in range(m):
        total1 += y[samples[t]]
    parent = _impurity(total1, m, criterion)
    items = <Item*> malloc(m * sizeof(Item))
    neg = <Item*> malloc(m * sizeof(Item))
    pos = <Item*> malloc(m * sizeof(Item))
    fmax = <double*> malloc(k * sizeof(double))
    try:
        with nogil:
            for fi in range(k):
                fmax[fi] = -INFINITY
                if _sort_feature(X, samples, features[fi], items, neg, pos):
                    fmax[fi] = _scan_classif(y, samples, items, total1, parent,
                                             criterion, min_leaf, INFINITY, &thr)
                if fmax[fi] > best:
                    best = fmax[fi]
            if best > -INFINITY:
                for fi in range(k):
                    if fmax[fi] >= best - TIE_EPS:
                        best_fi = fi
                        break
                _sort_feature(X, samples, features[best_fi], items, neg, pos)
                s = _scan_classif(y, samples, items, total1, parent, criterion,
                                  min_leaf, best - TIE_EPS, &thr)
    finally:
        free(items)
        free(neg)
        free(pos)
        free(fmax)
    if best_fi < 0:
        return -1, 0.0, -np.inf
    return int(features[best_fi]), thr, s


cdef double _scan_gbt(const double[::1] g, const double[::1] h, const Py_ssize_t[::1] samples,
                      Item* items, double G, double H, double lam, double gamma, double mcw,
                      double target, double* thr) noexcept nogil:
    cdef Py_ssize_t m = samples.shape[0], t, s_idx
    cdef double GL = 0.0, HL = 0.0, GR, HR, gain, best = -INFINITY
    for t in range(m - 1):
        s_idx = samples[items[t].pos]
        GL = GL + g[s_idx]
        HL = HL + h[s_idx]
        if not (items[t].v < items[t + 1].v):
            continue
        GR = G - GL
        HR = H - HL
        if not (HL >= mcw and HR >= mcw):
            continue
        gain = 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam)
                      - G * G / (H + lam)) - gamma
        if not (gain > 0.0):
            continue
        if target == INFINITY:
            if gain > best:
                best = gain
        elif gain >= target:
            thr[0] = _midpoint(items[t].v, items[t + 1].v)
            return gain
    return best


def best_split_gbt(const double[:, ::1] X, const double[::1] g, const double[::1] h,
                   const Py_ssize_t[::1] samples, const Py_ssize_t[::1] features,
                   double reg_lambda, double gamma, double min_child_weight):
    cdef Py_ssize_t m = samples.shape[0], k = features.shape[0], fi, t, best_fi = -1
    cdef double G = 0.0, H = 0.0, best = -INFINITY, s = -INFINITY, thr = 0.0
    cdef double* fmax
    cdef Item *items
    cdef Item *neg
    cdef Item *pos
    if m < 2 or k == 0:
        return -1, 0.0, -np.inf
    for t in range(m):
        G = G + g[samples[t]]
        H = H + h[samples[t]]
    items = <Item*> malloc(m * sizeof(Item))
    neg = <Item*> malloc(m * sizeof(Item))
    pos = <Item*> malloc(m * sizeof(Item))
    fmax = <double*> malloc(k * sizeof(double))
    try:
        with nogil:
            for fi in range(k):
                fmax[fi] = -INFINITY
                if _sort_feature(X, samples, features[fi], items, neg, pos):
                    fmax[fi] = _scan_gbt(g, h, samples, items, G, H, reg_lambda, gamma,
                                         min_child_weight, INFINITY, &thr)
                if fmax[fi] > best:
                    best = fmax[fi]
            if best > -INFINITY:
                for fi in range(k):
                    if fmax[fi] >= best - TIE_EPS:
                        best_fi = fi
                        break
                _sort_feature(X, samples, features[best_fi], items, neg, pos)
                s = _scan_gbt(g, h, samples, items, G, H, reg_lambda, gamma,
                              min_child_weight, best - TIE_EPS, &thr)
    finally:
        free(items)
        free(neg)
        free(pos)
        free(fmax)
    if best_fi < 0:
        return -1, 0.0, -np.inf
    return int(features[best_fi]), thr, s


cdef inline uint64_t _splitmix_next(uint64_t* state) noexcept nogil:
    cdef uint64_t z
    state[0] = state[0] + <uint64_t> 0x9E3779B97F4A7C15ULL
    z = state[0]
    z = (z ^ (z >> 30)) * <uint64_t> 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * <uint64_t> 0x94D049BB133111EBULL
    return z ^ (z >> 31)


def smo(const double[:, ::1] K, const double[::1] y, double C, double tol,
        Py_ssize_t max_passes, Py_ssize_t max_iter, seed):
    cdef Py_ssize_t n = y.shape[0], i, j, jj, j0, t, u
    cdef Py_ssize_t passes = 0, sweeps = 0, changed
    cdef uint64_t state = <uint64_t> (int(seed) & 0xFFFFFFFFFFFFFFFF)
    cdef double b = 0.0, Ei, Ej, r, ai, aj, L, H, eta, aj_new, ai_new, di, dj, b1, b2
    alpha_arr = np.zeros(n)
    F_arr = np.zeros(n)
    cdef double[::1] alpha = alpha_arr
    cdef double[::1] F = F_arr
    with nogil:
        while passes < max_passes and sweeps < max_iter:
            changed = 0
            for i in range(n):
                Ei = F[i] + b - y[i]
                r = y[i] * Ei
                if not ((r < -tol and alpha[i] < C) or (r > tol and alpha[i] > 0.0)):
                    continue
                j0 = <Py_ssize_t> (_splitmix_next(&state) % <uint64_t> (n - 1))
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
                    for u in range(n):
                        F[u] = F[u] + (di * K[u, i] + dj * K[u, j])
                    changed += 1
                    break
            sweeps += 1
            if changed == 0:
                passes += 1
            else:
                passes = 0
    return alpha_arr, b, sweeps, passes >= max_passes
