# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: greedy Ward.D2 agglomeration and the dip statistic.

Operation order mirrors ``_fallback.py`` exactly; results are bit-identical.
"""
import numpy as np

from libc.stdint cimport int64_t
from libc.stdlib cimport free, malloc


cdef inline bint _key_less(double d, int64_t a1, int64_t b1, double e, int64_t a2, int64_t b2) noexcept nogil:
    if d < e:
        return True
    if d > e:
        return False
    if a1 != a2:
        return a1 < a2
    return b1 < b2


cdef inline int64_t _lo(int64_t a, int64_t b) noexcept nogil:
    return a if a < b else b


cdef inline int64_t _hi(int64_t a, int64_t b) noexcept nogil:
    return b if a < b else a


cdef void _row_nn(double[:, ::1] D, int row, int *act, int m, int64_t *ids,
                  int *nn, double *nnd) noexcept nogil:
    cdef int t, j, bj = -1
    cdef double bd = 0.0, d
    cdef int64_t ir = ids[row]
    cdef double *Dr = &D[row, 0]
    for t in range(m):
        j = act[t]
        if j == row:
            continue
        d = Dr[j]
        if bj < 0 or d < bd:
            bj = j
            bd = d
        elif d == bd and _key_less(0.0, _lo(ir, ids[j]), _hi(ir, ids[j]),
                                   0.0, _lo(ir, ids[bj]), _hi(ir, ids[bj])):
            bj = j
    nn[row] = bj
    nnd[row] = bd


cdef int _ward_run(double[:, ::1] D, double *size, int n, int n_merges,
                   signed char *tag, int64_t *out_left, int64_t *out_right,
                   double *out_h) noexcept nogil:
    """Returns 1/0 for preservation when ``tag`` is given, else 0."""
    cdef int *act = <int *> malloc(n * sizeof(int))
    cdef int *nn = <int *> malloc(n * sizeof(int))
    cdef double *nnd = <double *> malloc(n * sizeof(double))
    cdef int64_t *ids = <int64_t *> malloc(n * sizeof(int64_t))
    cdef int m = n, t, i, j, k, bi, keep, drop, step, c1, c2
    cdef double bd, d, dij, si, sj, sk, v
    cdef int result = 0

    cdef double *Dr
    cdef double *Di
    cdef double *Dj
    cdef double *Dk
    cdef int64_t kid
    cdef int bj
    cdef double bdk
    for i in range(n):
        act[i] = i
        ids[i] = i
        nn[i] = -1
        nnd[i] = 0.0
    # initial neighbours from the upper triangle; with ids == slots the
    # tie-break reduces to the smaller partner index, i.e. strict < in scan order
    for i in range(n):
        Dr = &D[i, 0]
        for j in range(i + 1, n):
            d = Dr[j]
            if nn[i] < 0 or d < nnd[i]:
                nn[i] = j
                nnd[i] = d
            if nn[j] < 0 or d < nnd[j]:
                nn[j] = i
                nnd[j] = d

    for step in range(n_merges):
        bi = -1
        bd = 0.0
        for t in range(m):
            i = act[t]
            d = nnd[i]
            if bi < 0 or d < bd:
                bi = i
                bd = d
            elif d == bd and _key_less(0.0, _lo(ids[i], ids[nn[i]]), _hi(ids[i], ids[nn[i]]),
                                       0.0, _lo(ids[bi], ids[nn[bi]]), _hi(ids[bi], ids[nn[bi]])):
                bi = i
        i = bi
        j = nn[bi]
        if ids[j] < ids[i]:
            i, j = j, i
        dij = D[i, j]
        if tag != NULL:
            if tag[i] != tag[j]:
                result = -1
                break
        else:
            out_left[step] = ids[i]
            out_right[step] = ids[j]
            out_h[step] = dij
        if i < j:
            keep = i
            drop = j
        else:
            keep = j
            drop = i
        # remove drop, keeping act in ascending slot order like the fallback
        t = 0
        for k in range(m):
            if act[k] != drop:
                act[t] = act[k]
                t += 1
        m = t
        si = size[i]
        sj = size[j]
        size[keep] = si + sj
        ids[keep] = n + step
        if tag != NULL:
            tag[keep] = tag[i]
        # one pass: Lance-Williams update, neighbour upkeep, new row's neighbour
        Di = &D[i, 0]
        Dj = &D[j, 0]
        Dk = &D[keep, 0]
        kid = ids[keep]
        bj = -1
        bdk = 0.0
        for t in range(m):
            k = act[t]
            if k == keep:
                continue
            sk = size[k]
            v = ((si + sk) * Di[k] + (sj + sk) * Dj[k] - sk * dij) / (si + sj + sk)
            Dk[k] = v
            D[k, keep] = v
            if bj < 0 or v < bdk:
                bj = k
                bdk = v
            elif v == bdk and ids[k] < ids[bj]:
                bj = k
            if nn[k] == keep or nn[k] == drop:
                _row_nn(D, k, act, m, ids, nn, nnd)
            elif v < nnd[k] or (v == nnd[k] and _key_less(
                    0.0, _lo(ids[k], kid), _hi(ids[k], kid),
                    0.0, _lo(ids[k], ids[nn[k]]), _hi(ids[k], ids[nn[k]]))):
                nn[k] = keep
                nnd[k] = v
        nn[keep] = bj
        nnd[keep] = bdk

    if tag != NULL and result == 0:
        c1 = 0
        c2 = 0
        for t in range(m):
            if tag[act[t]] == 1:
                c1 += 1
            elif tag[act[t]] == 2:
                c2 += 1
        result = 1 if (c1 == 1 and c2 == 1) else 0
    free(act)
    free(nn)
    free(nnd)
    free(ids)
    return result if result > 0 else 0


def ward_merges(d2, sizes, int n_merges):
    """Merge records ``(left, right, squared height)`` for the first ``n_merges`` steps."""
    cdef double[:, ::1] D = np.array(d2, dtype=np.float64, copy=True, order="C")
    cdef double[::1] size = np.array(sizes, dtype=np.float64, copy=True)
    cdef int n = D.shape[0]
    left = np.empty(n_merges, dtype=np.int64)
    right = np.empty(n_merges, dtype=np.int64)
    height = np.empty(n_merges, dtype=np.float64)
    cdef int64_t[::1] lv = left
    cdef int64_t[::1] rv = right
    cdef double[::1] hv = height
    with nogil:
        _ward_run(D, &size[0], n, n_merges, NULL,
                  &lv[0] if n_merges > 0 else NULL,
                  &rv[0] if n_merges > 0 else NULL,
                  &hv[0] if n_merges > 0 else NULL)
    return left, right, height


def ward_preserved_many(base, x, direction, shifts, tags, int n_clusters):
    """Preservation flags for a batch of one-column perturbations.

    Sample ``s`` clusters the data whose squared distances are
    ``base + (y_i - y_j)**2`` with ``y = x + direction * shifts[s]``.
    """
    cdef double[:, ::1] B = np.ascontiguousarray(base, dtype=np.float64)
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[::1] dv = np.ascontiguousarray(direction, dtype=np.float64)
    cdef double[::1] sv = np.ascontiguousarray(shifts, dtype=np.float64)
    cdef signed char[::1] tv = np.ascontiguousarray(tags, dtype=np.int8)
    cdef int n = B.shape[0]
    cdef int ns = sv.shape[0]
    out = np.zeros(ns, dtype=np.uint8)
    cdef unsigned char[::1] ov = out
    work = np.empty((n, n), dtype=np.float64)
    cdef double[:, ::1] D = work
    cdef double[::1] y = np.empty(n, dtype=np.float64)
    cdef double[::1] size = np.empty(n, dtype=np.float64)
    cdef signed char[::1] tw = np.empty(n, dtype=np.int8)
    cdef int s, i, j
    cdef double c, diff
    with nogil:
        for s in range(ns):
            c = sv[s]
            for i in range(n):
                y[i] = xv[i] + dv[i] * c
                size[i] = 1.0
                tw[i] = tv[i]
            for i in range(n):
                for j in range(n):
                    diff = y[i] - y[j]
                    D[i, j] = B[i, j] + diff * diff
            ov[s] = _ward_run(D, &size[0], n, n - n_clusters, &tw[0],
                              NULL, NULL, NULL)
    return out


cdef double _dip(double *xs, int n, int *lo_hi) noexcept nogil:
    """AS 217 on 1-based ``xs[1..n]``; returns the unnormalised dip."""
    cdef int *mn = <int *> malloc((n + 2) * sizeof(int))
    cdef int *mj = <int *> malloc((n + 2) * sizeof(int))
    cdef int *gcm = <int *> malloc((n + 2) * sizeof(int))
    cdef int *lcm = <int *> malloc((n + 2) * sizeof(int))
    cdef int j, k, i, mnj, mnmnj, mjk, mjmjk, low = 1, high = n
    cdef int ig, ih, ix, iv, l_gcm, l_lcm, gcmix, lcmiv, gcmi1, lcmiv1
    cdef int jb, je, jj, kb, ke, kk
    cdef double dip = 1.0, d, dx, dip_l, dip_u, dipnew, max_t, C, t

    mn[1] = 1
    for j in range(2, n + 1):
        mn[j] = j - 1
        while True:
            mnj = mn[j]
            mnmnj = mn[mnj]
            if mnj == 1 or (xs[j] - xs[mnj]) * (mnj - mnmnj) < (xs[mnj] - xs[mnmnj]) * (j - mnj):
                break
            mn[j] = mnmnj
    mj[n] = n
    for k in range(n - 1, 0, -1):
        mj[k] = k + 1
        while True:
            mjk = mj[k]
            mjmjk = mj[mjk]
            if mjk == n or (xs[k] - xs[mjk]) * (mjk - mjmjk) < (xs[mjk] - xs[mjmjk]) * (k - mjk):
                break
            mj[k] = mjmjk

    while True:
        gcm[1] = high
        i = 1
        while gcm[i] > low:
            gcm[i + 1] = mn[gcm[i]]
            i += 1
        ig = i
        l_gcm = i
        ix = ig - 1

        lcm[1] = low
        i = 1
        while lcm[i] < high:
            lcm[i + 1] = mj[lcm[i]]
            i += 1
        ih = i
        l_lcm = i
        iv = 2

        d = 0.0
        if l_gcm != 2 or l_lcm != 2:
            while True:
                gcmix = gcm[ix]
                lcmiv = lcm[iv]
                if gcmix > lcmiv:
                    gcmi1 = gcm[ix + 1]
                    dx = (lcmiv - gcmi1 + 1) - (xs[lcmiv] - xs[gcmi1]) * (gcmix - gcmi1) / (xs[gcmix] - xs[gcmi1])
                    iv += 1
                    if dx >= d:
                        d = dx
                        ig = ix + 1
                        ih = iv - 1
                else:
                    lcmiv1 = lcm[iv - 1]
                    dx = (xs[gcmix] - xs[lcmiv1]) * (lcmiv - lcmiv1) / (xs[lcmiv] - xs[lcmiv1]) - (gcmix - lcmiv1 - 1)
                    ix -= 1
                    if dx >= d:
                        d = dx
                        ig = ix + 1
                        ih = iv
                if ix < 1:
                    ix = 1
                if iv > l_lcm:
                    iv = l_lcm
                if gcm[ix] == lcm[iv]:
                    break
        else:
            d = 1.0

        if d < dip:
            break

        dip_l = 0.0
        for j in range(ig, l_gcm):
            max_t = 1.0
            jb = gcm[j + 1]
            je = gcm[j]
            if je - jb > 1 and xs[je] != xs[jb]:
                C = (je - jb) / (xs[je] - xs[jb])
                for jj in range(jb, je + 1):
                    t = (jj - jb + 1) - (xs[jj] - xs[jb]) * C
                    if max_t < t:
                        max_t = t
            if dip_l < max_t:
                dip_l = max_t

        dip_u = 0.0
        for k in range(ih, l_lcm):
            max_t = 1.0
            kb = lcm[k]
            ke = lcm[k + 1]
            if ke - kb > 1 and xs[ke] != xs[kb]:
                C = (ke - kb) / (xs[ke] - xs[kb])
                for kk in range(kb, ke + 1):
                    t = (xs[kk] - xs[kb]) * C - (kk - kb - 1)
                    if max_t < t:
                        max_t = t
            if dip_u < max_t:
                dip_u = max_t

        dipnew = dip_l if dip_l > dip_u else dip_u
        if dip < dipnew:
            dip = dipnew

        if low == gcm[ig] and high == lcm[ih]:
            break
        low = gcm[ig]
        high = lcm[ih]

    lo_hi[0] = low - 1
    lo_hi[1] = high - 1
    free(mn)
    free(mj)
    free(gcm)
    free(lcm)
    return dip


def dip_sorted(x):
    """Dip of the empirical CDF of the sorted sample ``x``.

    Returns ``(dip, low, high)`` with 0-based indices of the modal interval.
    """
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef int n = xv.shape[0]
    if n < 2 or xv[n - 1] == xv[0]:
        return 0.0, 0, n - 1
    buf = np.empty(n + 1, dtype=np.float64)
    cdef double[::1] bv = buf
    bv[1:] = xv
    cdef int lo_hi[2]
    cdef double d
    with nogil:
        d = _dip(&bv[0], n, lo_hi)
    return d / (2 * n), lo_hi[0], lo_hi[1]


def dip_uniform_many(rng_uniforms):
    """Dips of each row of a ``(B, n)`` array of uniforms (rows sorted in place)."""
    cdef double[:, ::1] U = np.ascontiguousarray(rng_uniforms, dtype=np.float64)
    cdef int B = U.shape[0], n = U.shape[1], b, i
    out = np.empty(B, dtype=np.float64)
    cdef double[::1] ov = out
    buf = np.empty(n + 1, dtype=np.float64)
    cdef double[::1] bv = buf
    cdef int lo_hi[2]
    arr = np.sort(np.asarray(U), axis=1)
    cdef double[:, ::1] S = np.ascontiguousarray(arr)
    with nogil:
        for b in range(B):
            if n < 2 or S[b, n - 1] == S[b, 0]:
                ov[b] = 0.0
                continue
            for i in range(n):
                bv[i + 1] = S[b, i]
            ov[b] = _dip(&bv[0], n, lo_hi) / (2 * n)
    return out
