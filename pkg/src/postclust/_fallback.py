"""Pure-Python/numpy kernels.

Used when the compiled extension is unavailable (or disabled through the
``POSTCLUST_PURE_PYTHON`` environment variable).  Every routine here performs
the same floating-point operations in the same order as ``_kernels.pyx`` so
both backends return bit-identical results.
"""
import numpy as np


def _pair_key(a, b):
    return (a, b) if a < b else (b, a)


def _row_nn(D, row, active, ids):
    """Nearest active neighbour of ``row`` with node-id tie-breaking."""
    others = active[active != row]
    vals = D[row, others]
    best = vals.min()
    cand = others[vals == best]
    if cand.size == 1:
        return int(cand[0]), best
    keys = [_pair_key(ids[row], ids[c]) for c in cand]
    return int(cand[min(range(len(cand)), key=keys.__getitem__)]), best


def _ward_run(D, size, n_merges, tags=None):
    """Greedy Ward.D2 agglomeration on a squared-distance matrix.

    ``D`` and ``size`` are modified in place.  When ``tags`` is given the run
    aborts as soon as a merge mixes differently tagged clusters and the
    return value is the preservation flag; otherwise the merge records are
    returned.
    """
    n = D.shape[0]
    ids = list(range(n))
    active = np.arange(n)
    tag = None if tags is None else [int(t) for t in tags]
    nn = [0] * n
    nnd = np.empty(n)
    if n > 1:
        for i in range(n):
            nn[i], nnd[i] = _row_nn(D, i, active, ids)
    left = np.empty(n_merges, dtype=np.int64)
    right = np.empty(n_merges, dtype=np.int64)
    height = np.empty(n_merges)

    for step in range(n_merges):
        bi = -1
        bd = 0.0
        bk = (0, 0)
        for i in active:
            i = int(i)
            d = nnd[i]
            k = _pair_key(ids[i], ids[nn[i]])
            if bi < 0 or d < bd or (d == bd and k < bk):
                bi, bd, bk = i, d, k
        i, j = bi, nn[bi]
        if ids[j] < ids[i]:
            i, j = j, i
        dij = D[i, j]
        if tag is not None:
            if tag[i] != tag[j]:
                return False
        else:
            left[step], right[step], height[step] = ids[i], ids[j], dij
        keep, drop = (i, j) if i < j else (j, i)
        active = active[active != drop]
        others = active[active != keep]
        si, sj = size[i], size[j]
        sk = size[others]
        v = ((si + sk) * D[i, others] + (sj + sk) * D[j, others] - sk * dij) / (si + sj + sk)
        D[keep, others] = v
        D[others, keep] = v
        size[keep] = si + sj
        ids[keep] = n + step
        if tag is not None:
            tag[keep] = tag[i]
        for k in others:
            k = int(k)
            if nn[k] == keep or nn[k] == drop:
                nn[k], nnd[k] = _row_nn(D, k, active, ids)
            else:
                d = D[k, keep]
                if d < nnd[k] or (
                    d == nnd[k] and _pair_key(ids[k], ids[keep]) < _pair_key(ids[k], ids[nn[k]])
                ):
                    nn[k], nnd[k] = keep, d
        if others.size:
            nn[keep], nnd[keep] = _row_nn(D, keep, active, ids)

    if tag is None:
        return left, right, height
    live = [tag[int(a)] for a in active]
    return live.count(1) == 1 and live.count(2) == 1


def ward_merges(d2, sizes, n_merges):
    """Merge records ``(left, right, squared height)`` for the first ``n_merges`` steps."""
    D = np.array(d2, dtype=np.float64, copy=True)
    size = np.array(sizes, dtype=np.float64, copy=True)
    return _ward_run(D, size, n_merges)


def ward_preserved_many(base, x, direction, shifts, tags, n_clusters):
    """Preservation flags for a batch of one-column perturbations.

    Sample ``s`` clusters the data whose squared distances are
    ``base + (y_i - y_j)**2`` with ``y = x + direction * shifts[s]``, cutting
    at ``n_clusters``.  Tags 1 and 2 mark the two clusters that must survive.
    """
    n = base.shape[0]
    out = np.zeros(len(shifts), dtype=np.uint8)
    n_merges = n - n_clusters
    for s, c in enumerate(shifts):
        y = x + direction * c
        diff = y[:, None] - y[None, :]
        D = base + diff * diff
        size = np.ones(n)
        out[s] = _ward_run(D, size, n_merges, tags)
    return out


def dip_sorted(x):
    """Dip of the empirical CDF of the sorted sample ``x``.

    Returns ``(dip, low, high)`` with 0-based indices of the modal interval.
    """
    n = len(x)
    if n < 2 or x[n - 1] == x[0]:
        return 0.0, 0, n - 1
    # 1-based arrays throughout, index 0 unused
    xs = [0.0] + [float(v) for v in x]
    mn = [0] * (n + 1)
    mj = [0] * (n + 1)
    gcm = [0] * (n + 2)
    lcm = [0] * (n + 2)

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

    low, high = 1, n
    dip = 1.0
    while True:
        gcm[1] = high
        i = 1
        while gcm[i] > low:
            gcm[i + 1] = mn[gcm[i]]
            i += 1
        ig = l_gcm = i
        ix = ig - 1

        lcm[1] = low
        i = 1
        while lcm[i] < high:
            lcm[i + 1] = mj[lcm[i]]
            i += 1
        ih = l_lcm = i
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

    return dip / (2 * n), low - 1, high - 1


def dip_uniform_many(uniforms):
    """Dips of each row of a ``(B, n)`` array of uniforms."""
    U = np.sort(np.asarray(uniforms, dtype=np.float64), axis=1)
    return np.array([dip_sorted(row)[0] for row in U])
