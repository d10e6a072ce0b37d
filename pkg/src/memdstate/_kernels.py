"""Compiled inner loops for the envelope computation.

The numpy reference path (``memd.natural_spline`` / ``memd.direction_envelope``)
is kept for testing; these kernels must agree with it to rounding.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def maxima_indices(p):
    n = p.shape[0]
    out = np.empty(n, dtype=np.int64)
    count = 0
    i = 1
    while i < n - 1:
        if p[i] > p[i - 1]:
            j = i
            while j + 1 < n and p[j + 1] == p[i]:
                j += 1
            if j + 1 < n and p[j + 1] < p[i]:
                out[count] = (i + j) // 2
                count += 1
            i = j + 1
        else:
            i += 1
    return out[:count]


@njit(cache=True)
def _spline_into(knots, values, out):
    """Natural cubic spline through (knots, values[:, c]) evaluated at 0..T-1."""
    k = knots.shape[0]
    nch = values.shape[1]
    length = out.shape[1]
    h = np.empty(k - 1)
    for i in range(k - 1):
        h[i] = knots[i + 1] - knots[i]
    second = np.zeros((k, nch))
    m = k - 2
    if m > 0:
        cprime = np.empty(m)
        dprime = np.empty((m, nch))
        for i in range(m):
            sub = h[i]
            diag = 2.0 * (h[i] + h[i + 1])
            sup = h[i + 1]
            if i == 0:
                denom = diag
            else:
                denom = diag - sub * cprime[i - 1]
            cprime[i] = sup / denom
            for c in range(nch):
                rhs = 6.0 * ((values[i + 2, c] - values[i + 1, c]) / h[i + 1]
                             - (values[i + 1, c] - values[i, c]) / h[i])
                if i == 0:
                    dprime[i, c] = rhs / denom
                else:
                    dprime[i, c] = (rhs - sub * dprime[i - 1, c]) / denom
        for c in range(nch):
            second[m, c] = dprime[m - 1, c]
        for i in range(m - 2, -1, -1):
            for c in range(nch):
                second[i + 1, c] = dprime[i, c] - cprime[i] * second[i + 2, c]
    j = 0
    for t in range(length):
        tf = float(t)
        while j < k - 2 and knots[j + 1] <= tf:
            j += 1
        hj = h[j]
        a = (knots[j + 1] - tf) / hj
        b = 1.0 - a
        ca = (a * a * a - a) * hj * hj / 6.0
        cb = (b * b * b - b) * hj * hj / 6.0
        for c in range(nch):
            out[c, t] = (a * values[j, c] + b * values[j + 1, c]
                         + ca * second[j, c] + cb * second[j + 1, c])


@njit(cache=True)
def envelope_stats(x, dirs, min_extrema):
    """Mean envelope (channels, T) and mean envelope distance from it (T,).

    Directions whose projection has fewer than ``min_extrema`` maxima are
    left out of both averages. Returns ``(mean, amp, used)`` where ``used``
    is the number of directions that contributed.
    """
    nch, length = x.shape
    ndir = dirs.shape[0]
    envs = np.empty((ndir, nch, length))
    mean = np.zeros((nch, length))
    amp = np.zeros(length)
    p = np.empty(length)
    ok = np.zeros(ndir, dtype=np.bool_)
    for v in range(ndir):
        for t in range(length):
            acc = 0.0
            for c in range(nch):
                acc += dirs[v, c] * x[c, t]
            p[t] = acc
        idx = maxima_indices(p)
        cnt = idx.shape[0]
        if cnt < min_extrema or cnt == 0:
            continue
        ok[v] = True
        nm = min(2, cnt)
        k = cnt + 2 * nm
        knots = np.empty(k)
        src = np.empty(k, dtype=np.int64)
        for i in range(nm):
            knots[i] = -float(idx[nm - 1 - i])
            src[i] = idx[nm - 1 - i]
        for i in range(cnt):
            knots[nm + i] = float(idx[i])
            src[nm + i] = idx[i]
        last = float(length - 1)
        for i in range(nm):
            knots[nm + cnt + i] = 2.0 * last - float(idx[cnt - 1 - i])
            src[nm + cnt + i] = idx[cnt - 1 - i]
        values = np.empty((k, nch))
        for i in range(k):
            for c in range(nch):
                values[i, c] = x[c, src[i]]
        _spline_into(knots, values, envs[v])
    used = 0
    for v in range(ndir):
        if ok[v]:
            used += 1
    if used == 0:
        return mean, amp, 0
    for v in range(ndir):
        if not ok[v]:
            continue
        for c in range(nch):
            for t in range(length):
                mean[c, t] += envs[v, c, t]
    for c in range(nch):
        for t in range(length):
            mean[c, t] /= used
    for v in range(ndir):
        if not ok[v]:
            continue
        for t in range(length):
            acc = 0.0
            for c in range(nch):
                d = envs[v, c, t] - mean[c, t]
                acc += d * d
            amp[t] += np.sqrt(acc)
    for t in range(length):
        amp[t] /= used
    return mean, amp, used
