"""Hot loops, each with a numba version and a numpy version.

The public names at the bottom dispatch on :data:`msdi._accel.USE_NUMBA`. Both
flavours are importable directly (``*_numba`` / ``*_numpy``) so tests and the
benchmark can compare them side by side.
"""

import numpy as np

from ._accel import USE_NUMBA, njit

__all__ = [
    "kendall_counts",
    "dominated_counts",
    "frank_conditional_inverse",
    "frank_h",
    "BISECTION_STEPS",
]

# 2**-42 < 1e-12
BISECTION_STEPS = 42


def _presort(x, y):
    order = np.lexsort((y, x))
    return np.ascontiguousarray(x[order]), np.ascontiguousarray(y[order])


# --------------------------------------------------------------------------
# Kendall's tau: Knight's O(n log n) pair counting
# --------------------------------------------------------------------------


@njit
def _tie_pairs_sorted(a):
    total = 0
    run = 1
    for i in range(1, a.shape[0]):
        if a[i] == a[i - 1]:
            run += 1
        else:
            total += run * (run - 1) // 2
            run = 1
    total += run * (run - 1) // 2
    return total


@njit
def _kendall_core(xs, ys):
    n = xs.shape[0]
    n0 = n * (n - 1) // 2
    n1 = 0
    n3 = 0
    run_x = 1
    run_xy = 1
    for i in range(1, n):
        if xs[i] == xs[i - 1]:
            run_x += 1
            if ys[i] == ys[i - 1]:
                run_xy += 1
            else:
                n3 += run_xy * (run_xy - 1) // 2
                run_xy = 1
        else:
            n1 += run_x * (run_x - 1) // 2
            n3 += run_xy * (run_xy - 1) // 2
            run_x = 1
            run_xy = 1
    n1 += run_x * (run_x - 1) // 2
    n3 += run_xy * (run_xy - 1) // 2

    # bottom-up merge sort of ys counting strict inversions
    a = ys.copy()
    buf = np.empty_like(a)
    swaps = 0
    width = 1
    while width < n:
        lo = 0
        while lo < n:
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i = lo
            j = mid
            k = lo
            while i < mid and j < hi:
                if a[j] < a[i]:
                    buf[k] = a[j]
                    swaps += mid - i
                    j += 1
                else:
                    buf[k] = a[i]
                    i += 1
                k += 1
            while i < mid:
                buf[k] = a[i]
                i += 1
                k += 1
            while j < hi:
                buf[k] = a[j]
                j += 1
                k += 1
            lo = hi
        a, buf = buf, a
        width *= 2
    n2 = _tie_pairs_sorted(a)
    s = n0 - n1 - n2 + n3 - 2 * swaps
    return s, n0, n1, n2


def kendall_counts_numba(x, y):
    """Return ``(S, n0, n1, n2)``: concordant minus discordant pairs, total
    pairs, pairs tied in x, pairs tied in y."""
    xs, ys = _presort(np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64))
    s, n0, n1, n2 = _kendall_core(xs, ys)
    return int(s), int(n0), int(n1), int(n2)


def _tie_pairs_numpy(a):
    _, counts = np.unique(a, return_counts=True)
    counts = counts.astype(np.int64)
    return int(np.sum(counts * (counts - 1) // 2))


def _inversions_numpy(ranks):
    # level-wise merge: at width w the array holds sorted blocks of w items;
    # cross inversions of each (left, right) block pair come from searchsorted
    n = ranks.size
    a = ranks.astype(np.int64)
    big = np.int64(n + 1)
    idx = np.arange(n, dtype=np.int64)
    total = 0
    width = 1
    while width < n:
        block = idx // width
        pair = block // 2
        right = (block % 2) == 1
        keys = pair * big + a
        left_keys = keys[~right]
        right_keys = keys[right]
        le = np.searchsorted(left_keys, right_keys, side="right")
        end = np.searchsorted(left_keys, (right_keys // big + 1) * big, side="left")
        total += int(np.sum(end - le))
        a = np.sort(keys, kind="stable") % big
        width *= 2
    return total


def kendall_counts_numpy(x, y):
    xs, ys = _presort(np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64))
    n = xs.size
    n0 = n * (n - 1) // 2
    n1 = _tie_pairs_numpy(xs)
    if n:
        joint = np.empty(n, dtype=bool)
        joint[0] = True
        joint[1:] = (xs[1:] != xs[:-1]) | (ys[1:] != ys[:-1])
        runs = np.diff(np.append(np.flatnonzero(joint), n)).astype(np.int64)
        n3 = int(np.sum(runs * (runs - 1) // 2))
    else:
        n3 = 0
    n2 = _tie_pairs_numpy(ys)
    dense = np.unique(ys, return_inverse=True)[1].ravel()
    swaps = _inversions_numpy(dense)
    return n0 - n1 - n2 + n3 - 2 * swaps, n0, n1, n2


# --------------------------------------------------------------------------
# Empirical copula counts
# --------------------------------------------------------------------------


@njit
def _dominated_core(us, vs, uq, vq):
    m = uq.shape[0]
    n = us.shape[0]
    out = np.zeros(m, dtype=np.int64)
    for i in range(m):
        a = uq[i]
        b = vq[i]
        c = 0
        for j in range(n):
            if us[j] <= a and vs[j] <= b:
                c += 1
        out[i] = c
    return out


def dominated_counts_numba(us, vs, uq, vq):
    """``out[i] = #{j : us[j] <= uq[i] and vs[j] <= vq[i]}``."""
    return _dominated_core(
        np.ascontiguousarray(us, dtype=np.float64),
        np.ascontiguousarray(vs, dtype=np.float64),
        np.ascontiguousarray(uq, dtype=np.float64),
        np.ascontiguousarray(vq, dtype=np.float64),
    )


def dominated_counts_numpy(us, vs, uq, vq, chunk=2048):
    us = np.asarray(us, dtype=np.float64)
    vs = np.asarray(vs, dtype=np.float64)
    uq = np.asarray(uq, dtype=np.float64)
    vq = np.asarray(vq, dtype=np.float64)
    out = np.empty(uq.size, dtype=np.int64)
    for start in range(0, uq.size, chunk):
        stop = start + chunk
        mask = (us[None, :] <= uq[start:stop, None]) & (vs[None, :] <= vq[start:stop, None])
        out[start:stop] = mask.sum(axis=1)
    return out


# --------------------------------------------------------------------------
# Frank conditional inverse by bisection
# --------------------------------------------------------------------------


def frank_h(theta, u, v):
    """Frank conditional distribution ``dC/du(u, v)`` (numpy, broadcasting)."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        t = theta * (u - v) + np.log(np.expm1(-theta * (1.0 - v)) / np.expm1(-theta * v))
        h = 1.0 / (1.0 + np.exp(t))
    # v = 0 and v = 1 give 0/0 or log(0) above
    return np.where(v <= 0, 0.0, np.where(v >= 1, 1.0, h))


@njit
def _frank_inverse_core(theta, u, w, steps):
    n = u.shape[0]
    out = np.empty(n)
    for i in range(n):
        # h < w  <=>  theta*(u - v) + log(A/B) > log((1 - w)/w); saves an exp per step
        target = np.log1p(-w[i]) - np.log(w[i]) - theta * u[i]
        lo = 0.0
        hi = 1.0
        for _ in range(steps):
            mid = 0.5 * (lo + hi)
            g = -theta * mid + np.log(np.expm1(-theta * (1.0 - mid)) / np.expm1(-theta * mid))
            if g > target:
                lo = mid
            else:
                hi = mid
        out[i] = 0.5 * (lo + hi)
    return out


def frank_conditional_inverse_numba(theta, u, w):
    """Solve ``dC/du(u, v) = w`` for v on the Frank copula."""
    return _frank_inverse_core(
        float(theta),
        np.ascontiguousarray(u, dtype=np.float64),
        np.ascontiguousarray(w, dtype=np.float64),
        BISECTION_STEPS,
    )


def frank_conditional_inverse_numpy(theta, u, w):
    u = np.asarray(u, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    lo = np.zeros_like(u)
    hi = np.ones_like(u)
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        below = frank_h(theta, u, mid) < w
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


if USE_NUMBA:
    kendall_counts = kendall_counts_numba
    dominated_counts = dominated_counts_numba
else:
    kendall_counts = kendall_counts_numpy
    dominated_counts = dominated_counts_numpy
# scalar libm expm1/log inside the jitted loop lose to numpy's SIMD loops
# (benchmarks/bench_kernels.py), so Frank inversion always takes the numpy path
frank_conditional_inverse = frank_conditional_inverse_numpy
