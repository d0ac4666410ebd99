"""numba and numpy kernels must agree with each other and with brute force."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from msdi import kernels as K
from msdi.copulas import CopulaModel, conditional_cdf


def _brute_counts(x, y):
    n = len(x)
    s = n1 = n2 = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = np.sign(x[i] - x[j])
            dy = np.sign(y[i] - y[j])
            s += int(dx * dy)
            n1 += dx == 0
            n2 += dy == 0
    return s, n * (n - 1) // 2, n1, n2


tie_heavy = st.integers(2, 60).flatmap(
    lambda n: st.tuples(
        st.lists(st.integers(0, 6), min_size=n, max_size=n),
        st.lists(st.integers(0, 6), min_size=n, max_size=n),
    )
)


@given(tie_heavy)
def test_kendall_counts_match_bruteforce(xy):
    x, y = (np.asarray(a, dtype=float) for a in xy)
    want = _brute_counts(x, y)
    assert tuple(K.kendall_counts_numba(x, y)) == want
    assert tuple(K.kendall_counts_numpy(x, y)) == want


def test_kendall_counts_continuous(rng):
    for n in (2, 3, 17, 200):
        x, y = rng.normal(size=(2, n))
        assert tuple(K.kendall_counts_numba(x, y)) == tuple(K.kendall_counts_numpy(x, y)) == _brute_counts(x, y)


def test_dominated_counts_agree(rng):
    us, vs = rng.integers(0, 20, size=(2, 300)) / 20
    uq, vq = rng.integers(0, 21, size=(2, 500)) / 20
    brute = np.array([np.sum((us <= a) & (vs <= b)) for a, b in zip(uq, vq)])
    np.testing.assert_array_equal(K.dominated_counts_numba(us, vs, uq, vq), brute)
    np.testing.assert_array_equal(K.dominated_counts_numpy(us, vs, uq, vq, chunk=37), brute)


@pytest.mark.parametrize("theta", [-30.0, -2.0, 0.5, 5.0, 40.0])
def test_frank_inverse_solves_conditional(theta, rng):
    u, w = rng.uniform(0.001, 0.999, size=(2, 2000))
    v_nb = K.frank_conditional_inverse_numba(theta, u, w)
    v_np = K.frank_conditional_inverse_numpy(theta, u, w)
    np.testing.assert_allclose(v_nb, v_np, atol=1e-12)
    # h is increasing in v, so the true root is bracketed within the bisection width
    c = CopulaModel("Frank", theta)
    width = 2.0**-K.BISECTION_STEPS
    assert np.all(conditional_cdf(c, u, np.clip(v_nb - width, 0, 1)) <= w)
    assert np.all(conditional_cdf(c, u, np.clip(v_nb + width, 0, 1)) >= w)


def test_dispatch_flag_selects_variant():
    from msdi import _accel

    expected = K.kendall_counts_numba if _accel.USE_NUMBA else K.kendall_counts_numpy
    assert K.kendall_counts is expected
