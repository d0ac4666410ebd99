"""From marginals to the unit square: PIT, rank pseudo-observations, Kendall's tau.

Kendall's tau is rank based, so it takes the same value on raw data, on
parametric PIT values and on pseudo-observations (up to ties introduced by
clamping).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from . import kernels
from .distributions import FittedMarginal, cdf
from .errors import ValidationError

__all__ = [
    "PseudoObservations",
    "pit",
    "clamp_size",
    "clamp_unit",
    "pseudo_observations",
    "kendall_tau",
    "kendall_tau_bruteforce",
]

UNFITTED_CLAMP_N = 10**6


@dataclass(frozen=True)
class PseudoObservations:
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if u.shape != v.shape or u.ndim != 1:
            raise ValidationError("pseudo-observation coordinates must be 1-D and equal length")
        u.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    def __len__(self):
        return self.u.size

    @property
    def pairs(self) -> np.ndarray:
        return np.column_stack([self.u, self.v])

    @classmethod
    def from_uniforms(cls, u, v) -> "PseudoObservations":
        """Re-rank arbitrary pairs (e.g. simulated copula draws)."""
        return pseudo_observations(u, v)


def clamp_unit(p, n: int):
    """Clamp probabilities to ``[1/(2n), 1 - 1/(2n)]``."""
    eps = 1.0 / (2 * n)
    return np.clip(p, eps, 1 - eps)


def clamp_size(m: FittedMarginal) -> int:
    """Sample size behind the clamp width: the fit's ``n``, or 10**6 for a marginal built without data."""
    return m.n if m.n > 0 else UNFITTED_CLAMP_N


def pit(m: FittedMarginal, data, n: int | None = None) -> np.ndarray:
    """Probability integral transform through the fitted CDF, clamped away from 0 and 1.

    The clamp width is ``1/(2n)`` with ``n`` taken from the argument if given,
    else from the sample the marginal was fitted on.
    """
    x = np.asarray(data, dtype=float)
    return clamp_unit(np.asarray(cdf(m, x), dtype=float), n if n is not None else clamp_size(m))


def pseudo_observations(x, y) -> PseudoObservations:
    """Average ranks divided by ``n + 1`` in each coordinate."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise ValidationError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise ValidationError("need at least 2 observations")
    n1 = x.size + 1
    return PseudoObservations(rankdata(x) / n1, rankdata(y) / n1)


def _tau_b(s, n0, n1, n2):
    denom = math.sqrt(float(n0 - n1) * float(n0 - n2))
    if denom == 0:
        return math.nan
    return s / denom


def _split(pairs, v=None):
    if isinstance(pairs, PseudoObservations):
        return pairs.u, pairs.v
    if v is not None:
        return np.asarray(pairs, dtype=float), np.asarray(v, dtype=float)
    arr = np.asarray(pairs, dtype=float)
    return arr[:, 0], arr[:, 1]


def kendall_tau(pairs, v=None) -> float:
    """Tie-corrected Kendall's tau-b in O(n log n).

    Accepts a :class:`PseudoObservations`, an ``(n, 2)`` array, or two vectors.
    Returns NaN when one coordinate is constant.
    """
    x, y = _split(pairs, v)
    if x.size != y.size:
        raise ValidationError("length mismatch")
    if x.size < 2:
        raise ValidationError("kendall_tau needs at least 2 pairs")
    return _tau_b(*kernels.kendall_counts(x, y))


def kendall_tau_bruteforce(pairs, v=None) -> float:
    """O(n^2) reference: direct sign products over all pairs."""
    x, y = _split(pairs, v)
    n = x.size
    s = n1 = n2 = 0
    for i in range(n):
        dx = np.sign(x[i + 1 :] - x[i])
        dy = np.sign(y[i + 1 :] - y[i])
        s += int(np.sum(dx * dy))
        n1 += int(np.sum(dx == 0))
        n2 += int(np.sum(dy == 0))
    return _tau_b(s, n * (n - 1) // 2, n1, n2)
