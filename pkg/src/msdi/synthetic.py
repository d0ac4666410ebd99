"""Synthetic monthly series with a known joint model, for demos and tests."""

import numpy as np
from scipy import optimize, special

from .copulas import CopulaModel, simulate
from .distributions import make_marginal
from .ingestion import ClimateSeries, Station, YearMonth

__all__ = ["synthetic_series"]


def _mixture_ppf(w, mu, sd, p):
    lo = np.min(mu) - 12 * np.max(sd)
    hi = np.max(mu) + 12 * np.max(sd)

    def f(x, target):
        return np.sum(w * special.ndtr((x - mu) / sd)) - target

    return np.array([optimize.brentq(f, lo, hi, args=(t,), xtol=1e-12) for t in p])


def synthetic_series(
    n_months: int,
    seed: int,
    *,
    start: str = "1981-01",
    rain_shape=(0.78, 5.27),
    rain_divisor: float = 18.41,
    temp_mixture=((0.31, 0.69), (24.8586, 28.6589), (0.8015, 1.3191)),
    copula: CopulaModel = CopulaModel("FGM", -0.03195),
    station: str = "synthetic",
) -> ClimateSeries:
    """Beta-scaled rainfall and mixture temperature joined by ``copula``."""
    uv = simulate(copula, n_months, seed)
    rain = special.betaincinv(rain_shape[0], rain_shape[1], uv[:, 0]) * rain_divisor
    w, mu, sd = (np.asarray(x, dtype=float) for x in temp_mixture)
    make_marginal("GaussianMixture", tuple(w) + tuple(mu) + tuple(sd))  # parameter check
    temp = _mixture_ppf(w, mu, sd, uv[:, 1])
    return ClimateSeries.from_arrays(
        Station(station, 8.1996, 80.6327), YearMonth.parse(start), np.round(rain, 6), np.round(temp, 6)
    )
