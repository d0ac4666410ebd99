"""Frank and FGM copulas: evaluation, estimation, simulation, goodness of fit.

The Frank CDF here is the standard form
``-(1/theta) log(1 + (e^{-theta u} - 1)(e^{-theta v} - 1) / (e^{-theta} - 1))``.
For ``|theta| < 1e-8`` Frank is evaluated as the independence copula.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import integrate, optimize

from . import kernels
from .dependence import PseudoObservations, kendall_tau, pseudo_observations
from .errors import CopulaRejectedError, DegenerateDataError, FitError, ValidationError

__all__ = [
    "CopulaFamily",
    "CopulaModel",
    "GofDiagnostics",
    "copula_cdf",
    "copula_density",
    "conditional_cdf",
    "tau_of_theta",
    "theta_of_tau",
    "fit_theta",
    "simulate",
    "empirical_copula",
    "cvm_statistic",
    "gof_pvalue",
    "select_copula",
    "FGM_TAU_LIMIT",
]

FRANK_ZERO = 1e-8
FRANK_BOUND = 60.0
FGM_TAU_LIMIT = 2.0 / 9.0
MIN_PAIRS = 24
DEFAULT_BOOTSTRAP = 1000


class CopulaFamily(str, Enum):
    FRANK = "Frank"
    FGM = "FGM"
    INDEPENDENCE = "Independence"

    @classmethod
    def parse(cls, value) -> "CopulaFamily":
        if isinstance(value, cls):
            return value
        for member in cls:
            if str(value).lower() in (member.value.lower(), member.name.lower()):
                return member
        raise ValidationError(f"unknown copula family {value!r}")


@dataclass(frozen=True)
class GofDiagnostics:
    tau: float
    theta_tau_inversion: float
    s_n: float | None = None
    p_value: float | None = None
    bootstrap_n: int | None = None
    replicates: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        if self.p_value is not None and self.s_n is None:
            raise ValidationError("p_value requires s_n")

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "theta_tau_inversion": self.theta_tau_inversion,
            "s_n": self.s_n,
            "p_value": self.p_value,
            "bootstrap_n": self.bootstrap_n,
        }


@dataclass(frozen=True)
class CopulaModel:
    family: CopulaFamily
    theta: float = 0.0
    fit: GofDiagnostics | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", CopulaFamily.parse(self.family))
        theta = float(self.theta)
        object.__setattr__(self, "theta", theta)
        _check_theta(self.family, theta)

    @property
    def p_value(self) -> float | None:
        return None if self.fit is None else self.fit.p_value

    @property
    def s_n(self) -> float | None:
        return None if self.fit is None else self.fit.s_n

    def to_dict(self) -> dict:
        return {
            "schema": "msdi.copula",
            "version": 1,
            "family": self.family.value,
            "theta": self.theta,
            "fit": None if self.fit is None else self.fit.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CopulaModel":
        if doc.get("schema") != "msdi.copula" or doc.get("version") != 1:
            raise ValidationError("not a version-1 copula document")
        fit = doc.get("fit")
        return cls(doc["family"], doc["theta"], None if fit is None else GofDiagnostics(**fit))


def _check_theta(family: CopulaFamily, theta: float):
    if not math.isfinite(theta):
        raise ValidationError("copula parameter must be finite")
    if family is CopulaFamily.FGM and not -1.0 <= theta <= 1.0:
        raise ValidationError(f"FGM theta must lie in [-1, 1], got {theta}")
    if family is CopulaFamily.FRANK and abs(theta) > 700:
        raise ValidationError(f"Frank theta {theta} outside the representable range")
    if family is CopulaFamily.INDEPENDENCE and theta != 0.0:
        raise ValidationError("Independence copula has no parameter (theta must be 0)")


def _is_independent(c: CopulaModel) -> bool:
    return c.family is CopulaFamily.INDEPENDENCE or (c.family is CopulaFamily.FRANK and abs(c.theta) < FRANK_ZERO)


def _unit_args(u, v):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any((u < 0) | (u > 1)) or np.any((v < 0) | (v > 1)):
        raise ValidationError("copula arguments must lie in [0, 1]")
    return u, v


def _out(result, u, v):
    return float(result) if np.ndim(u) == 0 and np.ndim(v) == 0 else result


# ---------------------------------------------------------------- evaluation


def copula_cdf(c: CopulaModel, u, v):
    u_, v_ = _unit_args(u, v)
    if _is_independent(c):
        res = u_ * v_
    elif c.family is CopulaFamily.FGM:
        res = u_ * v_ * (1 + c.theta * (1 - u_) * (1 - v_))
    else:
        res = np.clip(_frank_cdf(c.theta, u_, v_), 0.0, 1.0)
    return _out(res, u, v)


def copula_density(c: CopulaModel, u, v):
    u_, v_ = _unit_args(u, v)
    if _is_independent(c):
        res = np.ones(np.broadcast(u_, v_).shape)
    elif c.family is CopulaFamily.FGM:
        res = 1 + c.theta * (1 - 2 * u_) * (1 - 2 * v_)
    else:
        res = np.exp(_frank_logdensity(c.theta, u_, v_))
    return _out(res, u, v)


def _frank_log_denominator(t, u, v):
    """log|(e^-t - 1) + (e^-tu - 1)(e^-tv - 1)| as a log-sum of same-sign terms."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    with np.errstate(divide="ignore"):
        if t > 0:
            first = -t * u + np.log(-np.expm1(-t * v))
            second = -t * v + np.log(-np.expm1(-t * (1 - v)))
        else:
            first = -t * u + np.log(np.expm1(-t * v))
            second = -t + np.log(-np.expm1(t * (1 - v)))
    return np.logaddexp(first, second)


def _frank_cdf(t, u, v):
    u, v = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
    d = np.expm1(-t)
    with np.errstate(over="ignore", invalid="ignore"):
        ratio = np.expm1(-t * u) * np.expm1(-t * v) / d
    small = np.abs(ratio) < 0.5
    out = np.empty(u.shape)
    # log1p keeps precision where C is tiny; elsewhere the log-difference is exact enough
    out[small] = -np.log1p(ratio[small]) / t
    big = ~small
    out[big] = -(_frank_log_denominator(t, u[big], v[big]) - math.log(abs(d))) / t
    return out


def _frank_logdensity(t, u, v):
    return math.log(abs(t * np.expm1(-t))) - t * (u + v) - 2 * _frank_log_denominator(t, u, v)


def log_density(c: CopulaModel, u, v) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if _is_independent(c):
        return np.zeros(np.broadcast(u, v).shape)
    if c.family is CopulaFamily.FGM:
        return np.log1p(c.theta * (1 - 2 * u) * (1 - 2 * v))
    return _frank_logdensity(c.theta, u, v)


def conditional_cdf(c: CopulaModel, u, v):
    """``dC/du (u, v)``: distribution of V given U = u."""
    u_, v_ = _unit_args(u, v)
    if _is_independent(c):
        res = np.broadcast_to(v_, np.broadcast(u_, v_).shape).astype(float)
    elif c.family is CopulaFamily.FGM:
        res = v_ * (1 + c.theta * (1 - v_) * (1 - 2 * u_))
    else:
        res = kernels.frank_h(c.theta, u_, v_)
    return _out(res, u, v)


# ---------------------------------------------------------------- tau <-> theta


def _debye1(theta: float) -> float:
    if theta == 0:
        return 1.0
    val, _ = integrate.quad(lambda t: t / math.expm1(t) if t != 0 else 1.0, 0.0, theta, epsabs=1e-14, epsrel=1e-13)
    return val / theta


def tau_of_theta(family, theta: float) -> float:
    """Kendall's tau implied by the copula parameter."""
    family = CopulaFamily.parse(family)
    _check_theta(family, float(theta))
    if family is CopulaFamily.INDEPENDENCE:
        return 0.0
    if family is CopulaFamily.FGM:
        return 2.0 * theta / 9.0
    if abs(theta) < 1e-4:
        return theta / 9.0 - theta**3 / 900.0
    return 1.0 - 4.0 / theta * (1.0 - _debye1(theta))


def theta_of_tau(family, tau: float, *, strict: bool = True) -> float:
    """Invert :func:`tau_of_theta`.

    FGM cannot represent ``|tau| > 2/9``; ``strict`` raises there, otherwise
    the result is clipped to [-1, 1].
    """
    family = CopulaFamily.parse(family)
    if not -1 < tau < 1:
        raise ValidationError(f"tau must lie in (-1, 1), got {tau}")
    if family is CopulaFamily.INDEPENDENCE or tau == 0:
        return 0.0
    if family is CopulaFamily.FGM:
        if abs(tau) > FGM_TAU_LIMIT and strict:
            raise ValidationError(f"FGM cannot represent |tau| = {abs(tau):.4f} > 2/9")
        return float(np.clip(4.5 * tau, -1.0, 1.0))
    lo, hi = -FRANK_BOUND, FRANK_BOUND
    tl, th = tau_of_theta(family, lo), tau_of_theta(family, hi)
    if tau <= tl:
        return lo
    if tau >= th:
        return hi
    return float(optimize.brentq(lambda t: tau_of_theta(family, t) - tau, lo, hi, xtol=1e-13))


# ---------------------------------------------------------------- estimation


def _as_pseudo(pairs) -> PseudoObservations:
    if isinstance(pairs, PseudoObservations):
        return pairs
    arr = np.asarray(pairs, dtype=float)
    return PseudoObservations(arr[:, 0], arr[:, 1])


def _fgm_pmle(u, v, theta0):
    a = (1 - 2 * u) * (1 - 2 * v)
    theta = theta0
    for _ in range(100):
        q = 1 + theta * a
        g = np.sum(a / q)
        h = -np.sum((a / q) ** 2)
        if h == 0:
            return theta
        new = min(1.0, max(-1.0, theta - g / h))
        if abs(new - theta) < 1e-13:
            return new
        theta = new
    raise FitError("FGM pseudo-likelihood iteration did not converge")


def _frank_pmle(u, v, theta0):
    def nll(t):
        t = float(t[0])
        if abs(t) < FRANK_ZERO:
            return 0.0
        return -float(np.sum(_frank_logdensity(t, u, v)))

    res = optimize.minimize(
        nll,
        x0=[theta0],
        method="L-BFGS-B",
        bounds=[(-FRANK_BOUND, FRANK_BOUND)],
        options={"ftol": 1e-15, "gtol": 1e-10, "maxiter": 500},
    )
    if not res.success and "ABNORMAL" not in str(res.message):
        raise FitError(f"Frank pseudo-likelihood did not converge: {res.message}")
    return float(res.x[0])


def fit_theta(family, pairs, *, strict: bool = True, min_pairs: int = MIN_PAIRS) -> CopulaModel:
    """Maximum pseudo-likelihood estimate, started at the tau-inversion value.

    With ``strict`` an FGM fit is refused when the sample tau exceeds what FGM
    can represent; otherwise estimates on the [-1, 1] boundary are kept with a
    warning.
    """
    family = CopulaFamily.parse(family)
    po = _as_pseudo(pairs)
    if len(po) < min_pairs:
        raise ValidationError(f"copula fitting needs at least {min_pairs} pairs, got {len(po)}")
    tau = kendall_tau(po)
    if not math.isfinite(tau):
        raise DegenerateDataError("all-ties input: Kendall's tau undefined")
    if family is CopulaFamily.INDEPENDENCE:
        return CopulaModel(family, 0.0, GofDiagnostics(tau, 0.0))
    init = theta_of_tau(family, float(np.clip(tau, -0.999, 0.999)), strict=strict)
    u, v = po.u, po.v
    if family is CopulaFamily.FGM:
        theta = _fgm_pmle(u, v, init)
        if strict and abs(theta) == 1.0:
            warnings.warn("FGM estimate clipped to the boundary of [-1, 1]", RuntimeWarning, stacklevel=2)
    else:
        theta = _frank_pmle(u, v, init)
    return CopulaModel(family, theta, GofDiagnostics(tau, init))


# ---------------------------------------------------------------- simulation


def simulate(c: CopulaModel, n: int, seed=None) -> np.ndarray:
    """Draw ``n`` pairs by conditional inversion; returns an ``(n, 2)`` array."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    rng = np.random.default_rng(seed)
    u = rng.random(n)
    w = rng.random(n)
    if _is_independent(c):
        v = w
    elif c.family is CopulaFamily.FGM:
        a = c.theta * (1 - 2 * u)
        small = np.abs(a) < 1e-12
        a_safe = np.where(small, 1.0, a)
        disc = np.sqrt((1 + a_safe) ** 2 - 4 * a_safe * w)
        v = np.where(small, w, (1 + a_safe - disc) / (2 * a_safe))
    else:
        v = kernels.frank_conditional_inverse(c.theta, u, w)
    return np.column_stack([u, v])


# ---------------------------------------------------------------- goodness of fit


def empirical_copula(pairs, u, v):
    """Fraction of pseudo-observations dominated by ``(u, v)``."""
    po = _as_pseudo(pairs)
    if len(po) == 0:
        raise ValidationError("empty pairs")
    uq = np.atleast_1d(np.asarray(u, dtype=float))
    vq = np.atleast_1d(np.asarray(v, dtype=float))
    uq, vq = np.broadcast_arrays(uq, vq)
    res = kernels.dominated_counts(po.u, po.v, uq.ravel(), vq.ravel()) / len(po)
    res = res.reshape(uq.shape)
    return _out(res[0] if np.ndim(u) == 0 and np.ndim(v) == 0 else res, u, v)


def cvm_statistic(c: CopulaModel, pairs) -> float:
    """Sum over pseudo-observations of squared empirical-minus-model copula."""
    po = _as_pseudo(pairs)
    emp = kernels.dominated_counts(po.u, po.v, po.u, po.v) / len(po)
    return float(np.sum((emp - copula_cdf(c, po.u, po.v)) ** 2))


def gof_pvalue(family, pairs, bootstrap_n: int = DEFAULT_BOOTSTRAP, seed=None, *, strict: bool = True) -> CopulaModel:
    """Parametric-bootstrap Cramer-von Mises test.

    Every replicate draws from its own child of ``SeedSequence(seed)``, so the
    result does not depend on replicate execution order.
    """
    if bootstrap_n < 100:
        raise ValidationError("bootstrap_n must be >= 100")
    if seed is None:
        raise ValidationError("gof_pvalue requires an explicit seed")
    family = CopulaFamily.parse(family)
    # the replicates are re-ranked, so the observed sample must be too (ranking is idempotent)
    po = _as_pseudo(pairs)
    po = pseudo_observations(po.u, po.v)
    model = fit_theta(family, po, strict=strict)
    s_n = cvm_statistic(model, po)
    n = len(po)
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = ss.spawn(bootstrap_n)
    stats = np.empty(bootstrap_n)
    for i, child in enumerate(children):
        sim = simulate(model, n, child)
        sim_po = pseudo_observations(sim[:, 0], sim[:, 1])
        refit = fit_theta(family, sim_po, strict=False)
        stats[i] = cvm_statistic(refit, sim_po)
    p = (1 + int(np.sum(stats >= s_n))) / (bootstrap_n + 1)
    diag = replace(model.fit, s_n=s_n, p_value=p, bootstrap_n=bootstrap_n, replicates=tuple(stats.tolist()))
    return replace(model, fit=diag)


def select_copula(models: Sequence[CopulaModel], *, alpha: float = 0.05, allow_rejected: bool = False) -> CopulaModel:
    """Highest p-value wins; ties go to the smaller statistic."""
    if not models:
        raise ValidationError("no copula models to select from")
    if any(m.p_value is None for m in models):
        raise ValidationError("every candidate needs a goodness-of-fit p-value")
    best = min(models, key=lambda m: (-m.p_value, m.s_n))
    if best.p_value < alpha and not allow_rejected:
        raise CopulaRejectedError(f"all candidate copulas rejected at the {alpha:g} level")
    return best
