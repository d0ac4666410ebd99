"""Univariate marginals: beta, gamma, half-Gaussian and Gaussian mixture.

Densities and CDFs are vectorised over ``x``. Fitting is maximum likelihood;
beta and gamma use a safeguarded Newton iteration from method-of-moments
starting values, the half-Gaussian is closed form, and the mixture uses EM
seeded by k-means++ / Lloyd clustering.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import special

from .errors import DegenerateDataError, FitError, SingularComponentError, ValidationError
from .ingestion import MIN_FIT_LENGTH

__all__ = [
    "Family",
    "FittedMarginal",
    "EMResult",
    "pdf",
    "logpdf",
    "cdf",
    "mean",
    "interval_probability",
    "fit_mle",
    "fit_gmm",
    "em_gaussian_mixture",
    "kmeans_1d",
    "select_by_aic",
    "sample",
    "ZERO_CLAMP",
]

SCHEMA_VERSION = 1
ZERO_CLAMP = 1e-9
SCALE_INFLATION = 1e-6
MAX_NEWTON_ITER = 200
NEWTON_RTOL = 1e-10
EM_TOL = 1e-8
EM_MAX_ITER = 500
EM_RESTARTS = 8
SIGMA_FLOOR = 1e-4


class Family(str, Enum):
    BETA = "Beta"
    GAMMA = "Gamma"
    HALF_GAUSSIAN = "HalfGaussian"
    GAUSSIAN_MIXTURE = "GaussianMixture"

    @classmethod
    def parse(cls, value) -> "Family":
        if isinstance(value, cls):
            return value
        for member in cls:
            if str(value).lower() in (member.value.lower(), member.name.lower()):
                return member
        raise ValidationError(f"unknown distribution family {value!r}")


@dataclass(frozen=True)
class FittedMarginal:
    """A fitted univariate model.

    ``log_likelihood`` and ``aic`` live on the scale the model was fitted on.
    When a beta fit rescaled the data, ``scale = (offset, divisor)`` and the
    ``*_data`` properties give the same quantities in the original units, which
    is what cross-family comparison needs.
    """

    family: Family
    params: tuple[float, ...]
    log_likelihood: float
    aic: float
    n: int
    scale: tuple[float, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if self.scale is not None:
            object.__setattr__(self, "scale", (float(self.scale[0]), float(self.scale[1])))
            if not self.scale[1] > 0:
                raise ValidationError("scale divisor must be positive")
        _check_params(self.family, self.params)

    @property
    def n_params(self) -> int:
        if self.family is Family.GAUSSIAN_MIXTURE:
            return 3 * self.components - 1
        return {Family.BETA: 2, Family.GAMMA: 2, Family.HALF_GAUSSIAN: 1}[self.family]

    @property
    def components(self) -> int:
        if self.family is not Family.GAUSSIAN_MIXTURE:
            return 1
        return len(self.params) // 3

    def mixture(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        c = self.components
        p = np.asarray(self.params)
        return p[:c], p[c : 2 * c], p[2 * c :]

    @property
    def log_jacobian(self) -> float:
        return 0.0 if self.scale is None else self.n * math.log(self.scale[1])

    @property
    def log_likelihood_data(self) -> float:
        return self.log_likelihood - self.log_jacobian

    @property
    def aic_data(self) -> float:
        return 2 * self.n_params - 2 * self.log_likelihood_data

    def to_dict(self) -> dict:
        return {
            "schema": "msdi.marginal",
            "version": SCHEMA_VERSION,
            "family": self.family.value,
            "params": list(self.params),
            "scale": None if self.scale is None else list(self.scale),
            "n": self.n,
            "log_likelihood": self.log_likelihood,
            "aic": self.aic,
            "aic_data": self.aic_data,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FittedMarginal":
        if doc.get("schema") != "msdi.marginal":
            raise ValidationError("not a marginal document")
        if doc.get("version") != SCHEMA_VERSION:
            raise ValidationError(f"unsupported marginal document version {doc.get('version')}")
        scale = doc.get("scale")
        return cls(
            family=Family.parse(doc["family"]),
            params=tuple(doc["params"]),
            log_likelihood=doc["log_likelihood"],
            aic=doc["aic"],
            n=int(doc["n"]),
            scale=None if scale is None else tuple(scale),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "FittedMarginal":
        return cls.from_dict(json.loads(text))


def _check_params(family: Family, params: Sequence[float]):
    p = np.asarray(params, dtype=float)
    if not np.all(np.isfinite(p)):
        raise ValidationError(f"{family.value}: non-finite parameter")
    if family in (Family.BETA, Family.GAMMA):
        if p.size != 2 or np.any(p <= 0):
            raise ValidationError(f"{family.value}: expected two positive parameters, got {tuple(p)}")
    elif family is Family.HALF_GAUSSIAN:
        if p.size != 1 or p[0] <= 0:
            raise ValidationError(f"HalfGaussian: sigma must be positive, got {tuple(p)}")
    else:
        if p.size == 0 or p.size % 3:
            raise ValidationError("GaussianMixture: params must be (weights, means, stds)")
        c = p.size // 3
        w, sd = p[:c], p[2 * c :]
        if np.any(w <= 0) or (c > 1 and np.any(w >= 1)) or abs(w.sum() - 1) > 1e-9:
            raise ValidationError(f"GaussianMixture: bad weights {tuple(w)}")
        if np.any(sd <= 0):
            raise ValidationError("GaussianMixture: stds must be positive")


def make_marginal(family, params, n=0, scale=None) -> FittedMarginal:
    """Build a marginal from known parameters (no data, so log-likelihood is 0)."""
    family = Family.parse(family)
    m = FittedMarginal(family, tuple(params), 0.0, 0.0, n, scale)
    return FittedMarginal(family, m.params, 0.0, 2.0 * m.n_params, n, scale)


# ---------------------------------------------------------------- evaluation


def _to_unit(m: FittedMarginal, x):
    x = np.asarray(x, dtype=float)
    if m.scale is None:
        return x
    offset, divisor = m.scale
    return (x - offset) / divisor


def _wrap(result, x):
    return float(result) if np.ndim(x) == 0 else result


def logpdf(m: FittedMarginal, x):
    z = _to_unit(m, x)
    fam, p = m.family, m.params
    with np.errstate(divide="ignore", invalid="ignore"):
        if fam is Family.BETA:
            a, b = p
            inside = (z >= 0) & (z <= 1)
            zc = np.clip(z, 0.0, 1.0)
            out = special.xlogy(a - 1, zc) + special.xlog1py(b - 1, -zc) - special.betaln(a, b)
            out = np.where(inside, out, -np.inf)
        elif fam is Family.GAMMA:
            k, theta = p
            zc = np.maximum(z, 0.0)
            out = special.xlogy(k - 1, zc) - zc / theta - k * math.log(theta) - special.gammaln(k)
            out = np.where(z >= 0, out, -np.inf)
        elif fam is Family.HALF_GAUSSIAN:
            (sigma,) = p
            out = 0.5 * math.log(2 / math.pi) - math.log(sigma) - 0.5 * (z / sigma) ** 2
            out = np.where(z >= 0, out, -np.inf)
        else:
            w, mu, sd = m.mixture()
            zz = np.asarray(z)[..., None]
            comp = np.log(w) - np.log(sd) - 0.5 * math.log(2 * math.pi) - 0.5 * ((zz - mu) / sd) ** 2
            out = special.logsumexp(comp, axis=-1)
    return _wrap(out, x)


def pdf(m: FittedMarginal, x):
    """Density at ``x`` (original units), expressed per unit of the fitted scale."""
    return _wrap(np.exp(logpdf(m, np.asarray(x, dtype=float))), x)


def cdf(m: FittedMarginal, x):
    z = _to_unit(m, x)
    fam, p = m.family, m.params
    if fam is Family.BETA:
        out = special.betainc(p[0], p[1], np.clip(z, 0.0, 1.0))
    elif fam is Family.GAMMA:
        out = special.gammainc(p[0], np.maximum(z, 0.0) / p[1])
    elif fam is Family.HALF_GAUSSIAN:
        out = special.erf(np.maximum(z, 0.0) / (p[0] * math.sqrt(2.0)))
    else:
        w, mu, sd = m.mixture()
        out = np.sum(w * special.ndtr((np.asarray(z)[..., None] - mu) / sd), axis=-1)
        out = np.clip(out, 0.0, 1.0)
    return _wrap(out, x)


def mean(m: FittedMarginal) -> float:
    """Analytic mean on the fitted scale (a beta fit reports the unit-interval mean)."""
    p = m.params
    if m.family is Family.BETA:
        return p[0] / (p[0] + p[1])
    if m.family is Family.GAMMA:
        return p[0] * p[1]
    if m.family is Family.HALF_GAUSSIAN:
        return p[0] * math.sqrt(2 / math.pi)
    w, mu, _ = m.mixture()
    return float(np.dot(w, mu))


def interval_probability(m: FittedMarginal, lo: float, hi: float) -> float:
    """P(lo < X <= hi) with bounds in original data units."""
    if not lo < hi:
        raise ValidationError(f"interval requires lo < hi, got ({lo}, {hi})")
    return float(cdf(m, hi) - cdf(m, lo))


def sample(m: FittedMarginal, size: int, seed=None) -> np.ndarray:
    rng = np.random.default_rng(seed)
    p = m.params
    if m.family is Family.BETA:
        z = rng.beta(p[0], p[1], size)
    elif m.family is Family.GAMMA:
        z = rng.gamma(p[0], p[1], size)
    elif m.family is Family.HALF_GAUSSIAN:
        z = np.abs(rng.normal(0.0, p[0], size))
    else:
        w, mu, sd = m.mixture()
        k = rng.choice(len(w), size=size, p=w)
        z = rng.normal(mu[k], sd[k])
    if m.scale is not None:
        z = z * m.scale[1] + m.scale[0]
    return z


# ---------------------------------------------------------------- fitting


def _validate_sample(data, min_length=MIN_FIT_LENGTH) -> np.ndarray:
    x = np.asarray(data, dtype=float).ravel()
    if x.size < min_length:
        raise ValidationError(f"need at least {min_length} observations, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValidationError("data contain non-finite values")
    if np.ptp(x) == 0:
        raise DegenerateDataError("data have zero variance")
    return x


def _beta_scale(x, scale):
    if scale == "auto":
        if x.min() > 0 and x.max() < 1:
            return None
        scale = "max"
    if scale == "max":
        return (0.0, float(x.max()) * (1 + SCALE_INFLATION))
    if scale is None:
        return None
    return (float(scale[0]), float(scale[1]))


def _beta_newton(s1, s2, a, b):
    """Maximise (a-1) s1 + (b-1) s2 - ln B(a, b) over a, b > 0."""

    def ll(a, b):
        return (a - 1) * s1 + (b - 1) * s2 - special.betaln(a, b)

    cur = ll(a, b)
    for _ in range(MAX_NEWTON_ITER):
        dab = special.digamma(a + b)
        g = np.array([s1 - special.digamma(a) + dab, s2 - special.digamma(b) + dab])
        tab = special.polygamma(1, a + b)
        h = np.array([[tab - special.polygamma(1, a), tab], [tab, tab - special.polygamma(1, b)]])
        step = -np.linalg.solve(h, g)
        t = 1.0
        while True:
            na, nb = a + t * step[0], b + t * step[1]
            if na > 0 and nb > 0:
                new = ll(na, nb)
                if new >= cur - 1e-15 * abs(cur) or t < 1e-12:
                    break
            t *= 0.5
        rel = max(abs(na - a) / a, abs(nb - b) / b)
        a, b, cur = na, nb, new
        if rel < NEWTON_RTOL:
            return a, b
    raise FitError("beta MLE did not converge within the iteration cap")


def _gamma_newton(x):
    logmean = math.log(x.mean())
    s = logmean - np.mean(np.log(x))
    if s <= 0:
        raise DegenerateDataError("gamma MLE undefined: data have no spread on the log scale")
    # method-of-moments start, fall back to the Minka closed-form approximation
    k = x.mean() ** 2 / x.var()
    if not np.isfinite(k) or k <= 0:
        k = (3 - s + math.sqrt((s - 3) ** 2 + 24 * s)) / (12 * s)
    for _ in range(MAX_NEWTON_ITER):
        f = math.log(k) - special.digamma(k) - s
        fp = 1 / k - special.polygamma(1, k)
        new = k - f / fp
        if new <= 0:
            new = k / 2
        rel = abs(new - k) / k
        k = new
        if rel < NEWTON_RTOL:
            return k, x.mean() / k
    raise FitError("gamma MLE did not converge within the iteration cap")


def fit_mle(family, data, *, scale="auto", seed=None, components=2) -> FittedMarginal:
    """Maximum-likelihood fit of one family.

    For Beta, ``scale`` controls the affine map to the unit interval: ``"auto"``
    leaves data already inside (0, 1) untouched and otherwise divides by
    ``max * (1 + 1e-6)``; ``"max"`` forces that rule; a ``(offset, divisor)``
    pair is used verbatim. Exact zeros (after scaling) are clamped to 1e-9 for
    Beta and Gamma. GaussianMixture is forwarded to :func:`fit_gmm`.
    """
    family = Family.parse(family)
    if family is Family.GAUSSIAN_MIXTURE:
        if seed is None:
            raise ValidationError("GaussianMixture fitting requires a seed")
        return fit_gmm(data, components, seed)
    x = _validate_sample(data)
    if family is not Family.BETA and np.any(x < 0):
        raise ValidationError(f"{family.value} requires non-negative data")
    n = x.size

    if family is Family.BETA:
        sc = _beta_scale(x, scale)
        z = x if sc is None else (x - sc[0]) / sc[1]
        if np.any(z < 0) or np.any(z >= 1):
            raise ValidationError("beta data must lie in [0, 1) after scaling")
        z = np.maximum(z, ZERO_CLAMP)
        m1, v = z.mean(), z.var()
        common = m1 * (1 - m1) / v - 1
        a0, b0 = (m1 * common, (1 - m1) * common) if common > 0 else (1.0, 1.0)
        a, b = _beta_newton(np.mean(np.log(z)), np.mean(np.log1p(-z)), a0, b0)
        params = (a, b)
        ll = float(np.sum((a - 1) * np.log(z) + (b - 1) * np.log1p(-z)) - n * special.betaln(a, b))
    elif family is Family.GAMMA:
        sc = None
        z = np.maximum(x, ZERO_CLAMP)
        k, theta = _gamma_newton(z)
        params = (k, theta)
        ll = float(np.sum((k - 1) * np.log(z) - z / theta) - n * (k * math.log(theta) + special.gammaln(k)))
    else:
        sc = None
        sigma = math.sqrt(float(np.mean(x * x)))
        params = (sigma,)
        ll = float(n * (0.5 * math.log(2 / math.pi) - math.log(sigma)) - np.sum(x * x) / (2 * sigma * sigma))

    k_par = 1 if family is Family.HALF_GAUSSIAN else 2
    return FittedMarginal(family, params, ll, 2 * k_par - 2 * ll, n, sc)


# ---------------------------------------------------------------- mixture


@dataclass
class EMResult:
    weights: np.ndarray
    means: np.ndarray
    stds: np.ndarray
    log_likelihood: float
    trace: list = field(default_factory=list)
    converged: bool = False
    n_iter: int = 0


def _mixture_loglik(x, w, mu, sd):
    comp = np.log(w) - np.log(sd) - 0.5 * math.log(2 * math.pi) - 0.5 * ((x[:, None] - mu) / sd) ** 2
    total = special.logsumexp(comp, axis=1)
    return comp, total


def em_gaussian_mixture(data, weights, means, stds, *, tol=EM_TOL, max_iter=EM_MAX_ITER, sigma_floor=0.0) -> EMResult:
    """Run EM from the given start; stop when the log-likelihood gain drops below ``tol``.

    ``trace`` holds the log-likelihood of every visited parameter set.
    Raises :class:`SingularComponentError` if a component std falls below
    ``sigma_floor`` or a weight collapses to zero.
    """
    x = np.asarray(data, dtype=float)
    w = np.asarray(weights, dtype=float).copy()
    mu = np.asarray(means, dtype=float).copy()
    sd = np.asarray(stds, dtype=float).copy()
    comp, total = _mixture_loglik(x, w, mu, sd)
    ll = float(total.sum())
    trace = [ll]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        resp = np.exp(comp - total[:, None])
        nk = resp.sum(axis=0)
        if np.any(nk <= 0):
            raise SingularComponentError("mixture component lost all responsibility")
        w = nk / x.size
        mu = (resp * x[:, None]).sum(axis=0) / nk
        var = (resp * (x[:, None] - mu) ** 2).sum(axis=0) / nk
        sd = np.sqrt(var)
        if np.any(~(sd > sigma_floor)):
            raise SingularComponentError(f"component std collapsed below {sigma_floor:g}")
        comp, total = _mixture_loglik(x, w, mu, sd)
        new = float(total.sum())
        trace.append(new)
        gain = new - ll
        ll = new
        if gain < tol:
            converged = True
            break
    return EMResult(w, mu, sd, ll, trace, converged, it)


def kmeans_1d(x, k, rng, max_iter=100):
    """k-means++ seeding followed by Lloyd iterations; returns (centers, labels)."""
    x = np.asarray(x, dtype=float)
    centers = [x[rng.integers(x.size)]]
    for _ in range(1, k):
        d2 = np.min((x[:, None] - np.asarray(centers)) ** 2, axis=1)
        total = d2.sum()
        if total == 0:
            centers.append(x[rng.integers(x.size)])
        else:
            centers.append(x[rng.choice(x.size, p=d2 / total)])
    centers = np.sort(np.asarray(centers))
    labels = np.argmin(np.abs(x[:, None] - centers), axis=1)
    for _ in range(max_iter):
        new = np.array([x[labels == j].mean() if np.any(labels == j) else centers[j] for j in range(k)])
        new_labels = np.argmin(np.abs(x[:, None] - new), axis=1)
        centers = new
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return centers, labels


def fit_gmm(data, components: int = 2, seed=None, *, restarts: int = EM_RESTARTS) -> FittedMarginal:
    """Gaussian mixture by EM, best of ``restarts`` k-means-seeded runs.

    Components are returned sorted by mean. ``seed`` is mandatory so every fit
    is reproducible.
    """
    if seed is None:
        raise ValidationError("fit_gmm requires an explicit seed")
    if components < 1:
        raise ValidationError("components must be >= 1")
    x = _validate_sample(data, min_length=12 * components)
    floor = SIGMA_FLOOR * float(x.std())
    rng = np.random.default_rng(seed)
    best = None
    failures = 0
    for _ in range(restarts):
        centers, labels = kmeans_1d(x, components, rng)
        w0 = np.array([np.mean(labels == j) for j in range(components)])
        sd0 = np.array([x[labels == j].std() if np.sum(labels == j) > 1 else 0.0 for j in range(components)])
        fallback = x.std() / components
        sd0 = np.where(sd0 > floor, sd0, fallback)
        w0 = np.where(w0 > 0, w0, 1.0 / x.size)
        w0 = w0 / w0.sum()
        try:
            res = em_gaussian_mixture(x, w0, centers, sd0, sigma_floor=floor)
        except SingularComponentError:
            failures += 1
            continue
        if best is None or res.log_likelihood > best.log_likelihood:
            best = res
    if best is None:
        raise SingularComponentError(f"all {restarts} EM restarts hit a singular component")
    order = np.argsort(best.means, kind="stable")
    params = tuple(best.weights[order]) + tuple(best.means[order]) + tuple(best.stds[order])
    k_par = 3 * components - 1
    return FittedMarginal(
        Family.GAUSSIAN_MIXTURE, params, best.log_likelihood, 2 * k_par - 2 * best.log_likelihood, x.size
    )


# ---------------------------------------------------------------- selection


def select_by_aic(candidates: Sequence[FittedMarginal]) -> FittedMarginal:
    """Minimum AIC in original data units; ties go to fewer parameters, then list order."""
    if not candidates:
        raise ValidationError("no candidates to select from")
    ranked = sorted(enumerate(candidates), key=lambda ic: (ic[1].aic_data, ic[1].n_params, ic[0]))
    return ranked[0][1]
