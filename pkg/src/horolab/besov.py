"""Besov seminorms and the cocycle of log boundary derivatives."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from sklearn.base import BaseEstimator

from . import boundary as bd
from ._validation import check_count, check_scalar
from .errors import PreconditionError
from .measure import NuMeasure, nu_sample, rn_nu
from .models import IsometryClass, isometry_classify

CUTOFFS = (1e-2, 3e-3, 1e-3)
N_BOOT = 20
CONVERGED_RATIO = 0.7


@dataclass
class BesovEstimate:
    """Estimates of the p-th power of the seminorm per diagonal cutoff.

    ``value`` is the extrapolated integral; ``norm`` its p-th root.
    """

    p: float
    Q: float
    cutoffs: tuple
    estimates: tuple
    value: float
    ci: tuple
    converged: bool
    status: str
    n: int
    ess: float
    seed: int
    ci_per_cutoff: tuple = field(default=())

    @property
    def norm(self):
        return self.value ** (1.0 / self.p)


def _bootstrap(values, weights, n_total, seed):
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xB007]))
    n = len(values)
    out = np.empty(N_BOOT)
    for b in range(N_BOOT):
        idx = rng.integers(0, n, n)
        out[b] = np.sum(weights[idx] * values[idx]) / n
    return out


def _ladder(values, sample, cutoffs, seed):
    """Estimates, bootstrap CIs and an extrapolated value over the ladder."""
    est, cis = [], []
    for c in cutoffs:
        mask = sample.delta >= c
        v = np.where(mask, values, 0.0)
        est.append(sample.integral(v))
        boot = _bootstrap(v, sample.weight, len(v), seed)
        cis.append((float(np.percentile(boot, 2.5)), float(np.percentile(boot, 97.5))))
    est = np.array(est)
    last = est[-1]
    half = 0.5 * (cis[-1][1] - cis[-1][0])
    d = np.diff(est)
    if len(d) < 2 or np.all(np.abs(d) <= max(half, 1e-15 * abs(last))):
        return est, cis, float(last), True, "converged"
    r = d[-1] / d[-2] if d[-2] != 0 else math.inf
    if 0.0 <= r < CONVERGED_RATIO:
        value = float(last + d[-1] * r / (1.0 - r))
        return est, cis, value, True, "extrapolated"
    return est, cis, float(last), False, "lower bound"


def besov_seminorm(f, p, Q, numeasure, n=100_000, seed=0, cutoffs=CUTOFFS, sample=None):
    """Monte Carlo estimate of the integral of |f(xi) - f(eta)|^p over nu."""
    p = check_scalar(p, "p", min_val=0.0, include_min=False)
    if p < 2.0 * Q - 1e-12:
        raise PreconditionError(f"p = {p} is below 2Q = {2.0 * Q}")
    return _besov(f, p, Q, numeasure, n, seed, cutoffs, sample)


def _besov(f, p, Q, numeasure, n, seed, cutoffs, sample):
    cutoffs = tuple(sorted((max(c, numeasure.cutoff) for c in cutoffs), reverse=True))
    if sample is None:
        nu = NuMeasure(numeasure.model, numeasure.epsilon, numeasure.base, min(cutoffs))
        sample = nu_sample(nu, n, seed)
    vals = np.abs(np.asarray(f(sample.theta1)) - np.asarray(f(sample.theta2))) ** p
    est, cis, value, conv, status = _ladder(vals, sample, cutoffs, seed)
    return BesovEstimate(p, Q, cutoffs, tuple(float(e) for e in est), value, cis[-1],
                         conv, status, len(vals), sample.ess, int(seed), tuple(cis))


def besov_divergence(f, p, Q, numeasure, n=100_000, seed=0, cutoffs=CUTOFFS):
    """Ladder diagnostic without the p >= 2Q precondition (exploratory)."""
    est = _besov(f, p, Q, numeasure, n, seed, cutoffs, None)
    return not est.converged, est


def log_derivative(model, g, epsilon, xi):
    return epsilon * np.log(np.asarray(bd.boundary_derivative(model, g, xi, 1.0)))


def cocycle_value(model, g, epsilon, xi, eta):
    """c_g(xi, eta) = log|g'|(xi) - log|g'|(eta) for delta_{o, eps}."""
    epsilon = check_scalar(epsilon, "epsilon", min_val=0.0, include_min=False)
    xi = np.asarray(bd._angles(xi), dtype=float)
    eta = np.asarray(bd._angles(eta), dtype=float)
    ld = log_derivative(model, g, epsilon, np.concatenate([xi.ravel(), eta.ravel()]))
    c = ld[: xi.size].reshape(xi.shape) - ld[xi.size:].reshape(eta.shape)
    return bd._scalar_or_array(c)


def _check_lp(p, epsilon, n):
    p = check_scalar(p, "p", min_val=0.0, include_min=False)
    epsilon = check_scalar(epsilon, "epsilon", min_val=0.0, include_min=False)
    if p < 2.0 / epsilon - 1e-12:
        raise PreconditionError(f"p = {p} is below 2/eps = {2.0 / epsilon}")
    if check_count(n, "n") < 1000:
        raise PreconditionError("at least 1000 samples are required")
    return p, epsilon


def cocycle_lp_norm(model, g, p, epsilon, n=100_000, seed=0, cutoff=1e-3, sample=None):
    """Integral of |c_g|^p over nu with the cutoff ladder ending at ``cutoff``."""
    p, epsilon = _check_lp(p, epsilon, n)
    nu = NuMeasure(model, epsilon, cutoff=cutoff)
    if sample is None:
        sample = nu_sample(nu, n, seed)
    c = np.asarray(cocycle_value(model, g, epsilon, sample.theta1, sample.theta2))
    cut = tuple(c2 for c2 in CUTOFFS if c2 >= cutoff) or (cutoff,)
    est, cis, value, conv, status = _ladder(np.abs(c) ** p, sample, cut, seed)
    return BesovEstimate(p, 1.0 / epsilon, cut, tuple(float(e) for e in est), value, cis[-1],
                         conv, status, len(c), sample.ess, int(seed), tuple(cis))


@dataclass
class CocycleSeries:
    g: object
    p: float
    epsilon: float
    k: np.ndarray
    estimates: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    n_effective: float
    slope: float
    intercept: float
    r2: float
    increasing: bool
    separated: bool
    verdict: str
    seed: int
    preconditions: dict

    def rows(self):
        for i in range(len(self.k)):
            yield (int(self.k[i]), float(self.estimates[i]), float(self.ci_low[i]),
                   float(self.ci_high[i]), float(self.n_effective))


def growth_preconditions(model, g, epsilon, n_pairs=1000, seed=0, powers=range(-6, 7)):
    """Loxodromic check and the spread of RN_nu over powers of g."""
    cls = isometry_classify(g)
    if cls.kind != IsometryClass.LOXODROMIC:
        raise PreconditionError(f"growth experiment needs a loxodromic element, got {cls.kind.value}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x52]))
    xi = rng.uniform(-np.pi, np.pi, n_pairs)
    eta = rng.uniform(-np.pi, np.pi, n_pairs)
    ls, lo, hi = [], [], []
    for l in powers:
        if l == 0:
            continue
        r = np.asarray(rn_nu(model, g.power(l), epsilon, (xi, eta)))
        ls.append(l)
        lo.append(float(r.min()))
        hi.append(float(r.max()))
    log_range = np.log(np.array(hi) / np.array(lo))
    fit = stats.linregress(ls, log_range)
    q = stats.t.ppf(0.975, len(ls) - 2)
    return {"translation_length": cls.translation_length,
            "attracting_fixed_point": cls.attracting,
            "repelling_fixed_point": cls.repelling,
            "rn_powers": ls, "rn_min": lo, "rn_max": hi,
            "rn_C": float(max(max(hi), 1.0 / min(lo))),
            "rn_trend_slope": float(fit.slope),
            "rn_trend_ci95": (float(fit.slope - q * fit.stderr), float(fit.slope + q * fit.stderr))}


def growth_experiment(model, g, p, epsilon, k_max=8, n=100_000, seed=0, cutoff=1e-3,
                      check_preconditions=True):
    """|| c_{g^k} ||_p^p for k = 1..k_max on one common nu sample."""
    p, epsilon = _check_lp(p, epsilon, n)
    k_max = check_count(k_max, "k_max", minimum=2)
    pre = growth_preconditions(model, g, epsilon, seed=seed) if check_preconditions else \
        {"translation_length": isometry_classify(g).translation_length}
    if isometry_classify(g).kind != IsometryClass.LOXODROMIC:
        raise PreconditionError("growth experiment needs a loxodromic element")
    nu = NuMeasure(model, epsilon, cutoff=cutoff)
    sample = nu_sample(nu, n, seed)
    ks = np.arange(1, k_max + 1)
    est, lo, hi = [], [], []
    for k in ks:
        r = cocycle_lp_norm(model, g.power(int(k)), p, epsilon, n, seed, cutoff, sample=sample)
        est.append(r.estimates[-1])
        lo.append(r.ci[0])
        hi.append(r.ci[1])
    est, lo, hi = map(np.array, (est, lo, hi))
    fit = stats.linregress(ks, est)
    increasing = bool(np.all(np.diff(est[1:]) > 0)) if k_max >= 3 else bool(est[1] > est[0])
    separated = bool(np.all(lo[3:] > hi[2:-1])) if k_max >= 4 else True
    r2 = float(fit.rvalue ** 2)
    yes = increasing and fit.slope > 0 and r2 >= 0.9
    return CocycleSeries(g, p, epsilon, ks, est, lo, hi, sample.ess, float(fit.slope),
                         float(fit.intercept), r2, increasing, separated,
                         "unbounded-growth evidence: yes" if yes else "unbounded-growth evidence: no",
                         int(seed), pre)


class CocycleGrowthEstimator(BaseEstimator):
    """Estimator wrapper around :func:`growth_experiment`; fit takes the
    isometry as X."""

    def __init__(self, model=None, p=2.0, epsilon=1.0, k_max=8, n=100_000, seed=0, cutoff=1e-3):
        self.model = model
        self.p = p
        self.epsilon = epsilon
        self.k_max = k_max
        self.n = n
        self.seed = seed
        self.cutoff = cutoff

    def fit(self, X, y=None):
        s = growth_experiment(self.model, X, self.p, self.epsilon, self.k_max, self.n,
                              self.seed, self.cutoff)
        self.series_ = s
        self.slope_ = s.slope
        self.r2_ = s.r2
        self.verdict_ = s.verdict
        return self
