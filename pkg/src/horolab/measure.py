"""Boundary measures, Ahlfors regularity and the measure nu on pairs."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.optimize import brentq
from sklearn.base import BaseEstimator

from . import boundary as bd
from ._validation import check_count, check_scalar, wrap_angle
from .errors import DomainError, PreconditionError
from .models import ORIGIN, Point

FD_STEP = 1e-4
DEFAULT_CUTOFF = 1e-3
BATCH = 8192
LOG_SPAN = 24.0
DIAG_SPAN = (1e-8, 1.0)
MIX = (0.4, 0.4, 0.2)  # uniform, log-scale near the axis, near-diagonal


def _is_origin(x):
    return x is None or (isinstance(x, Point) and x.x == 0.0 and x.y == 0.0)


def lambda_density(model, x, xi):
    """Density of lambda_x with respect to d theta (origin direction chart)."""
    th = np.asarray(bd._angles(xi), dtype=float)
    if _is_origin(x):
        return bd._scalar_or_array(np.full(th.shape, 1.0 / (2.0 * np.pi)))
    if model.is_hyperbolic:
        return bd._scalar_or_array(np.exp(-bd.busemann_shift(model, x, th)) / (2.0 * np.pi))
    # Jacobian of the map from directions at the origin to directions at x
    rho, tau = bd._point_fermi(x)
    prm = model.params()
    out = np.empty(th.size)
    for i, t in enumerate(th.ravel()):
        phis = []
        for t2 in (t - FD_STEP, t + FD_STEP):
            side, T = bd._end(model, t2, prm)
            phis.append(bd.ray_direction(model, rho, tau, side, T, prm))
        out[i] = abs(math.remainder(phis[1] - phis[0], 2.0 * math.pi)) / (2.0 * FD_STEP)
    return bd._scalar_or_array(out.reshape(th.shape) / (2.0 * np.pi))


def rn_lambda(model, x, y, xi):
    """d lambda_y / d lambda_x at xi."""
    if _same_point(x, y):
        th = np.asarray(bd._angles(xi), dtype=float)
        return bd._scalar_or_array(np.ones(th.shape))
    return bd._scalar_or_array(np.asarray(lambda_density(model, y, xi))
                               / np.asarray(lambda_density(model, x, xi)))


def _same_point(x, y):
    x = ORIGIN if x is None else x
    y = ORIGIN if y is None else y
    return x.x == y.x and x.y == y.y


def _ball_set(model, x, epsilon, xi, r, n_scan=400):
    """Angular offsets t in (-pi, pi] with delta(xi, xi + t) < r, as a list
    of intervals."""
    level = -math.log(r) / epsilon
    t_pos = np.concatenate([np.exp(np.linspace(math.log(1e-14), math.log(0.5), n_scan)),
                            np.linspace(0.5, np.pi, n_scan // 4)[1:]])
    intervals = []
    for sgn in (1.0, -1.0):
        t = sgn * t_pos
        g = np.asarray(bd.gromov_product(model, x, xi, xi + t)) - level
        inside = g > 0.0
        lo = 0.0
        for k in range(len(t)):
            if k > 0 and inside[k] != inside[k - 1]:
                a, b = t_pos[k - 1], t_pos[k]
                root = brentq(lambda s: float(bd.gromov_product(model, x, xi, xi + sgn * s)) - level,
                              a, b, xtol=1e-15, rtol=1e-12)
                if inside[k - 1]:
                    intervals.append((sgn, lo, root))
                else:
                    lo = root
        if inside[-1]:
            intervals.append((sgn, lo, np.pi))
    return intervals


def ball_mass(model, x, epsilon, xi, r):
    """lambda_x of {eta : delta_{x, eps}(xi, eta) < r}."""
    epsilon = check_scalar(epsilon, "epsilon", min_val=0.0, include_min=False)
    r = check_scalar(r, "r", min_val=0.0, include_min=False)
    xi = float(bd._angles(xi))
    x = ORIGIN if x is None else x
    if r >= 1.0 and not np.isfinite(r):
        return 1.0
    intervals = _ball_set(model, x, epsilon, xi, r)
    if _is_origin(x):
        mass = sum(b - a for _, a, b in intervals) / (2.0 * np.pi)
    else:
        from scipy.integrate import quad
        mass = 0.0
        for sgn, a, b in intervals:
            lo, hi = sorted((xi + sgn * a, xi + sgn * b))
            mass += quad(lambda t: float(lambda_density(model, x, t)), lo, hi,
                         epsabs=1e-10, limit=200)[0]
    return float(min(max(mass, 0.0), 1.0))


def ahlfors_fit(model, x, epsilon, r_grid, xi_samples):
    """Pooled log-log regression of ball masses against radius."""
    r = np.asarray(r_grid, dtype=float)
    if r.size < 3 or math.log10(r.max() / r.min()) < 1.5 - 1e-12:
        raise DomainError("radius grid must span at least 1.5 decades")
    xi = np.asarray(bd._angles(xi_samples), dtype=float).ravel()
    masses = np.array([[ball_mass(model, x, epsilon, t, rr) for rr in r] for t in xi])
    if np.any(masses <= 0):
        raise DomainError("empty balls in the fit")
    lr = np.tile(np.log(r), xi.size)
    lm = np.log(masses).ravel()
    fit = stats.linregress(lr, lm)
    ratio = masses / r[None, :] ** (1.0 / epsilon)
    c_hat = float(max(ratio.max(), 1.0 / ratio.min()))
    return {"dimension_estimate": float(fit.slope),
            "C_estimate": c_hat,
            "intercept": float(fit.intercept),
            "fit_r2": float(fit.rvalue ** 2),
            "masses": masses}


class AhlforsEstimator(BaseEstimator):
    """Estimator wrapper around :func:`ahlfors_fit`; X holds centre angles."""

    def __init__(self, model=None, epsilon=1.0, r_grid=None, base=None):
        self.model = model
        self.epsilon = epsilon
        self.r_grid = r_grid
        self.base = base

    def fit(self, X, y=None):
        r = self.r_grid
        if r is None:
            r = np.logspace(-2.0, -0.5, 7) if self.epsilon < 1 else np.logspace(-2.5, -0.5, 9)
        res = ahlfors_fit(self.model, self.base, self.epsilon, r, np.asarray(X, dtype=float).ravel())
        self.dimension_ = res["dimension_estimate"]
        self.constant_ = res["C_estimate"]
        self.fit_r2_ = res["fit_r2"]
        self.masses_ = res["masses"]
        return self


# ---------------------------------------------------------------------------
# nu

@dataclass
class NuSample:
    theta1: np.ndarray
    theta2: np.ndarray
    weight: np.ndarray
    delta: np.ndarray
    n_proposed: int
    cutoff: float
    seed: int

    @property
    def ess(self):
        w = self.weight
        return float(w.sum() ** 2 / np.sum(w * w))

    def integral(self, values):
        """Importance estimate of the nu-integral of the sampled values."""
        return float(np.sum(self.weight * values) / len(self.weight))

    def mean(self, values):
        return float(np.sum(self.weight * values) / np.sum(self.weight))

    def to_csv(self, path):
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["theta1", "theta2", "weight", "delta"])
            for row in zip(self.theta1, self.theta2, self.weight, self.delta):
                wr.writerow([repr(float(v)) for v in row])


@dataclass
class NuMeasure:
    """nu = delta^{-2Q} lambda_x x lambda_x on pairs with delta >= cutoff."""

    model: object
    epsilon: float
    base: Point = ORIGIN
    cutoff: float = DEFAULT_CUTOFF
    Q: float = field(init=False)

    def __post_init__(self):
        self.epsilon = check_scalar(self.epsilon, "epsilon", min_val=0.0, include_min=False)
        self.cutoff = check_scalar(self.cutoff, "cutoff", min_val=0.0, include_min=False)
        self.Q = 1.0 / self.epsilon

    def delta(self, t1, t2):
        return np.asarray(bd.quasimetric(self.model, self.base, self.epsilon, t1, t2))

    def density(self, t1, t2):
        d = self.delta(t1, t2)
        if np.any(d < self.cutoff):
            raise DomainError("pair below the diagonal cutoff")
        return self._density(t1, t2, d)

    def _density(self, t1, t2, d):
        rho1 = np.asarray(lambda_density(self.model, self.base, t1))
        rho2 = np.asarray(lambda_density(self.model, self.base, t2))
        return d ** (-2.0 * self.Q) * rho1 * rho2

    def sample(self, n, seed):
        return nu_sample(self, n, seed)


def nu_density(numeasure, xi, eta):
    return bd._scalar_or_array(numeasure.density(bd._angles(xi), bd._angles(eta)))


def _q1(theta):
    """Per-coordinate proposal density: uniform plus log-uniform in
    s = log tan(|theta|/2) on [-LOG_SPAN, LOG_SPAN]."""
    a = np.abs(theta)
    with np.errstate(divide="ignore"):
        s = np.log(np.tan(0.5 * a))
    logpart = np.where(np.abs(s) <= LOG_SPAN, 1.0 / (4.0 * LOG_SPAN * np.sin(a)), 0.0)
    w_u, w_l, _ = MIX
    return (w_u * (1.0 / (2.0 * np.pi)) + w_l * logpart) / (w_u + w_l)


def _draw1(rng, n):
    w_u, w_l, _ = MIX
    pick = rng.random(n) < w_u / (w_u + w_l)
    uni = rng.uniform(-np.pi, np.pi, n)
    s = rng.uniform(-LOG_SPAN, LOG_SPAN, n)
    side = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    lg = side * 2.0 * np.arctan(np.exp(s))
    return np.where(pick, uni, lg)


def _diag_kernel(t):
    a = np.abs(t)
    lo, hi = DIAG_SPAN
    return np.where((a >= lo) & (a <= hi), 1.0 / (2.0 * math.log(hi / lo) * a), 0.0)


def _proposal_density(t1, t2):
    w_u, w_l, w_d = MIX
    q1 = _q1(t1)
    d = wrap_angle(t2 - t1)
    return (1.0 - w_d) * q1 * _q1(t2) + w_d * q1 * _diag_kernel(d)


def _draw_pairs(rng, n):
    w_d = MIX[2]
    t1 = _draw1(rng, n)
    t2 = _draw1(rng, n)
    lo, hi = DIAG_SPAN
    off = np.exp(rng.uniform(math.log(lo), math.log(hi), n)) * np.where(rng.random(n) < 0.5, -1.0, 1.0)
    diag = rng.random(n) < w_d
    t2 = np.where(diag, wrap_angle(t1 + off), t2)
    return t1, t2


def nu_sample(numeasure, n, seed):
    """n pairs with importance weights for nu (delta >= cutoff).

    Proposals are drawn in fixed-size batches from SeedSequence substreams,
    so the output depends only on (seed, n)."""
    n = check_count(n, "n")
    ss = np.random.SeedSequence(int(seed))
    t1s, t2s, ds = [], [], []
    total = 0
    have = 0
    k = 0
    while have < n:
        (child,) = ss.spawn(1)
        rng = np.random.default_rng(child)
        t1, t2 = _draw_pairs(rng, BATCH)
        d = numeasure.delta(t1, t2)
        keep = (d >= numeasure.cutoff) & (t1 != t2)
        need = n - have
        idx = np.flatnonzero(keep)
        if idx.size > need:
            # count proposals only up to the last one used
            last = idx[need - 1]
            total += last + 1
            idx = idx[:need]
        else:
            total += BATCH
        t1s.append(t1[idx])
        t2s.append(t2[idx])
        ds.append(d[idx])
        have += idx.size
        k += 1
        if k > 10_000:
            raise PreconditionError("cutoff rejects almost every proposal")
    t1 = np.concatenate(t1s)
    t2 = np.concatenate(t2s)
    d = np.concatenate(ds)
    w = numeasure._density(t1, t2, d) / _proposal_density(t1, t2) * (n / total)
    return NuSample(t1, t2, w, d, total, numeasure.cutoff, int(seed))


def rn_nu(model, g, epsilon, pair, mode="jacobian"):
    """RN_nu(g)(xi, eta) = delta(g xi, g eta)^{-2Q} R(xi) R(eta) delta(xi, eta)^{2Q}.

    ``mode="jacobian"``: R is the Radon-Nikodym derivative of lambda_o under g;
    ``mode="derivative"``: R = |g'|^{1/eps}.
    """
    epsilon = check_scalar(epsilon, "epsilon", min_val=0.0, include_min=False)
    xi, eta = pair
    xi = np.asarray(bd._angles(xi), dtype=float)
    eta = np.asarray(bd._angles(eta), dtype=float)
    Q = 1.0 / epsilon
    gx = bd.boundary_map(model, g, xi)
    ge = bd.boundary_map(model, g, eta)
    p0 = np.asarray(bd.gromov_product(model, ORIGIN, xi, eta))
    p1 = np.asarray(bd.gromov_product(model, ORIGIN, gx, ge))
    if mode == "jacobian":
        lr = np.log(bd.boundary_map_jacobian(model, g, xi)) + np.log(bd.boundary_map_jacobian(model, g, eta))
    elif mode == "derivative":
        lr = Q * (np.log(bd.boundary_derivative(model, g, xi, epsilon))
                  + np.log(bd.boundary_derivative(model, g, eta, epsilon)))
    else:
        raise DomainError(f"unknown mode {mode!r}")
    # delta^{-2Q} = exp(2 (.|.)) independently of eps
    return bd._scalar_or_array(np.exp(2.0 * (p1 - p0) + lr))
