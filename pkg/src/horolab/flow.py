"""Horocycle curvature along the geodesic flow.

m(v) is the geodesic curvature of the horocycle through the foot of v
centred at the forward end of v.  It is the stable solution of
u' = -u^2 - K along the geodesic and is approximated by integrating from
gamma_v(-R) with u = 0.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np
from scipy import stats
from sklearn.base import BaseEstimator

from . import _kernels as kern
from ._validation import check_count, check_scalar
from .errors import ConvergenceError, DomainError
from .models import UnitTangent, from_fermi, tangent_to_fermi

DEFAULT_HORIZON = 15.0
DEFAULT_TOL = 1e-10
CALIBRATION_HORIZON = 5.0


@dataclass(frozen=True)
class RiccatiResult:
    value: float
    horizon: float
    est_truncation_error: float
    solver_tolerance: float


def _state(v):
    if isinstance(v, UnitTangent):
        return tangent_to_fermi(v)
    rho, tau, phi = v
    return float(rho), float(tau), float(phi)


def _prm(model, tol):
    tol = check_scalar(tol, "tol", min_val=0.0, include_min=False)
    return model.params(rtol=tol, atol=tol * 1e-2)


_C0_CACHE: dict = {}


def truncation_constant(model):
    """Empirical C0 with |m_R - m| <= C0 exp(-2aR), calibrated from horizons
    R and 2R on a fan of directions."""
    key = tuple(model.to_descriptor().items())
    if key not in _C0_CACHE:
        R = CALIBRATION_HORIZON
        ang = np.linspace(0.0, 2.0 * np.pi, 16, endpoint=False)
        states = np.column_stack([np.full_like(ang, 0.3), np.zeros_like(ang), ang])
        prm = model.params()
        m1 = kern.riccati_horizon_many(states, R, prm)
        m2 = kern.riccati_horizon_many(states, 2.0 * R, prm)
        _C0_CACHE[key] = float(np.max(np.abs(m1 - m2))) * math.exp(2.0 * model.a * R)
    return _C0_CACHE[key]


def truncation_bound(model, horizon):
    return truncation_constant(model) * math.exp(-2.0 * model.a * horizon)


def riccati_mean_curvature(model, v, horizon=DEFAULT_HORIZON, tol=DEFAULT_TOL):
    """u(R) for u' = -u^2 - K(gamma_v(t - R)), u(0) = 0."""
    horizon = check_scalar(horizon, "horizon", min_val=0.0, include_min=False)
    prm = _prm(model, tol)
    val = kern.riccati_horizon(*_state(v), horizon, prm)
    if not np.isfinite(val):
        raise ConvergenceError("Riccati integration failed", math.nan)
    return RiccatiResult(float(val), float(horizon), truncation_bound(model, horizon), float(tol))


def mean_curvature_many(model, states, horizon=DEFAULT_HORIZON, tol=DEFAULT_TOL):
    """Vectorised m_R over an (n, 3) array of Fermi states."""
    states = np.ascontiguousarray(np.asarray(states, dtype=float).reshape(-1, 3))
    horizon = check_scalar(horizon, "horizon", min_val=0.0, include_min=False)
    out = kern.riccati_horizon_many(states, horizon, _prm(model, tol))
    if not np.all(np.isfinite(out)):
        raise ConvergenceError("Riccati integration failed", math.nan)
    return out


_FLIP_GRID = 2 ** 36


def _flip_pair(state):
    # snap phi mod pi to a fine grid so that v and -v land on the same pair
    rho, tau, phi = state
    k = round((phi % math.pi) / math.pi * _FLIP_GRID) % _FLIP_GRID
    p0 = k * (math.pi / _FLIP_GRID)
    return (rho, tau, p0), (rho, tau, p0 + math.pi)


def f_symmetric(model, v, horizon=DEFAULT_HORIZON, tol=DEFAULT_TOL):
    """f(v) = (m(v) + m(-v)) / 2, evaluated on a canonical pair so that
    f(v) and f(-v) are bit-identical."""
    s0, s1 = _flip_pair(_state(v))
    m = mean_curvature_many(model, np.array([s0, s1]), horizon, tol)
    return 0.5 * (m[0] + m[1])


@dataclass(frozen=True)
class JacobiResult:
    times: np.ndarray
    J: np.ndarray
    dJ: np.ndarray


def jacobi_solve(model, v, J0, dJ0, T, n_samples=101, tol=DEFAULT_TOL):
    """J'' + K(gamma_v(t)) J = 0 sampled on [0, T] (or [T, 0])."""
    T = check_scalar(T, "T")
    if J0 == 0.0 and dJ0 == 0.0:
        raise DomainError("initial data must not both vanish")
    n = check_count(n_samples, "n_samples", minimum=2)
    rho, tau, phi = _state(v)
    sgn = 1.0
    if T < 0:
        phi, sgn = phi + math.pi, -1.0
    times = np.linspace(0.0, abs(T), n)
    out = np.empty((n, 2))
    kern.jacobi_samples(rho, tau, phi, float(J0), sgn * float(dJ0), times, _prm(model, tol), out)
    if np.any(~np.isfinite(out)):
        raise ConvergenceError("Jacobi integration failed", math.nan)
    return JacobiResult(sgn * times, out[:, 0], sgn * out[:, 1])


def riccati_jacobi_paths(model, v, horizon, times, tol=DEFAULT_TOL):
    """(u(t), J'(t)/J(t)) at times >= 0 from gamma_v(-R); both start with
    u = 0 and J = 1, J' = 0."""
    times = np.asarray(times, dtype=float)
    out = np.empty((times.size, 2))
    kern.riccati_path(*_state(v), float(horizon), times, _prm(model, tol), out)
    return out[:, 0], out[:, 1]


def weight_integrals(model, v, t, horizon=DEFAULT_HORIZON, tol=DEFAULT_TOL):
    """(int_0^t m(gamma'), int_0^t m(-gamma')) along gamma_v."""
    t = check_scalar(t, "t", min_val=0.0)
    out = np.empty(6)
    kern.weight_integrals(*_state(v), t, horizon, _prm(model, tol), out)
    if out[5] == kern.ST_FAIL:
        raise ConvergenceError("weight integration failed", math.nan)
    return float(out[0]), float(out[1])


def symmetry_defect(model, v, t, horizon=DEFAULT_HORIZON, tol=DEFAULT_TOL):
    """|int_0^t m(gamma') - int_0^t m(-gamma')|."""
    t = check_scalar(t, "t", min_val=0.0, include_min=False)
    a, b = weight_integrals(model, v, t, horizon, tol)
    return abs(a - b)


def symmetry_defects(model, states, t, horizon=DEFAULT_HORIZON, tol=DEFAULT_TOL):
    states = np.ascontiguousarray(np.asarray(states, dtype=float).reshape(-1, 3))
    res = kern.weight_integrals_many(states, float(t), float(horizon), _prm(model, tol))
    if np.any(res[:, 5] == kern.ST_FAIL):
        raise ConvergenceError("weight integration failed", math.nan)
    return np.abs(res[:, 0] - res[:, 1])


def holder_exponent(model, base=None, n_pairs=500, angle_range=(1e-3, 0.5),
                    horizon=DEFAULT_HORIZON, seed=0, degenerate_tol=1e-11):
    """Regress log|m(v) - m(w)| on log angle(v, w) over pairs at one point.

    Returns a dict with exponent_estimate, fit_r2, stderr, ci95 and
    degenerate (set when the field is constant to solver precision).
    """
    lo, hi = angle_range
    if not (0.0 < lo < hi < math.pi / 4):
        raise DomainError("angle_range must lie in (0, pi/4)")
    n = check_count(n_pairs, "n_pairs", minimum=3)
    rho, tau = (0.5, 0.0) if base is None else _base_fermi(base)
    rng = np.random.default_rng(seed)
    phi = rng.uniform(0.0, 2.0 * np.pi, n)
    dang = np.exp(rng.uniform(math.log(lo), math.log(hi), n))
    sv = np.column_stack([np.full(n, rho), np.full(n, tau), phi])
    sw = np.column_stack([np.full(n, rho), np.full(n, tau), phi + dang])
    m = mean_curvature_many(model, np.vstack([sv, sw]), horizon)
    diff = np.abs(m[:n] - m[n:])
    res = {"n_pairs": n, "max_difference": float(diff.max())}
    keep = diff > degenerate_tol
    if diff.max() <= degenerate_tol or np.count_nonzero(keep) < 3:
        res.update(degenerate=True, reason="degenerate: constant field",
                   exponent_estimate=math.nan, fit_r2=math.nan, stderr=math.nan,
                   ci95=(math.nan, math.nan))
        return res
    x = np.log(dang[keep])
    y = np.log(diff[keep])
    fit = stats.linregress(x, y)
    q = stats.t.ppf(0.975, np.count_nonzero(keep) - 2)
    res.update(degenerate=False, reason="", exponent_estimate=float(fit.slope),
               fit_r2=float(fit.rvalue ** 2), stderr=float(fit.stderr),
               ci95=(float(fit.slope - q * fit.stderr), float(fit.slope + q * fit.stderr)))
    return res


def _base_fermi(base):
    from .models import to_fermi
    return to_fermi(base)


class HolderExponentEstimator(BaseEstimator):
    """Estimator wrapper around :func:`holder_exponent`."""

    def __init__(self, model=None, n_pairs=500, angle_range=(1e-3, 0.5),
                 horizon=DEFAULT_HORIZON, seed=0):
        self.model = model
        self.n_pairs = n_pairs
        self.angle_range = angle_range
        self.horizon = horizon
        self.seed = seed

    def fit(self, X=None, y=None):
        """X: optional base point (Point); defaults to distance 0.5 from the axis."""
        base = X if X is not None else from_fermi(0.5, 0.0)
        r = holder_exponent(self.model, base, self.n_pairs, self.angle_range,
                            self.horizon, self.seed)
        self.exponent_ = r["exponent_estimate"]
        self.fit_r2_ = r["fit_r2"]
        self.stderr_ = r["stderr"]
        self.ci95_ = r["ci95"]
        self.degenerate_ = r["degenerate"]
        return self


class MeanCurvatureField:
    """m and f with a memo keyed by the exact Fermi state."""

    def __init__(self, model, horizon=DEFAULT_HORIZON, cache=True, tol=DEFAULT_TOL):
        self.model = model
        self.horizon = float(horizon)
        self.tol = float(tol)
        self.cache = bool(cache)
        self._memo: dict = {}
        self._lock = threading.Lock()

    def m(self, v):
        s = _state(v)
        if self.cache:
            with self._lock:
                hit = self._memo.get(s)
            if hit is not None:
                return hit
        val = riccati_mean_curvature(self.model, s, self.horizon, self.tol).value
        if self.cache:
            with self._lock:
                self._memo[s] = val
        return val

    def f(self, v):
        s0, s1 = _flip_pair(_state(v))
        return 0.5 * (self.m(s0) + self.m(s1))
