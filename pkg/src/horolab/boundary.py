"""Ideal boundary: Busemann data, weighted Gromov products, cross ratios,
quasimetrics, boundary actions and boundary derivatives.

Boundary points are angles theta of the initial direction at the origin.
Internally a point is also described by (side, T): side +1/-1 for the two
halves of the circle cut by the axis and T the Fermi position of the end,
so that the point sits at x = -side * exp(T) on the boundary of the upper
half plane.  Both models are invariant under translation along the axis
and under the reflections rho -> -rho, tau -> -tau.  Lines between two
boundary points therefore come in three one-parameter families (crossing
the axis, staying on one side, asymptotic to the axis), and products based
at the origin reduce to one-dimensional tables in those parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq
from sklearn.base import BaseEstimator

from . import _kernels as kern
from ._validation import as_angles, check_count, check_scalar, wrap_angle
from .errors import ConvergenceError, DomainError, PreconditionError
from .models import (
    ORIGIN, Point, check_isometry, from_fermi, mobius_disk, to_fermi, fermi_distance,
)

S_MAX = 14.0
S_STEP = 0.02
RHO_MIN_LINE = 1e-4
N_LINE = 320
DEFAULT_HORIZON = 20.0
DEFAULT_RICCATI_HORIZON = 15.0


@dataclass(frozen=True)
class BoundaryPoint:
    """Ideal point given by its direction angle at the origin."""

    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", float(np.remainder(self.theta, 2.0 * np.pi)))

    def __eq__(self, other):
        if not isinstance(other, BoundaryPoint):
            return NotImplemented
        d = abs(math.remainder(self.theta - other.theta, 2.0 * math.pi))
        return d <= 1e-12

    def __hash__(self):
        return hash(round(self.theta, 11))


class _Spline:
    """Cubic spline with linear continuation past the table ends."""

    def __init__(self, x, y):
        self.x0, self.x1 = float(x[0]), float(x[-1])
        self.cs = CubicSpline(x, y)
        d = self.cs.derivative()
        self.y0, self.y1 = float(y[0]), float(y[-1])
        self.d0, self.d1 = float(d(self.x0)), float(d(self.x1))
        self.dcs = d

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        xi = np.clip(x, self.x0, self.x1)
        out = self.cs(xi)
        out = np.where(x < self.x0, self.y0 + self.d0 * (x - self.x0), out)
        return np.where(x > self.x1, self.y1 + self.d1 * (x - self.x1), out)

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        xi = np.clip(x, self.x0, self.x1)
        out = self.dcs(xi)
        out = np.where(x < self.x0, self.d0, out)
        return np.where(x > self.x1, self.d1, out)


def _check_rays(res):
    bad = res[:, 7] == kern.ST_FAIL
    if np.any(bad):
        raise ConvergenceError("ray integration failed", float(np.count_nonzero(bad)))


class BoundaryTables:
    """Line-family tables of a model, used for products based at the origin.

    F(s), W(s): endpoint position and weighted Busemann value of the ray from
    the origin with direction 2 atan(exp(s)).  Sigma(H): sum of the two
    weighted Busemann values at the point of a same-side line nearest to the
    axis, as a function of its half width H.  The axis-asymptotic lines are
    stored as four numbers.
    """

    def __init__(self, model):
        self.model = model
        prm = model.params()
        self.prm = prm
        self.kappa = model.axis_rate * model.axis_speed
        s = np.arange(-S_MAX, S_MAX + 0.5 * S_STEP, S_STEP)
        theta = 2.0 * np.arctan(np.exp(s))
        states = np.column_stack([np.zeros_like(s), np.zeros_like(s), theta])
        res = kern.ray_values(states, prm)
        _check_rays(res)
        if np.any(res[:, 2] != 1.0):
            raise ConvergenceError("origin rays left on the wrong side", 0.0)
        self.s_grid = s
        self.F = _Spline(s, res[:, 3])
        self.W = _Spline(s, res[:, 0])
        self.Finv = _Spline(res[::-1, 3], s[::-1])
        # exact asymptotic slopes for the linear continuation
        slope = -math.exp(-float(model.psi(0.0))) / model.axis_rate
        self.F.d0 = self.F.d1 = slope
        self.W.d0, self.W.d1 = slope - 1.0, slope + 1.0
        self.Finv.d0 = self.Finv.d1 = 1.0 / slope
        if model.is_hyperbolic:
            self.H0 = math.inf
            self._dev = None
            self.axis_plus = (0.0, 0.0)
            self.axis_minus = (0.0, 0.0)
            return
        r0 = model.support_radius
        u = np.linspace(0.0, 1.0, N_LINE // 2)
        rho = np.unique(np.concatenate([
            np.exp(np.linspace(math.log(RHO_MIN_LINE), math.log(0.5 * r0), N_LINE // 2)),
            r0 - 0.5 * r0 * u ** 2]))
        fw = np.column_stack([rho, np.zeros_like(rho), np.zeros_like(rho)])
        bw = np.column_stack([rho, np.zeros_like(rho), np.full_like(rho, np.pi)])
        rf = kern.ray_values(fw, prm)
        rb = kern.ray_values(bw, prm)
        _check_rays(rf)
        _check_rays(rb)
        half = rf[:, 3]
        self.H0 = float(half[-1])
        # deviation from the hyperbolic value, smooth in sqrt(H - H0)
        dev = rf[:, 0] + rb[:, 0] - 2.0 * np.log(2.0 * np.sinh(half))
        w = np.sqrt(np.maximum(half - self.H0, 0.0))
        order = np.argsort(w)
        self._dev = _Spline(w[order], dev[order])
        self.line_check = float(np.max(np.abs(half + rb[:, 3])))
        self.axis_plus = self._axis_line(+1)
        self.axis_minus = self._axis_line(-1)

    def sigma(self, H):
        """Sum of both weighted Busemann values at the nearest point to the
        axis of the same-side line of half width H."""
        H = np.asarray(H, dtype=float)
        base = 2.0 * np.log(2.0 * np.sinh(H))
        if self._dev is None:
            return base
        return base + self._dev(np.sqrt(np.maximum(H - self.H0, 0.0)))

    def _axis_line(self, end):
        """(V_axis + V_eta at the anchor, T of the far end) for the line from a
        side-+ boundary point to the axis end ``end`` (+1 or -1)."""
        m = self.model
        rho1 = 0.5 * m.support_radius
        h0 = kern.clairaut_h(0.0, m.amplitude, m.support_radius)
        h1 = kern.clairaut_h(rho1, m.amplitude, m.support_radius)
        c = math.acos(h0 / h1)
        phi = -c if end > 0 else -(math.pi - c)
        out_f = np.empty(8)
        out_b = np.empty(8)
        kern.ray_value(rho1, 0.0, phi, self.prm, out_f)
        kern.ray_value(rho1, 0.0, phi + math.pi, self.prm, out_b)
        if out_f[2] != 2.0 * end or out_b[2] != 1.0:
            raise ConvergenceError("axis-asymptotic line construction failed", 0.0)
        return float(out_f[0] + out_b[0]), float(out_b[3])

    # coordinates --------------------------------------------------------
    def side_T(self, theta):
        """(side, s, T) for angles in (-pi, pi]; side 0 marks axis ends."""
        th = wrap_angle(theta)
        side = np.sign(th)
        at = np.abs(th)
        with np.errstate(divide="ignore"):
            s = np.log(np.tan(0.5 * at))
        s = np.where(at == np.pi, np.inf, s)
        fin = np.isfinite(s)
        T = np.where(fin, self.F(np.where(fin, s, 0.0)), 0.0)
        side = np.where(at == np.pi, 0.0, side)
        return side, s, T, at

    def theta_from(self, side, T):
        s = self.Finv(T)
        return side * 2.0 * np.arctan(np.exp(s))

    # products -----------------------------------------------------------
    def products(self, t1, t2):
        """Weighted Gromov products (theta1 | theta2) at the origin."""
        t1 = wrap_angle(t1)
        t2 = wrap_angle(t2)
        t1, t2 = np.broadcast_arrays(t1, t2)
        if self.model.is_hyperbolic:
            with np.errstate(divide="ignore"):
                return -np.log(np.abs(np.sin(0.5 * (t1 - t2))))
        shape = t1.shape
        t1 = t1.ravel()
        t2 = t2.ravel()
        out = np.empty(t1.shape)
        sd1, s1, T1, a1 = self.side_T(t1)
        sd2, s2, T2, a2 = self.side_T(t2)
        ax1 = (a1 == 0.0) | (a1 == np.pi)
        ax2 = (a2 == 0.0) | (a2 == np.pi)
        same = (t1 == t2)
        gen = ~ax1 & ~ax2 & ~same
        W1 = np.where(gen | ax2, self.W(np.where(np.isfinite(s1), s1, 0.0)), 0.0)
        W2 = np.where(gen | ax1, self.W(np.where(np.isfinite(s2), s2, 0.0)), 0.0)
        # same side
        ss = gen & (sd1 == sd2)
        if np.any(ss):
            H = 0.5 * np.abs(T1[ss] - T2[ss])
            tm = 0.5 * (T1[ss] + T2[ss])
            hyp = H <= self.H0
            val = np.empty(H.shape)
            val[hyp] = (0.5 * (W1[ss][hyp] + W2[ss][hyp]) - tm[hyp]
                        - np.log(2.0 * np.sinh(H[hyp])))
            if np.any(~hyp):
                val[~hyp] = 0.5 * (W1[ss][~hyp] + W2[ss][~hyp]
                                   - self.sigma(H[~hyp])) - tm[~hyp]
            out[ss] = val
        # opposite sides
        cr = gen & (sd1 != sd2)
        if np.any(cr):
            Tp = np.where(sd1[cr] > 0, T1[cr], T2[cr])
            Tm = np.where(sd1[cr] > 0, T2[cr], T1[cr])
            D = 0.5 * (Tp - Tm)
            tc = 0.5 * (Tp + Tm)
            sc = self.Finv(D)
            out[cr] = 0.5 * (W1[cr] + W2[cr] - self.W(sc) - self.W(-sc)) - tc
        # axis ends
        if np.any(ax1 | ax2):
            out[ax1 & ax2] = 0.0
            for a_mask, W_o, T_o, a_axis in ((ax1 & ~ax2, W2, T2, a1), (ax2 & ~ax1, W1, T1, a2)):
                if not np.any(a_mask):
                    continue
                plus = a_axis[a_mask] == 0.0
                Wv = W_o[a_mask]
                Tv = T_o[a_mask]
                val = np.empty(Wv.shape)
                sp, tp = self.axis_plus
                sm, tmn = self.axis_minus
                val[plus] = 0.5 * (Wv[plus] - sp + (self.kappa - 1.0) * (Tv[plus] - tp))
                val[~plus] = 0.5 * (Wv[~plus] - sm - (self.kappa + 1.0) * (Tv[~plus] - tmn))
                out[a_mask] = val
        out[same] = np.inf
        return out.reshape(shape)


_TABLE_CACHE: dict = {}


def boundary_tables(model):
    key = (tuple(model.to_descriptor().items()), model.rtol, model.atol)
    tab = _TABLE_CACHE.get(key)
    if tab is None:
        tab = BoundaryTables(model)
        _TABLE_CACHE[key] = tab
    return tab


# ---------------------------------------------------------------------------
# chart conversions

def _angles(xi):
    if isinstance(xi, BoundaryPoint):
        return wrap_angle(xi.theta)
    if isinstance(xi, (list, tuple)) and xi and isinstance(xi[0], BoundaryPoint):
        return wrap_angle(np.array([p.theta for p in xi]))
    return as_angles(xi)


def disk_angle(model, xi):
    """Angle of the boundary point in the disk chart."""
    th = _angles(xi)
    if model.is_hyperbolic:
        return th
    tab = boundary_tables(model)
    side, s, T, a = tab.side_T(th)
    out = np.where(a == 0.0, 0.0, np.where(a == np.pi, np.pi, side * 2.0 * np.arctan(np.exp(-T))))
    return out


def from_disk_angle(model, alpha):
    al = wrap_angle(alpha)
    if model.is_hyperbolic:
        return al
    tab = boundary_tables(model)
    side = np.sign(al)
    a = np.abs(al)
    with np.errstate(divide="ignore"):
        T = -np.log(np.tan(0.5 * a))
    fin = np.isfinite(T) & (a > 0)
    th = np.where(fin, tab.theta_from(side, np.where(fin, T, 0.0)), 0.0)
    return np.where(a == np.pi, np.pi, th)


def _side_T_exact(theta, prm):
    """Endpoint data of the ray from the origin by direct tracing."""
    th = float(wrap_angle(theta))
    if th == 0.0:
        return 2.0, 0.0
    if abs(th) == math.pi:
        return -2.0, 0.0
    side, T, st = kern.trace_endpoint(0.0, 0.0, th, prm)
    if st == kern.ST_FAIL:
        raise ConvergenceError("ray from the origin did not leave the strip", 0.0)
    return side, T


def _alpha_of(side, T):
    if side == 2.0:
        return 0.0
    if side == -2.0:
        return math.pi
    return side * 2.0 * math.atan(math.exp(-T))


# ---------------------------------------------------------------------------
# rays towards boundary points from arbitrary base points

def _hyp_boundary_direction(rho, tau, side, T):
    """Fermi angle of the hyperbolic ray from (rho, tau) to (side, T)."""
    sig = math.atan(math.sinh(rho))
    if side == 2.0:
        # the ray to infinity in the upper half plane is vertical
        return -sig
    # work in coordinates translated by -tau
    z = 1j * np.exp(1j * sig)
    x = 0.0 if side == -2.0 else -side * math.exp(T - tau)
    c = (abs(z) ** 2 - x * x) / (2.0 * (z.real - x)) if z.real != x else None
    if c is None:
        dz = -1j
    else:
        dz = 1j * (z - c)
        if ((x - z) * dz.conjugate()).real < 0:
            dz = -dz
    return float(np.angle(dz)) - (0.5 * math.pi + sig)


def _wrap(a):
    return math.remainder(a, 2.0 * math.pi)


def ray_direction(model, rho, tau, side, T, prm=None):
    """Fermi angle at (rho, tau) of the ray to the boundary point (side, T)."""
    guess = _hyp_boundary_direction(rho, tau, side, T)
    if model.is_hyperbolic:
        return guess
    if abs(side) == 2.0:
        m = model
        h0 = kern.clairaut_h(0.0, m.amplitude, m.support_radius)
        h1 = kern.clairaut_h(rho, m.amplitude, m.support_radius)
        c = math.acos(min(1.0, h0 / h1))
        sgn_r = -1.0 if rho > 0 else 1.0
        if rho == 0.0:
            return 0.0 if side > 0 else math.pi
        return sgn_r * c if side > 0 else sgn_r * (math.pi - c)
    prm = model.params() if prm is None else prm
    target = _alpha_of(side, T)

    def resid(phi):
        sd, tt, st = kern.trace_endpoint(rho, tau, phi, prm)
        if st == kern.ST_FAIL:
            raise ConvergenceError("ray tracing failed during shooting", math.nan)
        if sd == side:
            # same side: signed angle difference in a cancellation-free form
            return -side * 2.0 * math.atan(math.sinh(0.5 * (tt - T)) / math.cosh(0.5 * (tt + T)))
        return _wrap(_alpha_of(sd, tt) - target)

    for width in (0.3, 0.8, 1.6, 3.0):
        lo, hi = guess - width, guess + width
        rl, rh = resid(lo), resid(hi)
        if rl < 0.0 < rh:
            return brentq(resid, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=200)
        if rl == 0.0:
            return lo
        if rh == 0.0:
            return hi
    raise ConvergenceError("could not bracket the ray direction", min(abs(rl), abs(rh)))


def _ray_data(model, rho, tau, phi, prm):
    out = np.empty(8)
    kern.ray_value(rho, tau, phi, prm, out)
    if out[7] == kern.ST_FAIL:
        raise ConvergenceError("ray integration failed", math.nan)
    return out


def _hyp_busemann_to(rho, tau, side, T):
    """Upper-half-plane Busemann value at (rho, tau) for the end (side, T)."""
    lc = math.log(math.cosh(rho))
    if side == 2.0:
        return -tau + lc
    if side == -2.0:
        return tau + lc
    sn = math.tanh(rho) * side
    d = T - tau
    # log(e^{2d} - 2 e^d sin(sigma) side + 1), sin sigma = tanh rho
    if d > 0:
        inner = 2.0 * d + math.log1p(-2.0 * math.exp(-d) * sn + math.exp(-2.0 * d))
    else:
        inner = math.log1p(-2.0 * math.exp(d) * sn + math.exp(2.0 * d))
    return tau + lc + inner


def busemann_values(model, rho, tau, side, T, prm=None):
    """(V, B) at a Fermi point for the boundary point (side, T): weighted and
    plain Busemann values in the common normalisation."""
    if model.is_hyperbolic:
        b = _hyp_busemann_to(rho, tau, side, T)
        return b, b
    prm = model.params() if prm is None else prm
    phi = ray_direction(model, rho, tau, side, T, prm)
    out = _ray_data(model, rho, tau, phi, prm)
    return float(out[0]), float(out[1])


def _point_fermi(x):
    if isinstance(x, Point):
        return to_fermi(x)
    if isinstance(x, tuple) and len(x) == 2:
        return float(x[0]), float(x[1])
    raise DomainError("expected a Point")


def _end(model, xi, prm=None):
    th = float(_angles(xi))
    if model.is_hyperbolic:
        if th == 0.0:
            return 2.0, 0.0
        if abs(th) == math.pi:
            return -2.0, 0.0
        return math.copysign(1.0, th), -math.log(math.tan(0.5 * abs(th)))
    return _side_T_exact(th, model.params() if prm is None else prm)


# ---------------------------------------------------------------------------
# Busemann cocycle and q

def _ray_from(model, x, xi):
    rho, tau = _point_fermi(x)
    side, T = _end(model, xi)
    phi = ray_direction(model, rho, tau, side, T)
    return rho, tau, phi


def busemann_cocycle(model, xi, x, y, horizon=DEFAULT_HORIZON, method="horizon"):
    """d(y, gamma(T)) - d(x, gamma(T)) for the ray gamma from x to xi.

    ``method="horizon"`` evaluates the definition at the given horizon;
    ``"exact"`` returns the limit from the exit-tail construction.
    """
    fx = _point_fermi(x)
    fy = _point_fermi(y)
    if fx == fy:
        return 0.0
    if method == "exact":
        side, T = _end(model, xi)
        _, bx = busemann_values(model, *fx, side, T)
        _, by = busemann_values(model, *fy, side, T)
        return by - bx
    if method != "horizon":
        raise DomainError(f"unknown method {method!r}")
    horizon = check_scalar(horizon, "horizon", min_val=0.0, include_min=False)
    rho, tau, phi = _ray_from(model, fx, xi)
    out = np.empty(5)
    kern.evolve(rho, tau, phi, horizon, model.params(), out)
    return fermi_distance(model, fy, (out[0], out[1])) - horizon


def q_value(model, xi, x, y, horizon=DEFAULT_HORIZON, method="exact",
            riccati_horizon=DEFAULT_RICCATI_HORIZON):
    """Weighted partial product q_xi(x, y).

    ``"exact"``: difference of weighted Busemann values (exit-tail limit).
    ``"horizon"``: integrals of f along both rays, the one from y stopped at
    the distance from y to gamma_x(T).
    """
    fx = _point_fermi(x)
    fy = _point_fermi(y)
    if fx == fy:
        return 0.0
    if method == "exact":
        side, T = _end(model, xi)
        vx, _ = busemann_values(model, *fx, side, T)
        vy, _ = busemann_values(model, *fy, side, T)
        return vx - vy
    if method != "horizon":
        raise DomainError(f"unknown method {method!r}")
    horizon = check_scalar(horizon, "horizon", min_val=0.0, include_min=False)
    prm = model.params()
    rx = _ray_from(model, fx, xi)
    ry = _ray_from(model, fy, xi)
    out = np.empty(6)
    kern.weight_integrals(*rx, horizon, riccati_horizon, prm, out)
    ix = 0.5 * (out[0] + out[1])
    tail = fermi_distance(model, fy, (out[2], out[3]))
    kern.weight_integrals(*ry, tail, riccati_horizon, prm, out)
    iy = 0.5 * (out[0] + out[1])
    return ix - iy


# ---------------------------------------------------------------------------
# lines between boundary points

@dataclass(frozen=True)
class BoundaryGeodesic:
    """Line from ``eta`` (backward end) to ``xi`` (forward end).

    ``anchor`` is a Fermi state (rho, tau, phi) on the line; ``path`` holds
    disk points sampled at arclength parameters ``times`` from the anchor.
    """

    xi: float
    eta: float
    anchor: tuple
    times: tuple
    path: tuple
    family: str

    def point_at(self, model, t):
        out = np.empty(5)
        kern.evolve(*self.anchor, t, model.params(), out)
        return out[0], out[1], out[2]


def _solve_crossing(model, D, prm):
    """Direction at the origin of the line through the origin whose forward
    end has T = D (and backward end T = -D on the other side)."""
    if model.is_hyperbolic:
        return 2.0 * math.atan(math.exp(-D))

    def g(phi):
        return _side_T_exact(phi, prm)[1] - D

    tab = boundary_tables(model)
    guess = float(2.0 * np.arctan(np.exp(tab.Finv(D))))
    lo, hi = max(guess * 0.5, 1e-12), min(guess + 0.5 * (math.pi - guess), math.pi - 1e-12)
    return brentq(g, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=200)


def _solve_same_side(model, H, prm):
    """Distance to the axis of the same-side line of half width H."""
    def g(r):
        side, T, st = kern.trace_endpoint(r, 0.0, 0.0, prm)
        return T - H

    r0 = model.support_radius
    lo = 1e-2
    while g(lo) < 0.0:
        lo *= 0.1
        if lo < 1e-6:
            raise ConvergenceError("same-side line too close to the axis", H)
    return brentq(g, lo, r0, xtol=1e-15, rtol=1e-15, maxiter=200)


def _line_anchor(model, xi, eta, prm):
    """Fermi state on the line eta -> xi and the family label."""
    s1, T1 = _end(model, xi, prm)
    s2, T2 = _end(model, eta, prm)
    if (s1, T1) == (s2, T2):
        raise DomainError("boundary points coincide")
    ax1, ax2 = abs(s1) == 2.0, abs(s2) == 2.0
    if ax1 and ax2:
        return (0.0, 0.0, 0.0 if s1 > 0 else math.pi), "axis"
    if ax1 or ax2:
        # canonical line from a side-+ point to the axis end, then
        # translated along the axis and reflected onto the right side
        end, (so, To) = (s1, (s2, T2)) if ax1 else (s2, (s1, T1))
        rho1 = 0.5 * (model.support_radius if model.support_radius > 0 else 1.0)
        phi0 = ray_direction(model, rho1, 0.0, end, 0.0, prm)
        if model.is_hyperbolic:
            sb, Tb = kern.endpoint(rho1, 0.0, phi0 + math.pi)
        else:
            sb, Tb, _ = kern.trace_endpoint(rho1, 0.0, phi0 + math.pi, prm)
        phi = so * phi0
        if ax2:
            phi += math.pi
        return (so * rho1, To - Tb, phi), "asymptotic"
    if s1 != s2:
        Tp, Tm = (T1, T2) if s1 > 0 else (T2, T1)
        D = 0.5 * (Tp - Tm)
        tc = 0.5 * (Tp + Tm)
        phi = _solve_crossing(model, D, prm)
        if s1 < 0:
            phi += math.pi
        return (0.0, tc, phi), "crossing"
    side = s1
    H = 0.5 * abs(T1 - T2)
    tm = 0.5 * (T1 + T2)
    H0 = boundary_tables(model).H0
    if H <= H0 or model.is_hyperbolic:
        # nearest point to the axis of the hyperbolic line: cot(sigma/2) = e^H
        sig = 2.0 * math.atan(math.exp(-H))
        r = math.asinh(math.tan(sig))
    else:
        r = _solve_same_side(model, H, prm)
    phi = 0.0 if T1 > T2 else math.pi
    return (side * r, tm, phi), "same-side"


def connect_boundary_points(model, xi, eta, n_samples=41, half_length=6.0):
    """Line from eta to xi, sampled symmetrically around its anchor point."""
    prm = model.params()
    anchor, fam = _line_anchor(model, xi, eta, prm)
    times = np.linspace(-half_length, half_length, int(n_samples))
    states = np.tile(np.array(anchor), (len(times), 1))
    res = kern.evolve_many(states, times, prm)
    path = tuple(from_fermi(r[0], r[1]) for r in res)
    return BoundaryGeodesic(float(_angles(xi)), float(_angles(eta)), anchor,
                            tuple(times), path, fam)


def _line_values(model, anchor, prm, e1, e2):
    """Weighted Busemann values at the anchor for the ends e1 (forward) and
    e2 (backward) of the line."""
    if model.is_hyperbolic:
        return (_hyp_busemann_to(anchor[0], anchor[1], *e1),
                _hyp_busemann_to(anchor[0], anchor[1], *e2))
    f = _ray_data(model, anchor[0], anchor[1], anchor[2], prm)
    b = _ray_data(model, anchor[0], anchor[1], anchor[2] + math.pi, prm)
    return float(f[0]), float(b[0])


# ---------------------------------------------------------------------------
# Gromov products

def _is_origin(x):
    if x is None:
        return True
    if isinstance(x, Point):
        return x.x == 0.0 and x.y == 0.0
    return False


def gromov_product(model, x, xi, eta, method="table", y_shift=0.0,
                   horizon=DEFAULT_HORIZON, riccati_horizon=DEFAULT_RICCATI_HORIZON):
    """Weighted Gromov product (xi | eta)_x.

    ``"table"`` (origin only, vectorised): line-family tables.
    ``"exact"``: direct ray construction with exact exit tails, any base point.
    ``"horizon"``: q-values by truncated integration at horizon T.
    ``y_shift`` moves the auxiliary point along the line (exact/horizon).
    """
    if method == "table":
        t1, t2 = _angles(xi), _angles(eta)
        prod = boundary_tables(model).products(t1, t2)
        if not _is_origin(x):
            prod = prod + 0.5 * (busemann_shift(model, x, t1) + busemann_shift(model, x, t2))
        return _scalar_or_array(prod)
    th1 = float(_angles(xi))
    th2 = float(_angles(eta))
    if _wrap(th1 - th2) == 0.0:
        return math.inf
    x = ORIGIN if x is None else x
    prm = model.params()
    anchor, fam = _line_anchor(model, th1, th2, prm)
    e1 = _end(model, th1, prm)
    e2 = _end(model, th2, prm)
    if y_shift:
        out = np.empty(5)
        kern.evolve(*anchor, y_shift, prm, out)
        anchor = (out[0], out[1], out[2])
        if fam == "asymptotic" and not model.is_hyperbolic:
            # restore exact asymptoticity lost to integration drift
            if abs(e1[0]) == 2.0:
                phi = ray_direction(model, anchor[0], anchor[1], *e1, prm)
            else:
                phi = ray_direction(model, anchor[0], anchor[1], *e2, prm) + math.pi
            anchor = (anchor[0], anchor[1], phi)
    if method == "exact":
        fx = _point_fermi(x)
        v1x, _ = busemann_values(model, *fx, *e1, prm)
        v2x, _ = busemann_values(model, *fx, *e2, prm)
        v1y, v2y = _line_values(model, anchor, prm, e1, e2)
        return 0.5 * (v1x - v1y + v2x - v2y)
    if method == "horizon":
        y = from_fermi(anchor[0], anchor[1])
        q1 = q_value(model, th1, x, y, horizon, "horizon", riccati_horizon)
        q2 = q_value(model, th2, x, y, horizon, "horizon", riccati_horizon)
        return 0.5 * (q1 + q2)
    raise DomainError(f"unknown method {method!r}")


def busemann_shift(model, x, theta):
    """q_theta(x, o): weighted Busemann value at x minus the value at the
    origin, for each boundary angle."""
    th = np.asarray(_angles(theta), dtype=float)
    if _is_origin(x):
        return np.zeros_like(th)
    if model.is_hyperbolic:
        w = complex(x.w)
        return np.log(np.abs(np.exp(1j * th) - w) ** 2 / (1.0 - abs(w) ** 2))
    prm = model.params()
    rho, tau = _point_fermi(x)
    flat = th.ravel()
    uniq, inv = np.unique(flat, return_inverse=True)
    vals = np.empty(uniq.size)
    origin_vals = boundary_tables(model).W(np.log(np.tan(0.5 * np.clip(np.abs(uniq), 1e-300, None))))
    for i, t in enumerate(uniq):
        side, T = _end(model, t, prm)
        v, _ = busemann_values(model, rho, tau, side, T, prm)
        vals[i] = v - (0.0 if abs(side) == 2.0 else float(origin_vals[i]))
    return vals[inv].reshape(th.shape)


def _scalar_or_array(a):
    a = np.asarray(a)
    return float(a) if a.ndim == 0 else a


def cross_ratio_add(model, x, xi1, xi2, xi3, xi4, method="table"):
    """Additive cross ratio (1|3) + (2|4) - (1|4) - (2|3) based at x.

    Returns (value, degenerate_flag); coincident 1, 2 gives (0, True).
    """
    pts = [float(_angles(p)) for p in (xi1, xi2, xi3, xi4)]
    if pts[0] == pts[1]:
        return 0.0, True
    if len({pts[0], pts[2], pts[3]}) < 3 or len({pts[1], pts[2], pts[3]}) < 3:
        raise DomainError("cross ratio needs distinct points")

    def gp(a, b):
        return gromov_product(model, x, pts[a], pts[b], method=method)

    return gp(0, 2) + gp(1, 3) - gp(0, 3) - gp(1, 2), False


def cross_ratio_mult(model, xi1, xi2, xi3, xi4, epsilon, x=None, method="table"):
    """Multiplicative cross ratio d13 d24 / (d14 d23) of delta_{x, eps}."""
    val, _ = cross_ratio_add(model, x, xi1, xi2, xi3, xi4, method=method)
    return math.exp(-epsilon * val)


# ---------------------------------------------------------------------------
# quasimetric

def quasimetric(model, x, epsilon, xi, eta, method="table"):
    """delta_{x, eps}(xi, eta) = exp(-eps (xi | eta)_x); zero on the diagonal."""
    epsilon = check_scalar(epsilon, "epsilon", min_val=0.0, include_min=False)
    prod = gromov_product(model, x, xi, eta, method=method)
    with np.errstate(over="ignore"):
        return _scalar_or_array(np.exp(-epsilon * np.asarray(prod)))


@dataclass
class QuasiMetric:
    """delta_{x, eps} with optional estimated constant."""

    model: object
    epsilon: float
    base: Point = ORIGIN
    estimated_constant: float | None = None

    def __call__(self, xi, eta):
        return quasimetric(self.model, self.base, self.epsilon, xi, eta)


def _triangle_ratio(d_xy, d_xz, d_zy):
    den = d_xz + d_zy
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(den > 0, d_xy / den, np.where(d_xy > 0, np.inf, 0.0))
    return r


def quasimetric_constant(model, x, epsilon, n_triples, rng_seed, return_witness=False):
    """Largest sampled ratio delta(xi,eta) / (delta(xi,zeta) + delta(zeta,eta))."""
    n = check_count(n_triples, "n_triples")
    if not _is_origin(x):
        raise PreconditionError("sampled constants are computed at the origin")
    rng = np.random.default_rng(rng_seed)
    th = rng.uniform(-np.pi, np.pi, size=(n, 3))
    q = QuasiMetric(model, epsilon)
    dxy = q(th[:, 0], th[:, 1])
    dxz = q(th[:, 0], th[:, 2])
    dzy = q(th[:, 2], th[:, 1])
    r = _triangle_ratio(dxy, dxz, dzy)
    i = int(np.argmax(r))
    k = float(r[i])
    if return_witness:
        return k, tuple(float(v) for v in th[i])
    return k


def ultrametric_defect(model, n_triples, rng_seed):
    """Sampled kappa with (xi|eta) >= min((xi|zeta), (zeta|eta)) - kappa."""
    n = check_count(n_triples, "n_triples")
    rng = np.random.default_rng(rng_seed)
    th = rng.uniform(-np.pi, np.pi, size=(n, 3))
    tab = boundary_tables(model)
    p12 = tab.products(th[:, 0], th[:, 1])
    p13 = tab.products(th[:, 0], th[:, 2])
    p32 = tab.products(th[:, 2], th[:, 1])
    return float(np.max(np.minimum(p13, p32) - p12))


def epsilon_sweep(model, epsilons, n_triples, rng_seed, target=2.0):
    """K-hat per epsilon and the largest epsilon with K-hat <= target."""
    ks = {float(e): quasimetric_constant(model, ORIGIN, e, n_triples, rng_seed)
          for e in epsilons}
    ok = [e for e, k in ks.items() if k <= target]
    return ks, (max(ok) if ok else None)


@dataclass
class ChainMetric:
    """Chain metric on a finite sample of boundary points."""

    theta: np.ndarray
    delta: np.ndarray
    d: np.ndarray
    lower_constant: float

    def __call__(self, i, j):
        return self.d[i, j]


def frink_metrize(theta, quasi, chain_depth=3, warn_constant=2.0):
    """Chain infimum d(a,b) = inf sum delta over chains of at most
    ``chain_depth`` steps through the sampled points."""
    th = np.asarray(theta, dtype=float)
    n = th.size
    d0 = np.asarray(quasi(th[:, None], th[None, :]), dtype=float).reshape(n, n)
    np.fill_diagonal(d0, 0.0)
    d = d0.copy()
    for _ in range(max(int(chain_depth) - 1, 0)):
        nd = d.copy()
        for k in range(n):
            np.minimum(nd, d[:, k:k + 1] + d0[k:k + 1, :], out=nd)
        d = nd
    iu = np.triu_indices(n, 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = d[iu] / d0[iu]
    c = float(np.min(ratio[np.isfinite(ratio)])) if ratio.size else 1.0
    return ChainMetric(th, d0, d, c)


# ---------------------------------------------------------------------------
# boundary action and derivative

def boundary_map(model, g, xi):
    """Action of an isometry on boundary points (direction chart)."""
    check_isometry(model, g)
    th = _angles(xi)
    if model.is_hyperbolic:
        w, _ = mobius_disk(g, np.exp(1j * th))
        return _scalar_or_array(np.angle(w))
    tab = boundary_tables(model)
    side, s, T, a = tab.side_T(th)
    m = g.m
    diag = abs(m[0, 1]) <= 1e-12 * np.abs(m).max()
    if diag:
        shift = 2.0 * math.log(abs(m[0, 0]))
        new_side, new_T = side, T + shift
        ax_out = np.where(a == 0.0, 0.0, np.pi)
    else:
        c = 2.0 * math.log(abs(m[0, 1]))
        new_side, new_T = -side, c - T
        ax_out = np.where(a == 0.0, np.pi, 0.0)
    res = np.where((a == 0.0) | (a == np.pi), ax_out, tab.theta_from(new_side, new_T))
    return _scalar_or_array(res)


def boundary_map_jacobian(model, g, xi):
    """|d(g theta)/d theta| in the direction chart."""
    check_isometry(model, g)
    th = _angles(xi)
    if model.is_hyperbolic:
        _, dw = mobius_disk(g, np.exp(1j * th))
        return _scalar_or_array(np.abs(dw))
    tab = boundary_tables(model)
    th = np.asarray(th, dtype=float)
    # axis points: limit taken through the linear continuation of the tables
    th = np.where(th == 0.0, 1e-12, np.where(np.abs(th) == np.pi, np.pi - 1e-12, th))
    side, s, T, a = tab.side_T(th)
    out = np.asarray(boundary_map(model, g, th))
    s2 = np.log(np.tan(0.5 * np.abs(out)))
    j = (np.sin(np.abs(out)) / np.sin(a)) * np.abs(tab.F.deriv(s) / tab.F.deriv(s2))
    return _scalar_or_array(j)


def boundary_derivative(model, g, xi, epsilon, aux=None, x=None):
    """|g'|(xi) for delta_{x, eps} from the three-point formula."""
    epsilon = check_scalar(epsilon, "epsilon", min_val=0.0, include_min=False)
    th = _angles(xi)
    if aux is None:
        u = th + 2.0 * np.pi / 3.0
        v = th - 2.0 * np.pi / 3.0
    else:
        u = np.asarray(_angles(aux[0]))
        v = np.asarray(_angles(aux[1]))
        if np.any(wrap_angle(u - th) == 0) or np.any(wrap_angle(v - th) == 0) \
                or np.any(wrap_angle(u - v) == 0):
            raise DomainError("auxiliary points must differ from xi and each other")
    gx = boundary_map(model, g, th)
    gu = boundary_map(model, g, u)
    gv = boundary_map(model, g, v)
    if _is_origin(x):
        P = boundary_tables(model).products

        def lp(a, b):
            return np.asarray(P(a, b))
    else:
        def lp(a, b):
            return np.vectorize(lambda p, q: gromov_product(model, x, p, q, "exact"))(a, b)
    logd = -(lp(gx, gv) - lp(th, v) + lp(gx, gu) - lp(th, u) + lp(u, v) - lp(gu, gv))
    return _scalar_or_array(np.exp(epsilon * logd))


def log_boundary_derivative(model, g, xi, epsilon):
    return _scalar_or_array(np.log(np.asarray(boundary_derivative(model, g, xi, epsilon))))


class QuasimetricConstantEstimator(BaseEstimator):
    """Estimator wrapper around :func:`quasimetric_constant`."""

    def __init__(self, model=None, epsilon=1.0, n_triples=100_000, seed=0):
        self.model = model
        self.epsilon = epsilon
        self.n_triples = n_triples
        self.seed = seed

    def fit(self, X=None, y=None):
        k, w = quasimetric_constant(self.model, ORIGIN, self.epsilon, self.n_triples,
                                    self.seed, return_witness=True)
        self.constant_ = k
        self.witness_ = w
        return self
