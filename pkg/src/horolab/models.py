"""Surface models, tangent data, geodesics and isometries.

Two models share the unit-disk chart: the hyperbolic disk and a conformal
perturbation exp(2 psi(rho)) g_hyp whose factor depends only on the signed
hyperbolic distance rho to the real diameter (the axis).  Internally points
live in Fermi coordinates (rho, tau) along the axis; see ``_kernels``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np
from scipy.optimize import minimize_scalar

from . import _kernels as kern
from ._validation import check_scalar
from .errors import ConvergenceError, DomainError, InvalidIsometryError, TruncationError

DEFAULT_RTOL = 1e-11
DEFAULT_ATOL = 1e-13
RAY_CAP = 400.0
DESCRIPTOR_KEYS = ("kind", "a", "b", "amplitude", "support_radius")


class ModelKind(str, Enum):
    CONSTANT = "constant"
    PERTURBED_AXIAL = "perturbed_axial"


@dataclass(frozen=True)
class ConformalProfile:
    """Bump psi(rho) = A (1 - (rho/rho0)^2)^3 for |rho| < rho0, zero outside."""

    amplitude: float = 0.1
    support_radius: float = 1.0

    def __post_init__(self):
        check_scalar(self.amplitude, "amplitude")
        check_scalar(self.support_radius, "support_radius", min_val=0.0, include_min=False)

    def _xq(self, rho):
        x = np.asarray(rho, dtype=float) / self.support_radius
        inside = np.abs(x) < 1.0
        q = np.where(inside, 1.0 - x * x, 0.0)
        return x, q, inside

    def psi(self, rho):
        _, q, _ = self._xq(rho)
        return self.amplitude * q ** 3

    def dpsi(self, rho):
        x, q, _ = self._xq(rho)
        return -6.0 * self.amplitude * x * q ** 2 / self.support_radius

    def d2psi(self, rho):
        x, q, _ = self._xq(rho)
        return -6.0 * self.amplitude * q * (q - 4.0 * x * x) / self.support_radius ** 2

    def d3psi(self, rho):
        x, q, inside = self._xq(rho)
        val = 24.0 * self.amplitude * x * (3.0 * q - 2.0 * x * x) / self.support_radius ** 3
        return np.where(inside, val, 0.0)

    def laplacian(self, rho):
        """Hyperbolic Laplacian of psi as a function of the axis distance."""
        return self.d2psi(rho) + np.tanh(rho) * self.dpsi(rho)

    def curvature(self, rho):
        return np.exp(-2.0 * self.psi(rho)) * (-1.0 - self.laplacian(rho))

    def curvature_slope(self, rho):
        rho = np.asarray(rho, dtype=float)
        p, dp, d2p, d3p = self.psi(rho), self.dpsi(rho), self.d2psi(rho), self.d3psi(rho)
        th = np.tanh(rho)
        lap = d2p + th * dp
        dlap = d3p + (1.0 - th ** 2) * dp + th * d2p
        return np.exp(-2.0 * p) * (-2.0 * dp * (-1.0 - lap) - dlap)


@dataclass(frozen=True)
class ManifoldModel:
    """A pinched Hadamard surface in the unit-disk chart.

    ``profile`` is None for the constant-curvature model.  Curvature lies in
    [-b^2, -a^2]; for the perturbed model the bounds are computed from the
    profile unless declared, and declared bounds are checked.
    """

    kind: ModelKind
    a: float
    b: float
    profile: ConformalProfile | None = None
    rtol: float = field(default=DEFAULT_RTOL, compare=False)
    atol: float = field(default=DEFAULT_ATOL, compare=False)

    def __post_init__(self):
        if not 0 < self.a <= self.b:
            raise DomainError(f"curvature bounds need 0 < a <= b, got a={self.a}, b={self.b}")
        if self.kind is ModelKind.PERTURBED_AXIAL and self.profile is None:
            raise DomainError("perturbed model needs a conformal profile")

    # construction -------------------------------------------------------
    @classmethod
    def constant(cls):
        return cls(ModelKind.CONSTANT, 1.0, 1.0, None)

    @classmethod
    def perturbed_axial(cls, amplitude=0.1, support_radius=1.0, a=None, b=None):
        prof = ConformalProfile(amplitude, support_radius)
        lo, hi = curvature_range(prof)
        a_true, b_true = math.sqrt(-hi), math.sqrt(-lo)
        if a is None:
            a = a_true
        if b is None:
            b = b_true
        if a > a_true * (1 + 1e-9) or b < b_true * (1 - 1e-9):
            raise DomainError(
                f"declared bounds a={a}, b={b} do not contain curvature range "
                f"[{lo:.6g}, {hi:.6g}]")
        return cls(ModelKind.PERTURBED_AXIAL, float(a), float(b), prof)

    @classmethod
    def from_descriptor(cls, desc):
        if isinstance(desc, str):
            desc = json.loads(desc)
        if not isinstance(desc, dict):
            raise DomainError("model descriptor must be a JSON object")
        unknown = set(desc) - set(DESCRIPTOR_KEYS)
        if unknown:
            raise DomainError(f"unknown model descriptor keys: {sorted(unknown)}")
        kind = desc.get("kind")
        if kind == ModelKind.CONSTANT.value:
            for key in ("a", "b"):
                if key in desc and float(desc[key]) != 1.0:
                    raise DomainError("constant model has a = b = 1")
            if float(desc.get("amplitude", 0.0) or 0.0) != 0.0:
                raise DomainError("constant model has no amplitude")
            return cls.constant()
        if kind == ModelKind.PERTURBED_AXIAL.value:
            return cls.perturbed_axial(
                amplitude=float(desc.get("amplitude", 0.1)),
                support_radius=float(desc.get("support_radius", 1.0)),
                a=None if desc.get("a") is None else float(desc["a"]),
                b=None if desc.get("b") is None else float(desc["b"]),
            )
        raise DomainError(f"unknown model kind {kind!r}")

    def to_descriptor(self):
        prof = self.profile
        return {
            "kind": self.kind.value,
            "a": self.a,
            "b": self.b,
            "amplitude": 0.0 if prof is None else prof.amplitude,
            "support_radius": 0.0 if prof is None else prof.support_radius,
        }

    # derived data -------------------------------------------------------
    @property
    def amplitude(self):
        return 0.0 if self.profile is None else self.profile.amplitude

    @property
    def support_radius(self):
        return 0.0 if self.profile is None else self.profile.support_radius

    @property
    def is_hyperbolic(self):
        """True when the metric is exactly hyperbolic."""
        return self.amplitude == 0.0

    @cached_property
    def axis_rate(self):
        """sqrt(-K) on the axis; horocycle curvature of axis-asymptotic rays."""
        return math.sqrt(-float(self.curvature_rho(0.0)))

    @cached_property
    def axis_speed(self):
        """Metric length of one unit of tau along the axis."""
        return math.exp(float(self.psi(0.0)))

    @cached_property
    def gradient_bound(self):
        """Declared bound on |grad K|."""
        if self.profile is None:
            return 0.0
        rho = np.linspace(-self.support_radius, self.support_radius, 4001)
        g = np.abs(self.profile.curvature_slope(rho)) * np.exp(-self.profile.psi(rho))
        return float(g.max()) * 1.01

    def params(self, rtol=None, atol=None):
        prm = np.empty(kern.N_PARAMS)
        prm[kern.P_AMP] = self.amplitude
        prm[kern.P_R0] = self.support_radius if self.amplitude != 0.0 else 0.0
        prm[kern.P_K] = self.axis_rate
        prm[kern.P_EPSI0] = self.axis_speed
        prm[kern.P_RTOL] = self.rtol if rtol is None else rtol
        prm[kern.P_ATOL] = self.atol if atol is None else atol
        prm[kern.P_CAP] = RAY_CAP
        return prm

    def psi(self, rho):
        if self.profile is None:
            return np.zeros_like(np.asarray(rho, dtype=float))
        return self.profile.psi(rho)

    def curvature_rho(self, rho):
        if self.profile is None:
            return -np.ones_like(np.asarray(rho, dtype=float))
        return self.profile.curvature(rho)


def curvature_range(profile):
    """(min K, max K) of a conformal profile, grid search plus refinement."""
    r0 = profile.support_radius
    rho = np.linspace(0.0, r0, 2001)
    k = profile.curvature(rho)
    found = []
    for sign, idx in ((1.0, int(np.argmin(k))), (-1.0, int(np.argmax(k)))):
        lo = rho[max(idx - 1, 0)]
        hi = rho[min(idx + 1, len(rho) - 1)]
        res = minimize_scalar(lambda r: sign * float(profile.curvature(r)),
                              bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
        found.append(sign * min(sign * k[idx], float(res.fun)))
    return min(found[0], -1.0), max(found[1], -1.0)


def ConstantCurvature():
    """Hyperbolic disk, K = -1."""
    return ManifoldModel.constant()


def PerturbedAxial(amplitude=0.1, support_radius=1.0, a=None, b=None):
    """Axially symmetric conformal perturbation of the hyperbolic disk."""
    return ManifoldModel.perturbed_axial(amplitude, support_radius, a, b)


# ---------------------------------------------------------------------------
# points and tangent vectors

@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise DomainError("point coordinates must be finite")
        if self.x * self.x + self.y * self.y >= 1.0:
            raise DomainError(f"point ({self.x}, {self.y}) outside the unit disk")

    @property
    def w(self):
        return complex(self.x, self.y)

    @classmethod
    def from_complex(cls, w):
        return cls(float(w.real), float(w.imag))


ORIGIN = Point(0.0, 0.0)


@dataclass(frozen=True)
class TangentVector:
    point: Point
    vx: float
    vy: float


@dataclass(frozen=True)
class UnitTangent:
    """A unit vector, stored as base point plus chart angle of the direction."""

    point: Point
    angle: float

    def components(self, model):
        s = euclidean_unit_length(model, self.point)
        return s * math.cos(self.angle), s * math.sin(self.angle)

    def as_tangent(self, model):
        vx, vy = self.components(model)
        return TangentVector(self.point, vx, vy)

    def flip(self):
        return UnitTangent(self.point, self.angle + math.pi)

    def norm(self, model):
        return tangent_norm(model, self.as_tangent(model))


def point_rho(p):
    """Signed hyperbolic distance of disk points to the axis."""
    w = np.asarray(p.w if isinstance(p, Point) else p, dtype=complex)
    zeta = 2.0 * np.arctanh(w)
    return np.arcsinh(np.tan(zeta.imag))


def to_fermi(p):
    """Disk point -> (rho, tau)."""
    zeta = 2.0 * np.arctanh(complex(p.w))
    return float(np.arcsinh(np.tan(zeta.imag))), float(zeta.real)


def from_fermi(rho, tau):
    sig = math.atan(math.sinh(rho))
    return Point.from_complex(np.tanh(0.5 * complex(tau, sig)))


def tangent_to_fermi(v):
    rho, tau = to_fermi(v.point)
    w = v.point.w
    return rho, tau, float(v.angle - np.angle(1.0 - w * w))


def tangent_from_fermi(rho, tau, phi):
    p = from_fermi(rho, tau)
    w = p.w
    ang = phi + float(np.angle(1.0 - w * w))
    return UnitTangent(p, float(math.remainder(ang, 2.0 * math.pi)))


def conformal_factor(model, p):
    """lambda with g = lambda^2 |dw|^2 at p."""
    r2 = p.x * p.x + p.y * p.y
    return 2.0 * math.exp(float(model.psi(point_rho(p)))) / (1.0 - r2)


def euclidean_unit_length(model, p):
    return 1.0 / conformal_factor(model, p)


def tangent_norm(model, v):
    return conformal_factor(model, v.point) * math.hypot(v.vx, v.vy)


def normalize(model, v):
    """Unit vector in the direction of a tangent vector."""
    if v.vx == 0.0 and v.vy == 0.0:
        raise DomainError("zero tangent vector")
    return UnitTangent(v.point, math.atan2(v.vy, v.vx))


def _check_point(p):
    if not isinstance(p, Point):
        raise DomainError("expected a Point")
    return p


def curvature_at(model, p):
    """Gauss curvature at a disk point."""
    _check_point(p)
    return float(model.curvature_rho(point_rho(p)))


# ---------------------------------------------------------------------------
# geodesics

def geodesic_evolve(model, v, t, rtol=None, n_samples=0):
    """Geodesic flow Phi^t v; optionally also ``n_samples`` path points
    equally spaced in arclength over [0, t] (inclusive)."""
    t = check_scalar(t, "t")
    prm = model.params(rtol=rtol)
    state = tangent_to_fermi(v)
    if t == 0.0:
        end = v
    else:
        out = np.empty(5)
        kern.evolve(*state, t, prm, out)
        if out[3] == kern.ST_FAIL:
            raise TruncationError("step size underflow", out[4])
        end = tangent_from_fermi(out[0], out[1], out[2])
    if not n_samples:
        return end
    times = np.linspace(0.0, t, int(n_samples))
    states = np.tile(np.array(state), (len(times), 1))
    res = kern.evolve_many(states, times, prm)
    if np.any(res[:, 3] == kern.ST_FAIL):
        bad = int(np.argmax(res[:, 3] == kern.ST_FAIL))
        raise TruncationError("step size underflow", res[bad, 4])
    path = [from_fermi(r[0], r[1]) for r in res]
    return end, path


def _hyp_sinh_half(rho1, tau1, rho2, tau2):
    return math.sqrt(math.sinh(0.5 * (rho1 - rho2)) ** 2
                     + math.cosh(rho1) * math.cosh(rho2) * math.sinh(0.5 * (tau1 - tau2)) ** 2)


def hyperbolic_distance_fermi(rho1, tau1, rho2, tau2):
    return 2.0 * math.asinh(_hyp_sinh_half(rho1, tau1, rho2, tau2))


def _hyperbolic_direction(rho1, tau1, rho2, tau2):
    """Fermi angle at point 1 of the hyperbolic geodesic towards point 2."""
    z1 = 1j * np.exp(complex(tau1, math.atan(math.sinh(rho1))))
    z2 = 1j * np.exp(complex(tau2, math.atan(math.sinh(rho2))))
    # unit tangent of the geodesic z1 -> z2 in the upper half plane
    if abs(z1.real - z2.real) < 1e-300:
        dz = 1j if z2.imag > z1.imag else -1j
    else:
        c = (abs(z2) ** 2 - abs(z1) ** 2) / (2.0 * (z2.real - z1.real))
        dz = 1j * (z1 - c)
        # orient towards z2
        if ((z2 - z1) * dz.conjugate()).real < 0:
            dz = -dz
    ang_z = float(np.angle(dz))
    sig = math.atan(math.sinh(rho1))
    return ang_z - (0.5 * math.pi + sig)


def fermi_distance(model, a, b, tol=1e-10, max_iter=60):
    """Distance between Fermi points a = (rho, tau), b = (rho, tau)."""
    d_h = hyperbolic_distance_fermi(a[0], a[1], b[0], b[1])
    if d_h == 0.0:
        return 0.0
    if model.is_hyperbolic:
        return d_h
    prm = model.params()
    out = np.empty(5)
    scale = math.cosh(b[0])

    def shoot(phi, length):
        kern.evolve(a[0], a[1], phi, length, prm, out)
        return np.array([out[0] - b[0], (out[1] - b[1]) * scale])

    phi = _hyperbolic_direction(a[0], a[1], b[0], b[1])
    length = d_h * math.exp(0.5 * (float(model.psi(a[0])) + float(model.psi(b[0]))))
    r = shoot(phi, length)
    nr = float(np.hypot(*r))
    for _ in range(max_iter):
        if nr < tol:
            return length
        hp = 1e-7
        hl = 1e-7 * max(1.0, length)
        jac = np.column_stack([(shoot(phi + hp, length) - r) / hp,
                               (shoot(phi, length + hl) - r) / hl])
        try:
            step = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            break
        lam = 1.0
        while lam > 1e-4:
            p2, l2 = phi + lam * step[0], length + lam * step[1]
            if l2 > 0:
                r2 = shoot(p2, l2)
                n2 = float(np.hypot(*r2))
                if n2 < nr:
                    phi, length, r, nr = p2, l2, r2, n2
                    break
            lam *= 0.5
        else:
            break
    # transverse sensitivity grows like e^d, which bounds attainable residuals
    floor = max(tol * 100.0, 1e-14 * math.cosh(min(d_h, 300.0)))
    if nr < floor:
        return length
    raise ConvergenceError("distance shooting did not converge", nr)


def distance(model, x, y):
    """Riemannian distance between two disk points."""
    _check_point(x)
    _check_point(y)
    if x == y:
        return 0.0
    if model.is_hyperbolic:
        wx, wy = x.w, y.w
        return 2.0 * math.atanh(abs(wx - wy) / abs(1.0 - wx.conjugate() * wy))
    return fermi_distance(model, to_fermi(x), to_fermi(y))


# ---------------------------------------------------------------------------
# isometries

_CAYLEY = np.array([[1.0, -1j], [1.0, 1j]])
_CAYLEY_INV = np.array([[1j, 1j], [-1.0, 1.0]]) / 2j


class IsometryClass(str, Enum):
    ELLIPTIC = "elliptic"
    PARABOLIC = "parabolic"
    LOXODROMIC = "loxodromic"


@dataclass(frozen=True)
class IsometryElement:
    """Element of PSL(2, R) acting on the upper half plane, transported to
    the disk by the Cayley map w = (z - i)/(z + i).  The axis is the
    imaginary half line, with +1 at infinity and -1 at 0."""

    matrix: tuple

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (2, 2) or not np.all(np.isfinite(m)):
            raise InvalidIsometryError("isometry matrix must be a finite 2x2 real matrix")
        det = float(np.linalg.det(m))
        if abs(det - 1.0) > 1e-12 * max(1.0, float(np.abs(m).max()) ** 2):
            raise InvalidIsometryError(f"determinant {det} != 1")
        object.__setattr__(self, "matrix", tuple(tuple(float(v) for v in row) for row in m))

    @property
    def m(self):
        return np.array(self.matrix)

    @classmethod
    def from_matrix(cls, m, normalize_det=False):
        m = np.asarray(m, dtype=float)
        if normalize_det:
            d = np.linalg.det(m)
            if d <= 0:
                raise InvalidIsometryError("orientation-reversing matrix")
            m = m / math.sqrt(d)
        return cls(m)

    @classmethod
    def identity(cls):
        return cls(np.eye(2))

    @classmethod
    def rotation(cls, alpha):
        """Rotation of the disk about the origin by angle alpha."""
        c, s = math.cos(0.5 * alpha), math.sin(0.5 * alpha)
        return cls(np.array([[c, s], [-s, c]]))

    @classmethod
    def axis_translation(cls, length):
        """Translation by ``length`` along the axis towards +1."""
        e = math.exp(0.5 * length)
        return cls(np.array([[e, 0.0], [0.0, 1.0 / e]]))

    @classmethod
    def half_turn(cls, tau=0.0):
        """Rotation by pi about the axis point at Fermi position tau."""
        e = math.exp(tau)
        return cls(np.array([[0.0, e], [-1.0 / e, 0.0]]))

    @classmethod
    def loxodromic(cls, repelling, attracting, length):
        """Translation by ``length`` along the geodesic between two disk
        boundary angles, moving from ``repelling`` towards ``attracting``."""
        xr = _disk_angle_to_real(repelling)
        xa = _disk_angle_to_real(attracting)
        base = cls.axis_translation(length).m
        # send 0 -> xr, inf -> xa
        if math.isinf(xa):
            conj = np.array([[1.0, xr], [0.0, 1.0]])
        elif math.isinf(xr):
            conj = np.array([[xa, -1.0], [1.0, 0.0]])
        else:
            conj = np.array([[xa, xr], [1.0, 1.0]])
        conj = conj / math.sqrt(abs(np.linalg.det(conj)))
        if np.linalg.det(conj) < 0:
            conj = conj @ np.diag([1.0, -1.0])
        return cls(conj @ base @ np.linalg.inv(conj))

    def __matmul__(self, other):
        return IsometryElement(self.m @ other.m)

    def compose(self, other):
        return self @ other

    def inverse(self):
        a, b = self.matrix[0]
        c, d = self.matrix[1]
        return IsometryElement(np.array([[d, -b], [-c, a]]))

    def power(self, k):
        k = int(k)
        base = self if k >= 0 else self.inverse()
        m = np.linalg.matrix_power(base.m, abs(k))
        # re-impose unit determinant against drift
        return IsometryElement(m / math.sqrt(np.linalg.det(m)))

    @property
    def trace(self):
        return self.matrix[0][0] + self.matrix[1][1]

    @property
    def axis_compatible(self):
        """True iff the element maps the axis to itself."""
        m = self.m
        scale = float(np.abs(m).max())
        tol = 1e-12 * scale
        return bool((abs(m[0, 1]) <= tol and abs(m[1, 0]) <= tol)
                    or (abs(m[0, 0]) <= tol and abs(m[1, 1]) <= tol))

    def disk_matrix(self):
        return _CAYLEY @ self.m @ _CAYLEY_INV

    def key(self):
        m = self.m
        if m[0, 0] < 0 or (m[0, 0] == 0 and m[0, 1] < 0):
            m = -m
        return tuple(np.round(m.ravel(), 12))


def _disk_angle_to_real(alpha):
    """Boundary disk angle -> point of the extended real line."""
    w = complex(math.cos(alpha), math.sin(alpha))
    if abs(w - 1.0) < 1e-15:
        return math.inf
    z = 1j * (1.0 + w) / (1.0 - w)
    return float(z.real)


def check_isometry(model, g):
    if not isinstance(g, IsometryElement):
        raise InvalidIsometryError("expected an IsometryElement")
    if not model.is_hyperbolic and not g.axis_compatible:
        raise InvalidIsometryError("perturbed model only admits axis-preserving isometries")
    return g


def mobius_disk(g, w):
    md = g.disk_matrix()
    w = np.asarray(w, dtype=complex)
    den = md[1, 0] * w + md[1, 1]
    return (md[0, 0] * w + md[0, 1]) / den, 1.0 / den ** 2


def isometry_apply(model, g, obj):
    """Action on a Point or UnitTangent."""
    check_isometry(model, g)
    if isinstance(obj, Point):
        w, _ = mobius_disk(g, obj.w)
        return Point.from_complex(complex(w))
    if isinstance(obj, UnitTangent):
        w, dw = mobius_disk(g, obj.point.w)
        return UnitTangent(Point.from_complex(complex(w)),
                           float(math.remainder(obj.angle + np.angle(dw), 2 * math.pi)))
    raise DomainError("isometry_apply expects a Point or UnitTangent")


@dataclass(frozen=True)
class Classification:
    kind: IsometryClass
    translation_length: float
    fixed_points: tuple
    attracting: float | None
    repelling: float | None


def isometry_classify(g, tol=1e-9):
    """Type, translation length and boundary fixed points (disk angles)."""
    tr = abs(g.trace)
    a, b = g.matrix[0]
    c, d = g.matrix[1]
    if tr < 2.0 - tol or np.allclose(np.abs(g.matrix), np.eye(2), rtol=0.0, atol=tol):
        return Classification(IsometryClass.ELLIPTIC, 0.0, (), None, None)
    # fixed points of z -> (az+b)/(cz+d) on the real line
    if abs(c) < 1e-15:
        roots = [math.inf]
        if abs(a - d) > 1e-15:
            roots.append(b / (d - a))
    else:
        disc = max((a - d) ** 2 + 4.0 * b * c, 0.0)
        sq = math.sqrt(disc)
        roots = [(a - d + sq) / (2.0 * c), (a - d - sq) / (2.0 * c)]
    angles = []
    for x in roots:
        if math.isinf(x):
            angles.append(0.0)
        else:
            w = (x - 1j) / (x + 1j)
            angles.append(float(np.angle(w)))
    if tr <= 2.0 + tol:
        return Classification(IsometryClass.PARABOLIC, 0.0, (angles[0],), None, None)
    ell = 2.0 * math.acosh(tr / 2.0)
    mult = [d * d if math.isinf(x) else 1.0 / (c * x + d) ** 2 for x in roots]
    if mult[0] < 1.0:
        att, rep = angles[0], angles[1]
    else:
        att, rep = angles[1], angles[0]
    return Classification(IsometryClass.LOXODROMIC, ell, tuple(angles), att, rep)
