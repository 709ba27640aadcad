import math

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from horolab import ORIGIN, ConstantCurvature, IsometryElement, PerturbedAxial, Point
from horolab import boundary as bd
from horolab import flow, measure

CONST = ConstantCurvature()
PERT = PerturbedAxial()

angle = st.floats(-math.pi, math.pi, allow_nan=False)
eps_ = st.floats(0.1, 2.0)
coord = st.floats(-0.6, 0.6)
quick = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])


def separated(a, b, gap=1e-3):
    return abs(math.remainder(a - b, 2 * math.pi)) > gap


@quick
@given(angle, angle)
def test_gromov_symmetric(a, b):
    assert bd.gromov_product(PERT, ORIGIN, a, b) == pytest.approx(bd.gromov_product(PERT, ORIGIN, b, a), abs=1e-12)


@quick
@given(angle, angle)
def test_gromov_nonnegative_at_origin(a, b):
    if separated(a, b):
        assert bd.gromov_product(CONST, ORIGIN, a, b) >= -1e-12


@quick
@given(angle, angle, eps_)
def test_quasimetric_in_unit_interval(a, b, eps):
    d = bd.quasimetric(CONST, ORIGIN, eps, a, b)
    assert 0.0 <= d <= 1.0 + 1e-12


@quick
@given(angle, angle, angle)
def test_triangle_constant_model(a, b, c):
    d = bd.QuasiMetric(CONST, 1.0)
    assert d(a, b) <= d(a, c) + d(c, b) + 1e-12


@quick
@given(angle, angle, st.floats(-2.0, 2.0))
def test_rotation_invariance(a, b, r):
    g = IsometryElement.rotation(r)
    lhs = bd.gromov_product(CONST, ORIGIN, bd.boundary_map(CONST, g, a), bd.boundary_map(CONST, g, b))
    if separated(a, b):
        assert lhs == pytest.approx(bd.gromov_product(CONST, ORIGIN, a, b), abs=1e-9)


@quick
@given(angle, angle, st.floats(-2.0, 2.0))
def test_axis_translation_chain_rule(a, b, t):
    g, h = IsometryElement.axis_translation(t), IsometryElement.half_turn(0.5 * t)
    lhs = bd.boundary_derivative(PERT, g @ h, a, 0.5)
    rhs = bd.boundary_derivative(PERT, g, bd.boundary_map(PERT, h, a), 0.5) * bd.boundary_derivative(PERT, h, a, 0.5)
    assert lhs == pytest.approx(rhs, rel=1e-4)


@quick
@given(angle, st.floats(0.0, 0.9), st.floats(-math.pi, math.pi))
def test_riccati_pinching(phi, rho, tau_angle):
    m = flow.riccati_mean_curvature(PERT, (rho, 0.3 * tau_angle, phi), 15.0).value
    assert PERT.a * math.tanh(15.0 * PERT.a) - 1e-8 <= m <= PERT.b + 1e-8


@quick
@given(coord, coord, angle)
def test_f_flip_bit_exact(x, y, phi):
    from horolab import UnitTangent
    if x * x + y * y >= 0.8:
        return
    v = UnitTangent(Point(x, y), phi)
    assert flow.f_symmetric(PERT, v) == flow.f_symmetric(PERT, v.flip())


@quick
@given(coord, coord, angle)
def test_q_antisymmetry(x, y, th):
    p = Point(x, y)
    q = Point(-0.5 * y, 0.3 * x)
    assert bd.q_value(PERT, th, p, q) == pytest.approx(-bd.q_value(PERT, th, q, p), abs=1e-9)


@quick
@given(angle, st.floats(1e-3, 0.9))
def test_ball_mass_monotone(xi, r):
    m1 = measure.ball_mass(CONST, ORIGIN, 1.0, xi, r)
    m2 = measure.ball_mass(CONST, ORIGIN, 1.0, xi, min(1.0, 1.5 * r))
    assert 0.0 < m1 <= m2 <= 1.0


@quick
@given(angle, angle)
def test_nu_density_symmetric(a, b):
    nu = measure.NuMeasure(PERT, 0.5)
    if nu.delta(a, b) >= nu.cutoff:
        assert measure.nu_density(nu, a, b) == pytest.approx(measure.nu_density(nu, b, a), rel=1e-12)
