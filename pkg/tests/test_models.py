import math

import pytest

from horolab import (
    ORIGIN, IsometryElement, ManifoldModel, Point, UnitTangent, curvature_at, distance,
    geodesic_evolve, isometry_apply, isometry_classify,
)
from horolab.errors import DomainError, InvalidIsometryError
from horolab.models import IsometryClass, from_fermi, tangent_from_fermi


def test_constant_curvature(const):
    assert curvature_at(const, Point(0.3, 0.1)) == -1.0


def test_zero_profile_curvature(flat):
    for p in (Point(0.0, 0.0), Point(0.2, -0.5), Point(0.7, 0.1)):
        assert curvature_at(flat, p) == pytest.approx(-1.0, abs=1e-12)


def test_axis_curvature_matches_fd_laplacian(pert):
    prof = pert.profile
    h = 1e-4
    lap = (prof.psi(h) - 2 * prof.psi(0.0) + prof.psi(-h)) / h ** 2
    expected = math.exp(-2 * prof.psi(0.0)) * (-1.0 - lap)
    k = curvature_at(pert, ORIGIN)
    assert k == pytest.approx(expected, abs=1e-6)
    # the axis is where K attains its maximum -a^2
    assert k == pytest.approx(-pert.a ** 2, abs=1e-12)


def test_pinching_constants(pert):
    assert pert.a == pytest.approx(0.5722694306, abs=1e-9)
    assert pert.b == pytest.approx(1.1919474058, abs=1e-9)


def test_point_outside_chart():
    with pytest.raises(DomainError):
        Point(1.0, 0.0)


def test_geodesic_radius(const):
    w = geodesic_evolve(const, UnitTangent(ORIGIN, 0.0), math.log(3.0))
    assert w.point.x == pytest.approx(0.5, abs=1e-8)
    assert w.point.y == pytest.approx(0.0, abs=1e-10)


def test_geodesic_zero_time(pert):
    v = UnitTangent(Point(0.2, 0.3), 1.1)
    assert geodesic_evolve(pert, v, 0.0) == v


def test_axis_is_geodesic(pert):
    w = geodesic_evolve(pert, tangent_from_fermi(0.0, -1.0, 0.0), 4.0)
    assert abs(w.point.y) <= 1e-12


def test_distance_oracles(const, flat):
    assert distance(const, ORIGIN, Point(0.5, 0.0)) == pytest.approx(2 * math.atanh(0.5), abs=1e-12)
    p = Point(0.3, -0.2)
    assert distance(const, p, p) == 0.0
    assert distance(flat, ORIGIN, Point(0.3, -0.4)) == pytest.approx(
        distance(const, ORIGIN, Point(0.3, -0.4)), abs=1e-6)


def test_distance_perturbed_symmetric(pert):
    x, y = Point(0.1, 0.4), Point(-0.3, -0.2)
    assert distance(pert, x, y) == pytest.approx(distance(pert, y, x), abs=1e-9)


def test_isometry_rotation(const):
    q = isometry_apply(const, IsometryElement.rotation(math.pi / 2), Point(0.5, 0.0))
    assert (q.x, q.y) == pytest.approx((0.0, 0.5), abs=1e-12)


def test_isometry_identity(const):
    v = UnitTangent(Point(0.1, 0.2), 0.3)
    w = isometry_apply(const, IsometryElement.identity(), v)
    assert w.point == v.point
    assert w.angle == pytest.approx(v.angle, abs=1e-15)


def test_loxodromic_moves_origin(const):
    g = IsometryElement.loxodromic(math.pi, 0.0, 1.0)
    q = isometry_apply(const, g, ORIGIN)
    assert (q.x, q.y) == pytest.approx((math.tanh(0.5), 0.0), abs=1e-12)
    assert distance(const, ORIGIN, q) == pytest.approx(1.0, abs=1e-12)


def test_classification():
    g = IsometryElement.axis_translation(1.0)
    assert abs(g.trace) == pytest.approx(2 * math.cosh(0.5))
    c = isometry_classify(g)
    assert c.kind == IsometryClass.LOXODROMIC
    assert c.translation_length == pytest.approx(1.0, abs=1e-12)
    c = isometry_classify(IsometryElement.identity())
    assert c.kind == IsometryClass.ELLIPTIC
    assert c.translation_length == 0.0


def test_perturbed_rejects_rotation(pert):
    with pytest.raises(InvalidIsometryError):
        isometry_apply(pert, IsometryElement.rotation(0.3), ORIGIN)


def test_perturbed_isometry_preserves_distance(pert):
    g = IsometryElement.half_turn(0.3) @ IsometryElement.axis_translation(0.7)
    x, y = Point(0.1, 0.4), Point(-0.3, -0.2)
    d0 = distance(pert, x, y)
    d1 = distance(pert, isometry_apply(pert, g, x), isometry_apply(pert, g, y))
    assert d1 == pytest.approx(d0, abs=1e-8)


def test_descriptor_roundtrip(pert):
    desc = pert.to_descriptor()
    assert set(desc) == {"kind", "a", "b", "amplitude", "support_radius"}
    again = ManifoldModel.from_descriptor(desc)
    assert again.a == pert.a and again.b == pert.b


def test_descriptor_rejects_unknown_keys():
    with pytest.raises(DomainError):
        ManifoldModel.from_descriptor({"kind": "constant", "colour": 1})


def test_declared_bounds_checked():
    with pytest.raises(DomainError):
        ManifoldModel.perturbed_axial(a=0.9)


def test_fermi_roundtrip():
    p = from_fermi(0.4, -0.7)
    from horolab.models import to_fermi
    assert to_fermi(p) == pytest.approx((0.4, -0.7), abs=1e-12)
