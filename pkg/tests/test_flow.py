import math
import time

import numpy as np
import pytest

from horolab import Point, UnitTangent
from horolab import flow
from horolab.errors import DomainError


def test_riccati_closed_form(const):
    v = UnitTangent(Point(0.3, 0.1), 0.7)
    assert flow.riccati_mean_curvature(const, v, 10.0).value == pytest.approx(math.tanh(10.0), abs=1e-6)
    assert flow.riccati_mean_curvature(const, v, 1.0).value == pytest.approx(math.tanh(1.0), abs=1e-6)


def test_riccati_rejects_bad_horizon(const):
    with pytest.raises(DomainError):
        flow.riccati_mean_curvature(const, (0.0, 0.0, 0.0), 0.0)


def test_riccati_speed(const):
    v = UnitTangent(Point(0.3, 0.1), 0.7)
    flow.riccati_mean_curvature(const, v, 10.0)
    t0 = time.perf_counter()
    for i in range(100):
        flow.riccati_mean_curvature(const, UnitTangent(Point(0.3, 0.1), 0.01 * i), 10.0)
    assert time.perf_counter() - t0 < 1.0


def test_riccati_within_pinching(pert, rng):
    R = 15.0
    lo = pert.a * math.tanh(pert.a * R)
    for _ in range(20):
        st = (rng.uniform(-0.8, 0.8), rng.uniform(-1, 1), rng.uniform(-math.pi, math.pi))
        m = flow.riccati_mean_curvature(pert, st, R).value
        assert lo - 1e-8 <= m <= pert.b + 1e-8


def test_far_from_bump_is_hyperbolic(pert):
    # a geodesic that never meets the support sees K = -1 throughout
    m = flow.riccati_mean_curvature(pert, (6.0, 0.0, math.pi / 2), 3.0).value
    assert m == pytest.approx(math.tanh(3.0), abs=1e-6)


def test_riccati_matches_jacobi_quotient(pert):
    v = (0.2, 0.1, 2.0)
    u, q = flow.riccati_jacobi_paths(pert, v, 12.0, np.linspace(0.0, 2.0, 5))
    assert np.max(np.abs(u - q)) < 1e-7


def test_jacobi_closed_form(const):
    v = UnitTangent(Point(0.1, 0.0), 0.4)
    assert flow.jacobi_solve(const, v, 0.0, 1.0, 2.0).J[-1] == pytest.approx(math.sinh(2.0), abs=1e-8)
    assert flow.jacobi_solve(const, v, 1.0, 0.0, 2.0).J[-1] == pytest.approx(math.cosh(2.0), abs=1e-8)


def test_jacobi_rejects_zero_data(const):
    with pytest.raises(DomainError):
        flow.jacobi_solve(const, (0.0, 0.0, 0.0), 0.0, 0.0, 1.0)


def test_truncation_rate_constant(const):
    Rs = np.arange(2.0, 8.0)
    st = [(0.3, 0.0, 0.7)]
    d = [abs(flow.mean_curvature_many(const, st, R)[0] - flow.mean_curvature_many(const, st, 2 * R)[0])
         for R in Rs]
    rate = -np.polyfit(Rs, np.log(d), 1)[0]
    assert 1.0 <= rate <= 4.0


def test_f_symmetric_flip_exact(pert):
    v = UnitTangent(Point(0.2, -0.3), 0.9)
    assert flow.f_symmetric(pert, v) == flow.f_symmetric(pert, v.flip())


def test_symmetry_defect_constant(const):
    bound = flow.truncation_bound(const, flow.DEFAULT_HORIZON)
    assert flow.symmetry_defect(const, (0.3, 0.0, 1.0), 10.0) <= 2 * bound + 1e-9


def test_symmetry_defect_axis(pert):
    assert flow.symmetry_defect(pert, (0.0, 0.0, 0.0), 10.0) <= 1e-8


def test_symmetry_defect_bounded(pert, rng):
    st = np.column_stack([rng.uniform(-1, 1, 10), np.zeros(10), rng.uniform(-math.pi, math.pi, 10)])
    d10 = flow.symmetry_defects(pert, st, 10.0)
    d40 = flow.symmetry_defects(pert, st, 40.0)
    assert np.all(np.isfinite(d40))
    assert d40.max() < 10 * max(d10.max(), 1e-3)


def test_holder_degenerate(const, flat):
    assert flow.holder_exponent(const)["degenerate"]
    assert flow.holder_exponent(flat, n_pairs=50)["degenerate"]


def test_holder_positive(pert):
    r = flow.holder_exponent(pert, n_pairs=200, seed=3)
    assert not r["degenerate"]
    assert r["ci95"][0] > 0


def test_holder_estimator(pert):
    est = flow.HolderExponentEstimator(pert, n_pairs=100).fit()
    assert est.exponent_ > 0
    assert 0 <= est.fit_r2_ <= 1
    assert est.get_params()["n_pairs"] == 100


def test_mean_curvature_field_cache(pert):
    field = flow.MeanCurvatureField(pert)
    v = (0.1, 0.2, 0.3)
    assert field.m(v) == field.m(v)
    assert field.f(v) == pytest.approx(flow.f_symmetric(pert, v), abs=1e-15)
