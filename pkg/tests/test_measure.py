import csv
import math

import numpy as np
import pytest
from scipy import integrate

from horolab import ORIGIN, IsometryElement, Point, measure
from horolab.errors import DomainError


def test_lambda_origin(const, pert):
    assert measure.lambda_density(const, ORIGIN, 1.0) == pytest.approx(1 / (2 * math.pi))
    assert measure.lambda_density(pert, ORIGIN, -2.0) == pytest.approx(1 / (2 * math.pi))


def test_lambda_poisson_kernel(const):
    x = Point(0.5, 0.0)
    assert measure.lambda_density(const, x, 0.0) == pytest.approx(0.75 / 0.25 / (2 * math.pi), abs=1e-10)
    assert measure.lambda_density(const, x, math.pi) == pytest.approx(0.75 / 2.25 / (2 * math.pi), abs=1e-10)


def test_lambda_zero_amplitude(const, flat):
    x = Point(0.2, -0.3)
    for th in (0.0, 1.0, 2.5):
        assert measure.lambda_density(flat, x, th) == pytest.approx(
            measure.lambda_density(const, x, th), abs=1e-5)


@pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
def test_lambda_normalised(pert):
    x = Point(0.2, 0.1)
    edges = np.linspace(-math.pi, math.pi, 5)
    total = sum(integrate.quad(lambda t: measure.lambda_density(pert, x, t), a, b, limit=200)[0]
                for a, b in zip(edges[:-1], edges[1:]))
    assert total == pytest.approx(1.0, abs=1e-4)


def test_rn_lambda(const):
    x, y = Point(0.1, 0.2), Point(-0.3, 0.0)
    assert np.all(measure.rn_lambda(const, x, x, np.linspace(0, 3, 5)) == 1.0)
    r = measure.rn_lambda(const, x, y, 0.7)
    assert r == pytest.approx(measure.lambda_density(const, y, 0.7) / measure.lambda_density(const, x, 0.7))


def test_ball_mass_oracle(const):
    assert measure.ball_mass(const, ORIGIN, 1.0, 0.3, 0.1) == pytest.approx(2 * math.asin(0.1) / math.pi, abs=1e-8)
    assert measure.ball_mass(const, ORIGIN, 1.0, 0.3, 1.5) == 1.0


def test_ball_mass_small_r_ratio(const):
    ratios = [measure.ball_mass(const, ORIGIN, 1.0, 2.0, r) / r for r in (1e-2, 1e-3, 1e-4)]
    assert max(ratios) / min(ratios) < 1.01


@pytest.mark.parametrize("eps, expected", [(1.0, 1.0), (0.5, 2.0)])
def test_ahlfors_constant(const, eps, expected):
    r = np.logspace(-2.5, -0.5, 9)
    res = measure.ahlfors_fit(const, ORIGIN, eps, r, np.array([0.1, 1.0, 2.0]))
    assert res["dimension_estimate"] == pytest.approx(expected, rel=0.05)


def test_ahlfors_degenerate_grid(const):
    with pytest.raises(DomainError):
        measure.ahlfors_fit(const, ORIGIN, 1.0, [0.1, 0.2, 0.3], [0.0])


def test_ahlfors_estimator(pert):
    est = measure.AhlforsEstimator(pert, epsilon=0.25).fit(np.array([0.3, -1.2, 2.0]))
    assert est.dimension_ == pytest.approx(4.0, rel=0.15)
    assert est.constant_ >= 1.0


def test_nu_density_oracle(const):
    nu = measure.NuMeasure(const, 1.0)
    assert measure.nu_density(nu, 0.0, math.pi) == pytest.approx(1 / (4 * math.pi ** 2), abs=1e-14)


def test_nu_density_below_cutoff(const):
    nu = measure.NuMeasure(const, 1.0, cutoff=1e-3)
    with pytest.raises(DomainError):
        measure.nu_density(nu, 0.0, 1e-5)


def test_nu_sample_reproducible(pert):
    nu = measure.NuMeasure(pert, 0.25)
    a = measure.nu_sample(nu, 5000, 3)
    b = measure.nu_sample(nu, 5000, 3)
    assert np.array_equal(a.theta1, b.theta1) and np.array_equal(a.weight, b.weight)
    assert a.ess > 10


def test_nu_sample_integral(const):
    # integral of delta^2 d nu over the torus is 1 for Q = 1
    nu = measure.NuMeasure(const, 1.0, cutoff=1e-6)
    s = measure.nu_sample(nu, 50_000, 0)
    assert s.integral(s.delta ** 2) == pytest.approx(1.0, rel=0.03)


def test_nu_sample_csv(tmp_path, const):
    s = measure.nu_sample(measure.NuMeasure(const, 1.0), 2000, 0)
    path = tmp_path / "s.csv"
    s.to_csv(path)
    raw = path.read_bytes()
    assert b"\r" not in raw
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["theta1", "theta2", "weight", "delta"]
    assert len(rows) == 2001


def test_rn_nu_rotation(const, rng):
    xi, eta = rng.uniform(-math.pi, math.pi, (2, 50))
    r = measure.rn_nu(const, IsometryElement.rotation(0.8), 1.0, (xi, eta))
    assert np.max(np.abs(r - 1.0)) <= 1e-8


def test_rn_nu_modes_agree_constant(const, rng):
    g = IsometryElement.loxodromic(0.5, 2.0, 1.3)
    xi, eta = rng.uniform(-math.pi, math.pi, (2, 50))
    a = measure.rn_nu(const, g, 1.0, (xi, eta))
    b = measure.rn_nu(const, g, 1.0, (xi, eta), mode="derivative")
    assert np.max(np.abs(a / b - 1.0)) <= 1e-6


def test_rn_nu_density_ratio(const, rng):
    g = IsometryElement.loxodromic(0.5, 2.0, 1.3)
    nu = measure.NuMeasure(const, 1.0)
    from horolab import boundary as bd
    xi, eta = 0.3, -1.9
    jac = bd.boundary_map_jacobian(const, g, xi) * bd.boundary_map_jacobian(const, g, eta)
    direct = measure.nu_density(nu, bd.boundary_map(const, g, xi), bd.boundary_map(const, g, eta)) * jac \
        / measure.nu_density(nu, xi, eta)
    assert measure.rn_nu(const, g, 1.0, (xi, eta)) == pytest.approx(direct, rel=1e-6)


def test_rn_nu_bounded_over_powers(pert):
    from horolab.besov import growth_preconditions
    pre = growth_preconditions(pert, IsometryElement.axis_translation(4.0), 0.25, n_pairs=300)
    assert pre["rn_C"] < 5.0
    lo, hi = pre["rn_trend_ci95"]
    assert lo <= 0.0 <= hi
