import math

import numpy as np
import pytest

from horolab import IsometryElement, besov, measure
from horolab.errors import PreconditionError


def grid_integral(values_fn, N=2000):
    """Midpoint quadrature of F(a, b) / sin^2((a - b)/2) / (4 pi^2), offset grids."""
    h = 2 * np.pi / N
    a = -np.pi + h * np.arange(N)
    b = a + h / 2
    tot = 0.0
    for i in range(0, N, 250):
        A = a[i:i + 250, None]
        d = np.abs(np.sin((A - b[None, :]) / 2))
        tot += np.sum(values_fn(slice(i, i + 250), A, b[None, :]) / d ** 2)
    return tot * h * h / (4 * np.pi ** 2)


def test_besov_constant_function(const):
    nu = measure.NuMeasure(const, 1.0)
    est = besov.besov_seminorm(lambda t: np.ones_like(t), 2.0, 1.0, nu, 5000, 0)
    assert est.value == 0.0


def test_besov_cos_grid_oracle(const):
    grid = grid_integral(lambda s, a, b: (np.cos(a) - np.cos(b)) ** 2)
    assert grid == pytest.approx(2.0, abs=1e-9)
    est = besov.besov_seminorm(np.cos, 2.0, 1.0, measure.NuMeasure(const, 1.0), 100_000, 0)
    assert est.value == pytest.approx(grid, rel=0.01)
    assert est.converged


def test_besov_lipschitz_converges(pert):
    nu = measure.NuMeasure(pert, 0.5)
    f = lambda t: np.asarray(measure.NuMeasure(pert, 0.5).delta(0.4, t))
    est = besov.besov_seminorm(f, 4.0, 2.0, nu, 50_000, 1)
    assert est.converged


def test_besov_precondition(const):
    with pytest.raises(PreconditionError):
        besov.besov_seminorm(np.cos, 1.0, 1.0, measure.NuMeasure(const, 1.0), 1000, 0)


def test_cocycle_rotation(const):
    g = IsometryElement.rotation(0.7)
    assert np.max(np.abs(besov.cocycle_value(const, g, 1.0, np.array([0.1, 2.0]), np.array([-1.0, 3.0])))) <= 1e-8


def test_cocycle_fixed_points(const):
    g = IsometryElement.loxodromic(math.pi, 0.0, 1.0)
    assert besov.cocycle_value(const, g, 1.0, 0.0, math.pi) == pytest.approx(-2.0, abs=1e-8)


def test_cocycle_rule(pert, rng):
    g = IsometryElement.axis_translation(1.5)
    h = IsometryElement.half_turn(0.3)
    xi, eta = rng.uniform(-math.pi, math.pi, (2, 20))
    from horolab import boundary as bd
    lhs = besov.cocycle_value(pert, g @ h, 0.25, xi, eta)
    rhs = besov.cocycle_value(pert, g, 0.25, bd.boundary_map(pert, h, xi), bd.boundary_map(pert, h, eta)) \
        + besov.cocycle_value(pert, h, 0.25, xi, eta)
    assert np.max(np.abs(lhs - rhs)) <= 1e-4


def test_cocycle_norm_rotation(const):
    est = besov.cocycle_lp_norm(const, IsometryElement.rotation(1.0), 2.0, 1.0, 5000, 0)
    assert est.value <= 1e-12


@pytest.mark.parametrize("k", [1, 4])
def test_cocycle_norm_grid_oracle(const, k):
    g = IsometryElement.loxodromic(math.pi, 0.0, 1.0).power(k)
    N = 2000
    h = 2 * np.pi / N
    a = -np.pi + h * np.arange(N)
    la = besov.log_derivative(const, g, 1.0, a)
    lb = besov.log_derivative(const, g, 1.0, a + h / 2)
    grid = grid_integral(lambda s, A, B: (la[s, None] - lb[None, :]) ** 2, N)
    est = besov.cocycle_lp_norm(const, g, 2.0, 1.0, 100_000, 0)
    assert est.value == pytest.approx(grid, rel=0.02)


def test_cocycle_norm_precondition(pert):
    with pytest.raises(PreconditionError):
        besov.cocycle_lp_norm(pert, IsometryElement.axis_translation(1.0), 4.0, 0.25, 5000, 0)
    with pytest.raises(PreconditionError):
        besov.cocycle_lp_norm(pert, IsometryElement.axis_translation(1.0), 8.0, 0.25, 10, 0)


def test_growth_rejects_elliptic(const):
    with pytest.raises(PreconditionError):
        besov.growth_experiment(const, IsometryElement.rotation(0.5), 2.0, 1.0, 4, 5000)


def test_growth_constant(const):
    s = besov.growth_experiment(const, IsometryElement.loxodromic(math.pi, 0.0, 1.0), 2.0, 1.0,
                                k_max=8, n=100_000, seed=7)
    assert s.increasing and s.slope > 0 and s.r2 >= 0.9
    assert len(list(s.rows())) == 8


def test_growth_estimator(const):
    est = besov.CocycleGrowthEstimator(const, k_max=4, n=20_000).fit(
        IsometryElement.loxodromic(math.pi, 0.0, 1.0))
    assert est.slope_ > 0
    assert est.verdict_.startswith("unbounded-growth evidence")
