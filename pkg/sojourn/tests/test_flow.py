"""
Geodesic flow through the interior and collar charts and its boundary limits.
"""
import math

import numpy as np
import pytest

from sojourn.errors import ChartInvariantViolated, NotAtBoundary
from sojourn.flow import (
    FlowOptions,
    PathStatus,
    PhaseState,
    backward_limits,
    boundary_limits,
    fiber_limit_estimates,
    hamilton_rhs,
    integrate_geodesic,
    sojourn_relation,
)
from sojourn.manifolds import Chart, ChartPoint, interior_metric
from sojourn.poisson import h3_oracle_phase


def _unit(model, z, v):
    g = interior_metric(model, z).components
    v = np.asarray(v, dtype=float)
    return v / math.sqrt(v @ g @ v)


def test_flat_example_point(flat2):
    limit = sojourn_relation(flat2, np.array([0.5, -0.25]), np.array([1.0, 0.0]))
    assert limit.s == pytest.approx(-0.5, abs=1e-8)
    assert np.allclose(limit.y, [1.0, 0.0], atol=1e-8)
    assert limit.sigma == pytest.approx(1.0, abs=1e-8)
    assert limit.err < 1e-6


@pytest.mark.parametrize("n", [2, 3])
def test_euclidean_sojourn_law(n, request, rng):
    model = request.getfixturevalue(f"flat{n}")
    for _ in range(10):
        z = rng.uniform(-3, 3, n)
        theta = rng.normal(size=n)
        theta /= np.linalg.norm(theta)
        limit = sojourn_relation(model, z, theta)
        assert abs(limit.s + theta @ z) <= 1e-8
        assert np.allclose(limit.y, theta, atol=1e-8)


@pytest.mark.parametrize("n", [2, 3])
def test_hyperbolic_sojourn_law(n, request, rng):
    model = request.getfixturevalue(f"hyp{n}")
    for _ in range(10):
        z = np.concatenate([[rng.uniform(0.5, 2.0)], rng.uniform(-1, 1, n - 1)])
        d = _unit(model, z, rng.normal(size=n))
        limit = sojourn_relation(model, z, d)
        assert abs(limit.s - h3_oracle_phase(z, limit.y)) <= 1e-6


def test_vertical_geodesic_in_half_space(hyp3):
    z = np.array([0.8, 0.2, -0.1])
    limit = sojourn_relation(hyp3, z, np.array([-0.8, 0.0, 0.0]))
    assert limit.s == pytest.approx(math.log(0.8), abs=1e-8)
    assert np.allclose(limit.y, [0.2, -0.1], atol=1e-8)


def test_radial_geodesic_of_symmetric_model(radial3):
    limit = sojourn_relation(radial3, np.array([2.0, 0.0, 0.0]), np.array([1.0, 0.0, 0.0]))
    assert limit.s == pytest.approx(-2.0, abs=1e-7)
    assert np.allclose(limit.y, [1.0, 0.0, 0.0], atol=1e-8)


@pytest.mark.parametrize("model_name", ["flat3", "hyp3", "bump2", "ah_bump2"])
def test_conservation_along_path(model_name, request, rng):
    model = request.getfixturevalue(model_name)
    n = model.dim
    for _ in range(3):
        z = rng.uniform(-2, 2, n) if model.is_scattering else np.concatenate([[1.0], rng.uniform(-1, 1, n - 1)])
        path = integrate_geodesic(model, z, _unit(model, z, rng.normal(size=n)))
        assert path.status is PathStatus.REACHED_BOUNDARY
        assert path.conservation_drift() <= 1e-8
        assert path.sigma_drift() <= 1e-10


@pytest.mark.parametrize("model_name", ["flat2", "hyp2", "bump2", "ah_bump2"])
def test_covector_scaling(model_name, request, rng):
    model = request.getfixturevalue(model_name)
    n = model.dim
    z = rng.uniform(-2, 2, n) if model.is_scattering else np.array([1.2, 0.3])
    d = _unit(model, z, rng.normal(size=n))
    one = sojourn_relation(model, z, d)
    two = sojourn_relation(model, z, d, scale=2.0)
    assert two.s == pytest.approx(one.s, abs=1e-8)
    assert np.allclose(two.y, one.y, atol=1e-8)
    assert two.sigma == pytest.approx(2 * one.sigma, abs=1e-8)
    assert np.allclose(two.eta, 2 * one.eta, atol=1e-8)


def test_backward_branch_in_flat_space(flat2):
    z = np.array([1.0, 2.0])
    theta = np.array([0.6, 0.8])
    limit = backward_limits(flat2, z, theta)
    assert limit.s == pytest.approx(theta @ z, abs=1e-8)
    assert np.allclose(limit.y, -theta, atol=1e-8)
    assert limit.sigma < 0


def test_non_unit_direction_is_rejected(flat2):
    with pytest.raises(ChartInvariantViolated):
        integrate_geodesic(flat2, np.zeros(2), np.array([2.0, 0.0]))


def test_trapping_budget_reports_trapped(flat2):
    opts = FlowOptions.from_settings(trap_factor=0.01)
    path = integrate_geodesic(flat2, np.zeros(2), np.array([1.0, 0.0]), opts)
    assert path.status is PathStatus.TRAPPED
    with pytest.raises(NotAtBoundary):
        boundary_limits(flat2, path)


def test_physical_time_is_monotone(flat3):
    path = integrate_geodesic(flat3, np.array([0.3, 0.1, -0.2]), np.array([0.0, 1.0, 0.0]))
    t = path.t_of_param
    finite = t[np.isfinite(t)]
    assert np.all(np.diff(finite) >= -1e-12)
    assert np.isinf(t[-1])


def test_fiber_limit_estimates_converge(flat2, hyp2):
    cases = ((flat2, np.array([0.5, 1.0])), (hyp2, np.array([1.0, 0.0])))
    for model, z in cases:
        d = np.array([0.6, 0.8])
        path = integrate_geodesic(model, z, d)
        estimates = fiber_limit_estimates(model, path, levels=4)
        assert len(estimates) == 4
        slopes = np.array([float(np.ravel(v)[0]) for _, v in estimates])
        assert np.all(np.isfinite(slopes))
        assert abs(slopes[-1] - slopes[-2]) <= abs(slopes[1] - slopes[0]) + 1e-12


def test_hamilton_rhs_in_both_charts(flat2):
    interior = PhaseState(Chart.INTERIOR, ChartPoint(Chart.INTERIOR, np.array([0.3, -0.1])), np.array([0.6, 0.8]))
    assert np.allclose(hamilton_rhs(flat2, interior), [0.6, 0.8, 0.0, 0.0])

    base = ChartPoint(Chart.COLLAR, np.array([0.1, 0.0]), np.eye(2))
    outgoing = PhaseState(Chart.COLLAR, base, np.array([0.0, 0.0]), s=0.0, sigma=1.0)
    rhs = hamilton_rhs(flat2, outgoing)
    assert rhs[0] == pytest.approx(-2.0)
    assert np.allclose(rhs[1:], 0.0)

    off_shell = PhaseState(Chart.COLLAR, base, np.array([1.0, 0.0]), s=0.0, sigma=1.0)
    with pytest.raises(ChartInvariantViolated):
        hamilton_rhs(flat2, off_shell)


@pytest.mark.parametrize(
    "model_name, z",
    [("flat2", [0.5, 1.0]), ("hyp2", [1.0, 0.0]), ("bump2", [0.3, -0.2])],
)
def test_every_direction_reaches_the_boundary(model_name, z, request):
    model = request.getfixturevalue(model_name)
    z = np.array(z)
    for alpha in np.arange(36) * (2 * math.pi / 36):
        d = _unit(model, z, [math.cos(alpha), math.sin(alpha)])
        path = integrate_geodesic(model, z, d)
        if model_name == "hyp2" and alpha == 0.0:
            assert path.status is PathStatus.LEFT_CHART
            with pytest.raises(NotAtBoundary):
                boundary_limits(model, path)
            continue
        assert path.status is PathStatus.REACHED_BOUNDARY, alpha
        assert boundary_limits(model, path).err < 1e-6


def test_hyperbolic_sojourn_is_translation_invariant(hyp3, rng):
    shift = np.array([0.0, 0.7, -0.4])
    for _ in range(4):
        z = np.concatenate([[rng.uniform(0.5, 2.0)], rng.uniform(-1, 1, 2)])
        d = _unit(hyp3, z, rng.normal(size=3))
        here = sojourn_relation(hyp3, z, d)
        there = sojourn_relation(hyp3, z + shift, d)
        assert there.s == pytest.approx(here.s, abs=1e-8)
        assert np.allclose(there.y, here.y + shift[1:], atol=1e-8)
        assert there.sigma == pytest.approx(here.sigma, abs=1e-8)


@pytest.mark.parametrize("model_name", ["hyp2", "ah_bump2"])
def test_ah_fiber_slope_tends_to_boundary_covector(model_name, request):
    model = request.getfixturevalue(model_name)
    z = np.array([1.0, 0.2])
    path = integrate_geodesic(model, z, _unit(model, z, [-0.6, 0.8]))
    limit = boundary_limits(model, path)
    target = limit.eta_chart / limit.sigma
    errors = [float(np.max(np.abs(v - target))) for _, v in fiber_limit_estimates(model, path, levels=5)]
    assert errors[-1] <= errors[0] / 8 + 1e-10
    assert errors[-1] < 1e-2
