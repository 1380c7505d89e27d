"""
Model catalog: construction, charts, overlap consistency and curvature.
"""
import math

import numpy as np
import pytest

from sojourn.errors import OutsideChart, OutsideOverlap, ParamOutOfRange, UnknownModel
from sojourn.manifolds import (
    Chart,
    ChartPoint,
    ManifoldKind,
    ModelId,
    chart_transition,
    collar_family,
    collar_metric,
    curvature_operator,
    frame_at,
    interior_metric,
    lens_factor,
    make_model,
    metric_batch,
    overlap_metric_defect,
    radial_profile,
    sphere_chart,
    sphere_embed,
)


def test_make_model_fills_kind_and_collar(flat2, hyp3):
    assert flat2.kind is ManifoldKind.SCATTERING
    assert hyp3.kind is ManifoldKind.ASYMP_HYPERBOLIC
    assert flat2.collar_x0 == pytest.approx(0.2)
    assert hyp3.boundary_dim == 2


@pytest.mark.parametrize(
    "args, error",
    [
        (("Sphere", 2), UnknownModel),
        ((ModelId.FLAT_EUCLIDEAN, 4), ParamOutOfRange),
        ((ModelId.FLAT_EUCLIDEAN, 2, {"a": 0.1}), ParamOutOfRange),
        ((ModelId.PERTURBED_SCATTERING, 2, {"a": 0.5}), ParamOutOfRange),
        ((ModelId.PERTURBED_AH, 2, {"a": 0.1, "w": -1.0}), ParamOutOfRange),
        ((ModelId.PERTURBED_AH, 2, {"b": 0.1}), ParamOutOfRange),
    ],
)
def test_make_model_rejects_bad_input(args, error):
    with pytest.raises(error):
        make_model(*args)


def test_make_model_rejects_wide_collar():
    with pytest.raises(ParamOutOfRange):
        make_model(ModelId.PERTURBED_SCATTERING, 2, {"a": 0.1}, collar_x0=0.3)


def test_make_model_rejects_kind_mismatch():
    with pytest.raises(ParamOutOfRange):
        make_model(ModelId.HYPERBOLIC_HN, 2, kind=ManifoldKind.SCATTERING)


def test_flat_and_hyperbolic_metrics(flat3, hyp3):
    assert np.allclose(interior_metric(flat3, np.array([1.0, 2.0, 3.0])).components, np.eye(3))
    g = interior_metric(hyp3, np.array([0.5, 0.1, -0.2])).components
    assert np.allclose(g, np.eye(3) / 0.25)


def test_half_space_needs_positive_x(hyp2):
    with pytest.raises(OutsideChart):
        interior_metric(hyp2, np.array([-0.1, 0.0]))


def test_perturbed_metric_is_conformally_flat_inside_cutoff(bump2, radial3):
    pts = np.array([[0.5, 0.3], [0.0, 0.9]])
    factor = lens_factor(bump2, pts)
    assert np.all(factor < 1.0)
    assert np.allclose(metric_batch(bump2, pts), factor[:, None, None] * np.eye(2))
    # no lens without the bump
    assert np.allclose(metric_batch(radial3, np.array([[0.5, 0.3, -0.2]])), np.eye(3))


def test_focusing_lens_stays_bounded(lens2, rng):
    pts = rng.uniform(-4, 4, size=(500, 2))
    factor = lens_factor(lens2, pts)
    assert np.all((factor >= 1.0) & (factor <= 1.6 + 1e-12))
    assert lens_factor(lens2, np.zeros(2)) == pytest.approx(1.6)
    assert np.allclose(lens_factor(lens2, np.array([[4.0, 0.0], [0.0, -5.0]])), 1.0)


def test_perturbed_metric_is_positive(bump2, rng):
    pts = rng.uniform(-6, 6, size=(50, 2))
    assert np.all(np.linalg.eigvalsh(metric_batch(bump2, pts)) > 0)


def test_frame_at_is_rotation_with_given_pole(rng):
    for n in (2, 3):
        theta = rng.normal(size=n)
        q = frame_at(theta)
        assert np.allclose(q[:, 0], theta / np.linalg.norm(theta))
        assert np.allclose(q.T @ q, np.eye(n))
        assert np.linalg.det(q) == pytest.approx(1.0)


@pytest.mark.parametrize("n", [2, 3])
def test_sphere_chart_inverts_embedding(n, rng):
    frame = frame_at(rng.normal(size=n))
    y = rng.uniform(-0.5, 0.5, n - 1)
    theta, _ = sphere_embed(y, frame)
    assert np.linalg.norm(theta) == pytest.approx(1.0)
    assert np.allclose(sphere_chart(theta, frame), y)


def test_chart_transition_round_trip_scattering(flat3):
    z = np.array([6.0, -3.0, 2.0])
    covector = np.array([0.3, -0.1, 0.7])
    image, xi = chart_transition(flat3, ChartPoint(Chart.INTERIOR, z), covector)
    assert image.chart is Chart.COLLAR
    assert image.coords[0] == pytest.approx(1.0 / np.linalg.norm(z))
    back, zeta = chart_transition(flat3, image, xi)
    assert np.allclose(back.coords, z)
    assert np.allclose(zeta, covector)


def test_chart_transition_is_identity_on_half_space(hyp2):
    image, xi = chart_transition(hyp2, ChartPoint(Chart.INTERIOR, np.array([0.1, 0.4])), np.array([1.0, 2.0]))
    assert np.allclose(image.coords, [0.1, 0.4])
    assert np.allclose(xi, [1.0, 2.0])


def test_chart_transition_outside_overlap(flat2):
    with pytest.raises(OutsideOverlap):
        chart_transition(flat2, ChartPoint(Chart.INTERIOR, np.array([1.0, 1.0])))


def test_collar_metric_rejects_interior_x(flat2):
    with pytest.raises(OutsideChart):
        collar_metric(flat2, 0.5, np.array([0.0]))


@pytest.mark.parametrize("model_name", ["flat3", "hyp3", "radial3", "bump2", "ah_bump2"])
def test_collar_normal_form_matches_interior_metric(model_name, request, rng):
    model = request.getfixturevalue(model_name)
    n = model.dim
    for _ in range(5):
        if model.is_scattering:
            z = rng.normal(size=n)
            z *= 8.0 / np.linalg.norm(z)
        else:
            z = np.concatenate([[0.1], rng.uniform(-1, 1, n - 1)])
        assert overlap_metric_defect(model, z) < 1e-10


def test_curvature_of_exact_models(flat2, hyp3):
    assert curvature_operator(flat2, np.array([0.3, 0.2])).sectional(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0
    data = curvature_operator(hyp3, np.array([0.7, 0.1, 0.2]))
    assert data.sectional(np.array([1.0, 0.5, 0.0]), np.array([0.0, 1.0, 2.0])) == pytest.approx(-1.0)


def test_finite_difference_curvature_matches_constant_curvature_formula():
    # PerturbedAH with a = 0 is hyperbolic space run through the generic code path
    model = make_model(ModelId.PERTURBED_AH, 2, {"a": 0.0})
    k = curvature_operator(model, np.array([0.8, 0.3])).sectional(np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    assert k == pytest.approx(-1.0, abs=1e-5)


def test_perturbed_curvature_is_finite(bump2):
    k = curvature_operator(bump2, np.array([2.5, 0.4])).sectional(np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    assert math.isfinite(k)


def test_radial_profile(flat3, radial3):
    r = np.array([0.5, 2.0, 6.0])
    rho, drho, d2rho = radial_profile(flat3, r)
    assert np.allclose(rho, r) and np.allclose(drho, 1.0) and np.allclose(d2rho, 0.0)
    rho, _, _ = radial_profile(radial3, np.array([0.5, 6.0]))
    assert rho[0] == pytest.approx(0.5)
    assert rho[1] == pytest.approx(math.sqrt(36.0 + 0.2 * 6.0))


def test_radial_profile_requires_symmetry(bump2):
    with pytest.raises(ParamOutOfRange):
        radial_profile(bump2, np.array([1.0]))


def test_collar_family_catalog_value():
    model = make_model(ModelId.PERTURBED_SCATTERING, 2, {"a": 0.1, "w": 1.0})
    h, dh = collar_family(model, 0.5, np.array([0.0]), np.eye(2))
    assert h[0, 0] == pytest.approx(1.05)
    assert dh[0, 0, 0] == pytest.approx(0.1)


def test_half_space_christoffel_symbols(hyp2):
    x = 0.5
    gamma = interior_metric(hyp2, np.array([x, 0.3])).christoffel
    assert gamma[0, 1, 1] == pytest.approx(1 / x, rel=1e-6)
    assert gamma[0, 0, 0] == pytest.approx(-1 / x, rel=1e-6)
    assert gamma[1, 0, 1] == pytest.approx(-1 / x, rel=1e-6)
    assert gamma[1, 1, 1] == pytest.approx(0.0, abs=1e-6)


def test_scattering_curvature_decays_at_the_boundary(bump2):
    # outside the cutoff the pole ray carries dr^2 + (r^2 + a r) dtheta^2
    a = bump2.amplitude
    xs = np.array([0.2, 0.15, 0.1, 0.05])
    ks = np.array(
        [curvature_operator(bump2, np.array([1.0 / x, 0.0])).sectional(np.array([1.0, 0.0]), np.array([0.0, 1.0])) for x in xs]
    )
    r = 1.0 / xs[0]
    assert ks[0] == pytest.approx(a**2 / (4 * (r**2 + a * r) ** 2), rel=1e-2)
    c = abs(ks[0]) / xs[0] ** 2
    assert np.all(np.abs(ks) <= c * xs**2 * (1 + 1e-6))
