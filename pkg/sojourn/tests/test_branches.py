"""
Branch search, boundary Jacobians and conjugate point counts.
"""
import logging
import math

import numpy as np
import pytest
from scipy.optimize import brentq

from sojourn.branches import (
    Branch,
    BranchSet,
    SearchOptions,
    asymptotic_direction_map,
    boundary_jacobian,
    branch_from_direction,
    conjugate_count,
    conjugate_points,
    fd_family_conjugate_count,
    find_branches,
    jacobian_consistency,
    nondegeneracy_check,
    quasi_uniform_directions,
    rescaled_jacobi_determinant,
    tangent_basis,
)
from sojourn.errors import DegenerateAtTarget, DegenerateBranch, JacobianUnstable, LeftChart
from sojourn.flow import BoundaryLimit
from sojourn.manifolds import ModelId, interior_metric, make_model
from sojourn.poisson import Convention, h3_oracle_phase, synthesize_from_branches


@pytest.mark.parametrize("dim, count", [(2, 16), (3, 64)])
def test_quasi_uniform_directions(dim, count):
    dirs = quasi_uniform_directions(dim, count)
    assert dirs.shape == (count, dim)
    assert np.allclose(np.linalg.norm(dirs, axis=1), 1.0)
    assert np.linalg.norm(dirs.mean(axis=0)) < 0.1


def test_tangent_basis_is_orthonormal_and_normal():
    omega = np.array([0.0, 0.6, 0.8])
    basis = tangent_basis(omega)
    assert basis.shape == (3, 2)
    assert np.allclose(basis.T @ basis, np.eye(2))
    assert np.allclose(omega @ basis, 0.0)


def test_flat_single_branch(flat2, quick_search):
    z = np.array([0.5, -0.25])
    theta = np.array([0.6, 0.8])
    bs = find_branches(flat2, z, theta, quick_search)
    assert len(bs.branches) == 1
    b = bs.branches[0]
    assert np.allclose(b.dir, theta, atol=1e-8)
    assert b.limit.s == pytest.approx(-theta @ z, abs=1e-8)
    assert b.jacobian == pytest.approx(1.0, abs=1e-6)
    assert b.nondegenerate
    assert bs.search_meta["starts"] == 16


def test_hyperbolic_branch_matches_oracle(hyp2, quick_search):
    z = np.array([1.0, 0.0])
    bs = find_branches(hyp2, z, np.array([0.5]), quick_search)
    assert len(bs.branches) == 1
    assert bs.branches[0].limit.s == pytest.approx(h3_oracle_phase(z, [0.5]), abs=1e-6)


@pytest.mark.parametrize("n, x0", [(2, 1.0), (3, 0.8)])
def test_hyperbolic_vertical_jacobian(n, x0, request):
    model = request.getfixturevalue(f"hyp{n}")
    z = np.zeros(n)
    z[0] = x0
    down = np.zeros(n)
    down[0] = -x0
    jac = boundary_jacobian(model, z, down)
    assert jac.value == pytest.approx((x0 / 2) ** (n - 1), rel=1e-4)


def test_flat_jacobian_is_one(flat3):
    jac = boundary_jacobian(flat3, np.array([0.2, -0.4, 1.0]), np.array([0.0, 0.6, 0.8]))
    assert float(jac) == pytest.approx(1.0, abs=1e-6)


def test_branch_order_is_deterministic(bump2, quick_search):
    z = np.array([-2.0, 0.3])
    first = find_branches(bump2, z, np.array([1.0, 0.0]), quick_search)
    second = find_branches(bump2, z, np.array([1.0, 0.0]), quick_search)
    assert [b.limit.s for b in first.branches] == [b.limit.s for b in second.branches]


def _fake_branch(jacobian, history):
    limit = BoundaryLimit(s=0.0, y=np.array([1.0, 0.0]), sigma=1.0, eta=np.zeros(2), err=0.0)
    return Branch(np.zeros(2), np.array([1.0, 0.0]), limit, jacobian, 0, True, history[-1], newton_history=history)


def test_nondegeneracy_check_flags_small_jacobian(flat2):
    bs = BranchSet(
        np.zeros(2),
        np.array([1.0, 0.0]),
        [_fake_branch(1.0, [1e-2, 1e-5, 1e-12]), _fake_branch(1e-12, [1e-2, 1e-5, 1e-12])],
    )
    report = nondegeneracy_check(flat2, bs)
    assert report.flags == [True, False]
    assert report.failing == [1]
    assert not report.all_nondegenerate
    assert not bs.branches[1].nondegenerate


def test_nondegeneracy_check_flags_slow_newton(flat2):
    bs = BranchSet(np.zeros(2), np.array([1.0, 0.0]), [_fake_branch(1.0, [1e-2, 5e-3, 2.5e-3])])
    assert nondegeneracy_check(flat2, bs).failing == [0]


def test_exact_models_have_no_conjugate_points(flat2, hyp2):
    assert conjugate_points(flat2, np.array([0.3, -0.2]), np.array([0.6, 0.8])) == []
    assert conjugate_points(hyp2, np.array([1.0, 0.2]), np.array([0.6, -0.8])) == []
    b = _fake_branch(1.0, [1e-12])
    assert conjugate_count(flat2, b) == 0


@pytest.mark.slow
def test_conjugate_count_agrees_with_family_oracle(bump2):
    for y0 in (-0.4, -0.2, 0.0, 0.2, 0.4):
        z = np.array([-3.0, y0])
        d = np.array([1.0, 0.0])
        assert len(conjugate_points(bump2, z, d)) == fd_family_conjugate_count(bump2, z, d)


@pytest.mark.slow
def test_flat_branch_search_in_three_dimensions(flat3):
    z = np.array([0.4, 0.1, -0.3])
    theta = np.array([2.0, -1.0, 2.0]) / 3.0
    bs = find_branches(flat3, z, theta)
    assert len(bs.branches) == 1
    assert bs.branches[0].limit.s == pytest.approx(-theta @ z, abs=1e-8)
    assert bs.branches[0].conj_count == 0
    assert math.isclose(bs.branches[0].jacobian, 1.0, abs_tol=1e-6)


def test_asymptotic_direction_map_on_exact_models(flat3, hyp2):
    theta = np.array([0.0, 0.6, -0.8])
    assert np.allclose(asymptotic_direction_map(flat3, np.array([0.2, 0.1, 0.4]), theta), theta, atol=1e-8)
    y = asymptotic_direction_map(hyp2, np.array([0.8, 0.25]), np.array([-0.8, 0.0]))
    assert y == pytest.approx([0.25], abs=1e-8)


def _ray(alpha):
    return np.array([math.cos(alpha), math.sin(alpha)])


def _unit(model, z, v):
    g = interior_metric(model, z).components
    v = np.asarray(v, dtype=float)
    return v / math.sqrt(v @ g @ v)


def test_direction_map_of_hyperbolic_plane_is_half_angle_tangent(hyp2):
    z = np.array([1.0, 0.0])
    for alpha in np.linspace(-1.2, 1.2, 9):
        y = asymptotic_direction_map(hyp2, z, -_ray(alpha))
        assert y == pytest.approx([-math.tan(alpha / 2)], abs=1e-8)


def test_vertical_ray_of_hyperbolic_plane_has_no_boundary_point(hyp2):
    with pytest.raises(LeftChart):
        asymptotic_direction_map(hyp2, np.array([1.0, 0.0]), np.array([1.0, 0.0]))


@pytest.mark.parametrize(
    "model_name, z, dir",
    [
        ("flat2", [0.3, -0.2], [0.6, 0.8]),
        ("hyp3", [0.8, 0.1, -0.2], [-0.64, 0.48, 0.0]),
        ("bump2", [-2.0, 0.3], [1.0, 0.0]),
        ("lens2", [-3.0, 0.0], [math.cos(0.3), math.sin(0.3)]),
    ],
)
def test_finite_difference_jacobian_matches_jacobi_fields(model_name, z, dir, request):
    model = request.getfixturevalue(model_name)
    z = np.array(z)
    assert jacobian_consistency(model, z, _unit(model, z, dir)) <= 1e-3


def test_rescaled_jacobi_determinant_on_exact_models(flat3, hyp2):
    assert rescaled_jacobi_determinant(flat3, np.array([0.2, -0.4, 1.0]), np.array([0.0, 0.6, 0.8])) == pytest.approx(
        1.0, abs=1e-6
    )
    assert rescaled_jacobi_determinant(hyp2, np.array([1.0, 0.0]), np.array([-1.0, 0.0])) == pytest.approx(0.5, rel=1e-6)


@pytest.mark.slow
def test_doubling_the_multistart_keeps_the_branch_count(lens2):
    z = np.array([-3.0, 0.0])
    y = np.array([1.0, 0.0])
    coarse = find_branches(lens2, z, y, SearchOptions.from_settings(starts=32, count_conjugates=False))
    fine = find_branches(lens2, z, y, SearchOptions.from_settings(starts=64, count_conjugates=False))
    assert len(coarse.branches) == len(fine.branches) == 3
    assert np.allclose(sorted(b.limit.s for b in coarse.branches), sorted(b.limit.s for b in fine.branches), atol=1e-8)


def test_branches_vary_continuously_as_the_perturbation_vanishes(flat2):
    z = np.array([-0.5, 0.3])
    y = np.array([0.8, 0.6])
    opts = SearchOptions.from_settings(starts=16, count_conjugates=False)
    flat_s = -y @ z
    gaps = []
    for a in (0.2, 0.1, 0.05, 0.0):
        model = make_model(ModelId.PERTURBED_SCATTERING, 2, {"a": a, "w": math.inf})
        bs = find_branches(model, z, y, opts)
        assert len(bs.branches) == 1
        gaps.append(abs(bs.branches[0].limit.s - flat_s))
    assert gaps[-1] == pytest.approx(0.0, abs=1e-8)
    assert gaps[0] > gaps[1] > gaps[2] > gaps[3]


@pytest.mark.slow
def test_focusing_lens_has_conjugate_points_on_axis(lens2):
    z = np.array([-3.0, 0.0])
    counts = []
    for alpha in np.linspace(-0.05, 0.05, 10):
        d = _unit(lens2, z, _ray(alpha))
        k = len(conjugate_points(lens2, z, d))
        assert k == fd_family_conjugate_count(lens2, z, d)
        counts.append(k)
    assert min(counts) >= 1


@pytest.mark.slow
def test_lens_search_finds_the_fold_branches(lens2):
    bs = find_branches(lens2, np.array([-3.0, 0.0]), np.array([1.0, 0.0]), SearchOptions.from_settings(starts=32))
    assert sorted(b.conj_count for b in bs.branches) == [0, 0, 1]
    assert all(b.nondegenerate for b in bs.branches)


def test_extended_count_on_exact_models_is_zero(flat2, hyp2):
    assert conjugate_points(flat2, np.array([0.3, -0.2]), np.array([0.6, 0.8]), extend_into_collar=True) == []
    assert conjugate_points(hyp2, np.array([1.0, 0.2]), np.array([0.6, -0.8]), extend_into_collar=True) == []


@pytest.mark.slow
def test_caustic_direction_is_degenerate(lens2, caplog):
    z = np.array([-3.0, 0.0])
    def det(alpha):
        return rescaled_jacobi_determinant(lens2, z, _unit(lens2, z, _ray(alpha)), signed=True)

    assert det(0.0) < 0 < det(0.5)
    d = _unit(lens2, z, _ray(brentq(det, 0.0, 0.5, xtol=1e-12)))
    y = asymptotic_direction_map(lens2, z, d)

    opts = SearchOptions.from_settings(degeneracy_threshold=1e-4, count_conjugates=False)
    with caplog.at_level(logging.WARNING, logger="sojourn.branches"):
        branch = branch_from_direction(lens2, z, d, y, opts)
    assert branch is not None and not branch.nondegenerate
    assert "degenerate" in caplog.text
    with pytest.raises(DegenerateBranch):
        synthesize_from_branches([branch], np.linspace(1.0, 20.0, 64), Convention.for_model(lens2))

    strict = SearchOptions.from_settings(degeneracy_threshold=1e-4, count_conjugates=False, raise_on_degenerate=True)
    with pytest.raises(DegenerateAtTarget):
        branch_from_direction(lens2, z, d, y, strict)


def test_unstable_jacobian_marks_the_branch_degenerate(flat2, monkeypatch, caplog):
    def unstable(*args, **kwargs):
        raise JacobianUnstable("Richardson disagreement")

    monkeypatch.setattr("sojourn.branches.boundary_jacobian", unstable)
    opts = SearchOptions.from_settings(count_conjugates=False)
    with caplog.at_level(logging.WARNING, logger="sojourn.branches"):
        branch = branch_from_direction(flat2, np.array([0.5, -0.25]), np.array([0.6, 0.8]), np.array([0.6, 0.8]), opts)
    assert branch.jacobian == 0.0
    assert not branch.nondegenerate
    assert "boundary Jacobian unstable" in caplog.text
