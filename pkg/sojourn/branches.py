# sojourn/branches.py
"""
Geodesic branches from an interior point to a boundary point.

Directions at z are parametrized by omega on the Euclidean unit sphere through
a g-orthonormal frame, dir = E omega. Boundary points are embedded unit vectors
for scattering models and half-space coordinates for AH models, so that the
boundary measure is the round or the flat one respectively.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from sojourn.errors import (
    CountUnstable,
    DegenerateAtTarget,
    IntegratorFailure,
    JacobianUnstable,
    LeftChart,
    NoBranchFound,
    Trapped,
)
from sojourn.flow import (
    BoundaryLimit,
    FlowOptions,
    PathStatus,
    _interior_rhs,
    boundary_limits,
    integrate_geodesic,
)
from sojourn.manifolds import (
    ManifoldModel,
    curvature_operator,
    interior_metric,
    orthonormal_frame,
)
from sojourn.settings import settings

logger = logging.getLogger("sojourn.branches")


@dataclass(frozen=True)
class SearchOptions:
    starts: int | None = None
    dedupe_radius: float = 1e-4
    newton_tol: float = 1e-9
    max_iter: int = 30
    fd_step: float = 1e-5
    degeneracy_threshold: float = 1e-8
    limit_tol: float = 1e-4
    count_conjugates: bool = True
    raise_on_degenerate: bool = False
    flow: FlowOptions = field(default_factory=FlowOptions)

    @classmethod
    def from_settings(cls, **overrides) -> "SearchOptions":
        values = dict(
            dedupe_radius=settings.DEDUPE_RADIUS,
            newton_tol=settings.NEWTON_TOL,
            fd_step=settings.FD_STEP,
            degeneracy_threshold=settings.DEGENERACY_THRESHOLD,
            flow=FlowOptions.from_settings(),
        )
        values.update(overrides)
        return cls(**values)

    def start_count(self, dim: int) -> int:
        if self.starts is not None:
            return self.starts
        return settings.MULTISTART_N2 if dim == 2 else settings.MULTISTART_N3


@dataclass(frozen=True)
class JacobianEstimate:
    value: float
    step: float
    error: float

    def __float__(self) -> float:
        return self.value


@dataclass
class Branch:
    z: np.ndarray
    dir: np.ndarray
    limit: BoundaryLimit
    jacobian: float
    conj_count: int
    nondegenerate: bool
    newton_residual: float
    omega: np.ndarray | None = None
    newton_history: list[float] = field(default_factory=list)


@dataclass
class BranchSet:
    z: np.ndarray
    y_target: np.ndarray
    branches: list[Branch]
    search_meta: dict = field(default_factory=dict)


@dataclass
class NondegeneracyReport:
    flags: list[bool]
    failing: list[int]

    @property
    def all_nondegenerate(self) -> bool:
        return not self.failing


# ---------------------------------------------------------------------------
# direction map
# ---------------------------------------------------------------------------


def direction_from_omega(model: ManifoldModel, z: np.ndarray, omega: np.ndarray) -> np.ndarray:
    omega = np.asarray(omega, dtype=float)
    return orthonormal_frame(model, z) @ (omega / np.linalg.norm(omega))


def asymptotic_direction_map(
    model: ManifoldModel, z: np.ndarray, dir: np.ndarray, opts: FlowOptions | None = None
) -> np.ndarray:
    path = integrate_geodesic(model, z, dir, opts)
    if path.status is PathStatus.LEFT_CHART:
        raise LeftChart(f"geodesic from {np.asarray(z).tolist()} runs to the point at infinity")
    if path.status is not PathStatus.REACHED_BOUNDARY:
        raise Trapped(f"geodesic from {np.asarray(z).tolist()} did not escape ({path.status.value})")
    return boundary_limits(model, path).y


# directions whose geodesic has no boundary point in the chart
NO_LIMIT = (Trapped, LeftChart)


def _omega_map(model, z, omega, flow):
    return asymptotic_direction_map(model, z, direction_from_omega(model, z, omega), flow)


def tangent_basis(omega: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the tangent space of the unit sphere at omega."""
    omega = omega / np.linalg.norm(omega)
    _, _, vt = np.linalg.svd(omega[None, :])
    return vt[1:].T


def _retract(omega: np.ndarray, basis: np.ndarray, u: np.ndarray) -> np.ndarray:
    out = omega + basis @ u
    return out / np.linalg.norm(out)


def _fd_jacobian(model, z, omega, basis, step, flow) -> np.ndarray:
    cols = []
    for k in range(basis.shape[1]):
        e = np.zeros(basis.shape[1])
        e[k] = step
        plus = _omega_map(model, z, _retract(omega, basis, e), flow)
        minus = _omega_map(model, z, _retract(omega, basis, -e), flow)
        cols.append((plus - minus) / (2 * step))
    return np.column_stack(cols)


def _measure(jac: np.ndarray) -> float:
    """Boundary volume distortion of d y / d omega."""
    return float(math.sqrt(max(np.linalg.det(jac.T @ jac), 0.0)))


def boundary_jacobian(
    model: ManifoldModel, z: np.ndarray, dir: np.ndarray, step: float | None = None, flow: FlowOptions | None = None
) -> JacobianEstimate:
    """|det dy/d(dir)| on the unit sphere at z, central differences with one Richardson step."""
    step = step or settings.FD_STEP
    flow = flow or FlowOptions.from_settings()
    z = np.asarray(z, dtype=float)
    frame = orthonormal_frame(model, z)
    omega = np.linalg.solve(frame, np.asarray(dir, dtype=float))
    omega /= np.linalg.norm(omega)
    basis = tangent_basis(omega)

    coarse = _fd_jacobian(model, z, omega, basis, step, flow)
    fine = _fd_jacobian(model, z, omega, basis, step / 2, flow)
    jac = (4 * fine - coarse) / 3
    value = _measure(jac)
    error = abs(_measure(fine) - _measure(coarse))
    if value > 0 and error / value > 1e-3:
        raise JacobianUnstable(f"Richardson disagreement {error / value:.2e} at step {step}")
    return JacobianEstimate(value=value, step=step, error=error)


# ---------------------------------------------------------------------------
# multistart shooting
# ---------------------------------------------------------------------------


def quasi_uniform_directions(dim: int, count: int) -> np.ndarray:
    if dim == 2:
        ang = 2 * np.pi * (np.arange(count) + 0.5) / count
        return np.column_stack([np.cos(ang), np.sin(ang)])
    k = np.arange(count) + 0.5
    polar = np.arccos(1 - 2 * k / count)
    azim = np.pi * (1 + 5**0.5) * k
    return np.column_stack([np.cos(azim) * np.sin(polar), np.sin(azim) * np.sin(polar), np.cos(polar)])


def _candidate_starts(dirs: np.ndarray, residuals: np.ndarray, dim: int) -> list[int]:
    """Starts whose residual is a local minimum among their neighbours."""
    finite = np.isfinite(residuals)
    neighbours = 2 if dim == 2 else 6
    out = []
    for i in np.flatnonzero(finite):
        dist = np.linalg.norm(dirs - dirs[i], axis=1)
        dist[i] = np.inf
        near = np.argsort(dist)[:neighbours]
        if all(not finite[j] or residuals[i] <= residuals[j] for j in near):
            out.append(int(i))
    return out


def _newton(model, z, omega, y_target, opts: SearchOptions):
    history = []
    singular = False
    for _ in range(opts.max_iter):
        y = _omega_map(model, z, omega, opts.flow)
        r = y - y_target
        history.append(float(np.linalg.norm(r)))
        if history[-1] <= opts.newton_tol:
            break
        basis = tangent_basis(omega)
        jac = _fd_jacobian(model, z, omega, basis, opts.fd_step, opts.flow)
        if np.linalg.svd(jac, compute_uv=False)[-1] < opts.degeneracy_threshold:
            singular = True
            break
        delta, *_ = np.linalg.lstsq(jac, -r, rcond=None)
        norm = np.linalg.norm(delta)
        if norm > 0.5:
            delta *= 0.5 / norm
        omega = _retract(omega, basis, delta)
    return omega, history, singular


def _quadratic(history: list[float], tol: float) -> bool:
    if not history or history[-1] > tol:
        return False
    return len(history) < 3 or history[-1] <= 0.1 * history[-2]


def branch_from_direction(
    model: ManifoldModel,
    z: np.ndarray,
    dir: np.ndarray,
    y_target: np.ndarray,
    opts: SearchOptions | None = None,
    *,
    history: list[float] | None = None,
    singular: bool = False,
) -> Branch | None:
    """
    Branch record for the geodesic of (z, dir) aimed at y_target.

    Returns None when the boundary limit fails its consistency estimate. A
    degenerate branch is flagged and logged, or raised as DegenerateAtTarget
    with opts.raise_on_degenerate.
    """
    opts = opts or SearchOptions.from_settings()
    z = np.asarray(z, dtype=float)
    dir = np.asarray(dir, dtype=float)
    path = integrate_geodesic(model, z, dir, opts.flow)
    limit = boundary_limits(model, path)
    if limit.err > opts.limit_tol:
        logger.warning("boundary limit rejected", extra={"err": limit.err})
        return None
    if history is None:
        history = [float(np.linalg.norm(limit.y - np.asarray(y_target, dtype=float)))]
    try:
        jac = boundary_jacobian(model, z, dir, opts.fd_step, opts.flow).value
    except JacobianUnstable as exc:
        logger.warning("boundary Jacobian unstable, branch treated as degenerate", extra={"z": z.tolist(), "error": str(exc)})
        jac = 0.0
    nondegenerate = (not singular) and jac > opts.degeneracy_threshold and _quadratic(history, opts.newton_tol)
    if not nondegenerate:
        problem = DegenerateAtTarget(
            f"branch from {z.tolist()} along {dir.tolist()} is degenerate "
            f"(|J|={jac:.3e}, singular={singular}, residuals={history[-3:]})"
        )
        if opts.raise_on_degenerate:
            raise problem
        logger.warning(str(problem))
    branch = Branch(
        z=z,
        dir=dir,
        limit=limit,
        jacobian=jac,
        conj_count=0,
        nondegenerate=nondegenerate,
        newton_residual=history[-1],
        newton_history=list(history),
    )
    if opts.count_conjugates:
        branch.conj_count = conjugate_count(model, branch)
    logger.info(
        "branch found",
        extra={
            "z": z.tolist(),
            "dir": dir.tolist(),
            "s": limit.s,
            "jacobian": jac,
            "k": branch.conj_count,
            "nondegenerate": nondegenerate,
        },
    )
    return branch


def find_branches(model: ManifoldModel, z: np.ndarray, y_target: np.ndarray, opts: SearchOptions | None = None) -> BranchSet:
    opts = opts or SearchOptions.from_settings()
    z = np.asarray(z, dtype=float)
    y_target = np.asarray(y_target, dtype=float)
    interior_metric(model, z)
    if model.is_scattering:
        y_target = y_target / np.linalg.norm(y_target)

    dirs = quasi_uniform_directions(model.dim, opts.start_count(model.dim))
    residuals = np.full(len(dirs), np.inf)
    for i, omega in enumerate(dirs):
        try:
            residuals[i] = np.linalg.norm(_omega_map(model, z, omega, opts.flow) - y_target)
        except NO_LIMIT:
            continue
    candidates = _candidate_starts(dirs, residuals, model.dim)

    refined = []
    for i in candidates:
        try:
            omega, history, singular = _newton(model, z, dirs[i], y_target, opts)
        except NO_LIMIT:
            continue
        if history and history[-1] <= opts.newton_tol:
            refined.append((omega, history, singular))
        elif singular:
            logger.warning("Newton Jacobian singular near the target", extra={"z": z.tolist(), "start": i})
            refined.append((omega, history, singular))

    refined.sort(key=lambda item: tuple(np.round(item[0], 12)))
    kept: list[tuple] = []
    for item in refined:
        for j, other in enumerate(kept):
            if np.linalg.norm(item[0] - other[0]) <= opts.dedupe_radius:
                if item[1][-1] < other[1][-1]:
                    kept[j] = item
                break
        else:
            kept.append(item)

    branches = []
    degenerate = []
    for omega, history, singular in kept:
        branch = branch_from_direction(
            model, z, direction_from_omega(model, z, omega), y_target, opts, history=history, singular=singular
        )
        if branch is None:
            continue
        branch.omega = omega
        if not branch.nondegenerate:
            degenerate.append(len(branches))
        branches.append(branch)

    meta = {
        "starts": len(dirs),
        "candidates": len(candidates),
        "converged": len(refined),
        "deduped": len(branches),
        "degenerate": degenerate,
    }
    if not branches:
        raise NoBranchFound(f"no branch from {z.tolist()} to {y_target.tolist()} ({meta})")
    return BranchSet(z=z, y_target=y_target, branches=branches, search_meta=meta)


def nondegeneracy_check(model: ManifoldModel, branch_set: BranchSet, threshold: float | None = None) -> NondegeneracyReport:
    threshold = settings.DEGENERACY_THRESHOLD if threshold is None else threshold
    flags = []
    for branch in branch_set.branches:
        ok = branch.jacobian > threshold and _quadratic(branch.newton_history, max(branch.newton_residual, 1e-300))
        branch.nondegenerate = bool(ok)
        flags.append(bool(ok))
    failing = [i for i, ok in enumerate(flags) if not ok]
    if failing:
        logger.warning("degenerate branches", extra={"failing": failing})
    return NondegeneracyReport(flags=flags, failing=failing)


# ---------------------------------------------------------------------------
# conjugate points
# ---------------------------------------------------------------------------


def _stop_radius(model: ManifoldModel, extend: bool) -> float:
    """Collar entry, or deeper for the spot check on the exact models."""
    return model.collar_x0 / 8 if extend else model.collar_x0


def _jacobi_rhs(model: ManifoldModel, w: np.ndarray) -> np.ndarray:
    n = model.dim
    m = n - 1
    z, t = w[:n], w[n : 2 * n]
    frame = w[2 * n : 2 * n + n * m].reshape(n, m)
    j = w[2 * n + n * m : 2 * n + n * m + m * m].reshape(m, m)
    jp = w[2 * n + n * m + m * m :].reshape(m, m)
    gamma = interior_metric(model, z).christoffel
    dt = -np.einsum("ijk,j,k->i", gamma, t, t)
    dframe = -np.einsum("ijk,j,ka->ia", gamma, t, frame)
    kmat = curvature_operator(model, z).frame_operator(t, frame)
    return np.concatenate([t, dt, dframe.ravel(), jp.ravel(), (-kmat @ j).ravel()])


def _initial_jacobi_state(model: ManifoldModel, z: np.ndarray, dir: np.ndarray) -> np.ndarray:
    n = model.dim
    g = interior_metric(model, z).components
    basis = [dir]
    for e in np.eye(n):
        v = e - sum((b @ g @ e) / (b @ g @ b) * b for b in basis)
        if v @ g @ v > 1e-10:
            basis.append(v / math.sqrt(v @ g @ v))
        if len(basis) == n:
            break
    frame = np.column_stack(basis[1:])
    m = n - 1
    return np.concatenate([z, dir, frame.ravel(), np.zeros(m * m), np.eye(m).ravel()])


def _leave_event(model: ManifoldModel, x_stop: float):
    n = model.dim

    def leave(_, w):
        if model.is_scattering:
            return float(np.linalg.norm(w[:n])) - 1.0 / x_stop
        return float(w[0]) - x_stop

    leave.terminal = True
    leave.direction = 1 if model.is_scattering else -1
    return leave


def _jacobi_solution(model: ManifoldModel, z: np.ndarray, dir: np.ndarray, x_stop: float, max_step: float, rtol: float):
    sol = solve_ivp(
        lambda _, w: _jacobi_rhs(model, w),
        (0.0, 50.0 * model.diameter_scale),
        _initial_jacobi_state(model, z, dir),
        method="DOP853",
        rtol=rtol,
        atol=rtol * 1e-2,
        dense_output=True,
        events=_leave_event(model, x_stop),
        max_step=max_step,
    )
    if sol.status == -1:
        raise IntegratorFailure(f"Jacobi integration failed: {sol.message}")
    return sol


def _count_sign_changes(model: ManifoldModel, z: np.ndarray, dir: np.ndarray, max_step: float, extend: bool, rtol: float):
    m = model.dim - 1
    sol = _jacobi_solution(model, z, dir, _stop_radius(model, extend), max_step, rtol)
    off = 2 * model.dim + model.dim * m

    def det_j(t: float) -> float:
        return float(np.linalg.det(sol.sol(t)[off : off + m * m].reshape(m, m)))

    ts = np.linspace(sol.t[0], sol.t[-1], 4000)[1:]
    dets = np.array([det_j(t) for t in ts])
    roots = []
    for i in np.flatnonzero(np.sign(dets[:-1]) * np.sign(dets[1:]) < 0):
        roots.append(brentq(det_j, ts[i], ts[i + 1], xtol=1e-12))
    return roots, float(sol.t[-1])


def conjugate_points(model: ManifoldModel, z: np.ndarray, dir: np.ndarray, *, extend_into_collar: bool = False) -> list[float]:
    """Times of conjugate points along the interior segment, stable under step halving."""
    z = np.asarray(z, dtype=float)
    dir = np.asarray(dir, dtype=float)
    if extend_into_collar and not model.is_exact:
        extend_into_collar = False
    length_guess = 2.0 * model.diameter_scale
    roots, length = _count_sign_changes(model, z, dir, length_guess / 100, extend_into_collar, 1e-9)
    halved, _ = _count_sign_changes(model, z, dir, length_guess / 200, extend_into_collar, 1e-10)
    if len(roots) != len(halved):
        raise CountUnstable(f"conjugate count changed under step halving: {len(roots)} vs {len(halved)}")
    logger.debug("jacobi integration length %.3f, conjugate times %s", length, roots)
    return roots


def conjugate_count(model: ManifoldModel, branch: Branch, *, extend_into_collar: bool = False) -> int:
    return len(conjugate_points(model, branch.z, branch.dir, extend_into_collar=extend_into_collar))


# ---------------------------------------------------------------------------
# boundary Jacobian from Jacobi fields
# ---------------------------------------------------------------------------

JACOBI_LEVELS = 4


def _boundary_defining(model: ManifoldModel, z: np.ndarray) -> float:
    if model.is_scattering:
        r = float(np.linalg.norm(z))
        return math.inf if r == 0.0 else 1.0 / r
    return float(z[0])


def rescaled_jacobi_determinant(
    model: ManifoldModel, z: np.ndarray, dir: np.ndarray, *, signed: bool = False, levels: int = JACOBI_LEVELS
) -> float:
    """
    Boundary Jacobian of the direction map from the Jacobi fields J(0) = 0, J'(0) = Id.

    det J is rescaled by t^(1-n) on scattering models and by x^(n-1) on AH
    models, sampled where the geodesic crosses x = x_ref 2^-k, k = 1..levels,
    and extrapolated to x = 0. The sign is that of det J at the boundary.
    """
    z = np.asarray(z, dtype=float)
    dir = np.asarray(dir, dtype=float)
    n, m = model.dim, model.dim - 1
    x_ref = min(model.collar_x0, _boundary_defining(model, z))
    x_levels = x_ref * 2.0 ** -np.arange(1, levels + 1)
    sol = _jacobi_solution(model, z, dir, 0.9 * x_levels[-1], np.inf, 1e-10)
    if sol.status != 1:
        raise Trapped(f"Jacobi integration from {z.tolist()} did not reach x={x_levels[-1]:.3e}")

    xs = np.array([_boundary_defining(model, w[:n]) for w in sol.y.T])
    off = 2 * n + n * m
    values = []
    for xk in x_levels:
        i = int(np.flatnonzero((xs[:-1] > xk) & (xs[1:] <= xk))[-1])
        t = brentq(lambda tt: _boundary_defining(model, sol.sol(tt)[:n]) - xk, sol.t[i], sol.t[i + 1], xtol=1e-13)
        det = float(np.linalg.det(sol.sol(t)[off : off + m * m].reshape(m, m)))
        values.append(det / t**m if model.is_scattering else det * xk**m)
    value = float(np.polyval(np.polyfit(x_levels, values, levels - 1), 0.0))
    return value if signed else abs(value)


def jacobian_consistency(model: ManifoldModel, z: np.ndarray, dir: np.ndarray, flow: FlowOptions | None = None) -> float:
    """Relative gap between the finite-difference boundary Jacobian and the Jacobi-field one."""
    jacobi = rescaled_jacobi_determinant(model, z, dir)
    fd = boundary_jacobian(model, z, dir, flow=flow).value
    return abs(fd - jacobi) / max(jacobi, settings.DEGENERACY_THRESHOLD)


def fd_family_conjugate_count(
    model: ManifoldModel,
    z: np.ndarray,
    dir: np.ndarray,
    step: float = 1e-5,
    samples: int = 400,
    flow: FlowOptions | None = None,
) -> int:
    """Sign changes of det[dz/d omega, velocity] along the truncated geodesic family."""
    flow = flow or FlowOptions.from_settings()
    z = np.asarray(z, dtype=float)
    n = model.dim
    frame = orthonormal_frame(model, z)
    omega = np.linalg.solve(frame, np.asarray(dir, dtype=float))
    omega /= np.linalg.norm(omega)
    basis = tangent_basis(omega)
    leave = _leave_event(model, model.collar_x0)

    def trajectory(om):
        v = direction_from_omega(model, z, om)
        g = interior_metric(model, z).components
        return solve_ivp(
            lambda _, w: _interior_rhs(model, w),
            (0.0, 50.0 * model.diameter_scale),
            np.concatenate([z, g @ v]),
            method="DOP853",
            rtol=flow.rtol,
            atol=flow.atol,
            dense_output=True,
            events=leave,
        )

    centre = trajectory(omega)
    t_end = float(centre.t[-1])
    ts = np.linspace(0.0, t_end, samples)[1:]
    pairs = []
    for k in range(n - 1):
        e = np.zeros(n - 1)
        e[k] = step
        pairs.append((trajectory(_retract(omega, basis, e)), trajectory(_retract(omega, basis, -e))))

    dets = []
    for t in ts:
        cols = []
        for plus, minus in pairs:
            tp, tm = min(t, plus.t[-1]), min(t, minus.t[-1])
            cols.append((plus.sol(tp)[:n] - minus.sol(tm)[:n]) / (2 * step))
        wc = centre.sol(t)
        velocity = interior_metric(model, wc[:n]).inverse @ wc[n:]
        dets.append(np.linalg.det(np.column_stack(cols + [velocity])))
    dets = np.array(dets)
    return int(np.sum(np.sign(dets[:-1]) * np.sign(dets[1:]) < 0))
