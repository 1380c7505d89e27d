# sojourn/flow.py
"""
Geodesic flow in the interior chart and the rescaled flows in the collar.

Collar covectors are oriented outgoing (sigma > 0 on the forward branch); the
physical covector g(v) of an outgoing geodesic is negated when it enters the
collar. Collar state layout: (x, y..., s, xi, eta..., sigma).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from sojourn.errors import ChartInvariantViolated, IntegratorFailure, NotAtBoundary
from sojourn.manifolds import (
    Chart,
    ChartPoint,
    ManifoldModel,
    chart_transition,
    collar_family,
    HANDOFF_RTOL,
    frame_at,
    in_collar_region,
    interior_metric,
    sphere_base_metric,
    sphere_embed,
)
from sojourn.settings import settings

logger = logging.getLogger("sojourn.flow")

EXTRAPOLATION_LEVELS = (4, 5, 6)
# Half-space geodesics climbing past this height are heading for the point at infinity.
HALF_SPACE_X_MAX = 1e4


@dataclass(frozen=True)
class FlowOptions:
    rtol: float = 1e-10
    atol: float = 1e-12
    trap_factor: float = 50.0
    max_collar_param: float = 1e3
    max_switches: int = 8
    max_step: float = math.inf

    @classmethod
    def from_settings(cls, **overrides) -> "FlowOptions":
        values = dict(rtol=settings.RTOL, atol=settings.ATOL, trap_factor=settings.TRAP_FACTOR)
        values.update(overrides)
        return cls(**values)


class PathStatus(str, Enum):
    REACHED_BOUNDARY = "ReachedBoundary"
    TRAPPED = "Trapped"
    MAX_TIME = "MaxTime"
    # left the half-space chart through x -> inf
    LEFT_CHART = "LeftChart"


@dataclass(frozen=True)
class PhaseState:
    chart: Chart
    base: ChartPoint
    momentum: np.ndarray
    s: float | None = None
    sigma: float | None = None
    param: float = 0.0

    def as_vector(self) -> np.ndarray:
        if self.chart is Chart.INTERIOR:
            return np.concatenate([self.base.coords, self.momentum])
        xy = np.asarray(self.base.coords, dtype=float)
        xi, eta = self.momentum[0], self.momentum[1:]
        return np.concatenate([xy, [self.s, xi], eta, [self.sigma]])

    @classmethod
    def from_vector(cls, chart: Chart, w: np.ndarray, frame: np.ndarray | None, param: float) -> "PhaseState":
        w = np.asarray(w, dtype=float)
        if chart is Chart.INTERIOR:
            n = w.size // 2
            return cls(chart, ChartPoint(chart, w[:n].copy(), frame), w[n:].copy(), param=param)
        n = (w.size - 2) // 2
        xy = w[:n]
        return cls(
            chart,
            ChartPoint(chart, xy.copy(), frame),
            np.concatenate([[w[n + 1]], w[n + 2 : 2 * n + 1]]),
            s=float(w[n]),
            sigma=float(w[-1]),
            param=param,
        )


@dataclass
class PathSegment:
    chart: Chart
    params: np.ndarray
    states: np.ndarray
    dense: object | None
    frame: np.ndarray | None = None
    # physical time at the start of an interior segment
    t_start: float = 0.0


@dataclass
class GeodesicPath:
    model: ManifoldModel
    segments: list[PathSegment]
    status: PathStatus
    scale: float = 1.0
    direction: int = 1
    meta: dict = field(default_factory=dict)

    @property
    def samples(self) -> list[PhaseState]:
        out = []
        for seg in self.segments:
            for p, w in zip(seg.params, seg.states):
                out.append(PhaseState.from_vector(seg.chart, w, seg.frame, float(p)))
        return out

    @property
    def final_segment(self) -> PathSegment:
        return self.segments[-1]

    @property
    def t_of_param(self) -> np.ndarray:
        """Physical time at every sample; inf at the boundary event."""
        out = []
        n = self.model.dim
        for seg in self.segments:
            if seg.chart is Chart.INTERIOR:
                out.append(seg.t_start + self.scale * (seg.params - seg.params[0]))
                continue
            x, s = seg.states[:, 0], seg.states[:, n]
            with np.errstate(divide="ignore"):
                if self.model.is_scattering:
                    out.append(np.where(x > 0, s + 1.0 / np.where(x > 0, x, 1.0), np.inf))
                else:
                    out.append(np.where(x > 0, s - np.log(np.where(x > 0, x, 1.0)), np.inf))
        return np.concatenate(out)

    def conservation_drift(self) -> float:
        """Largest deviation of the conserved quantity, relative to scale^2."""
        drift = 0.0
        for seg in self.segments:
            if seg.chart is Chart.INTERIOR:
                vals = np.array([interior_hamiltonian(self.model, w) for w in seg.states])
                drift = max(drift, float(np.max(np.abs(vals - self.scale**2))))
            else:
                vals = np.array([collar_characteristic(self.model, w, seg.frame) for w in seg.states])
                drift = max(drift, float(np.max(np.abs(vals))))
        return drift / self.scale**2

    def sigma_drift(self) -> float:
        drift = 0.0
        for seg in self.segments:
            if seg.chart is Chart.COLLAR:
                sig = seg.states[:, -1]
                drift = max(drift, float(np.max(np.abs(sig - sig[0]))))
        return drift


@dataclass(frozen=True)
class BoundaryLimit:
    s: float
    y: np.ndarray
    sigma: float
    eta: np.ndarray
    err: float
    # chart data of the event point
    y_chart: np.ndarray | None = None
    eta_chart: np.ndarray | None = None
    frame: np.ndarray | None = None
    boundary_speed: float = 0.0


# ---------------------------------------------------------------------------
# Hamiltonians and vector fields
# ---------------------------------------------------------------------------


def interior_hamiltonian(model: ManifoldModel, w: np.ndarray) -> float:
    """|zeta|_g^2."""
    n = model.dim
    inv = interior_metric(model, w[:n]).inverse
    return float(w[n:] @ inv @ w[n:])


def _interior_rhs(model: ManifoldModel, w: np.ndarray) -> np.ndarray:
    n = model.dim
    metric = interior_metric(model, w[:n])
    u = metric.inverse @ w[n:]
    dzeta = 0.5 * np.einsum("kij,i,j->k", metric.d_components, u, u)
    return np.concatenate([u, dzeta])


def collar_characteristic(model: ManifoldModel, w: np.ndarray, frame: np.ndarray | None) -> float:
    n = model.dim
    x, y, xi, eta, sigma = w[0], w[1:n], w[n + 1], w[n + 2 : 2 * n + 1], w[-1]
    h, _ = collar_family(model, x, y, frame)
    hq = float(eta @ np.linalg.solve(h, eta))
    if model.is_scattering:
        return -2 * xi * sigma - x**2 * xi**2 - hq
    return -(2 * xi * sigma + x * xi**2 + x * hq)


def _collar_rhs(model: ManifoldModel, w: np.ndarray, frame: np.ndarray | None) -> np.ndarray:
    n = model.dim
    x, y, xi, eta, sigma = w[0], w[1:n], w[n + 1], w[n + 2 : 2 * n + 1], w[-1]
    h, dh = collar_family(model, x, y, frame)
    v = np.linalg.solve(h, eta)
    hq = float(eta @ v)
    # derivatives of the dual form eta.h^{-1}.eta
    dhq = -np.einsum("i,kij,j->k", v, dh, v)
    out = np.zeros_like(w)
    if model.is_scattering:
        out[0] = -2 * (sigma + x**2 * xi)
        out[1:n] = -2 * v
        out[n] = -2 * xi
        out[n + 1] = 2 * x * xi**2 + dhq[0]
        out[n + 2 : 2 * n + 1] = dhq[1:]
    else:
        out[0] = -2 * (sigma + x * xi)
        out[1:n] = -2 * x * v
        out[n] = -2 * xi
        out[n + 1] = xi**2 + hq + x * dhq[0]
        out[n + 2 : 2 * n + 1] = x * dhq[1:]
    return out


def hamilton_rhs(model: ManifoldModel, state: PhaseState) -> np.ndarray:
    w = state.as_vector()
    if not np.all(np.isfinite(w)):
        raise ChartInvariantViolated("phase state has non-finite entries")
    if state.chart is Chart.INTERIOR:
        if interior_hamiltonian(model, w) <= 0:
            raise ChartInvariantViolated("interior covector must be nonzero")
        return _interior_rhs(model, w)
    scale = max(1.0, abs(state.sigma or 0.0)) ** 2
    p = collar_characteristic(model, w, state.base.frame)
    if abs(p) > 1e-8 * scale:
        raise ChartInvariantViolated(f"collar state off the characteristic set (p={p:.3e})")
    return _collar_rhs(model, w, state.base.frame)


# ---------------------------------------------------------------------------
# chart switches
# ---------------------------------------------------------------------------


def _to_collar(model: ManifoldModel, w: np.ndarray, t_phys: float) -> tuple[np.ndarray, np.ndarray | None]:
    n = model.dim
    z, zeta = w[:n], w[n:]
    tau = math.sqrt(interior_hamiltonian(model, w))
    frame = frame_at(z) if model.is_scattering else None
    point, cov = chart_transition(model, ChartPoint(Chart.INTERIOR, z, frame), zeta, rtol=HANDOFF_RTOL)
    x, y = point.coords[0], point.coords[1:]
    xi_old, eta = -cov[0], -cov[1:]
    if model.is_scattering:
        xi, s = xi_old - tau / x**2, t_phys - 1.0 / x
    else:
        xi, s = xi_old - tau / x, t_phys + math.log(x)
    return np.concatenate([[x], y, [s, xi], eta, [tau]]), point.frame


def _to_interior(model: ManifoldModel, w: np.ndarray, frame: np.ndarray | None) -> tuple[np.ndarray, float]:
    n = model.dim
    x, y, s, xi, eta, sigma = w[0], w[1:n], w[n], w[n + 1], w[n + 2 : 2 * n + 1], w[-1]
    if model.is_scattering:
        xi_old, t_phys = xi + sigma / x**2, s + 1.0 / x
    else:
        xi_old, t_phys = xi + sigma / x, s - math.log(x)
    point, cov = chart_transition(
        model,
        ChartPoint(Chart.COLLAR, np.concatenate([[x], y]), frame),
        -np.concatenate([[xi_old], eta]),
        rtol=HANDOFF_RTOL,
    )
    return np.concatenate([point.coords, cov]), t_phys


def _moving_outward(model: ManifoldModel, w: np.ndarray) -> bool:
    n = model.dim
    u = interior_metric(model, w[:n]).inverse @ w[n:]
    if model.is_scattering:
        return float(w[:n] @ u) > 0
    return float(u[0]) < 0


# ---------------------------------------------------------------------------
# integration
# ---------------------------------------------------------------------------


def integrate_geodesic(
    model: ManifoldModel,
    z: np.ndarray,
    dir: np.ndarray,
    opts: FlowOptions | None = None,
    *,
    direction: int = 1,
    scale: float = 1.0,
) -> GeodesicPath:
    """Follow the geodesic from z with unit velocity dir until it reaches x = 0."""
    opts = opts or FlowOptions.from_settings()
    z = np.asarray(z, dtype=float)
    metric = interior_metric(model, z)
    v = np.asarray(dir, dtype=float) * (1 if direction >= 0 else -1)
    speed = math.sqrt(float(v @ metric.components @ v))
    if abs(speed - 1.0) > 1e-9:
        raise ChartInvariantViolated(f"direction must have unit length, |dir|_g={speed:.12f}")
    if scale <= 0:
        raise ChartInvariantViolated("covector scale must be positive")

    w = np.concatenate([z, scale * (metric.components @ v)])
    budget = opts.trap_factor * model.diameter_scale
    segments: list[PathSegment] = []
    t_phys, param = 0.0, 0.0
    n = model.dim
    status = PathStatus.TRAPPED

    for _ in range(opts.max_switches):
        # interior leg
        if not (in_collar_region(model, w[:n]) and _moving_outward(model, w)):

            def entry(_, y):
                if model.is_scattering:
                    return float(np.linalg.norm(y[:n])) - 1.0 / model.collar_x0
                return float(y[0]) - model.collar_x0

            entry.terminal = True
            entry.direction = 1 if model.is_scattering else -1

            def escape(_, y):
                return float(y[0]) - HALF_SPACE_X_MAX

            escape.terminal = True
            escape.direction = 1
            events = [entry] if model.is_scattering else [entry, escape]

            remaining = (budget - t_phys) / scale
            if remaining <= 0:
                status = PathStatus.TRAPPED
                break
            sol = solve_ivp(
                lambda _, y: _interior_rhs(model, y),
                (param, param + remaining),
                w,
                method="DOP853",
                rtol=opts.rtol,
                atol=opts.atol,
                dense_output=True,
                events=events,
                max_step=opts.max_step,
            )
            if sol.status == -1:
                raise IntegratorFailure(f"interior integration failed: {sol.message}")
            segments.append(PathSegment(Chart.INTERIOR, sol.t, sol.y.T, sol.sol, t_start=t_phys))
            t_phys += scale * (sol.t[-1] - param)
            param = float(sol.t[-1])
            if len(sol.t_events) > 1 and sol.t_events[1].size:
                status = PathStatus.LEFT_CHART
                break
            if sol.status != 1:
                logger.debug("trapping budget exhausted at t=%.3f", t_phys)
                status = PathStatus.TRAPPED
                break
            w = sol.y_events[0][0]

        # collar leg
        wc, frame = _to_collar(model, w, t_phys)

        def boundary(_, y):
            return y[0]

        boundary.terminal = True
        boundary.direction = -1

        def exit_(_, y):
            return y[0] - model.collar_x0 * (1.0 + 1e-9)

        exit_.terminal = True
        exit_.direction = 1

        sol = solve_ivp(
            lambda _, y: _collar_rhs(model, y, frame),
            (param, param + opts.max_collar_param / wc[-1]),
            wc,
            method="DOP853",
            rtol=opts.rtol,
            atol=opts.atol,
            dense_output=True,
            events=[boundary, exit_],
            max_step=opts.max_step,
        )
        if sol.status == -1:
            raise IntegratorFailure(f"collar integration failed: {sol.message}")
        params, states = sol.t, sol.y.T.copy()
        if sol.status == 1 and sol.t_events[0].size:
            states[-1, 0] = 0.0
            segments.append(PathSegment(Chart.COLLAR, params, states, sol.sol, frame))
            status = PathStatus.REACHED_BOUNDARY
            break
        segments.append(PathSegment(Chart.COLLAR, params, states, sol.sol, frame))
        param = float(sol.t[-1])
        if sol.status != 1:
            status = PathStatus.MAX_TIME
            break
        # turned back into the interior
        w, t_phys = _to_interior(model, states[-1], frame)
    else:
        status = PathStatus.TRAPPED

    path = GeodesicPath(model, segments, status, scale=scale, direction=1 if direction >= 0 else -1)
    if status is not PathStatus.REACHED_BOUNDARY:
        logger.info("geodesic did not reach the boundary", extra={"status": status.value, "z": z.tolist()})
    return path


# ---------------------------------------------------------------------------
# limits at x = 0
# ---------------------------------------------------------------------------


def _boundary_point(model: ManifoldModel, y: np.ndarray, frame: np.ndarray | None) -> np.ndarray:
    if model.is_scattering:
        return sphere_embed(y, frame)[0]
    return np.asarray(y, dtype=float).copy()


def _boundary_covector(model: ManifoldModel, y: np.ndarray, eta: np.ndarray, frame: np.ndarray | None) -> np.ndarray:
    """eta as an embedded tangent covector (round metric) or as a chart covector."""
    if not model.is_scattering:
        return np.asarray(eta, dtype=float).copy()
    h0, _ = sphere_base_metric(y)
    _, dtheta = sphere_embed(y, frame)
    return dtheta @ np.linalg.solve(h0, eta)


def _state_at_x(model: ManifoldModel, seg: PathSegment, x_target: float) -> np.ndarray:
    lo, hi = float(seg.params[0]), float(seg.params[-1])
    param = brentq(lambda p: seg.dense(p)[0] - x_target, lo, hi, xtol=1e-14, rtol=1e-14)
    return seg.dense(param)


def boundary_limits(model: ManifoldModel, path: GeodesicPath) -> BoundaryLimit:
    if path.status is not PathStatus.REACHED_BOUNDARY:
        raise NotAtBoundary(f"path status is {path.status.value}")
    n = model.dim
    seg = path.final_segment
    w = seg.states[-1]
    y, s, eta, sigma = w[1:n], float(w[n]), w[n + 2 : 2 * n + 1], float(w[-1])
    point = _boundary_point(model, y, seg.frame)

    # consistency estimate: quadratic extrapolation of (s, y) from x > 0
    x_ref = min(model.collar_x0, float(seg.states[0, 0]))
    xs, values = [], []
    for k in EXTRAPOLATION_LEVELS:
        xk = x_ref * 2.0**-k
        wk = _state_at_x(model, seg, xk)
        xs.append(xk)
        values.append(np.concatenate([[wk[n]], _boundary_point(model, wk[1:n], seg.frame)]))
    values = np.array(values)
    extrapolated = np.array([np.polyval(np.polyfit(xs, values[:, j], 2), 0.0) for j in range(values.shape[1])])
    err = float(np.max(np.abs(extrapolated - np.concatenate([[s], point]))))

    sign = path.direction
    eta_emb = _boundary_covector(model, y, eta, seg.frame)
    rhs = _collar_rhs(model, w, seg.frame)
    return BoundaryLimit(
        s=s,
        y=point,
        sigma=sign * sigma,
        eta=sign * eta_emb,
        err=err,
        y_chart=y.copy(),
        eta_chart=sign * eta,
        frame=seg.frame,
        boundary_speed=float(rhs[0]),
    )


def sojourn_relation(
    model: ManifoldModel,
    z: np.ndarray,
    dir: np.ndarray,
    opts: FlowOptions | None = None,
    *,
    direction: int = 1,
    scale: float = 1.0,
) -> BoundaryLimit:
    """Image (s, y, sigma, eta) of the covector scale*g(dir) at z; direction=-1 gives the backward branch."""
    return boundary_limits(model, integrate_geodesic(model, z, dir, opts, direction=direction, scale=scale))


def backward_limits(model: ManifoldModel, z: np.ndarray, dir: np.ndarray, opts: FlowOptions | None = None) -> BoundaryLimit:
    return sojourn_relation(model, z, dir, opts, direction=-1)


def fiber_limit_estimates(model: ManifoldModel, path: GeodesicPath, levels: int = 5) -> list[tuple[float, np.ndarray]]:
    """dy/dx (scattering) or x^-1 dy/dx (AH) at x = collar_x0 * 2^-k, k = 1..levels."""
    if path.status is not PathStatus.REACHED_BOUNDARY:
        raise NotAtBoundary(f"path status is {path.status.value}")
    n = model.dim
    seg = path.final_segment
    out = []
    for k in range(1, levels + 1):
        xk = min(model.collar_x0, float(seg.states[0, 0])) * 2.0**-k
        wk = _state_at_x(model, seg, xk)
        rhs = _collar_rhs(model, wk, seg.frame)
        slope = rhs[1:n] / rhs[0]
        out.append((xk, slope if model.is_scattering else slope / xk))
    return out
