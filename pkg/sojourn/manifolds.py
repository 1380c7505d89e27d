# sojourn/manifolds.py
"""
Model catalog: scattering and asymptotically hyperbolic manifolds in normal form.

Every model has a global interior chart and a boundary collar chart (x, y).
Scattering models use Cartesian z in R^n with x = 1/|z|; the boundary sphere
is charted by an angle (n = 2) or a stereographic chart (n = 3) centered at a
frame pole. Asymptotically hyperbolic models live in the half-space (x, y).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType
from typing import Mapping

import numpy as np

from sojourn.errors import (
    CurvatureUnavailable,
    OutsideChart,
    OutsideOverlap,
    ParamOutOfRange,
    UnknownModel,
)
from sojourn.settings import settings

logger = logging.getLogger("sojourn.manifolds")


class ManifoldKind(str, Enum):
    SCATTERING = "Scattering"
    ASYMP_HYPERBOLIC = "AsympHyperbolic"


class ModelId(str, Enum):
    FLAT_EUCLIDEAN = "FlatEuclidean"
    HYPERBOLIC_HN = "HyperbolicHn"
    PERTURBED_SCATTERING = "PerturbedScattering"
    PERTURBED_AH = "PerturbedAH"


class Chart(str, Enum):
    INTERIOR = "Interior"
    COLLAR = "Collar"


MODEL_KIND = {
    ModelId.FLAT_EUCLIDEAN: ManifoldKind.SCATTERING,
    ModelId.HYPERBOLIC_HN: ManifoldKind.ASYMP_HYPERBOLIC,
    ModelId.PERTURBED_SCATTERING: ManifoldKind.SCATTERING,
    ModelId.PERTURBED_AH: ManifoldKind.ASYMP_HYPERBOLIC,
}

# Documented nontrapping range of the perturbation amplitude.
AMPLITUDE_MAX = 0.3
# The scattering perturbation is switched on between these radii.
CUTOFF_INNER = 1.0
CUTOFF_OUTER = 4.0
COLLAR_X0_MAX = 1.0 / CUTOFF_OUTER
# Interior lens factor 1 - LENS_GAIN*a*...; stays above 0.4 for |a| <= AMPLITUDE_MAX.
LENS_GAIN = 2.0
# Stereographic coordinates beyond this radius are rejected.
CHART_RADIUS = 10.0
# Event roots at a chart switch land within this relative distance of the threshold.
HANDOFF_RTOL = 1e-8

FD_CURVATURE_STEP = 1e-4
FD_METRIC_STEP = 1e-4
PARAM_NAMES = frozenset({"a", "w"})


@dataclass(frozen=True)
class ManifoldModel:
    kind: ManifoldKind
    dim: int
    model_id: ModelId
    params: Mapping[str, float] = field(default_factory=dict)
    collar_x0: float = 0.2

    @property
    def is_scattering(self) -> bool:
        return self.kind is ManifoldKind.SCATTERING

    @property
    def boundary_dim(self) -> int:
        return self.dim - 1

    @property
    def amplitude(self) -> float:
        return float(self.params.get("a", 0.0))

    @property
    def width(self) -> float:
        return float(self.params.get("w", 1.0))

    @property
    def is_exact(self) -> bool:
        return self.model_id in (ModelId.FLAT_EUCLIDEAN, ModelId.HYPERBOLIC_HN)

    @property
    def rotationally_symmetric(self) -> bool:
        if self.model_id is ModelId.FLAT_EUCLIDEAN:
            return True
        return self.model_id is ModelId.PERTURBED_SCATTERING and math.isinf(self.width)

    @property
    def diameter_scale(self) -> float:
        return 2.0 / self.collar_x0

    def describe(self) -> dict:
        return {
            "kind": self.kind.value,
            "dim": self.dim,
            "model_id": self.model_id.value,
            "params": dict(self.params),
            "collar_x0": self.collar_x0,
        }


@dataclass(frozen=True)
class MetricData:
    components: np.ndarray
    inverse: np.ndarray
    # d_components[k] is the derivative of components in the k-th coordinate
    d_components: np.ndarray
    christoffel: np.ndarray | None = None


@dataclass(frozen=True)
class ChartPoint:
    chart: Chart
    coords: np.ndarray
    # orthonormal frame of R^n whose first column is the pole of a sphere chart
    frame: np.ndarray | None = None


def make_model(
    model_id: ModelId | str,
    dim: int,
    params: Mapping[str, float] | None = None,
    collar_x0: float | None = None,
    kind: ManifoldKind | str | None = None,
) -> ManifoldModel:
    try:
        model_id = ModelId(model_id)
    except ValueError:
        raise UnknownModel(f"unknown model id {model_id!r}") from None

    expected_kind = MODEL_KIND[model_id]
    if kind is not None and ManifoldKind(kind) is not expected_kind:
        raise ParamOutOfRange(f"{model_id.value} exists only as {expected_kind.value}")
    if dim not in (2, 3):
        raise ParamOutOfRange(f"dim must be 2 or 3, got {dim}")

    params = dict(params or {})
    unknown = set(params) - PARAM_NAMES
    if unknown:
        raise ParamOutOfRange(f"unknown parameters {sorted(unknown)}")
    if model_id in (ModelId.FLAT_EUCLIDEAN, ModelId.HYPERBOLIC_HN) and params:
        raise ParamOutOfRange(f"{model_id.value} takes no parameters")
    a = float(params.get("a", 0.0))
    w = float(params.get("w", 1.0))
    if not abs(a) <= AMPLITUDE_MAX:
        raise ParamOutOfRange(f"|a| must be <= {AMPLITUDE_MAX} to stay nontrapping, got {a}")
    if not w > 0:
        raise ParamOutOfRange(f"width w must be positive, got {w}")

    x0 = settings.COLLAR_X0 if collar_x0 is None else float(collar_x0)
    if not 0 < x0 <= COLLAR_X0_MAX:
        raise ParamOutOfRange(f"collar_x0 must lie in (0, {COLLAR_X0_MAX}], got {x0}")

    model = ManifoldModel(
        kind=expected_kind,
        dim=dim,
        model_id=model_id,
        params=MappingProxyType({k: float(v) for k, v in params.items()}),
        collar_x0=x0,
    )
    logger.debug("model created: %s", model.describe())
    return model


# ---------------------------------------------------------------------------
# boundary sphere charts
# ---------------------------------------------------------------------------


def frame_at(theta: np.ndarray) -> np.ndarray:
    """Orthonormal frame of R^n with first column theta."""
    theta = np.asarray(theta, dtype=float)
    theta = theta / np.linalg.norm(theta)
    n = theta.size
    q, _ = np.linalg.qr(np.column_stack([theta, np.eye(n)]))
    q = q[:, :n]
    if q[:, 0] @ theta < 0:
        q = -q
    if np.linalg.det(q) < 0:
        q[:, -1] = -q[:, -1]
    return q


def sphere_embed(y: np.ndarray, frame: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Point theta on the unit sphere and d theta / dy for the chart centered at frame[:, 0]."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    c = frame[:, 0]
    b = frame[:, 1:]
    if frame.shape[0] == 2:
        ang = y[0]
        theta = math.cos(ang) * c + math.sin(ang) * b[:, 0]
        dtheta = (-math.sin(ang) * c + math.cos(ang) * b[:, 0])[:, None]
        return theta, dtheta
    r2 = float(y @ y)
    denom = 1.0 + r2
    numer = (1.0 - r2) * c + 2.0 * (b @ y)
    theta = numer / denom
    dnumer = -2.0 * np.outer(c, y) + 2.0 * b
    dtheta = dnumer / denom - np.outer(numer, 2.0 * y) / denom**2
    return theta, dtheta


def sphere_chart(theta: np.ndarray, frame: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    c = frame[:, 0]
    b = frame[:, 1:]
    if frame.shape[0] == 2:
        return np.array([math.atan2(theta @ b[:, 0], theta @ c)])
    return (b.T @ theta) / (1.0 + theta @ c)


def sphere_base_metric(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Round metric in chart coordinates and its y-derivatives."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    m = y.size
    if m == 1:
        return np.eye(1), np.zeros((1, 1, 1))
    denom = 1.0 + float(y @ y)
    h = 4.0 / denom**2 * np.eye(m)
    dh = np.stack([-16.0 * y[k] / denom**3 * np.eye(m) for k in range(m)])
    return h, dh


def _smooth_step(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        lo = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        hi = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return lo / (lo + hi)


def cutoff(r: np.ndarray) -> np.ndarray:
    """0 for r <= CUTOFF_INNER, 1 for r >= CUTOFF_OUTER, smooth in between."""
    return _smooth_step((np.asarray(r, dtype=float) - CUTOFF_INNER) / (CUTOFF_OUTER - CUTOFF_INNER))


def _profile(model: ManifoldModel, theta_or_y: np.ndarray) -> np.ndarray:
    """Bump exp(-|y|^2/w^2); on the sphere |y| is the chordal distance to e_1."""
    w = model.width
    arr = np.asarray(theta_or_y, dtype=float)
    if math.isinf(w):
        return np.ones(arr.shape[:-1])
    if model.is_scattering:
        d2 = 2.0 - 2.0 * arr[..., 0]
    else:
        d2 = np.sum(arr**2, axis=-1)
    return np.exp(-d2 / w**2)


# ---------------------------------------------------------------------------
# collar chart
# ---------------------------------------------------------------------------


def collar_family(
    model: ManifoldModel, x: float, y: np.ndarray, frame: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """h(x, y) and its derivatives, index 0 for x and 1.. for y. No range checks."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    a = model.amplitude
    if model.is_scattering:
        if frame is None:
            raise OutsideChart("sphere chart needs a frame")
        h_base, dh_base = sphere_base_metric(y)
        theta, dtheta = sphere_embed(y, frame)
        f = float(_profile(model, theta))
        df = np.zeros(y.size) if math.isinf(model.width) else f * (2.0 / model.width**2) * dtheta[0, :]
    else:
        h_base = np.eye(y.size)
        dh_base = np.zeros((y.size, y.size, y.size))
        f = float(_profile(model, y))
        df = np.zeros(y.size) if math.isinf(model.width) else -2.0 * y / model.width**2 * f

    conf = 1.0 + a * x * f
    h = conf * h_base
    dh = np.empty((y.size + 1, y.size, y.size))
    dh[0] = a * f * h_base
    for k in range(y.size):
        dh[k + 1] = a * x * df[k] * h_base + conf * dh_base[k]
    return h, dh


def collar_metric(model: ManifoldModel, x: float, y: np.ndarray, frame: np.ndarray | None = None) -> MetricData:
    if not 0.0 <= x <= model.collar_x0 * (1.0 + 1e-12):
        raise OutsideChart(f"x={x} outside the collar [0, {model.collar_x0}]")
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.size != model.boundary_dim:
        raise OutsideChart(f"boundary point must have {model.boundary_dim} coordinates")
    if model.is_scattering:
        if frame is None:
            frame = np.eye(model.dim)
        if model.dim == 3 and np.linalg.norm(y) > CHART_RADIUS:
            raise OutsideChart(f"|y|={np.linalg.norm(y):.3g} outside the stereographic chart")
    h, dh = collar_family(model, x, y, frame)
    return MetricData(components=h, inverse=np.linalg.inv(h), d_components=dh)


def collar_full_metric(model: ManifoldModel, x: float, y: np.ndarray, frame: np.ndarray | None = None) -> np.ndarray:
    """g in (x, y) coordinates: dx^2/x^4 + h/x^2 or (dx^2 + h)/x^2."""
    h, _ = collar_family(model, x, y, frame if frame is not None else np.eye(model.dim))
    n = model.dim
    g = np.zeros((n, n))
    if model.is_scattering:
        g[0, 0] = 1.0 / x**4
    else:
        g[0, 0] = 1.0 / x**2
    g[1:, 1:] = h / x**2
    return g


# ---------------------------------------------------------------------------
# interior chart
# ---------------------------------------------------------------------------


def _perturbed_scattering_batch(model: ManifoldModel, z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    n = z.shape[-1]
    r = np.linalg.norm(z, axis=-1)
    safe_r = np.where(r > 0, r, 1.0)
    theta = z / safe_r[..., None]
    chi = cutoff(r)
    phi = np.where(r > 0, chi / safe_r, 0.0) * _profile(model, theta)
    proj = np.eye(n) - theta[..., :, None] * theta[..., None, :]
    return lens_factor(model, z)[..., None, None] * (np.eye(n) + model.amplitude * phi[..., None, None] * proj)


def lens_factor(model: ManifoldModel, z: np.ndarray) -> np.ndarray:
    """
    Conformal factor of the interior lens, 1 - LENS_GAIN a (1 - cutoff(r)) exp(-|z|^2/w^2).

    a < 0 focuses. The lens vanishes for r >= CUTOFF_OUTER and is switched off with the bump (w = inf).
    """
    z = np.asarray(z, dtype=float)
    if math.isinf(model.width) or model.amplitude == 0.0:
        return np.ones(z.shape[:-1])
    r2 = np.sum(z**2, axis=-1)
    bump = (1.0 - cutoff(np.sqrt(r2))) * np.exp(-r2 / model.width**2)
    return 1.0 - LENS_GAIN * model.amplitude * bump


def metric_batch(model: ManifoldModel, z: np.ndarray) -> np.ndarray:
    """Interior metric at an array of points of shape (..., n)."""
    z = np.asarray(z, dtype=float)
    n = model.dim
    if model.model_id is ModelId.FLAT_EUCLIDEAN:
        return np.broadcast_to(np.eye(n), z.shape[:-1] + (n, n)).copy()
    if model.model_id is ModelId.PERTURBED_SCATTERING:
        return _perturbed_scattering_batch(model, z)
    x = z[..., 0]
    conf = np.ones_like(x)
    if model.model_id is ModelId.PERTURBED_AH:
        conf = 1.0 + model.amplitude * x * _profile(model, z[..., 1:])
    g = np.zeros(z.shape[:-1] + (n, n))
    g[..., 0, 0] = 1.0
    for k in range(1, n):
        g[..., k, k] = conf
    return g / (x**2)[..., None, None]


def _check_interior(model: ManifoldModel, z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape != (model.dim,) or not np.all(np.isfinite(z)):
        raise OutsideChart(f"interior point must be a finite vector of length {model.dim}")
    if not model.is_scattering and z[0] <= 0:
        raise OutsideChart(f"half-space point needs x > 0, got x={z[0]}")
    return z


def _richardson_gradient(fun, z: np.ndarray, step: float) -> np.ndarray:
    n = z.size

    def central(h: float) -> np.ndarray:
        offsets = h * np.eye(n)
        values = fun(np.concatenate([z + offsets, z - offsets]))
        return (values[:n] - values[n:]) / (2.0 * h)

    return (4.0 * central(step / 2.0) - central(step)) / 3.0


def _richardson_hessian(fun, z: np.ndarray, step: float) -> np.ndarray:
    n = z.size

    def central(h: float) -> np.ndarray:
        pts = [z]
        for k in range(n):
            for l in range(n):
                for sk, sl in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                    p = z.copy()
                    p[k] += sk * h
                    p[l] += sl * h
                    pts.append(p)
        values = fun(np.array(pts))
        out = np.empty((n, n) + values.shape[1:])
        idx = 1
        for k in range(n):
            for l in range(n):
                pp, pm, mp, mm = values[idx : idx + 4]
                out[k, l] = (pp - pm - mp + mm) / (4.0 * h * h)
                idx += 4
        return out

    return (4.0 * central(step / 2.0) - central(step)) / 3.0


def _metric_derivatives(model: ManifoldModel, z: np.ndarray) -> np.ndarray:
    n = model.dim
    if model.model_id is ModelId.FLAT_EUCLIDEAN:
        return np.zeros((n, n, n))
    if model.model_id is ModelId.PERTURBED_SCATTERING:
        return _richardson_gradient(lambda pts: metric_batch(model, pts), z, FD_METRIC_STEP)

    x, y = z[0], z[1:]
    conf, dconf = 1.0, np.zeros(n)
    if model.model_id is ModelId.PERTURBED_AH:
        f = float(_profile(model, y))
        df = np.zeros(n - 1) if math.isinf(model.width) else -2.0 * y / model.width**2 * f
        conf = 1.0 + model.amplitude * x * f
        dconf = np.concatenate([[model.amplitude * f], model.amplitude * x * df])
    d = np.zeros((n, n, n))
    d[0, 0, 0] = -2.0 / x**3
    for k in range(1, n):
        d[:, k, k] = dconf / x**2
        d[0, k, k] += -2.0 * conf / x**3
    return d


def christoffel_from(inverse: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Gamma^i_jk from g^{-1} and d[l, j, k] = d_l g_jk."""
    first = np.einsum("jlk->ljk", d) + np.einsum("klj->ljk", d) - d
    return 0.5 * np.einsum("il,ljk->ijk", inverse, first)


def interior_metric(model: ManifoldModel, z: np.ndarray) -> MetricData:
    z = _check_interior(model, z)
    g = metric_batch(model, z[None, :])[0]
    inv = np.linalg.inv(g)
    d = _metric_derivatives(model, z)
    return MetricData(components=g, inverse=inv, d_components=d, christoffel=christoffel_from(inv, d))


def orthonormal_frame(model: ManifoldModel, z: np.ndarray) -> np.ndarray:
    """Columns form a g-orthonormal basis at z (g^{-1/2})."""
    g = interior_metric(model, z).components
    vals, vecs = np.linalg.eigh(g)
    return vecs @ np.diag(vals**-0.5) @ vecs.T


# ---------------------------------------------------------------------------
# chart transition
# ---------------------------------------------------------------------------


def in_collar_region(model: ManifoldModel, z: np.ndarray, rtol: float = 0.0) -> bool:
    """Whether an interior point lies in the collar; rtol widens the region at a chart handoff."""
    if model.is_scattering:
        return float(np.linalg.norm(z)) >= (1.0 - rtol) / model.collar_x0
    return float(z[0]) <= model.collar_x0 * (1.0 + rtol)


def _scattering_jacobian(z: np.ndarray, frame: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(x, y) and d(x, y)/dz at an interior point."""
    r = float(np.linalg.norm(z))
    theta = z / r
    y = sphere_chart(theta, frame)
    _, dtheta_dy = sphere_embed(y, frame)
    h_base, _ = sphere_base_metric(y)
    dy_dtheta = np.linalg.solve(h_base, dtheta_dy.T)
    dtheta_dz = (np.eye(z.size) - np.outer(theta, theta)) / r
    jac = np.vstack([-theta / r**2, dy_dtheta @ dtheta_dz])
    return np.concatenate([[1.0 / r], y]), jac


def chart_transition(
    model: ManifoldModel, p: ChartPoint, covector: np.ndarray | None = None, *, rtol: float = 0.0
) -> tuple[ChartPoint, np.ndarray | None]:
    """
    Map a point (and a covector at it) between the interior and the collar chart.

    rtol accepts points that miss the overlap edge by that relative amount, as event roots do.
    """
    coords = np.asarray(p.coords, dtype=float)
    x0 = model.collar_x0
    if p.chart is Chart.INTERIOR:
        if not in_collar_region(model, coords, rtol) or (not model.is_scattering and coords[0] <= 0):
            raise OutsideOverlap(f"{coords} is not in the collar overlap")
        if not model.is_scattering:
            image = ChartPoint(Chart.COLLAR, coords.copy())
            return image, None if covector is None else np.asarray(covector, dtype=float).copy()
        frame = p.frame if p.frame is not None else frame_at(coords)
        xy, jac = _scattering_jacobian(coords, frame)
        image = ChartPoint(Chart.COLLAR, xy, frame)
        if covector is None:
            return image, None
        return image, np.linalg.solve(jac.T, np.asarray(covector, dtype=float))

    if not 0.0 < coords[0] <= x0 * (1.0 + max(rtol, 1e-12)):
        raise OutsideOverlap(f"x={coords[0]} is not in the overlap (0, {x0}]")
    if not model.is_scattering:
        image = ChartPoint(Chart.INTERIOR, coords.copy())
        return image, None if covector is None else np.asarray(covector, dtype=float).copy()
    if p.frame is None:
        raise OutsideOverlap("collar point of a sphere chart needs its frame")
    theta, _ = sphere_embed(coords[1:], p.frame)
    z = theta / coords[0]
    image = ChartPoint(Chart.INTERIOR, z, p.frame)
    if covector is None:
        return image, None
    _, jac = _scattering_jacobian(z, p.frame)
    return image, jac.T @ np.asarray(covector, dtype=float)


def overlap_metric_defect(model: ManifoldModel, z: np.ndarray) -> float:
    """Relative mismatch between g at an overlap point and the pullback of its collar normal form."""
    z = _check_interior(model, z)
    frame = frame_at(z) if model.is_scattering else None
    image, _ = chart_transition(model, ChartPoint(Chart.INTERIOR, z, frame))
    jac = _scattering_jacobian(z, image.frame)[1] if model.is_scattering else np.eye(model.dim)
    g_col = collar_full_metric(model, image.coords[0], image.coords[1:], image.frame)
    g_int = metric_batch(model, z[None, :])[0]
    return float(np.max(np.abs(jac.T @ g_col @ jac - g_int)) / np.max(np.abs(g_int)))


# ---------------------------------------------------------------------------
# curvature
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CurvatureData:
    """Fully covariant Riemann tensor R_iklm with R(X,Y,X,Y) = K (|X|^2|Y|^2 - <X,Y>^2)."""

    riemann: np.ndarray
    metric: np.ndarray

    def sectional(self, u: np.ndarray, v: np.ndarray) -> float:
        g = self.metric
        num = np.einsum("iklm,i,k,l,m->", self.riemann, u, v, u, v)
        den = (u @ g @ u) * (v @ g @ v) - (u @ g @ v) ** 2
        return float(num / den)

    def frame_operator(self, tangent: np.ndarray, frame: np.ndarray) -> np.ndarray:
        """K_ab = R(E_a, T, E_b, T) for frame columns E_a."""
        return np.einsum("iklm,ia,k,lb,m->ab", self.riemann, frame, tangent, frame, tangent)


def _constant_curvature(g: np.ndarray, k: float) -> np.ndarray:
    return k * (np.einsum("il,km->iklm", g, g) - np.einsum("im,kl->iklm", g, g))


def curvature_operator(model: ManifoldModel, z: np.ndarray) -> CurvatureData:
    z = _check_interior(model, z)
    n = model.dim
    if model.model_id is ModelId.FLAT_EUCLIDEAN:
        return CurvatureData(np.zeros((n,) * 4), np.eye(n))
    if model.model_id is ModelId.HYPERBOLIC_HN:
        g = metric_batch(model, z[None, :])[0]
        return CurvatureData(_constant_curvature(g, -1.0), g)

    metric = interior_metric(model, z)
    g, gamma = metric.components, metric.christoffel
    d2 = _richardson_hessian(lambda pts: metric_batch(model, pts), z, FD_CURVATURE_STEP)
    # d2[k, l, i, m] = d_k d_l g_im
    second = 0.5 * (
        np.einsum("klim->iklm", d2)
        + np.einsum("imkl->iklm", d2)
        - np.einsum("kmil->iklm", d2)
        - np.einsum("ilkm->iklm", d2)
    )
    lowered = np.einsum("np,nkl,pim->iklm", g, gamma, gamma) - np.einsum("np,nkm,pil->iklm", g, gamma, gamma)
    riemann = second + lowered

    scale = max(1.0, float(np.max(np.abs(riemann))))
    asym = float(np.max(np.abs(riemann - np.einsum("iklm->lmik", riemann))))
    if asym > 1e-6 * scale:
        raise CurvatureUnavailable(f"finite-difference curvature lost pair symmetry ({asym:.2e})")
    riemann = 0.5 * (riemann + np.einsum("iklm->lmik", riemann))
    return CurvatureData(riemann, g)


# ---------------------------------------------------------------------------
# radial profile (rotationally symmetric models)
# ---------------------------------------------------------------------------


def radial_profile(model: ManifoldModel, r: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """rho, rho', rho'' for g = dr^2 + rho(r)^2 dOmega^2."""
    if not model.rotationally_symmetric:
        raise ParamOutOfRange(f"{model.model_id.value} with w={model.width} is not rotationally symmetric")
    r = np.asarray(r, dtype=float)
    if model.model_id is ModelId.FLAT_EUCLIDEAN:
        return r.copy(), np.ones_like(r), np.zeros_like(r)

    a = model.amplitude
    step = 1e-4
    chi = cutoff(r)
    dchi = (cutoff(r + step) - cutoff(r - step)) / (2 * step)
    d2chi = (cutoff(r + step) - 2 * chi + cutoff(r - step)) / step**2
    big_f = r**2 + a * r * chi
    d_f = 2 * r + a * (chi + r * dchi)
    d2_f = 2 + a * (2 * dchi + r * d2chi)
    rho = np.sqrt(big_f)
    safe = np.where(rho > 0, rho, 1.0)
    drho = np.where(rho > 0, d_f / (2 * safe), 1.0)
    d2rho = np.where(rho > 0, (0.5 * d2_f - drho**2) / safe, 0.0)
    return rho, drho, d2rho
