# sojourn/radiation.py
"""
Radiation fields of rotationally symmetric scattering models in dimension 3.

For g = dr^2 + rho(r)^2 dOmega^2 and a fixed spherical mode ell, w = rho u solves

    w_tt - w_rr + V w = 0,    V = rho''/rho + ell(ell + 1)/rho^2,

with w = 0 at r = 0. The solver marches a characteristic (null) lattice in
u = s = t - r and v = t + r. Columns beyond v_c are compactified by a label
x with v = v_c + 2/x - 2/x_max, so x = 0 is the column at null infinity and
w there is the rescaled field x^{-1} u restricted to the boundary.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.polynomial import hermite, legendre

from sojourn.errors import CFLViolation, EmptyTrace, ParamOutOfRange, UnstableGrowth
from sojourn.manifolds import ManifoldModel, ModelId, radial_profile
from sojourn.settings import settings

logger = logging.getLogger("sojourn.radiation")

GAUSS_NODES = 8
GROWTH_LIMIT = 2.0
# pulse tails below exp(-SUPPORT_WIDTHS^2) count as zero
SUPPORT_WIDTHS = 6.0


@dataclass(frozen=True)
class ReducedGrid:
    """
    Null lattice with step ds in u and v, and compactified columns with label
    step dx on [0, x_max]. The lattice has no stability limit of its own; the
    documented condition ds <= (2 / x_max^2) dx keeps the v-spacing
    nondecreasing across the switch to compactified columns.
    """

    s_min: float = -8.0
    s_max: float = 4.0
    ds: float = 0.05
    dx: float = 0.01
    x_max: float = 0.2
    ell: int = 0

    @property
    def s_range(self) -> tuple[float, float]:
        return self.s_min, self.s_max

    @property
    def x_range(self) -> tuple[float, float]:
        return 0.0, self.x_max

    @property
    def cfl_constant(self) -> float:
        return 2.0 / self.x_max**2

    @property
    def x_steps(self) -> int:
        return int(round(self.x_max / self.dx))

    def validate(self) -> "ReducedGrid":
        if self.ds <= 0 or self.dx <= 0 or self.x_max <= 0:
            raise ParamOutOfRange("grid steps and x_max must be positive")
        if self.ell < 0:
            raise ParamOutOfRange(f"mode ell={self.ell} must be >= 0")
        if not self.s_min < 0 < self.s_max:
            raise ParamOutOfRange(f"s range [{self.s_min}, {self.s_max}] must contain 0")
        if abs(self.x_steps * self.dx - self.x_max) > 1e-9 * self.x_max or self.x_steps < 2:
            raise ParamOutOfRange(f"x_max={self.x_max} is not a multiple (>= 2) of dx={self.dx}")
        if self.ds > self.cfl_constant * self.dx * (1 + 1e-12):
            raise CFLViolation(f"ds={self.ds} exceeds {self.cfl_constant:.4g} * dx={self.dx}")
        return self

    def refined(self) -> "ReducedGrid":
        return replace(self, ds=self.ds / 2, dx=self.dx / 2)

    def describe(self) -> dict:
        return {
            "s_range": list(self.s_range),
            "x_range": list(self.x_range),
            "ds": self.ds,
            "dx": self.dx,
            "ell": self.ell,
            "cfl_constant": self.cfl_constant,
        }


@dataclass(frozen=True)
class PulseSpec:
    """Gaussian profile f(tau) = A exp(-((tau + r0)/width)^2) concentrated on the sphere |z| = r0."""

    r0: float = 5.0
    width: float = 0.3
    amplitude: float = 1.0

    def __post_init__(self):
        if self.r0 < 0 or self.width <= 0:
            raise ParamOutOfRange("pulse needs r0 >= 0 and width > 0")

    def derivative(self, tau, order: int = 0) -> np.ndarray:
        """d^m f / d tau^m through physicists' Hermite polynomials."""
        xi = (np.asarray(tau, dtype=float) + self.r0) / self.width
        coeffs = np.zeros(order + 1)
        coeffs[order] = 1.0
        return self.amplitude * (-1.0 / self.width) ** order * hermite.hermval(xi, coeffs) * np.exp(-(xi**2))

    @property
    def support(self) -> tuple[float, float]:
        return -self.r0 - SUPPORT_WIDTHS * self.width, -self.r0 + SUPPORT_WIDTHS * self.width

    def describe(self) -> dict:
        return {"r0": self.r0, "width": self.width, "amplitude": self.amplitude}


@dataclass
class RescaledField:
    grid: ReducedGrid
    pulse: PulseSpec
    u: np.ndarray
    v: np.ndarray  # last entry is +inf
    x_labels: np.ndarray  # labels of the compactified columns, x_max down to 0
    values: np.ndarray  # (len(u), len(v)); nan outside t >= 0, r >= 0
    meta: dict = field(default_factory=dict)

    @property
    def compact_start(self) -> int:
        return self.v.size - self.x_labels.size

    def column_at_x(self, x: float) -> np.ndarray:
        k = int(np.argmin(np.abs(self.x_labels - x)))
        if abs(self.x_labels[k] - x) > 1e-9:
            raise ParamOutOfRange(f"x={x} is not a grid line")
        return self.values[:, self.compact_start + k]


@dataclass(frozen=True)
class RadiationTrace:
    s_grid: np.ndarray
    values: np.ndarray
    source_meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class FrontLocation:
    s_front: float
    s_peak: float
    threshold: float


# ---------------------------------------------------------------------------
# closed forms on flat space
# ---------------------------------------------------------------------------


def _multipole_coefficients(ell: int) -> list[float]:
    return [math.factorial(ell + k) / (math.factorial(k) * math.factorial(ell - k) * 2**k) for k in range(ell + 1)]


def multipole_field(pulse: PulseSpec, ell: int, t, r) -> np.ndarray:
    """
    Regular flat solution w = O(t - r, r) + (-1)^(ell+1) O(t + r, -r) with
    O(a, r) = sum_k c_k f^(ell-k)(a) / r^k; for ell = 0 this is f(t - r) - f(t + r).
    """
    t, r = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(r, dtype=float))
    safe = np.where(r > 0, r, 1.0)
    sign = (-1.0) ** (ell + 1)
    out = np.zeros(r.shape)
    for k, c in enumerate(_multipole_coefficients(ell)):
        out += c * (pulse.derivative(t - r, ell - k) + sign * pulse.derivative(t + r, ell - k) * (-1.0) ** k) / safe**k
    return np.where(r > 0, out, 0.0)


def dalembert_field(pulse: PulseSpec, t, r) -> np.ndarray:
    return multipole_field(pulse, 0, t, r)


def multipole_trace(pulse: PulseSpec, ell: int, s) -> np.ndarray:
    """Radiation field of multipole_field: f^(ell+1)(s)."""
    return pulse.derivative(s, ell + 1)


def dalembert_trace(pulse: PulseSpec, s) -> np.ndarray:
    return multipole_trace(pulse, 0, s)


# ---------------------------------------------------------------------------
# solver
# ---------------------------------------------------------------------------


def reduced_potential(model: ManifoldModel, ell: int, r) -> np.ndarray:
    rho, _, d2rho = radial_profile(model, r)
    return d2rho / rho + ell * (ell + 1) / rho**2


def _check_model(model: ManifoldModel) -> None:
    if not model.is_scattering or model.dim != 3:
        raise ParamOutOfRange("radiation fields are solved for scattering models of dimension 3")
    if not model.rotationally_symmetric:
        raise ParamOutOfRange(f"{model.model_id.value} is not rotationally symmetric")


def _lattice(grid: ReducedGrid):
    h = grid.ds
    k0 = int(math.ceil(-grid.s_min / h - 1e-9))
    rows = k0 + int(math.ceil(grid.s_max / h - 1e-9))
    v_c = max(grid.s_max, -grid.s_min) + 2.0 / grid.x_max
    j_c = k0 + int(math.ceil(v_c / h - 1e-9))
    v_c = (j_c - k0) * h
    u = (np.arange(rows + 1) - k0) * h
    x_labels = grid.x_max - np.arange(grid.x_steps + 1) * grid.dx
    x_labels[-1] = 0.0
    with np.errstate(divide="ignore"):
        v_compact = v_c + 2.0 / x_labels[1:] - 2.0 / grid.x_max
    v = np.concatenate([(np.arange(j_c + 1) - k0) * h, v_compact])
    return k0, j_c, v_c, u, v, x_labels


def _cell_coefficients(model: ManifoldModel, grid: ReducedGrid, k0: int, j_c: int, v_c: float, u: np.ndarray) -> np.ndarray:
    """C[i, j] = ds * int V dv / 8 over the cell whose top corner is (i, j)."""
    h, ell = grid.ds, grid.ell
    rows, cols = u.size, j_c + 1 + grid.x_steps
    coef = np.zeros((rows, cols))
    if model.model_id is ModelId.FLAT_EUCLIDEAN and ell == 0:
        return coef
    nodes, weights = legendre.leggauss(GAUSS_NODES)

    # uniform cells depend only on d = j - i
    d = np.arange(1, j_c + 1)
    r = ((d[:, None] + nodes[None, :] / 2) * h) / 2
    by_offset = (h / 2) * np.sum(weights * reduced_potential(model, ell, r), axis=1)
    ii, jj = np.meshgrid(np.arange(1, rows), np.arange(1, j_c + 1), indexing="ij")
    offset = jj - ii
    coef[1:, 1 : j_c + 1] = np.where(offset >= 1, by_offset[np.clip(offset, 1, None) - 1], 0.0)

    # compactified cells integrate in the label x with dv = -2 dx / x^2
    x_hi = grid.x_max - np.arange(grid.x_steps) * grid.dx
    x_mid = x_hi - grid.dx / 2
    xs = x_mid[:, None] + nodes[None, :] * grid.dx / 2
    u_mid = (u[1:] + u[:-1]) / 2
    rr = (v_c - 2.0 / grid.x_max + 2.0 / xs[None, :, :] - u_mid[:, None, None]) / 2
    integrand = reduced_potential(model, ell, rr) * 2.0 / xs[None, :, :] ** 2
    coef[1:, j_c + 1 :] = (grid.dx / 2) * np.sum(weights * integrand, axis=2)
    return coef * h / 8


def solve_rescaled_wave(model: ManifoldModel, grid: ReducedGrid, pulse: PulseSpec) -> RescaledField:
    _check_model(model)
    grid.validate()
    lo, _ = pulse.support
    if grid.s_min > lo:
        raise ParamOutOfRange(f"s_min={grid.s_min} must lie below the data support {lo:.4g}")
    h = grid.ds
    k0, j_c, v_c, u, v, x_labels = _lattice(grid)
    rows, cols = u.size, v.size
    values = np.full((rows, cols), np.nan)
    coef = _cell_coefficients(model, grid, k0, j_c, v_c, u)

    # row u = s_min lies below the data support
    values[0, 2 * k0 :] = 0.0

    i0 = np.arange(k0 + 1)
    r0 = (k0 - i0) * h
    values[i0, 2 * k0 - i0] = multipole_field(pulse, grid.ell, 0.0, r0)
    r1 = (2 * k0 + 1 - 2 * i0) * h / 2
    first = multipole_field(pulse, grid.ell, h / 2, r1)
    correction = reduced_potential(model, grid.ell, r1) - grid.ell * (grid.ell + 1) / r1**2
    values[i0, 2 * k0 + 1 - i0] = first - (h**2 / 8) * correction * multipole_field(pulse, grid.ell, 0.0, r1)

    initial_max = float(np.nanmax(np.abs(values)))
    radiated = pulse.amplitude
    if grid.ell:
        radiated = float(np.max(np.abs(multipole_trace(pulse, grid.ell - 1, np.linspace(*pulse.support, 2001)))))
    scale = max(initial_max, 2.0 * radiated * sum(_multipole_coefficients(grid.ell)))

    for level in range(2 * k0 + 2, rows + cols - 1):
        i = np.arange(max(1, level - cols + 1), min(rows - 1, level // 2) + 1)
        if i.size == 0:
            continue
        j = level - i
        diag = j == i
        values[i[diag], j[diag]] = 0.0
        i, j = i[~diag], j[~diag]
        east, west, south = values[i - 1, j], values[i, j - 1], values[i - 1, j - 1]
        values[i, j] = (east + west) * (1.0 - coef[i, j]) - south
        if scale > 0 and np.max(np.abs(values[i, j])) > GROWTH_LIMIT * scale:
            raise UnstableGrowth(f"field exceeds {GROWTH_LIMIT}x the data scale at lattice level {level}")

    meta = {"model": model.describe(), "grid": grid.describe(), "pulse": pulse.describe(), "v_c": v_c}
    logger.info("wave solved", extra={"rows": rows, "cols": cols, "ell": grid.ell})
    return RescaledField(grid, pulse, u, v, x_labels, values, meta)


def _s_derivative(values: np.ndarray, h: float, order: int) -> np.ndarray:
    """Central differences of the given order (2 or 4); second order on the outermost samples."""
    out = np.gradient(values, h, edge_order=2)
    if order == 4 and values.size >= 5:
        out[2:-2] = (values[:-4] - 8.0 * values[1:-3] + 8.0 * values[3:-1] - values[4:]) / (12.0 * h)
    return out


def extract_radiation_field(field: RescaledField, grid: ReducedGrid | None = None, *, order: int = 4) -> RadiationTrace:
    """
    Trace first, then derivative in s: R(s) = d/ds w(s, x = 0).

    order=2 keeps the stencil compact for pulses narrower than ds, where only the front is meaningful.
    """
    if order not in (2, 4):
        raise ParamOutOfRange(f"derivative order must be 2 or 4, got {order}")
    grid = grid or field.grid
    trace = field.values[:, -1]
    near, far = field.values[:, -2], field.values[:, -3]
    extrapolated = 2 * near - far
    peak = float(np.max(np.abs(trace)))
    extrapolation_error = float(np.max(np.abs(extrapolated - trace)))
    if peak > 0:
        extrapolation_error /= peak
    values = _s_derivative(trace, grid.ds, order)
    meta = {
        **field.meta,
        "extrapolation_error": extrapolation_error,
        "causal_bound": field.pulse.support[0],
        "derivative_order": order,
    }
    return RadiationTrace(field.u.copy(), values, meta)


def front_location(trace: RadiationTrace, threshold: float | None = None) -> FrontLocation:
    threshold = settings.FRONT_THRESHOLD if threshold is None else threshold
    magnitude = np.abs(trace.values)
    peak = float(np.max(magnitude)) if magnitude.size else 0.0
    if not peak > 0 or not math.isfinite(peak):
        raise EmptyTrace("radiation trace vanishes identically")
    first = int(np.flatnonzero(magnitude > threshold * peak)[0])
    return FrontLocation(float(trace.s_grid[first]), float(trace.s_grid[int(np.argmax(magnitude))]), threshold)


def radiation_phase_slope(trace: RadiationTrace, lam: np.ndarray, window: tuple[float, float] | None = None) -> float:
    """Unwrapped phase slope in lambda of the Fourier transform of the windowed trace."""
    from sojourn.poisson import fourier_radiation, phase_slope

    s, values = trace.s_grid, trace.values
    if window is not None:
        mask = (s >= window[0]) & (s <= window[1])
        s, values = s[mask], values[mask]
    return phase_slope(np.asarray(lam, dtype=float), fourier_radiation(s, values, np.asarray(lam, dtype=float)))


def trace_smoothness(trace: RadiationTrace) -> float:
    """Discrete C^1 norm."""
    h = trace.s_grid[1] - trace.s_grid[0]
    return float(np.max(np.abs(trace.values)) + np.max(np.abs(np.diff(trace.values))) / h)


def refinement_study(model: ManifoldModel, grid: ReducedGrid, pulse: PulseSpec, levels: int = 3) -> dict:
    """L2 differences of traces at successive (ds, dx) halvings, compared on the coarse s-grid."""
    traces = []
    current = grid
    for level in range(levels):
        tr = extract_radiation_field(solve_rescaled_wave(model, current, pulse))
        traces.append(tr.values[:: 2**level])
        current = current.refined()
    size = min(t.size for t in traces)
    diffs = [float(np.linalg.norm(traces[k + 1][:size] - traces[k][:size]) * math.sqrt(grid.ds)) for k in range(levels - 1)]
    ratios = [diffs[k] / diffs[k + 1] if diffs[k + 1] > 0 else math.inf for k in range(len(diffs) - 1)]
    c1 = [trace_smoothness(RadiationTrace(np.arange(t.size) * grid.ds, t)) for t in traces]
    return {"differences": diffs, "ratios": ratios, "c1_norms": c1}
