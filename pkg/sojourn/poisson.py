# sojourn/poisson.py
"""
High-frequency Poisson / Eisenstein traces synthesized from branch data.

The synthesized trace approximates the adjoint kernel P(lambda)*(y, z); for
the flat model it is the complex conjugate of (i lambda/2pi)^{(n-1)/2} e^{i lambda theta.z}.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

import numpy as np

from sojourn.errors import DegenerateBranch, GridMismatch, GridTooCoarse, NoBranchFound
from sojourn.manifolds import ManifoldKind, ManifoldModel
from sojourn.settings import settings

logger = logging.getLogger("sojourn.poisson")

# mollifier bump must span this many s-samples
MIN_BUMP_SAMPLES = 16


class Prefactor(str, Enum):
    POISSON = "poisson"  # (lambda/2pi i)^{(n-1)/2}
    EISENSTEIN = "eisenstein"  # i/(2 lambda) * (lambda/2pi i)^{(n-1)/2}


@dataclass(frozen=True)
class Convention:
    kind: ManifoldKind
    n: int

    @property
    def prefactor(self) -> Prefactor:
        return Prefactor.POISSON if self.kind is ManifoldKind.SCATTERING else Prefactor.EISENSTEIN

    @classmethod
    def for_model(cls, model: ManifoldModel) -> "Convention":
        return cls(model.kind, model.dim)

    def describe(self) -> dict:
        return {"kind": self.kind.value, "n": self.n, "prefactor": self.prefactor.value}


@dataclass(frozen=True)
class Mollifier:
    """phi-check(s) = c exp(-1/(1 - (s/w)^2)) on |s| < w."""

    w: float = 1.0
    profile: str = "bump"
    # "integral": int phi-check = 1; "peak": phi-check(0) = 1 (delta limit as w grows)
    normalization: str = "integral"

    def __post_init__(self):
        if self.w <= 0:
            raise ValueError("mollifier width must be positive")
        if self.normalization not in ("integral", "peak"):
            raise ValueError(f"unknown normalization {self.normalization!r}")

    @property
    def constant(self) -> float:
        if self.normalization == "peak":
            return math.e
        s = np.linspace(-self.w, self.w, 20001)[1:-1]
        bump = np.exp(-1.0 / (1.0 - (s / self.w) ** 2))
        return 1.0 / float(np.trapezoid(bump, s))

    def check(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        inside = np.abs(s) < self.w
        t = np.where(inside, s / self.w, 0.0)
        return np.where(inside, self.constant * np.exp(-1.0 / (1.0 - t**2)), 0.0)

    def describe(self) -> dict:
        return {"w": self.w, "profile": self.profile, "normalization": self.normalization}


@dataclass(frozen=True)
class KernelTrace:
    lambda_grid: np.ndarray
    values: np.ndarray
    convention: Convention
    mollifier: Mollifier | None = None
    meta: dict = field(default_factory=dict)

    @property
    def step(self) -> float:
        return float(self.lambda_grid[1] - self.lambda_grid[0])


def lambda_grid(lam_min: float | None = None, lam_max: float | None = None, points: int | None = None) -> np.ndarray:
    return np.linspace(
        settings.LAMBDA_MIN if lam_min is None else lam_min,
        settings.LAMBDA_MAX if lam_max is None else lam_max,
        settings.LAMBDA_POINTS if points is None else points,
    )


def _check_uniform(grid: np.ndarray) -> None:
    diffs = np.diff(grid)
    if grid.size < 2 or np.any(diffs <= 0) or np.ptp(diffs) > 1e-9 * abs(diffs[0]):
        raise GridMismatch("lambda grid must be uniform and increasing")


# ---------------------------------------------------------------------------
# amplitudes
# ---------------------------------------------------------------------------


def dimensional_factor(lam: np.ndarray, n: int) -> np.ndarray:
    """(lambda / 2 pi i)^{(n-1)/2}, principal branch, lambda > 0."""
    lam = np.asarray(lam, dtype=float)
    p = (n - 1) / 2
    return (lam / (2 * np.pi)) ** p * np.exp(-0.5j * np.pi * p)


def branch_amplitude(branch, lam, convention: Convention) -> np.ndarray | complex:
    if not branch.nondegenerate:
        raise DegenerateBranch(f"branch with |dy/d dir|={branch.jacobian:.3e} is degenerate")
    lam_arr = np.asarray(lam, dtype=float)
    if np.any(lam_arr <= 0):
        raise ValueError("amplitudes are defined for lambda > 0; use the conjugation symmetry for lambda < 0")
    value = (
        (1j ** branch.conj_count)
        * np.exp(1j * lam_arr * branch.limit.s)
        * dimensional_factor(lam_arr, convention.n)
        * branch.jacobian**-0.5
    )
    if convention.prefactor is Prefactor.EISENSTEIN:
        value = value * 1j / (2 * lam_arr)
    return value if lam_arr.ndim else complex(value)


def symbol_pair(branch, sigma: float, convention: Convention) -> tuple[complex, complex]:
    """Two-component half-density symbol (sigma^{(n+1)/2}, sigma^{(n-1)/2}) times the branch amplitude."""
    n = convention.n
    base = (1j ** branch.conj_count) * branch.jacobian**-0.5 * (2 * np.pi) ** (-(n - 1) / 2) * np.exp(-0.25j * np.pi * (n - 1))
    return complex(base * abs(sigma) ** ((n + 1) / 2)), complex(base * abs(sigma) ** ((n - 1) / 2))


def branch_table_hash(branches: Sequence) -> str:
    rows = [
        [round(float(b.limit.s), 12), round(float(b.jacobian), 12), int(b.conj_count), [round(float(v), 12) for v in b.dir]]
        for b in branches
    ]
    return hashlib.sha256(json.dumps(rows).encode()).hexdigest()


def synthesize_from_branches(branches: Sequence, grid: np.ndarray, convention: Convention) -> KernelTrace:
    if not branches:
        raise NoBranchFound("no branches to synthesize")
    grid = np.asarray(grid, dtype=float)
    _check_uniform(grid)
    degenerate = [i for i, b in enumerate(branches) if not b.nondegenerate]
    if degenerate:
        raise DegenerateBranch(f"refusing to synthesize across degenerate branches {degenerate}")
    ordered = sorted(branches, key=lambda b: tuple(np.round(b.dir, 12)))
    values = np.zeros(grid.size, dtype=complex)
    for branch in ordered:
        values += branch_amplitude(branch, grid, convention)
    meta = {
        "branches": [{"s": b.limit.s, "jacobian": b.jacobian, "k": b.conj_count} for b in ordered],
        "branch_hash": branch_table_hash(ordered),
    }
    logger.info("trace synthesized", extra={"branches": len(ordered), "points": int(grid.size)})
    return KernelTrace(grid, values, convention, None, meta)


def synthesize_trace(
    model: ManifoldModel, z, y_target, grid: np.ndarray, convention: Convention | None = None, opts=None
) -> KernelTrace:
    from sojourn.branches import find_branches, nondegeneracy_check

    branch_set = find_branches(model, z, y_target, opts)
    nondegeneracy_check(model, branch_set)
    trace = synthesize_from_branches(branch_set.branches, grid, convention or Convention.for_model(model))
    trace.meta.update(
        {"z": np.asarray(z).tolist(), "y_target": np.asarray(y_target).tolist(), "search": branch_set.search_meta}
    )
    return trace


# ---------------------------------------------------------------------------
# mollification
# ---------------------------------------------------------------------------


def dual_grid(grid: np.ndarray) -> np.ndarray:
    """s-values of the DFT bins of a lambda grid."""
    return 2 * np.pi * np.fft.fftfreq(grid.size, d=grid[1] - grid[0])


def _check_resolution(grid: np.ndarray, m: Mollifier) -> None:
    step = grid[1] - grid[0]
    nyquist = np.pi / step
    bin_width = 2 * np.pi / (grid.size * step)
    if nyquist <= m.w or 2 * m.w / bin_width < MIN_BUMP_SAMPLES:
        raise GridTooCoarse(
            f"grid resolves s in [-{nyquist:.3g}, {nyquist:.3g}] with bins {bin_width:.3g}; mollifier width {m.w}"
        )


def mollify(trace: KernelTrace, m: Mollifier) -> KernelTrace:
    """Convolution in lambda by multiplication with phi-check in the s-domain."""
    grid = trace.lambda_grid
    _check_uniform(grid)
    _check_resolution(grid, m)
    spectrum = np.fft.fft(trace.values)
    values = np.fft.ifft(spectrum * m.check(dual_grid(grid)))
    return replace(trace, values=values, mollifier=m, meta={**trace.meta, "mollifier": m.describe()})


def mollify_direct(trace: KernelTrace, m: Mollifier) -> np.ndarray:
    """Same periodic convolution as mollify, summed directly; O(N^2), for coarse grids."""
    grid = trace.lambda_grid
    n = grid.size
    weights = m.check(dual_grid(grid))
    kernel = np.fft.ifft(weights)
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    return kernel[idx] @ trace.values


# ---------------------------------------------------------------------------
# oracles and comparisons
# ---------------------------------------------------------------------------


def euclidean_oracle(z, theta, lam, n: int):
    theta = np.asarray(theta, dtype=float)
    if abs(np.linalg.norm(theta) - 1.0) > 1e-12:
        raise ValueError("theta must be a unit vector")
    lam_arr = np.asarray(lam, dtype=float)
    value = (1j * lam_arr / (2 * np.pi)) ** ((n - 1) / 2) * np.exp(1j * lam_arr * float(theta @ np.asarray(z, dtype=float)))
    return value if lam_arr.ndim else complex(value)


def euclidean_oracle_trace(z, theta, grid: np.ndarray, n: int) -> KernelTrace:
    """Oracle in the adjoint convention of synthesized traces (complex conjugate)."""
    values = np.conj(euclidean_oracle(z, theta, grid, n))
    convention = Convention(ManifoldKind.SCATTERING, n)
    return KernelTrace(np.asarray(grid, dtype=float), values, convention, meta={"oracle": "euclidean"})


def h3_oracle_phase(z, y_prime) -> float:
    z = np.asarray(z, dtype=float)
    x, y = z[0], z[1:]
    if x <= 0:
        raise ValueError("x must be positive")
    d = y - np.asarray(y_prime, dtype=float)
    return float(math.log((x**2 + d @ d) / x))


def phase_slope(grid: np.ndarray, values: np.ndarray) -> float:
    phase = np.unwrap(np.angle(values))
    return float(np.polyfit(grid, phase, 1)[0])


def amplitude_exponent(grid: np.ndarray, values: np.ndarray) -> float:
    return float(np.polyfit(np.log(grid), np.log(np.abs(values)), 1)[0])


def compare_traces(a: KernelTrace, b: KernelTrace, window: tuple[float, float] | None = None) -> dict:
    if a.lambda_grid.shape != b.lambda_grid.shape or not np.allclose(a.lambda_grid, b.lambda_grid, rtol=0, atol=1e-12):
        raise GridMismatch("traces live on different lambda grids")
    grid = a.lambda_grid
    mask = np.ones(grid.size, dtype=bool) if window is None else (grid >= window[0]) & (grid <= window[1])
    g, va, vb = grid[mask], a.values[mask], b.values[mask]
    denom = np.linalg.norm(vb)
    return {
        "relative_l2": float(np.linalg.norm(va - vb) / denom) if denom > 0 else float(np.linalg.norm(va)),
        "phase_slope_diff": phase_slope(g, va) - phase_slope(g, vb),
        "amplitude_exponent_diff": amplitude_exponent(g, va) - amplitude_exponent(g, vb),
    }


def calibrate_constant(a: KernelTrace, b: KernelTrace) -> complex:
    """Least-squares lambda-independent factor c with a ~ c b."""
    return complex(np.vdot(b.values, a.values) / np.vdot(b.values, b.values))


def spectral_peaks(trace: KernelTrace, count: int = 2) -> np.ndarray:
    """s-locations of the strongest peaks of the trace spectrum, sorted."""
    grid = trace.lambda_grid
    window = np.hanning(grid.size)
    pad = 8 * grid.size
    spectrum = np.abs(np.fft.fft(trace.values * window, n=pad))
    s = 2 * np.pi * np.fft.fftfreq(pad, d=grid[1] - grid[0])
    local = np.flatnonzero((spectrum > np.roll(spectrum, 1)) & (spectrum >= np.roll(spectrum, -1)))
    top = local[np.argsort(spectrum[local])[::-1][:count]]
    return np.sort(s[top])


# ---------------------------------------------------------------------------
# radiation field relations
# ---------------------------------------------------------------------------


def fourier_radiation(s_grid: np.ndarray, values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """int e^{i lambda s} R(s) ds by the trapezoidal rule."""
    phase = np.exp(1j * np.outer(grid, s_grid))
    return np.trapezoid(phase * values[None, :], s_grid, axis=1)


def poisson_from_radiation(
    s_grid: np.ndarray, values: np.ndarray, grid: np.ndarray, kind: ManifoldKind, n: int
) -> KernelTrace:
    """P* = -2 F R+ (scattering) or E = -(i/lambda) F R+ (AH)."""
    grid = np.asarray(grid, dtype=float)
    transform = fourier_radiation(np.asarray(s_grid), np.asarray(values), grid)
    if kind is ManifoldKind.SCATTERING:
        out = -2.0 * transform
    else:
        out = -1j / grid * transform
    return KernelTrace(grid, out, Convention(kind, n), meta={"source": "radiation_field"})
