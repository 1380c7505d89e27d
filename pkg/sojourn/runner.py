# sojourn/runner.py
"""Scenario execution: logging setup, point sweeps and the task functions behind the CLI."""
from __future__ import annotations

import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Callable

import numpy as np

from sojourn.branches import (
    SearchOptions,
    boundary_jacobian,
    fd_family_conjugate_count,
    find_branches,
    jacobian_consistency,
    nondegeneracy_check,
)
from sojourn.errors import CurvatureUnavailable, ParamOutOfRange, SojournError
from sojourn.flow import FlowOptions, PathStatus, boundary_limits, integrate_geodesic, sojourn_relation
from sojourn.manifolds import (
    ManifoldModel,
    ModelId,
    collar_family,
    curvature_operator,
    interior_metric,
    metric_batch,
    overlap_metric_defect,
)
from sojourn.poisson import (
    Convention,
    KernelTrace,
    Mollifier,
    amplitude_exponent,
    calibrate_constant,
    compare_traces,
    euclidean_oracle_trace,
    h3_oracle_phase,
    mollify,
    phase_slope,
    poisson_from_radiation,
    spectral_peaks,
    synthesize_from_branches,
)
from sojourn.radiation import (
    PulseSpec,
    ReducedGrid,
    extract_radiation_field,
    front_location,
    multipole_trace,
    radiation_phase_slope,
    refinement_study,
    solve_rescaled_wave,
)
from sojourn.scenario import Scenario, Task
from sojourn.settings import Settings, settings
from sojourn.store import ArtifactWriter, BranchTableRepo, GeodesicPathRepo, SojournTableRepo, TraceRepo

logger = logging.getLogger("sojourn.runner")

# attributes every LogRecord carries; anything else came in through `extra`
_RECORD_FIELDS = frozenset(vars(logging.LogRecord("", 0, "", 0, "", None, None))) | {"message", "asctime"}


class JsonLinesFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        payload = {
            "time": self.formatTime(record, "%Y-%m-%dT%H:%M:%S"),
            "logger": record.name,
            "level": record.levelname,
            "message": record.getMessage(),
        }
        for key, value in record.__dict__.items():
            if key not in _RECORD_FIELDS:
                payload[key] = value
        if record.exc_info:
            payload["exc"] = self.formatException(record.exc_info)
        return json.dumps(payload, default=str, sort_keys=True)


def setup_logging(settings: Settings, out_dir: str | Path, verbose: bool = False) -> Path:
    """JSON-lines file log under the output directory and a plain console log."""
    log_level = logging.DEBUG if verbose or settings.DEBUG else getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO)
    root = logging.getLogger("sojourn")
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()

    path = Path(out_dir) / settings.LOG_FILE
    path.parent.mkdir(parents=True, exist_ok=True)
    file_handler = RotatingFileHandler(path, maxBytes=10 * 1024 * 1024, backupCount=5, encoding="utf-8")
    file_handler.setLevel(log_level)
    file_handler.setFormatter(JsonLinesFormatter())

    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setLevel(log_level)
    console_handler.setFormatter(
        logging.Formatter(fmt="%(asctime)s - %(name)s - %(levelname)s - %(message)s", datefmt="%Y-%m-%d %H:%M:%S")
    )

    root.setLevel(log_level)
    root.addHandler(file_handler)
    root.addHandler(console_handler)
    root.propagate = False
    logger.info("logging configured", extra={"log_level": logging.getLevelName(log_level), "file": str(path)})
    return path


@dataclass
class RunReport:
    scenario: str
    task: str
    files: list[str] = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    checks: dict[str, bool] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 2

    def as_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "task": self.task,
            "files": self.files,
            "metrics": self.metrics,
            "checks": self.checks,
            "passed": self.passed,
        }


@dataclass
class RunContext:
    scenario: Scenario
    model: ManifoldModel
    writer: ArtifactWriter
    threads: int
    report: RunReport

    def check(self, name: str, value: float, tol: float) -> bool:
        ok = bool(math.isfinite(value) and value <= tol)
        self.report.metrics[name] = value
        self.report.checks[name] = ok
        log = logger.info if ok else logger.warning
        log("acceptance check", extra={"check": name, "value": value, "tol": tol, "passed": ok})
        return ok

    def sweep(self, fn: Callable, items: list) -> list:
        """Order-preserving map over a bounded thread pool."""
        if self.threads <= 1 or len(items) <= 1:
            return [fn(item) for item in items]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# points
# ---------------------------------------------------------------------------


def _unit(model: ManifoldModel, z: np.ndarray, v: np.ndarray) -> np.ndarray:
    g = interior_metric(model, z).components
    v = np.asarray(v, dtype=float)
    return v / math.sqrt(float(v @ g @ v))


def _random_interior(model: ManifoldModel, rng: np.random.Generator, radius: float) -> np.ndarray:
    n = model.dim
    if model.is_scattering:
        return radius * rng.uniform(-1.0, 1.0, n)
    return np.concatenate([[rng.uniform(0.5, 2.0)], rng.uniform(-1.0, 1.0, n - 1)])


def _random_boundary(model: ManifoldModel, rng: np.random.Generator) -> np.ndarray:
    if model.is_scattering:
        y = rng.normal(size=model.dim)
        return y / np.linalg.norm(y)
    return rng.uniform(-1.0, 1.0, model.dim - 1)


def sojourn_points(scenario: Scenario, model: ManifoldModel) -> list[tuple[np.ndarray, np.ndarray]]:
    rng = np.random.default_rng(scenario.seed)
    pts = [(np.asarray(z, dtype=float), np.asarray(d, dtype=float)) for z, d in zip(scenario.points.z, scenario.points.dir)]
    for _ in range(scenario.points.random):
        z = _random_interior(model, rng, scenario.points.radius)
        pts.append((z, rng.normal(size=model.dim)))
    return [(z, _unit(model, z, d)) for z, d in pts]


def target_points(scenario: Scenario, model: ManifoldModel) -> list[tuple[np.ndarray, np.ndarray]]:
    rng = np.random.default_rng(scenario.seed)
    pts = [
        (np.asarray(z, dtype=float), np.asarray(y, dtype=float)) for z, y in zip(scenario.points.z, scenario.points.y_target)
    ]
    for _ in range(scenario.points.random):
        pts.append((_random_interior(model, rng, scenario.points.radius), _random_boundary(model, rng)))
    return pts


def sojourn_oracle(model: ManifoldModel, z: np.ndarray, dir: np.ndarray, y) -> float | None:
    if model.model_id is ModelId.FLAT_EUCLIDEAN:
        return float(-(dir / np.linalg.norm(dir)) @ z)
    if model.model_id is ModelId.HYPERBOLIC_HN:
        return h3_oracle_phase(z, y)
    return None


# ---------------------------------------------------------------------------
# tasks
# ---------------------------------------------------------------------------


def run_sojourn_table(ctx: RunContext) -> None:
    model, n = ctx.model, ctx.model.dim
    opts = FlowOptions.from_settings()
    boundary_size = n if model.is_scattering else n - 1

    def one(point):
        z, d = point
        path = integrate_geodesic(model, z, d, opts)
        limit = boundary_limits(model, path)
        doubled = sojourn_relation(model, z, d, opts, scale=2.0)
        homogeneity = max(
            abs(doubled.s - limit.s),
            float(np.max(np.abs(doubled.y - limit.y))),
            abs(doubled.sigma - 2 * limit.sigma),
            float(np.max(np.abs(doubled.eta - 2 * limit.eta))) if limit.eta.size else 0.0,
        )
        oracle = sojourn_oracle(model, z, d, limit.y)
        logger.info("sojourn computed", extra={"z": z.tolist(), "dir": d.tolist(), "s": limit.s, "oracle": oracle})
        return limit, oracle, path.conservation_drift(), path.sigma_drift(), homogeneity, path

    points = sojourn_points(ctx.scenario, model)
    results = ctx.sweep(one, points)
    rows = [SojournTableRepo.row(i, z, d, res[0], res[1]) for i, ((z, d), res) in enumerate(zip(points, results))]
    SojournTableRepo.save(ctx.writer, "sojourn_table.csv", SojournTableRepo.header(n, boundary_size), rows)
    if ctx.scenario.output.paths:
        GeodesicPathRepo.save(ctx.writer, "geodesic_paths.csv", n, [r[5] for r in results])

    tol = ctx.scenario.tolerances
    oracle_diffs = [abs(lim.s - orc) for lim, orc, *_ in results if orc is not None]
    if oracle_diffs:
        bound = tol.sojourn if model.model_id is ModelId.FLAT_EUCLIDEAN else tol.h3_sojourn
        ctx.check("sojourn_oracle_max_error", max(oracle_diffs), bound)
    ctx.check("p_drift", max(r[2] for r in results), 1e-8)
    ctx.check("sigma_drift", max(r[3] for r in results), 1e-10)
    ctx.check("homogeneity_error", max(r[4] for r in results), 1e-8)
    ctx.report.metrics["points"] = len(points)


def _search_all(ctx: RunContext, opts: SearchOptions | None = None):
    model = ctx.model

    def one(point):
        z, y = point
        branch_set = find_branches(model, z, y, opts)
        nondegeneracy_check(model, branch_set)
        return branch_set

    return ctx.sweep(one, target_points(ctx.scenario, model))


def run_branch_search(ctx: RunContext) -> None:
    model, n = ctx.model, ctx.model.dim
    tol = ctx.scenario.tolerances
    sets = _search_all(ctx)
    BranchTableRepo.save(ctx.writer, "branches.csv", n, n if model.is_scattering else n - 1, sets, Convention.for_model(model))
    branches = [b for bs in sets for b in bs.branches]
    ctx.report.metrics["branches"] = len(branches)
    ctx.report.metrics["branches_per_point"] = [len(bs.branches) for bs in sets]
    ctx.report.metrics["branches_with_conjugate_points"] = sum(b.conj_count > 0 for b in branches)
    if model.is_exact:
        ctx.check("conjugate_points_on_exact_model", float(sum(b.conj_count for b in branches)), 0.0)
    else:
        family = ctx.sweep(lambda b: fd_family_conjugate_count(model, b.z, b.dir), branches)
        mismatched = sum(f != b.conj_count for f, b in zip(family, branches))
        ctx.check("conjugate_count_family_mismatch", float(mismatched), 0.0)

    regular = [b for b in branches if b.nondegenerate]
    if regular:
        gaps = ctx.sweep(lambda b: jacobian_consistency(model, b.z, b.dir), regular)
        ctx.check("jacobian_consistency", max(gaps), tol.jacobian_consistency)
    if model.model_id is ModelId.FLAT_EUCLIDEAN and branches:
        ctx.check("flat_jacobian_error", max(abs(b.jacobian - 1.0) for b in branches), tol.jacobian)
    if model.model_id is ModelId.HYPERBOLIC_HN:
        x0 = 1.0
        down = np.zeros(n)
        down[0] = -x0
        jac = boundary_jacobian(model, np.r_[x0, np.zeros(n - 1)], down).value
        expected = (x0 / 2) ** (n - 1)
        ctx.check("h3_vertical_jacobian_rel_error", abs(jac - expected) / expected, 1e-4)


def _grid_and_mollifier(ctx: RunContext) -> tuple[np.ndarray, Mollifier | None]:
    spec = ctx.scenario.mollifier
    m = Mollifier(spec.width, spec.profile, spec.normalization) if spec.apply else None
    return ctx.scenario.lambda_grid.array(), m


def run_kernel_synthesis(ctx: RunContext) -> None:
    model = ctx.model
    grid, m = _grid_and_mollifier(ctx)
    convention = Convention.for_model(model)
    sets = _search_all(ctx)
    boundary_size = model.dim if model.is_scattering else model.dim - 1
    BranchTableRepo.save(ctx.writer, "branches.csv", model.dim, boundary_size, sets, convention)
    resolution = 2 * math.pi / (grid[-1] - grid[0])
    misses = []
    for i, bs in enumerate(sets):
        trace = synthesize_from_branches(bs.branches, grid, convention)
        if m is not None:
            trace = mollify(trace, m)
        TraceRepo.save_kernel(ctx.writer, f"kernel_{i:03d}.csv", trace)
        logger.info("kernel trace", extra={"point": i, "branches": len(bs.branches), "hash": trace.meta["branch_hash"]})
        if len(bs.branches) > 1:
            peaks = spectral_peaks(trace, len(bs.branches))
            ctx.report.metrics[f"spectral_peaks_{i:03d}"] = peaks.tolist()
            misses.append(max(float(np.min(np.abs(peaks - b.limit.s))) for b in bs.branches))
    if misses:
        ctx.check("spectral_peak_offset", max(misses), resolution)
    ctx.report.metrics["traces"] = len(sets)


def run_oracle_compare(ctx: RunContext) -> None:
    model, n = ctx.model, ctx.model.dim
    if not model.is_exact:
        raise ParamOutOfRange(f"{model.model_id.value} has no closed-form kernel")
    grid, m = _grid_and_mollifier(ctx)
    convention = Convention.for_model(model)
    tol = ctx.scenario.tolerances
    sets = _search_all(ctx)
    l2, slope_err, exponent_err, calibrated = [], [], [], []
    for i, bs in enumerate(sets):
        synth = synthesize_from_branches(bs.branches, grid, convention)
        if model.model_id is ModelId.FLAT_EUCLIDEAN:
            oracle = euclidean_oracle_trace(bs.z, bs.y_target, grid, n)
            l2.append(compare_traces(synth, oracle)["relative_l2"])
            if m is not None:
                l2.append(compare_traces(mollify(synth, m), mollify(oracle, m))["relative_l2"])
        else:
            phase = h3_oracle_phase(bs.z, bs.y_target)
            shape = (grid / (2 * np.pi)) ** ((n - 1) / 2) / (2 * grid) * np.exp(1j * grid * phase)
            oracle = KernelTrace(grid, shape, convention, meta={"oracle": "h3_phase"})
            slope_err.append(abs(phase_slope(grid, synth.values) - phase))
            exponent_err.append(abs(amplitude_exponent(grid, synth.values) - ((n - 1) / 2 - 1)))
            c = calibrate_constant(synth, oracle)
            calibrated.append({"point": i, "constant": [c.real, c.imag], "abs": abs(c)})
        TraceRepo.save_kernel(ctx.writer, f"oracle_{i:03d}.csv", synth, oracle)
    if l2:
        ctx.check("kernel_relative_l2", max(l2), tol.kernel_l2)
    if slope_err:
        ctx.check("phase_slope_error", max(slope_err), tol.phase_slope)
        ctx.check("amplitude_exponent_error", max(exponent_err), tol.amplitude_exponent)
        ctx.report.metrics["calibrated_constants"] = calibrated


def run_pde_cross_check(ctx: RunContext) -> None:
    model, spec = ctx.model, ctx.scenario.pde
    tol = ctx.scenario.tolerances
    grid = ReducedGrid(spec.s_min, spec.s_max, spec.ds, spec.dx, spec.x_max, spec.ell)
    pulse = PulseSpec(spec.r0, spec.width, spec.amplitude)
    rescaled = solve_rescaled_wave(model, grid, pulse)
    trace = extract_radiation_field(rescaled, grid)

    # the front is read off a pulse narrower than ds with the compact stencil
    sharp = PulseSpec(spec.r0, spec.front_width, spec.amplitude)
    front = front_location(extract_radiation_field(solve_rescaled_wave(model, grid, sharp), grid, order=2), spec.threshold)

    e1 = np.zeros(model.dim)
    e1[0] = 1.0
    s_flow = sojourn_relation(model, spec.r0 * e1, e1).s if spec.r0 > 0 else 0.0
    logger.info("radiation trace", extra={"front": front.s_front, "peak": front.s_peak, "s_flow": s_flow})

    oracle = None
    if model.model_id is ModelId.FLAT_EUCLIDEAN:
        oracle = multipole_trace(pulse, spec.ell, trace.s_grid)
        scale = float(np.max(np.abs(oracle))) or 1.0
        bound = tol.trace_oracle if spec.ell == 0 else tol.multipole_trace
        ctx.check("trace_oracle_error", float(np.max(np.abs(trace.values - oracle))) / scale, bound)
    TraceRepo.save_radiation(ctx.writer, "radiation_trace.csv", trace, oracle)
    TraceRepo.save_field_snapshot(ctx.writer, "field_snapshot.csv", rescaled, (0.0, grid.dx, 2 * grid.dx))

    ctx.report.metrics.update(
        {
            "s_front": front.s_front,
            "s_peak": front.s_peak,
            "s_flow": s_flow,
            "extrapolation_error": trace.source_meta["extrapolation_error"],
        }
    )
    ctx.check("front_error", abs(front.s_front - s_flow), tol.front_ds_multiple * grid.ds)

    if spec.phase_lambda is not None:
        lam = np.linspace(spec.phase_lambda[0], spec.phase_lambda[1], 256)
        window = (s_flow - 6 * spec.width, s_flow + 6 * spec.width)
        slope = radiation_phase_slope(trace, lam, window)
        kernel = poisson_from_radiation(trace.s_grid, trace.values, lam, model.kind, model.dim)
        TraceRepo.save_kernel(ctx.writer, "kernel_from_radiation.csv", kernel)
        ctx.report.metrics["phase_law_slope"] = slope
        ctx.check("phase_law_rel_error", abs(slope - s_flow) / max(abs(s_flow), 1.0), tol.phase_law)

    if spec.refine:
        study = refinement_study(model, grid, pulse)
        ctx.report.metrics["refinement"] = study
        ctx.check("self_convergence_shortfall", max(0.0, 1.8 - min(study["ratios"], default=math.inf)), 0.0)


def run_catalog_validate(ctx: RunContext) -> None:
    model, n = ctx.model, ctx.model.dim
    rng = np.random.default_rng(ctx.scenario.seed)
    defects: list[tuple[str, float, float]] = []
    samples = ctx.scenario.catalog.samples

    pts = np.array([_random_interior(model, rng, ctx.scenario.points.radius) for _ in range(samples)])
    eig_min = float(np.min(np.linalg.eigvalsh(metric_batch(model, pts))))
    ctx.report.metrics["samples"] = samples
    ctx.report.metrics["metric_min_eigenvalue"] = eig_min
    defects.append(("metric_not_positive", 0.0 if eig_min > 0 else 1.0, 0.0))

    # boundary family h(x, y) on the collar, at the same number of samples
    h_min = math.inf
    for _ in range(samples):
        x = rng.uniform(0.0, model.collar_x0)
        if model.is_scattering:
            h, _ = collar_family(model, x, rng.uniform(-1.0, 1.0, n - 1), np.eye(n))
        else:
            h, _ = collar_family(model, x, rng.uniform(-1.0, 1.0, n - 1))
        h_min = min(h_min, float(np.min(np.linalg.eigvalsh(h))))
    ctx.report.metrics["collar_family_min_eigenvalue"] = h_min
    defects.append(("collar_family_not_positive", 0.0 if h_min > 0 else 1.0, 0.0))

    overlap = []
    for _ in range(8):
        if model.is_scattering:
            theta = rng.normal(size=n)
            z = theta / np.linalg.norm(theta) / (0.5 * model.collar_x0)
        else:
            z = np.concatenate([[0.5 * model.collar_x0], rng.uniform(-1.0, 1.0, n - 1)])
        overlap.append(overlap_metric_defect(model, z))
    defects.append(("collar_normal_form_defect", max(overlap), 1e-8))

    curvature = []
    for z in pts[:4]:
        try:
            curvature.append(curvature_operator(model, z).sectional(np.eye(n)[0], np.eye(n)[1]))
        except CurvatureUnavailable as exc:
            logger.warning("curvature skipped", extra={"z": z.tolist(), "error": str(exc)})
    ctx.report.metrics["sectional_samples"] = curvature
    if model.model_id is ModelId.HYPERBOLIC_HN:
        defects.append(("hyperbolic_curvature_defect", max(abs(k + 1.0) for k in curvature), 1e-10))
    elif model.model_id is ModelId.FLAT_EUCLIDEAN:
        defects.append(("flat_curvature_defect", max(abs(k) for k in curvature), 0.0))

    opts = FlowOptions.from_settings()
    escaped = 0
    starts = pts[:8]
    for z in starts:
        d = _unit(model, z, rng.normal(size=n))
        escaped += integrate_geodesic(model, z, d, opts).status is PathStatus.REACHED_BOUNDARY
    defects.append(("trapped_fraction", 1.0 - escaped / len(starts), 0.0))

    passed = [ctx.check(name, value, tol) for name, value, tol in defects]
    rows = [[name, value, tol, ok] for (name, value, tol), ok in zip(defects, passed)]
    ctx.writer.write_csv("catalog.csv", ["check", "value", "tol", "passed"], rows, {"model": model.describe()})


TASKS: dict[Task, Callable[[RunContext], None]] = {
    Task.SOJOURN_TABLE: run_sojourn_table,
    Task.BRANCH_SEARCH: run_branch_search,
    Task.KERNEL_SYNTHESIS: run_kernel_synthesis,
    Task.ORACLE_COMPARE: run_oracle_compare,
    Task.PDE_CROSS_CHECK: run_pde_cross_check,
    Task.CATALOG_VALIDATE: run_catalog_validate,
}


def run_scenario(scenario: Scenario, out_dir: str | Path | None = None, threads: int | None = None) -> RunReport:
    out = Path(out_dir or scenario.output.dir)
    writer = ArtifactWriter(out, scenario.resolved())
    report = RunReport(scenario.name, scenario.task.value)
    try:
        model = scenario.model.build()
        ctx = RunContext(scenario, model, writer, threads or settings.THREADS, report)
        logger.info(
            "scenario started", extra={"scenario": scenario.name, "task": scenario.task.value, "model": model.describe()}
        )
        TASKS[scenario.task](ctx)
    except SojournError as exc:
        exc.add_note(f"scenario {scenario.name!r}, task {scenario.task.value}")
        logger.exception("scenario failed", extra={"scenario": scenario.name, "error": str(exc), "type": type(exc).__name__})
        raise
    report.files = list(writer.written)
    writer.write_json("summary.json", {**report.as_dict(), "resolved_scenario": scenario.resolved()})
    report.files = list(writer.written)
    logger.info("scenario finished", extra={"scenario": scenario.name, "passed": report.passed, "checks": report.checks})
    return report
