# sojourn/store/repo_tables.py
from __future__ import annotations

from typing import Sequence

import numpy as np

from sojourn.branches import BranchSet
from sojourn.flow import BoundaryLimit, GeodesicPath, PhaseState
from sojourn.poisson import Convention, branch_table_hash, symbol_pair
from sojourn.store.writer import ArtifactWriter


def _vector_columns(prefix: str, size: int) -> list[str]:
    return [f"{prefix}{k}" for k in range(size)]


class SojournTableRepo:
    @staticmethod
    def header(dim: int, boundary_size: int) -> list[str]:
        return (
            ["point"]
            + _vector_columns("z", dim)
            + _vector_columns("dir", dim)
            + ["s"]
            + _vector_columns("y", boundary_size)
            + ["sigma"]
            + _vector_columns("eta", boundary_size)
            + ["err", "oracle_s", "oracle_diff"]
        )

    @staticmethod
    def row(index: int, z, dir, limit: BoundaryLimit, oracle_s: float | None) -> list:
        diff = abs(limit.s - oracle_s) if oracle_s is not None else float("nan")
        return (
            [index]
            + list(np.asarray(z, dtype=float))
            + list(np.asarray(dir, dtype=float))
            + [limit.s]
            + list(np.asarray(limit.y, dtype=float))
            + [limit.sigma]
            + list(np.asarray(limit.eta, dtype=float))
            + [limit.err, float("nan") if oracle_s is None else oracle_s, diff]
        )

    @staticmethod
    def save(writer: ArtifactWriter, name: str, header: Sequence[str], rows: list[list], meta: dict | None = None):
        return writer.write_csv(name, header, rows, meta)


class BranchTableRepo:
    @staticmethod
    def header(dim: int, boundary_size: int) -> list[str]:
        return (
            ["point", "branch"]
            + _vector_columns("z", dim)
            + _vector_columns("y_target", boundary_size)
            + _vector_columns("dir", dim)
            + ["s"]
            + _vector_columns("y", boundary_size)
            + ["sigma"]
            + _vector_columns("eta", boundary_size)
            + ["jacobian", "conj_count", "nondegenerate", "newton_residual", "limit_err"]
            + ["symbol_hi_re", "symbol_hi_im", "symbol_lo_re", "symbol_lo_im"]
        )

    @staticmethod
    def rows(point: int, branch_set: BranchSet, convention: Convention) -> list[list]:
        """One row per branch; the symbol is evaluated at sigma = 1."""
        out = []
        for k, b in enumerate(branch_set.branches):
            hi, lo = symbol_pair(b, 1.0, convention) if b.nondegenerate else (complex("nan"), complex("nan"))
            out.append(
                [point, k]
                + list(np.asarray(branch_set.z, dtype=float))
                + list(np.asarray(branch_set.y_target, dtype=float))
                + list(np.asarray(b.dir, dtype=float))
                + [b.limit.s]
                + list(np.asarray(b.limit.y, dtype=float))
                + [b.limit.sigma]
                + list(np.asarray(b.limit.eta, dtype=float))
                + [b.jacobian, b.conj_count, b.nondegenerate, b.newton_residual, b.limit.err]
                + [hi.real, hi.imag, lo.real, lo.imag]
            )
        return out

    @staticmethod
    def save(
        writer: ArtifactWriter,
        name: str,
        dim: int,
        boundary_size: int,
        branch_sets: Sequence[BranchSet],
        convention: Convention,
    ):
        rows = [row for point, bs in enumerate(branch_sets) for row in BranchTableRepo.rows(point, bs, convention)]
        branches = [b for bs in branch_sets for b in bs.branches]
        meta = {
            "branch_table_sha256": branch_table_hash(branches),
            "search": [bs.search_meta for bs in branch_sets],
        }
        return writer.write_csv(name, BranchTableRepo.header(dim, boundary_size), rows, meta)


class GeodesicPathRepo:
    """Sampled phase states of integrated geodesics, one row per stored step."""

    @staticmethod
    def header(dim: int) -> list[str]:
        return (
            ["path", "segment", "param", "chart"]
            + _vector_columns("coords", dim)
            + _vector_columns("momenta", dim)
            + ["s", "sigma"]
        )

    @staticmethod
    def rows(index: int, path: GeodesicPath) -> list[list]:
        # interior rows carry no (s, sigma)
        out = []
        for k, seg in enumerate(path.segments):
            for param, w in zip(seg.params, seg.states):
                state = PhaseState.from_vector(seg.chart, w, seg.frame, float(param))
                out.append(
                    [index, k, state.param, state.chart.value]
                    + list(np.asarray(state.base.coords, dtype=float))
                    + list(np.asarray(state.momentum, dtype=float))
                    + [
                        float("nan") if state.s is None else state.s,
                        float("nan") if state.sigma is None else state.sigma,
                    ]
                )
        return out

    @staticmethod
    def save(writer: ArtifactWriter, name: str, dim: int, paths: Sequence[GeodesicPath]):
        rows = [row for i, path in enumerate(paths) for row in GeodesicPathRepo.rows(i, path)]
        meta = {"statuses": [p.status.value for p in paths], "frames": [_frames(p) for p in paths]}
        return writer.write_csv(name, GeodesicPathRepo.header(dim), rows, meta)


def _frames(path: GeodesicPath) -> list:
    return [None if seg.frame is None else np.asarray(seg.frame).tolist() for seg in path.segments]
