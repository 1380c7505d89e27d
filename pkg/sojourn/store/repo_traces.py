# sojourn/store/repo_traces.py
from __future__ import annotations

import numpy as np

from sojourn.poisson import KernelTrace
from sojourn.radiation import RadiationTrace, RescaledField
from sojourn.store.writer import ArtifactWriter


class TraceRepo:
    @staticmethod
    def save_kernel(writer: ArtifactWriter, name: str, trace: KernelTrace, reference: KernelTrace | None = None):
        header = ["lambda", "re", "im", "abs", "unwrapped_phase"]
        columns = [
            trace.lambda_grid,
            trace.values.real,
            trace.values.imag,
            np.abs(trace.values),
            np.unwrap(np.angle(trace.values)),
        ]
        if reference is not None:
            header += ["ref_re", "ref_im"]
            columns += [reference.values.real, reference.values.imag]
        meta = {
            "convention": trace.convention.describe(),
            "mollifier": trace.mollifier.describe() if trace.mollifier else None,
            "lambda_grid": {"min": trace.lambda_grid[0], "max": trace.lambda_grid[-1], "points": trace.lambda_grid.size},
            **trace.meta,
        }
        return writer.write_csv(name, header, list(zip(*columns)), meta)

    @staticmethod
    def save_radiation(writer: ArtifactWriter, name: str, trace: RadiationTrace, oracle: np.ndarray | None = None):
        header = ["s", "value"] + (["oracle"] if oracle is not None else [])
        columns = [trace.s_grid, trace.values] + ([oracle] if oracle is not None else [])
        return writer.write_csv(name, header, list(zip(*columns)), {"source": trace.source_meta})

    @staticmethod
    def save_field_snapshot(writer: ArtifactWriter, name: str, field: RescaledField, x_values=(0.0,)):
        """Plot-ready columns w(s, x) for a few compactified x labels."""
        header = ["s"] + [f"x={x:g}" for x in x_values]
        columns = [field.u] + [field.column_at_x(x) for x in x_values]
        return writer.write_csv(name, header, list(zip(*columns)), {"source": field.meta})
