# sojourn/store/writer.py
"""Single writer for every artifact of a run: CSV tables with a metadata sidecar, and JSON documents."""
from __future__ import annotations

import csv
import json
import logging
import math
import threading
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from sojourn.errors import OutputFailure

logger = logging.getLogger("sojourn.store")


def format_value(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else str(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, complex):
        return [value.real, value.imag]
    if hasattr(value, "value") and not isinstance(value, (str, int)):
        return value.value
    return value


class ArtifactWriter:
    """All file writes of a run go through one instance; a lock keeps them from interleaving."""

    def __init__(self, out_dir: str | Path, scenario: dict | None = None):
        self.out_dir = Path(out_dir)
        self.scenario = scenario or {}
        self.written: list[str] = []
        self._lock = threading.Lock()
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OutputFailure(f"cannot create output directory {self.out_dir}: {exc}") from exc

    def _record(self, path: Path) -> None:
        self.written.append(str(path.relative_to(self.out_dir)))
        logger.debug("artifact written", extra={"path": str(path)})

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]], meta: dict | None = None) -> Path:
        path = self.out_dir / name
        with self._lock:
            try:
                with path.open("w", newline="", encoding="utf-8") as fh:
                    writer = csv.writer(fh)
                    writer.writerow(header)
                    for row in rows:
                        if len(row) != len(header):
                            raise OutputFailure(f"{name}: row has {len(row)} fields, header has {len(header)}")
                        writer.writerow([format_value(v) for v in row])
                sidecar = path.with_name(path.name + ".meta.json")
                payload = _jsonable({"columns": list(header), "scenario": self.scenario, **(meta or {})})
                sidecar.write_text(
                    json.dumps(payload, indent=2, sort_keys=True),
                    encoding="utf-8",
                )
            except OSError as exc:
                raise OutputFailure(f"cannot write {path}: {exc}") from exc
            self._record(path)
            self._record(sidecar)
        return path

    def write_json(self, name: str, payload: dict) -> Path:
        path = self.out_dir / name
        with self._lock:
            try:
                path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True), encoding="utf-8")
            except OSError as exc:
                raise OutputFailure(f"cannot write {path}: {exc}") from exc
            self._record(path)
        return path
