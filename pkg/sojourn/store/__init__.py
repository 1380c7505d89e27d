# sojourn/store/__init__.py
from sojourn.store.repo_tables import BranchTableRepo, GeodesicPathRepo, SojournTableRepo
from sojourn.store.repo_traces import TraceRepo
from sojourn.store.writer import ArtifactWriter, format_value

__all__ = ["ArtifactWriter", "BranchTableRepo", "GeodesicPathRepo", "SojournTableRepo", "TraceRepo", "format_value"]
