"""Flow-based programming runtime and a ride allocation app built on it."""

from .engine import Category, Graph, GraphError, NodeInput, export_dot, latest_by_key
from .ride import Stage, build_app
from .sim import SimConfig, run

__version__ = "0.1.0"

__all__ = [
    "Category",
    "Graph",
    "GraphError",
    "NodeInput",
    "SimConfig",
    "Stage",
    "build_app",
    "export_dot",
    "latest_by_key",
    "run",
]
