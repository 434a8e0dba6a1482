"""Workflow supervision engine: scheduling, tracking, drift checking, and
human-in-the-loop model improvement."""

from . import data_io, drift, errors, feedback, graph, improve, nn, runtime, scenarios, tracker

__version__ = "0.1.0"

__all__ = [
    "data_io",
    "drift",
    "errors",
    "feedback",
    "graph",
    "improve",
    "nn",
    "runtime",
    "scenarios",
    "tracker",
    "__version__",
]
