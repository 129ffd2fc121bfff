"""Multi-task graph-transformer classification on tile graphs."""

__version__ = "0.1.0"
