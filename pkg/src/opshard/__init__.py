"""Operation-level Reduce scheduling for a single-machine MapReduce engine."""

__version__ = "0.1.0"
