"""Offline tooling for SQL fill-in-the-middle completion: corpus curation,
benchmark generation, prompt construction, completion providers, metrics and
deployment telemetry."""

__version__ = "0.1.0"
