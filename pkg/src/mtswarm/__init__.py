"""Microtubule gliding-assay swarm simulator with sparse semantic analysis."""

__version__ = "0.1.0"
