"""Asynchronous Adaptive Bellman-Ford simulation and bound analysis."""
