"""Exact and Monte Carlo SIS/SIR epidemics on small graphs."""
from .exact import SIR, SIS, EpidemicParams, IntegrationError, SizeCapError, solve
from .graph import ConvergenceError, Graph, GraphError, build_graph, generate_family, read_edgelist, spectral_radius

__all__ = [
    "SIR",
    "SIS",
    "ConvergenceError",
    "EpidemicParams",
    "Graph",
    "GraphError",
    "IntegrationError",
    "SizeCapError",
    "build_graph",
    "generate_family",
    "read_edgelist",
    "solve",
    "spectral_radius",
]
__version__ = "0.1.0"
