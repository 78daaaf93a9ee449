"""Thermoacoustic tomography in attenuating media on a uniform 2-D grid.

Forward model: the damped wave equation u_tt + a u_t = c^2 lap u started from
(f, -a f). Inversion: modified time reversal and its Neumann series.
"""
from .backward import apply_error_operator, apply_time_reversal, time_reversal
from .config import ExperimentConfig, load_config, parse_config, serialize
from .elliptic import harmonic_extension, poincare_constant
from .forward import BoundaryTrace, WaveState, apply_lambda, forward_solve
from .geodesics import (critical_times, eikonal_distance, trace_geodesic, visibility_map,
                        visibility_symbol)
from .grid import DomainGeometry, Grid2D, energy, gradient_sq, hd_norm, l2c_norm, laplacian, make_domain
from .medium import (Cutoff, Medium, MediumSpec, Phantom, build_medium, build_phantom, complete_cutoff,
                     constant_medium, partial_cutoff)
from .reconstruction import neumann_reconstruct, reconstruction_metrics

__version__ = "0.1.0"

__all__ = [
    "BoundaryTrace", "Cutoff", "DomainGeometry", "ExperimentConfig", "Grid2D", "Medium", "MediumSpec",
    "Phantom", "WaveState", "apply_error_operator", "apply_lambda", "apply_time_reversal", "build_medium",
    "build_phantom", "complete_cutoff", "constant_medium", "critical_times", "eikonal_distance", "energy",
    "forward_solve", "gradient_sq", "harmonic_extension", "hd_norm", "l2c_norm", "laplacian", "load_config",
    "make_domain", "neumann_reconstruct", "parse_config", "partial_cutoff", "poincare_constant",
    "reconstruction_metrics", "serialize", "time_reversal", "trace_geodesic", "visibility_map",
    "visibility_symbol",
]
