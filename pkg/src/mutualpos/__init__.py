"""Secure, robust distance-based mutual positioning for UAV swarms."""
from .anomaly import RdadParams, RdadResult, confidence, rdad_solve
from .attacks import AttackConfig, AttackMode, BiasVector, VarianceVector, apply_attack
from .core import Beacon, Position2D, UavTruth, euclidean_distance, rng_stream
from .error_model import ErrorSurface, convert_error, default_surface, fit_error_surface
from .estimators import RgdParams, lse_solve, rgd_solve, rgd_step
from .sim import Estimator, SimConfig, aggregate_convergence, detection_stats, roc_sweep, run_mc

__version__ = "0.1.0"
