"""Harmonic map heat flow into spheres: entropy, solitons and F-stability numerics."""

from __future__ import annotations

__version__ = "0.1.0"

from .entropy import EntropyConfig, EntropyReport, entropy, f_functional, landscape_strict_max_scan
from .errors import HMError
from .flow import FlowState, MonitorTrace, StopRule, run_until, step
from .maps import CurveMap, CylindricalMap, EquivariantProfile, GridMap
from .quadrature import Basepoint, GaussianWeight
from .solitons import ShootingProblem, shoot_equivariant_soliton, soliton_residual
from .stability import StabilityReport, conformal_certificates, mu1_estimate, stability_report

__all__ = [
    "Basepoint",
    "CurveMap",
    "CylindricalMap",
    "EntropyConfig",
    "EntropyReport",
    "EquivariantProfile",
    "FlowState",
    "GaussianWeight",
    "GridMap",
    "HMError",
    "MonitorTrace",
    "ShootingProblem",
    "StabilityReport",
    "StopRule",
    "conformal_certificates",
    "entropy",
    "f_functional",
    "landscape_strict_max_scan",
    "mu1_estimate",
    "run_until",
    "shoot_equivariant_soliton",
    "soliton_residual",
    "stability_report",
    "step",
]
