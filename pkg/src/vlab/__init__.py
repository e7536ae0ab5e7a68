"""Deterministic virtual wet-lab bench."""

from .chemistry import (BROWN_RING, INTERFERENCE, NO_REACTION, Formula, Mixture,
                        SensitivityConfig, check_balance, compute_ring_band,
                        default_registry, evaluate_reaction, parse_equation,
                        parse_formula, record_addition)
from .geometry import Pose, tilt_angle, vec3
from .vessels import Vessel, VesselProfile, sdf_vessel
from .world import SimConfig, TransferEvent, World

__all__ = [
    "BROWN_RING", "INTERFERENCE", "NO_REACTION", "Formula", "Mixture",
    "SensitivityConfig", "check_balance", "compute_ring_band", "default_registry",
    "evaluate_reaction", "parse_equation", "parse_formula", "record_addition",
    "Pose", "tilt_angle", "vec3", "Vessel", "VesselProfile", "sdf_vessel",
    "SimConfig", "TransferEvent", "World",
]

__version__ = "0.1.0"
