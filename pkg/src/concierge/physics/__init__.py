"""Reference simulation services: Newtonian gravity and a colliding-box world."""

from .boxes import Bounds, BoxSpec, BoxWorld, random_world, step_boxes
from .nbody import (
    Body,
    SimulationFault,
    SystemState,
    accelerations,
    energy,
    load_preset,
    preset_names,
    step_nbody,
    two_body_preset,
)
from .service import BoxService, NBodyService

__all__ = [
    "Body",
    "Bounds",
    "BoxService",
    "BoxSpec",
    "BoxWorld",
    "NBodyService",
    "SimulationFault",
    "SystemState",
    "accelerations",
    "energy",
    "load_preset",
    "preset_names",
    "random_world",
    "step_boxes",
    "step_nbody",
    "two_body_preset",
]
