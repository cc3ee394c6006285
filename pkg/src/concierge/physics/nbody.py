"""Newtonian point-mass gravity with a velocity-Verlet integrator.

States are immutable; stepping returns a fresh ``SystemState``. Bodies are
kept sorted by entity id so that repeated runs over the same inputs produce
bitwise-identical trajectories regardless of construction order.

Bundled presets: ``two-body`` (an analytic circular pair, handy for checking
orbit closure) and ``solar-lite`` (the Sun and the four inner planets; masses,
orbital radii, and display radii taken from the NASA planetary fact sheets,
started on circular orbits with a barycentric momentum offset).
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np

from ..protocol import validate_uuid

__all__ = [
    "Body",
    "SimulationFault",
    "SystemState",
    "accelerations",
    "energy",
    "load_preset",
    "preset_names",
    "step_nbody",
    "two_body_preset",
]

DEFAULT_G = 6.674e-11


class SimulationFault(RuntimeError):
    """The state went non-finite; the owning service should pause."""


def _vec3(value: object, what: str) -> tuple[float, float, float]:
    if not isinstance(value, (tuple, list)) or len(value) != 3:
        raise ValueError(f"{what} must be a 3-vector")
    out = []
    for c in value:
        if isinstance(c, bool) or not isinstance(c, (int, float)) or not math.isfinite(c):
            raise ValueError(f"{what} must contain finite numbers")
        out.append(float(c))
    return (out[0], out[1], out[2])


def _color(value: object) -> tuple[int, int, int]:
    if not isinstance(value, (tuple, list)) or len(value) != 3:
        raise ValueError("color must be an RGB triple")
    out = []
    for c in value:
        if isinstance(c, bool) or not isinstance(c, int) or not 0 <= c <= 255:
            raise ValueError("color channels must be ints in 0..255")
        out.append(c)
    return (out[0], out[1], out[2])


@dataclass(frozen=True)
class Body:
    """One point mass plus the display attributes served on spec fetches."""

    id: str
    label: str
    mass: float
    position: tuple[float, float, float]
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    display_radius: float = 1.0
    color: tuple[int, int, int] = (200, 200, 200)

    def __post_init__(self) -> None:
        if not validate_uuid(self.id):
            raise ValueError(f"body id is not a uuid: {self.id!r}")
        if not isinstance(self.label, str):
            raise ValueError("label must be a string")
        if isinstance(self.mass, bool) or not isinstance(self.mass, (int, float)):
            raise ValueError("mass must be a number")
        if not math.isfinite(self.mass) or self.mass <= 0:
            raise ValueError("mass must be finite and > 0")
        object.__setattr__(self, "mass", float(self.mass))
        object.__setattr__(self, "position", _vec3(self.position, "position"))
        object.__setattr__(self, "velocity", _vec3(self.velocity, "velocity"))
        if not math.isfinite(self.display_radius) or self.display_radius <= 0:
            raise ValueError("display_radius must be finite and > 0")
        object.__setattr__(self, "display_radius", float(self.display_radius))
        object.__setattr__(self, "color", _color(self.color))


@dataclass(frozen=True)
class SystemState:
    time: float
    G: float
    softening: float
    bodies: tuple[Body, ...]

    def __post_init__(self) -> None:
        if not math.isfinite(self.G) or self.G < 0:
            raise ValueError("G must be finite and >= 0")
        if not math.isfinite(self.softening) or self.softening < 0:
            raise ValueError("softening must be finite and >= 0")
        ordered = tuple(sorted(self.bodies, key=lambda b: b.id))
        ids = [b.id for b in ordered]
        if len(set(ids)) != len(ids):
            raise ValueError("body ids must be distinct")
        object.__setattr__(self, "bodies", ordered)


def _acc_array(pos: np.ndarray, mass: np.ndarray, G: float, softening: float) -> np.ndarray:
    n = pos.shape[0]
    if n <= 1:
        return np.zeros((n, 3))
    diff = pos[None, :, :] - pos[:, None, :]
    d2 = np.sum(diff * diff, axis=-1) + softening * softening
    np.fill_diagonal(d2, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        inv = d2**-1.5
        np.fill_diagonal(inv, 0.0)
        acc = G * np.einsum("ij,j,ijk->ik", inv, mass, diff)
    if not np.all(np.isfinite(acc)):
        raise SimulationFault("non-finite acceleration (coincident bodies?)")
    return acc


def accelerations(state: SystemState) -> list[tuple[float, float, float]]:
    """Pairwise gravitational acceleration for every body, in body order."""
    pos = np.array([b.position for b in state.bodies], dtype=float).reshape(len(state.bodies), 3)
    mass = np.array([b.mass for b in state.bodies], dtype=float)
    acc = _acc_array(pos, mass, state.G, state.softening)
    return [(float(a[0]), float(a[1]), float(a[2])) for a in acc]


def step_nbody(state: SystemState, dt: float) -> SystemState:
    """Advance one velocity-Verlet step: drift with the old acceleration, then
    average old and new accelerations into the velocity kick."""
    if not (dt > 0 and math.isfinite(dt)):
        raise ValueError("dt must be finite and > 0")
    n = len(state.bodies)
    pos = np.array([b.position for b in state.bodies], dtype=float).reshape(n, 3)
    vel = np.array([b.velocity for b in state.bodies], dtype=float).reshape(n, 3)
    mass = np.array([b.mass for b in state.bodies], dtype=float)

    a1 = _acc_array(pos, mass, state.G, state.softening)
    pos2 = pos + vel * dt + 0.5 * a1 * dt * dt
    a2 = _acc_array(pos2, mass, state.G, state.softening)
    vel2 = vel + 0.5 * (a1 + a2) * dt
    if not (np.all(np.isfinite(pos2)) and np.all(np.isfinite(vel2))):
        raise SimulationFault("non-finite state after step")

    bodies = tuple(
        replace(
            b,
            position=(float(p[0]), float(p[1]), float(p[2])),
            velocity=(float(v[0]), float(v[1]), float(v[2])),
        )
        for b, p, v in zip(state.bodies, pos2, vel2)
    )
    return SystemState(time=state.time + dt, G=state.G, softening=state.softening, bodies=bodies)


def energy(state: SystemState) -> float:
    """Total mechanical energy: kinetic plus pairwise potential."""
    kinetic = sum(0.5 * b.mass * sum(c * c for c in b.velocity) for b in state.bodies)
    potential = 0.0
    for i, bi in enumerate(state.bodies):
        for bj in state.bodies[i + 1 :]:
            potential -= state.G * bi.mass * bj.mass / math.dist(bi.position, bj.position)
    return kinetic + potential


_TWO_BODY_IDS = ("923c3a06-0b09-4573-a4da-142c606ae61e", "d171a368-ea6a-45f5-9b66-6767052fe916")


def two_body_preset(mass: float = 1.0, separation: float = 1.0, G: float = 1.0) -> SystemState:
    """Equal masses on a circular orbit about their barycenter.

    Speeds satisfy v = sqrt(G m / 2d), which closes the orbit with analytic
    period T = pi d / v.
    """
    v = math.sqrt(G * mass / (2.0 * separation))
    half = separation / 2.0
    a = Body(
        id=_TWO_BODY_IDS[0],
        label="alpha",
        mass=mass,
        position=(-half, 0.0, 0.0),
        velocity=(0.0, -v, 0.0),
        display_radius=separation * 0.08,
        color=(228, 120, 70),
    )
    b = Body(
        id=_TWO_BODY_IDS[1],
        label="beta",
        mass=mass,
        position=(half, 0.0, 0.0),
        velocity=(0.0, v, 0.0),
        display_radius=separation * 0.08,
        color=(96, 160, 220),
    )
    return SystemState(time=0.0, G=G, softening=0.0, bodies=(a, b))


def _parse_preset_doc(doc: object, source: str) -> SystemState:
    if not isinstance(doc, dict):
        raise ValueError(f"{source}: preset document must be a JSON object")
    G = doc.get("G", DEFAULT_G)
    softening = doc.get("softening", 0.0)
    raw_bodies = doc.get("bodies")
    if (
        isinstance(G, bool)
        or not isinstance(G, (int, float))
        or isinstance(softening, bool)
        or not isinstance(softening, (int, float))
    ):
        raise ValueError(f"{source}: G and softening must be numbers")
    if not isinstance(raw_bodies, list) or not raw_bodies:
        raise ValueError(f"{source}: preset needs a non-empty bodies list")
    bodies = []
    for i, item in enumerate(raw_bodies):
        if not isinstance(item, dict):
            raise ValueError(f"{source}: bodies[{i}] must be an object")
        try:
            bodies.append(
                Body(
                    id=item.get("id", ""),
                    label=item.get("label", f"body-{i}"),
                    mass=item.get("mass", 0.0),
                    position=item.get("position", ()),
                    velocity=item.get("velocity", (0.0, 0.0, 0.0)),
                    display_radius=item.get("display_radius", 1.0),
                    color=item.get("color", (200, 200, 200)),
                )
            )
        except ValueError as err:
            raise ValueError(f"{source}: bodies[{i}]: {err}") from err
    try:
        return SystemState(time=0.0, G=float(G), softening=float(softening), bodies=tuple(bodies))
    except ValueError as err:
        raise ValueError(f"{source}: {err}") from err


_FILE_PRESETS = {"solar-lite": "solar_lite.json"}


def preset_names() -> tuple[str, ...]:
    return ("two-body",) + tuple(sorted(_FILE_PRESETS))


def load_preset(name: str) -> SystemState:
    """Load a named preset, or a JSON preset document given as a path."""
    if name == "two-body":
        return two_body_preset()
    if name in _FILE_PRESETS:
        ref = resources.files(__package__).joinpath("presets", _FILE_PRESETS[name])
        doc = json.loads(ref.read_text(encoding="utf-8"))
        return _parse_preset_doc(doc, name)
    if os.sep in name or name.endswith(".json"):
        with open(name, encoding="utf-8") as fh:
            doc = json.load(fh)
        return _parse_preset_doc(doc, name)
    raise KeyError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
