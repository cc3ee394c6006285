"""In-process state machines behind the two simulation services.

These classes know nothing about sockets. A transport loop (the SDK's
ServiceAdapter, or a test) calls ``advance`` once per tick to get the next
stream payload and ``dispatch`` for each inbound command payload, and does
whatever publishing is appropriate. Commands and ticks must be serialized by
the caller; the classes are not thread-safe.

Command vocabulary (the ``cmd`` key of a relayed payload): ``fetch_spec``,
``spawn``, ``delete``, ``move_to``, ``nudge``. Replies are ``{ok, id}`` with
an optional ``clamped`` flag, or ``{"error": ...}`` with ``bad_params``,
``no_such_entity``, or ``faulted``.
"""

from __future__ import annotations

import math
import random
import uuid
from dataclasses import replace
from typing import Optional

from .boxes import Bounds, BoxSpec, BoxWorld, random_world, step_boxes
from .nbody import Body, SimulationFault, SystemState, load_preset, step_nbody

__all__ = ["BoxService", "NBodyService", "DEFAULT_BOUNDS", "DEFAULT_DT"]

DEFAULT_BOUNDS = Bounds(-10.0, -10.0, 10.0, 10.0)
DEFAULT_DT = 0.02

_SPAWN_PALETTE = [
    (226, 94, 62),
    (242, 174, 45),
    (88, 166, 92),
    (64, 140, 212),
    (148, 98, 204),
    (214, 86, 140),
    (94, 196, 186),
    (236, 236, 224),
]

_CMDS = {"fetch_spec", "spawn", "delete", "move_to", "nudge"}

BAD_PARAMS = {"error": "bad_params"}
NO_SUCH_ENTITY = {"error": "no_such_entity"}
FAULTED = {"error": "faulted"}


def _finite_vec(value: object, arity: int) -> Optional[tuple[float, ...]]:
    if not isinstance(value, (list, tuple)) or len(value) != arity:
        return None
    out = []
    for c in value:
        if isinstance(c, bool) or not isinstance(c, (int, float)) or not math.isfinite(c):
            return None
        out.append(float(c))
    return tuple(out)


def _finite_positive(value: object) -> Optional[float]:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        return None
    if not math.isfinite(value) or value <= 0:
        return None
    return float(value)


class _ServiceBase:
    """Tick counter, fault latch, and the shared dispatch plumbing."""

    kind = ""
    group = ""

    def __init__(self, dt: float, seed: int) -> None:
        if not (dt > 0 and math.isfinite(dt)):
            raise ValueError("dt must be finite and > 0")
        self.dt = dt
        self._tick = 0
        self._fault: Optional[str] = None
        self._fault_reported = False
        # distinct stream from any world-generation rng with the same seed,
        # so freshly spawned ids can never collide with the initial ones
        self._rng = random.Random(f"svc:{seed}")

    @property
    def tick(self) -> int:
        return self._tick

    @property
    def faulted(self) -> bool:
        return self._fault is not None

    def advance(self) -> Optional[dict]:
        """Step one dt and return the stream payload, or a one-time fault
        notice, or None while paused after a fault."""
        if self._fault is not None:
            if self._fault_reported:
                return None
            self._fault_reported = True
            return {"fault": self._fault, "tick": self._tick}
        try:
            self._step()
        except SimulationFault:
            self._fault = "non_finite_state"
            self._fault_reported = True
            return {"fault": self._fault, "tick": self._tick}
        self._tick += 1
        return {"tick": self._tick, "entities": self._entities()}

    def dispatch(self, payload: object) -> Optional[dict]:
        if not isinstance(payload, dict):
            return dict(BAD_PARAMS)
        cmd = payload.get("cmd")
        if not isinstance(cmd, str) or cmd not in _CMDS:
            return dict(BAD_PARAMS)
        if cmd == "fetch_spec":
            return self.spec_payload()
        if self._fault is not None:
            return dict(FAULTED)
        handler = getattr(self, f"_cmd_{cmd}")
        return handler(payload)

    def _mint_id(self, taken) -> str:
        while True:
            minted = str(uuid.UUID(int=self._rng.getrandbits(128), version=4))
            if minted not in taken:
                return minted

    # subclasses provide _step, _entities, spec_payload, and _cmd_* handlers


class BoxService(_ServiceBase):
    kind = "box_world"
    group = "physics_engine"

    def __init__(self, world: BoxWorld, dt: float = DEFAULT_DT, seed: int = 0) -> None:
        super().__init__(dt, seed)
        self.world = world

    @classmethod
    def fresh(
        cls,
        count: int,
        seed: int,
        bounds: Bounds = DEFAULT_BOUNDS,
        dt: float = DEFAULT_DT,
        max_speed: float = 2.0,
        restitution: float = 1.0,
    ) -> "BoxService":
        world = random_world(
            count, bounds, seed, max_speed=max_speed, restitution=restitution
        )
        return cls(world=world, dt=dt, seed=seed)

    def _step(self) -> None:
        self.world = step_boxes(self.world, self.dt)

    def _entities(self) -> list[dict]:
        return [
            {"id": bid, "position": [self.world.positions[bid][0], self.world.positions[bid][1]]}
            for bid in sorted(self.world.specs)
        ]

    def spec_payload(self) -> dict:
        return {
            "kind": self.kind,
            "bounds": self.world.bounds.as_list(),
            "specs": [
                {
                    "id": spec.id,
                    "half_extents": [spec.half_extents[0], spec.half_extents[1]],
                    "color": list(spec.color),
                    "mass": spec.mass,
                }
                for _, spec in sorted(self.world.specs.items())
            ],
        }

    def _clamp(self, pos: tuple[float, float], half: tuple[float, float]):
        b = self.world.bounds
        cx = min(max(pos[0], b.min_x + half[0]), b.max_x - half[0])
        cy = min(max(pos[1], b.min_y + half[1]), b.max_y - half[1])
        return (cx, cy), (cx != pos[0] or cy != pos[1])

    def _rebuild(self, specs, positions, velocities) -> None:
        self.world = BoxWorld(
            bounds=self.world.bounds,
            specs=specs,
            positions=positions,
            velocities=velocities,
            restitution=self.world.restitution,
        )

    def _cmd_spawn(self, payload: dict) -> dict:
        half = (0.5, 0.5)
        if "half_extents" in payload:
            parsed = _finite_vec(payload["half_extents"], 2)
            if parsed is None or parsed[0] <= 0 or parsed[1] <= 0:
                return dict(BAD_PARAMS)
            half = parsed
        if 2 * half[0] > self.world.bounds.width or 2 * half[1] > self.world.bounds.height:
            return dict(BAD_PARAMS)
        mass = 1.0
        if "mass" in payload:
            parsed_mass = _finite_positive(payload["mass"])
            if parsed_mass is None:
                return dict(BAD_PARAMS)
            mass = parsed_mass
        pos = self.world.bounds.center
        if "position" in payload:
            parsed_pos = _finite_vec(payload["position"], 2)
            if parsed_pos is None:
                return dict(BAD_PARAMS)
            pos = parsed_pos
        vel = (0.0, 0.0)
        if "velocity" in payload:
            parsed_vel = _finite_vec(payload["velocity"], 2)
            if parsed_vel is None:
                return dict(BAD_PARAMS)
            vel = parsed_vel
        color = payload.get("color", self._rng.choice(_SPAWN_PALETTE))
        new_id = self._mint_id(self.world.specs)
        try:
            spec = BoxSpec(id=new_id, half_extents=half, color=tuple(color), mass=mass)
        except (TypeError, ValueError):
            return dict(BAD_PARAMS)
        pos, clamped = self._clamp(pos, half)
        specs = dict(self.world.specs)
        positions = dict(self.world.positions)
        velocities = dict(self.world.velocities)
        specs[new_id] = spec
        positions[new_id] = pos
        velocities[new_id] = vel
        self._rebuild(specs, positions, velocities)
        reply = {"ok": True, "id": new_id}
        if clamped:
            reply["clamped"] = True
        return reply

    def _cmd_delete(self, payload: dict) -> dict:
        bid = payload.get("id")
        if not isinstance(bid, str):
            return dict(BAD_PARAMS)
        if bid not in self.world.specs:
            return dict(NO_SUCH_ENTITY)
        specs = dict(self.world.specs)
        positions = dict(self.world.positions)
        velocities = dict(self.world.velocities)
        del specs[bid], positions[bid], velocities[bid]
        self._rebuild(specs, positions, velocities)
        return {"ok": True, "id": bid}

    def _cmd_move_to(self, payload: dict) -> dict:
        bid = payload.get("id")
        pos = _finite_vec(payload.get("position"), 2)
        if not isinstance(bid, str) or pos is None:
            return dict(BAD_PARAMS)
        if bid not in self.world.specs:
            return dict(NO_SUCH_ENTITY)
        pos, clamped = self._clamp(pos, self.world.specs[bid].half_extents)
        positions = dict(self.world.positions)
        velocities = dict(self.world.velocities)
        positions[bid] = pos
        velocities[bid] = (0.0, 0.0)
        self._rebuild(dict(self.world.specs), positions, velocities)
        reply = {"ok": True, "id": bid}
        if clamped:
            reply["clamped"] = True
        return reply

    def _cmd_nudge(self, payload: dict) -> dict:
        bid = payload.get("id")
        delta = _finite_vec(payload.get("delta"), 2)
        if not isinstance(bid, str) or delta is None:
            return dict(BAD_PARAMS)
        if bid not in self.world.specs:
            return dict(NO_SUCH_ENTITY)
        old = self.world.positions[bid]
        pos, clamped = self._clamp(
            (old[0] + delta[0], old[1] + delta[1]), self.world.specs[bid].half_extents
        )
        positions = dict(self.world.positions)
        positions[bid] = pos
        self._rebuild(dict(self.world.specs), positions, dict(self.world.velocities))
        reply = {"ok": True, "id": bid}
        if clamped:
            reply["clamped"] = True
        return reply


# visible orbital motion per tick for the shipped presets; an explicit --dt
# always wins over these
_PRESET_DT = {
    "two-body": (math.pi * math.sqrt(2.0)) / 2000.0,  # one orbit in 2000 ticks
    "solar-lite": 21600.0,  # six simulated hours per tick
}


class NBodyService(_ServiceBase):
    kind = "planetary"
    group = "planetary_sim"

    def __init__(self, state: SystemState, dt: float = DEFAULT_DT, seed: int = 0) -> None:
        super().__init__(dt, seed)
        self.state = state
        self._spawn_count = 0

    @classmethod
    def from_preset(
        cls, name: str, dt: Optional[float] = None, seed: int = 0
    ) -> "NBodyService":
        state = load_preset(name)
        if dt is None:
            dt = _PRESET_DT.get(name, DEFAULT_DT)
        return cls(state=state, dt=dt, seed=seed)

    def _step(self) -> None:
        self.state = step_nbody(self.state, self.dt)

    def _entities(self) -> list[dict]:
        return [
            {"id": b.id, "position": [b.position[0], b.position[1], b.position[2]]}
            for b in self.state.bodies
        ]

    def spec_payload(self) -> dict:
        return {
            "kind": self.kind,
            "specs": [
                {
                    "id": b.id,
                    "label": b.label,
                    "mass": b.mass,
                    "display_radius": b.display_radius,
                    "color": list(b.color),
                }
                for b in self.state.bodies
            ],
        }

    def _find(self, bid: object) -> Optional[Body]:
        for b in self.state.bodies:
            if b.id == bid:
                return b
        return None

    def _swap(self, old: Body, new: Optional[Body]) -> None:
        bodies = [b for b in self.state.bodies if b.id != old.id]
        if new is not None:
            bodies.append(new)
        self.state = SystemState(
            time=self.state.time,
            G=self.state.G,
            softening=self.state.softening,
            bodies=tuple(bodies),
        )

    def _cmd_spawn(self, payload: dict) -> dict:
        mass = _finite_positive(payload.get("mass"))
        pos = _finite_vec(payload.get("position"), 3)
        if mass is None or pos is None:
            return dict(BAD_PARAMS)
        vel = (0.0, 0.0, 0.0)
        if "velocity" in payload:
            parsed_vel = _finite_vec(payload["velocity"], 3)
            if parsed_vel is None:
                return dict(BAD_PARAMS)
            vel = parsed_vel
        label = payload.get("label", f"spawned-{self._spawn_count}")
        radius = 1.0
        if "display_radius" in payload:
            parsed_radius = _finite_positive(payload["display_radius"])
            if parsed_radius is None:
                return dict(BAD_PARAMS)
            radius = parsed_radius
        color = payload.get("color", self._rng.choice(_SPAWN_PALETTE))
        new_id = self._mint_id({b.id for b in self.state.bodies})
        try:
            body = Body(
                id=new_id,
                label=label,
                mass=mass,
                position=pos,
                velocity=vel,
                display_radius=radius,
                color=tuple(color),
            )
        except (TypeError, ValueError):
            return dict(BAD_PARAMS)
        self.state = SystemState(
            time=self.state.time,
            G=self.state.G,
            softening=self.state.softening,
            bodies=self.state.bodies + (body,),
        )
        self._spawn_count += 1
        return {"ok": True, "id": new_id}

    def _cmd_delete(self, payload: dict) -> dict:
        bid = payload.get("id")
        if not isinstance(bid, str):
            return dict(BAD_PARAMS)
        body = self._find(bid)
        if body is None:
            return dict(NO_SUCH_ENTITY)
        self._swap(body, None)
        return {"ok": True, "id": bid}

    def _cmd_move_to(self, payload: dict) -> dict:
        bid = payload.get("id")
        pos = _finite_vec(payload.get("position"), 3)
        if not isinstance(bid, str) or pos is None:
            return dict(BAD_PARAMS)
        body = self._find(bid)
        if body is None:
            return dict(NO_SUCH_ENTITY)
        self._swap(body, replace(body, position=pos, velocity=(0.0, 0.0, 0.0)))
        return {"ok": True, "id": bid}

    def _cmd_nudge(self, payload: dict) -> dict:
        bid = payload.get("id")
        delta = _finite_vec(payload.get("delta"), 3)
        if not isinstance(bid, str) or delta is None:
            return dict(BAD_PARAMS)
        body = self._find(bid)
        if body is None:
            return dict(NO_SUCH_ENTITY)
        moved = replace(
            body,
            position=(
                body.position[0] + delta[0],
                body.position[1] + delta[1],
                body.position[2] + delta[2],
            ),
        )
        self._swap(body, moved)
        return {"ok": True, "id": bid}
