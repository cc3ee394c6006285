"""2D world of axis-aligned boxes that drift, collide, and bounce off walls.

The model is deliberately small: ballistic translation, then one resolution
pass over box pairs in sorted-id order (separate along the axis of least
penetration, exchange normal velocity components elastically when the pair is
closing), then wall reflection with restitution. Pure Python; the worlds are
tiny and determinism matters more than speed here.
"""

from __future__ import annotations

import math
import random
import uuid
from dataclasses import dataclass
from itertools import combinations

from ..protocol import validate_uuid

__all__ = ["Bounds", "BoxSpec", "BoxWorld", "random_world", "step_boxes"]

Vec2 = tuple[float, float]


def _vec2(value: object, what: str) -> Vec2:
    if not isinstance(value, (tuple, list)) or len(value) != 2:
        raise ValueError(f"{what} must be a 2-vector")
    out = []
    for c in value:
        if isinstance(c, bool) or not isinstance(c, (int, float)) or not math.isfinite(c):
            raise ValueError(f"{what} must contain finite numbers")
        out.append(float(c))
    return (out[0], out[1])


@dataclass(frozen=True)
class Bounds:
    """Axis-aligned world rectangle, in meters."""

    min_x: float
    min_y: float
    max_x: float
    max_y: float

    def __post_init__(self) -> None:
        for c in (self.min_x, self.min_y, self.max_x, self.max_y):
            if not math.isfinite(c):
                raise ValueError("bounds must be finite")
        if not (self.min_x < self.max_x and self.min_y < self.max_y):
            raise ValueError("bounds must have positive extent")

    @property
    def width(self) -> float:
        return self.max_x - self.min_x

    @property
    def height(self) -> float:
        return self.max_y - self.min_y

    @property
    def center(self) -> Vec2:
        return ((self.min_x + self.max_x) / 2.0, (self.min_y + self.max_y) / 2.0)

    def as_list(self) -> list[float]:
        return [self.min_x, self.min_y, self.max_x, self.max_y]


@dataclass(frozen=True)
class BoxSpec:
    """Immutable per-box attributes; everything a renderer needs besides position."""

    id: str
    half_extents: Vec2
    color: tuple[int, int, int]
    mass: float

    def __post_init__(self) -> None:
        if not validate_uuid(self.id):
            raise ValueError(f"box id is not a uuid: {self.id!r}")
        he = _vec2(self.half_extents, "half_extents")
        if he[0] <= 0 or he[1] <= 0:
            raise ValueError("half_extents must be > 0")
        object.__setattr__(self, "half_extents", he)
        if not isinstance(self.color, (tuple, list)) or len(self.color) != 3:
            raise ValueError("color must be an RGB triple")
        for c in self.color:
            if isinstance(c, bool) or not isinstance(c, int) or not 0 <= c <= 255:
                raise ValueError("color channels must be ints in 0..255")
        object.__setattr__(self, "color", tuple(self.color))
        if isinstance(self.mass, bool) or not isinstance(self.mass, (int, float)):
            raise ValueError("mass must be a number")
        if not math.isfinite(self.mass) or self.mass <= 0:
            raise ValueError("mass must be finite and > 0")
        object.__setattr__(self, "mass", float(self.mass))


@dataclass(frozen=True)
class BoxWorld:
    bounds: Bounds
    specs: dict[str, BoxSpec]
    positions: dict[str, Vec2]
    velocities: dict[str, Vec2]
    restitution: float = 1.0

    def __post_init__(self) -> None:
        if not math.isfinite(self.restitution) or not 0.0 <= self.restitution <= 1.0:
            raise ValueError("restitution must be in [0, 1]")
        ids = set(self.specs)
        if set(self.positions) != ids or set(self.velocities) != ids:
            raise ValueError("positions and velocities must cover exactly the spec ids")
        positions = {}
        velocities = {}
        for bid, spec in self.specs.items():
            if spec.id != bid:
                raise ValueError("spec key does not match spec id")
            pos = _vec2(self.positions[bid], f"position of {bid}")
            hx, hy = spec.half_extents
            if 2 * hx > self.bounds.width or 2 * hy > self.bounds.height:
                raise ValueError(f"box {bid} does not fit in the bounds")
            if (
                pos[0] - hx < self.bounds.min_x
                or pos[0] + hx > self.bounds.max_x
                or pos[1] - hy < self.bounds.min_y
                or pos[1] + hy > self.bounds.max_y
            ):
                raise ValueError(f"box {bid} lies outside the bounds")
            positions[bid] = pos
            velocities[bid] = _vec2(self.velocities[bid], f"velocity of {bid}")
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "velocities", velocities)


def step_boxes(world: BoxWorld, dt: float) -> BoxWorld:
    """Advance the world by dt seconds and return the new world."""
    if not (dt > 0 and math.isfinite(dt)):
        raise ValueError("dt must be finite and > 0")
    ids = sorted(world.specs)
    pos = {i: [world.positions[i][0], world.positions[i][1]] for i in ids}
    vel = {i: [world.velocities[i][0], world.velocities[i][1]] for i in ids}

    for i in ids:
        pos[i][0] += vel[i][0] * dt
        pos[i][1] += vel[i][1] * dt

    for a, b in combinations(ids, 2):
        ha = world.specs[a].half_extents
        hb = world.specs[b].half_extents
        dx = pos[b][0] - pos[a][0]
        dy = pos[b][1] - pos[a][1]
        ox = (ha[0] + hb[0]) - abs(dx)
        oy = (ha[1] + hb[1]) - abs(dy)
        if ox <= 0.0 or oy <= 0.0:
            continue
        if ox <= oy:
            axis, delta, pen = 0, dx, ox
        else:
            axis, delta, pen = 1, dy, oy
        # push b toward the positive side of the axis unless it sits on the
        # negative side; exact center ties break toward sorted order
        sign = -1.0 if delta < 0 else 1.0
        pos[a][axis] -= sign * pen / 2.0
        pos[b][axis] += sign * pen / 2.0
        rel = (vel[b][axis] - vel[a][axis]) * sign
        if rel < 0.0:  # closing along the contact normal
            m1 = world.specs[a].mass
            m2 = world.specs[b].mass
            v1 = vel[a][axis]
            v2 = vel[b][axis]
            vel[a][axis] = ((m1 - m2) * v1 + 2.0 * m2 * v2) / (m1 + m2)
            vel[b][axis] = ((m2 - m1) * v2 + 2.0 * m1 * v1) / (m1 + m2)

    e = world.restitution
    spans = (
        (world.bounds.min_x, world.bounds.max_x),
        (world.bounds.min_y, world.bounds.max_y),
    )
    for i in ids:
        h = world.specs[i].half_extents
        for axis in (0, 1):
            lo = spans[axis][0] + h[axis]
            hi = spans[axis][1] - h[axis]
            p = pos[i][axis]
            for _ in range(4):
                if p < lo:
                    p = 2.0 * lo - p
                    if vel[i][axis] < 0.0:
                        vel[i][axis] = -e * vel[i][axis]
                elif p > hi:
                    p = 2.0 * hi - p
                    if vel[i][axis] > 0.0:
                        vel[i][axis] = -e * vel[i][axis]
                else:
                    break
            else:
                # pathological speed: give up on mirroring, pin inside
                p = min(max(p, lo), hi)
            pos[i][axis] = p

    return BoxWorld(
        bounds=world.bounds,
        specs=dict(world.specs),
        positions={i: (pos[i][0], pos[i][1]) for i in ids},
        velocities={i: (vel[i][0], vel[i][1]) for i in ids},
        restitution=world.restitution,
    )


_PALETTE = [
    (226, 94, 62),
    (242, 174, 45),
    (88, 166, 92),
    (64, 140, 212),
    (148, 98, 204),
    (214, 86, 140),
    (94, 196, 186),
    (180, 150, 68),
]


def random_world(
    count: int,
    bounds: Bounds,
    seed: int,
    max_speed: float = 2.0,
    restitution: float = 1.0,
) -> BoxWorld:
    """Seeded world with boxes laid out on a grid so nothing starts overlapping."""
    if count < 0:
        raise ValueError("count must be >= 0")
    rng = random.Random(seed)
    specs: dict[str, BoxSpec] = {}
    positions: dict[str, Vec2] = {}
    velocities: dict[str, Vec2] = {}
    if count:
        cols = math.ceil(math.sqrt(count))
        rows = math.ceil(count / cols)
        cell_w = bounds.width / cols
        cell_h = bounds.height / rows
        if cell_w < 1.6 or cell_h < 1.6:
            raise ValueError(f"bounds too small for {count} boxes")
        for n in range(count):
            bid = str(uuid.UUID(int=rng.getrandbits(128), version=4))
            half = rng.choice([0.35, 0.5, 0.65])
            color = rng.choice(_PALETTE)
            cx = bounds.min_x + (n % cols + 0.5) * cell_w
            cy = bounds.min_y + (n // cols + 0.5) * cell_h
            specs[bid] = BoxSpec(id=bid, half_extents=(half, half), color=color, mass=1.0)
            positions[bid] = (cx, cy)
            velocities[bid] = (
                rng.uniform(-max_speed, max_speed),
                rng.uniform(-max_speed, max_speed),
            )
    return BoxWorld(
        bounds=bounds,
        specs=specs,
        positions=positions,
        velocities=velocities,
        restitution=restitution,
    )
