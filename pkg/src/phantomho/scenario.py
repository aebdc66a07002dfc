"""Network geometry, user population and straight-line mobility.

Cells are indexed macros first (0..M-1), then phantoms grouped by parent
macro (M..M(N+1)-1). All randomness flows from explicit numpy Generators
derived from the config seed, so topology and users are bit-reproducible.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np

MACRO = "macro"
PHANTOM = "phantom"
INDOOR = "indoor"
OUTDOOR = "outdoor"
F1 = "F1"
F2 = "F2"
OPEN = "open"
CLOSED = "closed"

# Table 1 rows that differ between the two environments.
CASE_DEFAULTS = {
    INDOOR: {
        "phantoms_per_macro": 12,
        "phantom_radius": 50.0,
        "phantom_tx_dbm": 23.0,
        "speed_range": (0.0, 4.1),
        "region": "buildings",
    },
    OUTDOOR: {
        "phantoms_per_macro": 8,
        "phantom_radius": 250.0,
        "phantom_tx_dbm": 31.5,
        "speed_range": (0.0, 8.3),
        "region": "macros",
    },
}

# Region modes: the whole macro footprint, or (indoor) only the apartment blocks.
REGION_MACROS = "macros"
REGION_BUILDINGS = "buildings"


class ConfigError(ValueError):
    """Invalid scenario or simulation configuration."""


@dataclass(frozen=True)
class CellSpec:
    id: int
    kind: str
    center: tuple[float, float]
    radius: float
    tx_power_dbm: float
    band: str
    capacity: int
    parent_macro: int | None = None
    access_mode: str = OPEN
    subscribers: frozenset[int] = frozenset()

    def __post_init__(self):
        if self.radius <= 0:
            raise ConfigError(f"cell {self.id}: radius must be positive")
        if self.capacity < 1:
            raise ConfigError(f"cell {self.id}: capacity must be >= 1")
        if self.kind == MACRO and (self.band != F1 or self.access_mode != OPEN):
            raise ConfigError(f"macro {self.id} must be open and on {F1}")
        if self.kind == PHANTOM and self.band != F2:
            raise ConfigError(f"phantom {self.id} must be on {F2}")

    @property
    def is_macro(self) -> bool:
        return self.kind == MACRO

    def allows(self, user_id: int) -> bool:
        """Access indicator a(i, j) for this cell."""
        return self.access_mode == OPEN or user_id in self.subscribers


@dataclass(frozen=True)
class UserState:
    id: int
    position: tuple[float, float]
    heading: float
    speed: float
    macro_link: int | None = None
    phantom_link: int | None = None


@dataclass
class ScenarioConfig:
    """Geometry and population knobs.

    Fields left as ``None`` resolve to the Table 1 value for ``case``.
    """

    case: str = OUTDOOR
    num_macros: int = 2
    phantoms_per_macro: int | None = None
    num_users: int = 100
    speed_range: tuple[float, float] | None = None
    macro_radius: float = 1000.0
    phantom_radius: float | None = None
    macro_spacing: float | None = None  # center distance; None means tangent discs
    macro_tx_dbm: float = 43.0
    phantom_tx_dbm: float | None = None
    macro_capacity: int = 1000
    phantom_capacity: int = 10
    open_probability: float = 0.5
    subscriber_fraction: float = 0.1
    apartment_pitch: float | None = None  # indoor grid spacing; None means 2r
    ring_fractions: tuple[float, float] = (0.35, 0.72)  # outdoor ring radii / R
    region: str | None = None
    seed: int = 1

    def __post_init__(self):
        if self.case not in CASE_DEFAULTS:
            raise ConfigError(f"case must be indoor or outdoor, got {self.case!r}")
        for key, value in CASE_DEFAULTS[self.case].items():
            if getattr(self, key) is None:
                setattr(self, key, value)
        self.speed_range = tuple(float(v) for v in self.speed_range)
        self.ring_fractions = tuple(float(v) for v in self.ring_fractions)
        if self.macro_spacing is None:
            self.macro_spacing = 2.0 * self.macro_radius
        if self.apartment_pitch is None:
            self.apartment_pitch = 2.0 * self.phantom_radius
        self.validate()

    def validate(self):
        if self.num_macros < 1:
            raise ConfigError("num_macros must be >= 1")
        if self.phantoms_per_macro < 0:
            raise ConfigError("phantoms_per_macro must be >= 0")
        if self.num_users < 0:
            raise ConfigError("num_users must be >= 0")
        lo, hi = self.speed_range
        if lo < 0 or hi < lo:
            raise ConfigError(f"bad speed_range {self.speed_range}")
        if self.macro_radius <= 0 or self.phantom_radius <= 0:
            raise ConfigError("radii must be positive")
        if self.macro_capacity < 1 or self.phantom_capacity < 1:
            raise ConfigError("capacities must be >= 1")
        if not 0.0 <= self.open_probability <= 1.0:
            raise ConfigError("open_probability must lie in [0, 1]")
        if not 0.0 <= self.subscriber_fraction <= 1.0:
            raise ConfigError("subscriber_fraction must lie in [0, 1]")
        if self.apartment_pitch < 2 * self.phantom_radius:
            raise ConfigError("apartment_pitch must be at least one phantom diameter")
        if self.region not in (REGION_MACROS, REGION_BUILDINGS):
            raise ConfigError(f"unknown region mode {self.region!r}")
        if self.region == REGION_BUILDINGS and self.case != INDOOR:
            raise ConfigError("region=buildings only applies to the indoor case")

    def streams(self, seed: int | None = None) -> dict[str, np.random.Generator]:
        """Independent named generators derived from the seed."""
        ss = np.random.SeedSequence(self.seed if seed is None else seed)
        topo, users, shadow = ss.spawn(3)
        return {
            "topology": np.random.default_rng(topo),
            "users": np.random.default_rng(users),
            "shadowing": np.random.default_rng(shadow),
        }


# ---------------------------------------------------------------------------
# regions and reflection


def _sq_dist(a, b):
    dx, dy = a[0] - b[0], a[1] - b[1]
    return dx * dx + dy * dy


@dataclass(frozen=True)
class Disc:
    cx: float
    cy: float
    r: float

    def contains(self, x, y):
        dx, dy = x - self.cx, y - self.cy
        return dx * dx + dy * dy <= self.r * self.r

    def chord(self, px, py, dx, dy):
        """Parameter interval [t0, t1] where p + t*d lies in the disc, or None."""
        fx, fy = px - self.cx, py - self.cy
        a = dx * dx + dy * dy
        b = 2.0 * (fx * dx + fy * dy)
        c = fx * fx + fy * fy - self.r * self.r
        disc = b * b - 4 * a * c
        if a == 0.0 or disc < 0.0:
            return None
        sq = math.sqrt(disc)
        return (-b - sq) / (2 * a), (-b + sq) / (2 * a)

    def normal(self, x, y):
        nx, ny = x - self.cx, y - self.cy
        n = math.sqrt(nx * nx + ny * ny)
        return nx / n, ny / n

    def pull_inside(self, x, y):
        nx, ny = x - self.cx, y - self.cy
        n = math.sqrt(nx * nx + ny * ny)
        if n <= self.r:
            return x, y
        k = self.r * (1.0 - 1e-12) / n
        return self.cx + k * nx, self.cy + k * ny


@dataclass(frozen=True)
class Rect:
    x0: float
    y0: float
    x1: float
    y1: float

    def contains(self, x, y):
        return (self.x0 <= x) & (x <= self.x1) & (self.y0 <= y) & (y <= self.y1)

    def chord(self, px, py, dx, dy):
        t0, t1 = -math.inf, math.inf
        for p, d, lo, hi in ((px, dx, self.x0, self.x1), (py, dy, self.y0, self.y1)):
            if d == 0.0:
                if p < lo or p > hi:
                    return None
                continue
            a, b = (lo - p) / d, (hi - p) / d
            if a > b:
                a, b = b, a
            t0, t1 = max(t0, a), min(t1, b)
        if t0 > t1:
            return None
        return t0, t1

    def normal(self, x, y):
        dists = (abs(x - self.x0), abs(x - self.x1), abs(y - self.y0), abs(y - self.y1))
        k = int(np.argmin(dists))
        return ((-1.0, 0.0), (1.0, 0.0), (0.0, -1.0), (0.0, 1.0))[k]

    def pull_inside(self, x, y):
        return min(max(x, self.x0), self.x1), min(max(y, self.y0), self.y1)


@dataclass(frozen=True)
class Region:
    """Union of discs and axis-aligned rectangles with specular walls."""

    shapes: tuple

    @cached_property
    def _stacked(self):
        discs = np.array([(s.cx, s.cy, s.r * s.r) for s in self.shapes if isinstance(s, Disc)]).reshape(-1, 3)
        rects = np.array([(s.x0, s.y0, s.x1, s.y1) for s in self.shapes if isinstance(s, Rect)]).reshape(-1, 4)
        return discs, rects

    def packed(self) -> tuple[np.ndarray, np.ndarray]:
        """(kinds, params) arrays for the compiled mover: 0 = disc, 1 = rect."""
        kinds = np.array([0 if isinstance(s, Disc) else 1 for s in self.shapes], dtype=np.int64)
        params = np.array([(s.cx, s.cy, s.r, 0.0) if isinstance(s, Disc) else (s.x0, s.y0, s.x1, s.y1)
                           for s in self.shapes], dtype=float).reshape(-1, 4)
        return kinds, params

    def same_shape(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Rows where points a and b lie in one common shape, shape (n,)."""
        discs, rects = self._stacked

        def in_discs(p):
            dx, dy = p[:, 0:1] - discs[:, 0], p[:, 1:2] - discs[:, 1]
            return dx * dx + dy * dy <= discs[:, 2]

        def in_rects(p):
            x, y = p[:, 0:1], p[:, 1:2]
            return (rects[:, 0] <= x) & (x <= rects[:, 2]) & (rects[:, 1] <= y) & (y <= rects[:, 3])

        return (in_discs(a) & in_discs(b)).any(-1) | (in_rects(a) & in_rects(b)).any(-1)

    def contains(self, x, y):
        if isinstance(x, float) and isinstance(y, float):
            return any(s.contains(x, y) for s in self.shapes)
        discs, rects = self._stacked
        x = np.asarray(x, dtype=float)[..., None]
        y = np.asarray(y, dtype=float)[..., None]
        inside = ((x - discs[:, 0]) ** 2 + (y - discs[:, 1]) ** 2 <= discs[:, 2]).any(-1)
        inside |= ((rects[:, 0] <= x) & (x <= rects[:, 2]) & (rects[:, 1] <= y) & (y <= rects[:, 3])).any(-1)
        return inside

    def area(self, samples: int = 200_000, seed: int = 0) -> float:
        xmin, ymin, xmax, ymax = self.bounds()
        rng = np.random.default_rng(seed)
        x = rng.uniform(xmin, xmax, samples)
        y = rng.uniform(ymin, ymax, samples)
        return float(self.contains(x, y).mean() * (xmax - xmin) * (ymax - ymin))

    def bounds(self):
        xs, ys = [], []
        for s in self.shapes:
            if isinstance(s, Disc):
                xs += [s.cx - s.r, s.cx + s.r]
                ys += [s.cy - s.r, s.cy + s.r]
            else:
                xs += [s.x0, s.x1]
                ys += [s.y0, s.y1]
        return min(xs), min(ys), max(xs), max(ys)

    def _exit(self, px, py, dx, dy):
        """First t in (0, 1] where the segment p -> p+d leaves the union."""
        intervals = []
        for s in self.shapes:
            iv = s.chord(px, py, dx, dy)
            if iv is not None and iv[1] >= 0.0:
                intervals.append((iv[0], iv[1], s))
        t_reach = 0.0
        shape = None
        # grow the connected component of the union containing t=0
        changed = True
        while changed:
            changed = False
            for t0, t1, s in intervals:
                if t0 <= t_reach + 1e-12 and t1 > t_reach:
                    t_reach, shape = t1, s
                    changed = True
        if t_reach >= 1.0:
            return None
        return t_reach, shape

    def reflect(self, px, py, dx, dy, max_bounces: int = 16):
        """Move from p by displacement d, bouncing off the boundary.

        Returns the final point and the (possibly reflected) unit direction.
        """
        for _ in range(max_bounces):
            hit = self._exit(px, py, dx, dy)
            if hit is None:
                return (*self._settle(px + dx, py + dy), dx, dy)
            t, shape = hit
            if shape is None:
                # p sits on or outside the boundary; stay put and turn around
                return (*self._settle(px, py), -dx, -dy)
            hx, hy = px + t * dx, py + t * dy
            nx, ny = shape.normal(hx, hy)
            rdx, rdy = (1.0 - t) * dx, (1.0 - t) * dy
            dot = rdx * nx + rdy * ny
            rdx, rdy = rdx - 2 * dot * nx, rdy - 2 * dot * ny
            # direction of travel after the bounce
            fdot = dx * nx + dy * ny
            dx_full, dy_full = dx - 2 * fdot * nx, dy - 2 * fdot * ny
            px, py, dx, dy = hx, hy, rdx, rdy
            if rdx == 0.0 and rdy == 0.0:
                return (*self._settle(px, py), dx_full, dy_full)
        return (*self._settle(px, py), dx, dy)

    def _settle(self, x, y):
        # absorb rounding that leaves a reflected point a hair outside
        if self.contains(x, y):
            return x, y
        best = min(self.shapes, key=lambda s: _sq_dist(s.pull_inside(x, y), (x, y)))
        return best.pull_inside(x, y)


# ---------------------------------------------------------------------------
# topology


@dataclass(frozen=True)
class Topology(Sequence):
    """Cells plus the derived arrays the radio and engine modules consume."""

    cells: tuple[CellSpec, ...]
    num_macros: int = 1
    walls: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)), compare=False)  # x1, y1, x2, y2
    region: Region = None
    case: str = OUTDOOR
    buildings: tuple[Rect, ...] = ()
    centers: np.ndarray = field(init=False, repr=False, compare=False)
    radii: np.ndarray = field(init=False, repr=False, compare=False)
    tx_dbm: np.ndarray = field(init=False, repr=False, compare=False)
    capacity: np.ndarray = field(init=False, repr=False, compare=False)
    group: np.ndarray = field(init=False, repr=False, compare=False)
    is_macro: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        cells = self.cells
        object.__setattr__(self, "centers", np.array([c.center for c in cells], dtype=float).reshape(-1, 2))
        object.__setattr__(self, "radii", np.array([c.radius for c in cells], dtype=float))
        object.__setattr__(self, "tx_dbm", np.array([c.tx_power_dbm for c in cells], dtype=float))
        object.__setattr__(self, "capacity", np.array([c.capacity for c in cells], dtype=np.int64))
        group = [c.id if c.is_macro else c.parent_macro for c in cells]
        object.__setattr__(self, "group", np.array(group, dtype=np.int64))
        object.__setattr__(self, "is_macro", np.array([c.is_macro for c in cells], dtype=bool))

    def __len__(self):
        return len(self.cells)

    def __getitem__(self, idx):
        return self.cells[idx]

    def __iter__(self) -> Iterator[CellSpec]:
        return iter(self.cells)

    @property
    def macros(self) -> range:
        return range(self.num_macros)

    @property
    def phantoms(self) -> range:
        return range(self.num_macros, len(self.cells))

    def access_matrix(self, num_users: int) -> np.ndarray:
        """Boolean (users x phantoms) matrix of a(i, j)."""
        a = np.ones((num_users, len(self.phantoms)), dtype=bool)
        for k, j in enumerate(self.phantoms):
            cell = self.cells[j]
            if cell.access_mode == CLOSED:
                a[:, k] = False
                subs = [u for u in cell.subscribers if u < num_users]
                a[subs, k] = True
        return a

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["cell_id", "kind", "parent", "x", "y", "radius", "power_dbm", "capacity", "access_mode"])
            for c in self.cells:
                parent = "" if c.parent_macro is None else c.parent_macro
                w.writerow([c.id, c.kind, parent, f"{c.center[0]:.9g}", f"{c.center[1]:.9g}",
                            f"{c.radius:.9g}", f"{c.tx_power_dbm:.9g}", c.capacity, c.access_mode])


def macro_centers(config: ScenarioConfig) -> list[tuple[float, float]]:
    m = config.num_macros
    return [((k - (m - 1) / 2.0) * config.macro_spacing, 0.0) for k in range(m)]


def grid_shape(n: int) -> tuple[int, int]:
    """(cols, rows) of the most square grid holding n apartments."""
    if n == 0:
        return 0, 0
    cols = math.ceil(math.sqrt(n))
    return cols, math.ceil(n / cols)


def apartment_layout(center, n, pitch):
    """Phantom centers, building rectangle and wall segments for one macro."""
    cols, rows = grid_shape(n)
    x0 = center[0] - cols * pitch / 2.0
    y0 = center[1] - rows * pitch / 2.0
    spots = [(x0 + (k % cols + 0.5) * pitch, y0 + (k // cols + 0.5) * pitch) for k in range(n)]
    walls = []
    for k in range(cols + 1):
        x = x0 + k * pitch
        walls.append((x, y0, x, y0 + rows * pitch))
    for k in range(rows + 1):
        y = y0 + k * pitch
        walls.append((x0, y, x0 + cols * pitch, y))
    return spots, Rect(x0, y0, x0 + cols * pitch, y0 + rows * pitch), walls


def ring_layout(center, n, radius, fractions):
    """Two concentric rings; the inner ring takes floor(n/2) phantoms."""
    inner = n // 2
    outer = n - inner
    spots = []
    for count, frac, phase in ((inner, fractions[0], 0.0), (outer, fractions[1], 0.5)):
        for k in range(count):
            ang = 2 * math.pi * (k + phase) / count
            spots.append((center[0] + frac * radius * math.cos(ang), center[1] + frac * radius * math.sin(ang)))
    return spots


def build_topology(config: ScenarioConfig, rng: np.random.Generator | None = None) -> Topology:
    config.validate()
    rng = config.streams()["topology"] if rng is None else rng
    m, n = config.num_macros, config.phantoms_per_macro
    centers = macro_centers(config)
    cells: list[CellSpec] = [
        CellSpec(id=k, kind=MACRO, center=centers[k], radius=config.macro_radius,
                 tx_power_dbm=config.macro_tx_dbm, band=F1, capacity=config.macro_capacity)
        for k in range(m)
    ]
    walls: list[tuple] = []
    buildings: list[Rect] = []
    spots_per_macro = []
    for k in range(m):
        if config.case == INDOOR:
            spots, building, w = apartment_layout(centers[k], n, config.apartment_pitch)
            if n:
                buildings.append(building)
                walls.extend(w)
        else:
            spots = ring_layout(centers[k], n, config.macro_radius, config.ring_fractions)
        spots_per_macro.append(spots)

    open_draws = rng.random(m * n)
    users = np.arange(config.num_users)
    next_id = m
    for k in range(m):
        for spot in spots_per_macro[k]:
            dist = math.hypot(spot[0] - centers[k][0], spot[1] - centers[k][1])
            if dist + config.phantom_radius > config.macro_radius + 1e-9:
                raise ConfigError(f"phantom {next_id} disc leaves macro {k}; shrink the layout")
            is_open = open_draws[next_id - m] < config.open_probability
            subs: frozenset[int] = frozenset()
            if not is_open and config.num_users:
                size = int(round(config.subscriber_fraction * config.num_users))
                subs = frozenset(int(u) for u in rng.choice(users, size=size, replace=False))
            cells.append(CellSpec(
                id=next_id, kind=PHANTOM, center=spot, radius=config.phantom_radius,
                tx_power_dbm=config.phantom_tx_dbm, band=F2, capacity=config.phantom_capacity,
                parent_macro=k, access_mode=OPEN if is_open else CLOSED, subscribers=subs,
            ))
            next_id += 1

    if config.region == REGION_BUILDINGS and buildings:
        region = Region(tuple(buildings))
    else:
        region = Region(tuple(Disc(cx, cy, config.macro_radius) for cx, cy in centers))
    wall_arr = np.array(walls, dtype=float).reshape(-1, 4)
    return Topology(cells=tuple(cells), num_macros=m, walls=wall_arr, region=region,
                    case=config.case, buildings=tuple(buildings))


# ---------------------------------------------------------------------------
# users and mobility


def sample_region(region: Region, count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform points over a region by rejection from its bounding box."""
    xmin, ymin, xmax, ymax = region.bounds()
    out = np.empty((0, 2))
    while len(out) < count:
        need = count - len(out)
        batch = max(2 * need, 64)
        x = rng.uniform(xmin, xmax, batch)
        y = rng.uniform(ymin, ymax, batch)
        keep = region.contains(x, y)
        out = np.vstack([out, np.column_stack([x[keep], y[keep]])])
    return out[:count]


def spawn_users(config: ScenarioConfig, topology: Topology,
                rng: np.random.Generator | None = None) -> list[UserState]:
    if config.num_users < 0:
        raise ConfigError("num_users must be >= 0")
    rng = config.streams()["users"] if rng is None else rng
    u = config.num_users
    pos = sample_region(topology.region, u, rng)
    heading = rng.uniform(0.0, 2 * math.pi, u)
    speed = rng.uniform(*config.speed_range, u)
    return [UserState(id=i, position=(float(pos[i, 0]), float(pos[i, 1])),
                      heading=float(heading[i]), speed=float(speed[i])) for i in range(u)]


def wrap_angle(a: float) -> float:
    a = a % (2 * math.pi)
    return 0.0 if a >= 2 * math.pi else a


def advance_user(user: UserState, dt: float, region: Region) -> UserState:
    if user.speed == 0.0:
        return user
    dx = user.speed * dt * math.cos(user.heading)
    dy = user.speed * dt * math.sin(user.heading)
    x, y, ux, uy = region.reflect(user.position[0], user.position[1], dx, dy)
    heading = wrap_angle(math.atan2(uy, ux)) if (ux, uy) != (dx, dy) else user.heading
    return replace(user, position=(x, y), heading=heading)


def free_step(heading: np.ndarray, speed: np.ndarray, dt: float) -> np.ndarray:
    """Unobstructed displacement of every user over dt, shape (U, 2)."""
    return (speed * dt)[:, None] * np.column_stack([np.cos(heading), np.sin(heading)])


def advance_positions(pos: np.ndarray, heading: np.ndarray, speed: np.ndarray, dt: float,
                      region: Region) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised advance_user over arrays; reflection handled per escaping user."""
    step = free_step(heading, speed, dt)
    new = pos + step
    # a move that starts and ends in the same convex shape cannot touch the
    # boundary; anything else (including leaving and re-entering) is traced
    traced = ~region.same_shape(pos, new)
    heading = heading.copy()
    for i in np.flatnonzero(traced):
        x, y, ux, uy = region.reflect(pos[i, 0], pos[i, 1], step[i, 0], step[i, 1])
        new[i] = (x, y)
        if (ux, uy) != (step[i, 0], step[i, 1]):
            heading[i] = wrap_angle(math.atan2(uy, ux))
    return new, heading


# ---------------------------------------------------------------------------
# walls


def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def count_walls(p1, p2, wall_segments) -> int:
    """Walls properly crossed by the open segment p1-p2.

    Touching at an endpoint or running collinear along a wall is not a crossing.
    """
    (ax, ay), (bx, by) = p1, p2
    q = 0
    for x1, y1, x2, y2 in wall_segments:
        d1 = _orient(x1, y1, x2, y2, ax, ay)
        d2 = _orient(x1, y1, x2, y2, bx, by)
        d3 = _orient(ax, ay, bx, by, x1, y1)
        d4 = _orient(ax, ay, bx, by, x2, y2)
        if d1 * d2 < 0 and d3 * d4 < 0:
            q += 1
    return q


def wall_count_matrix(points: np.ndarray, targets: np.ndarray, walls: np.ndarray) -> np.ndarray:
    """count_walls for every (point, target) pair, shape (P, T)."""
    q = np.zeros((len(points), len(targets)), dtype=np.int64)
    if len(walls) == 0 or len(points) == 0:
        return q
    ax = points[:, 0][:, None]
    ay = points[:, 1][:, None]
    bx = targets[:, 0][None, :]
    by = targets[:, 1][None, :]
    for x1, y1, x2, y2 in walls:
        d1 = (x2 - x1) * (ay - y1) - (y2 - y1) * (ax - x1)
        d2 = (x2 - x1) * (by - y1) - (y2 - y1) * (bx - x1)
        d3 = (bx - ax) * (y1 - ay) - (by - ay) * (x1 - ax)
        d4 = (bx - ax) * (y2 - ay) - (by - ay) * (x2 - ax)
        q += (d1 * d2 < 0) & (d3 * d4 < 0)
    return q
