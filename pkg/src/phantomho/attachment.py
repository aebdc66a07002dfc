"""Cell association, the three-way handover procedure, and the
single-attachment baseline.

Every decision reads one SINR snapshot ``eta`` of shape (users, cells),
linear ratios. Candidate lists are walked best-first with ties going to the
lowest cell id, which is the same as repeatedly taking the argmax and
removing failures. Step functions mutate the ConnectionState in place and
return the events they produced.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .scenario import ConfigError, Topology, UserState, CellSpec

PROPOSED = "proposed"
BASELINE = "baseline"

MACRO_TO_MACRO = "macro_to_macro"
PHANTOM_TO_PHANTOM = "phantom_to_phantom"
MACRO_TO_PHANTOM = "macro_to_phantom"
PHANTOM_DROP = "phantom_drop"
BASELINE_PHANTOM_TO_MACRO = "baseline_phantom_to_macro"

EVENT_KINDS = (MACRO_TO_MACRO, PHANTOM_TO_PHANTOM, MACRO_TO_PHANTOM, PHANTOM_DROP, BASELINE_PHANTOM_TO_MACRO)
# drops release a link without attaching anywhere, so they are not handovers
HANDOVER_KINDS = (MACRO_TO_MACRO, PHANTOM_TO_PHANTOM, MACRO_TO_PHANTOM, BASELINE_PHANTOM_TO_MACRO)

NO_LINK = -1

DwellPredictor = Callable[[int, int], float]


@dataclass
class HandoverPolicy:
    eta_m_th: float = 0.40
    eta_ph_th: float = 0.45
    H_m: float = 0.1
    H_ph: float = 0.1
    T_expected: float = 5.0
    dwell_check_enabled: bool = True
    mode: str = PROPOSED

    def __post_init__(self):
        if self.eta_m_th <= 0 or self.eta_ph_th <= 0:
            raise ConfigError("SINR thresholds must be positive")
        if self.H_m < 0 or self.H_ph < 0:
            raise ConfigError("hysteresis must be >= 0")
        if self.T_expected < 0:
            raise ConfigError("T_expected must be >= 0")
        if self.mode not in (PROPOSED, BASELINE):
            raise ConfigError(f"unknown mode {self.mode!r}")


class HandoverEvent(NamedTuple):
    time: float
    user: int
    kind: str
    source: int | None
    target: int | None

    def csv_row(self) -> list[str]:
        def cell(c):
            return "" if c is None else str(c)

        return [f"{self.time:.9g}", str(self.user), self.kind, cell(self.source), cell(self.target)]


@dataclass
class ConnectionState:
    """Links c(i, j), occupancy K(j) and access a(i, j).

    c is stored as one macro link and one phantom link per user, which makes
    the one-link-per-tier invariant structural.
    """

    num_macros: int
    capacity: np.ndarray
    access: np.ndarray  # (users, phantoms) bool
    macro_link: np.ndarray = field(default=None)
    phantom_link: np.ndarray = field(default=None)
    K: np.ndarray = field(default=None)

    def __post_init__(self):
        users = self.access.shape[0]
        if self.macro_link is None:
            self.macro_link = np.full(users, NO_LINK, dtype=np.int64)
        if self.phantom_link is None:
            self.phantom_link = np.full(users, NO_LINK, dtype=np.int64)
        if self.K is None:
            self.K = np.zeros(len(self.capacity), dtype=np.int64)

    @classmethod
    def empty(cls, topology: Topology, num_users: int) -> "ConnectionState":
        return cls(num_macros=topology.num_macros, capacity=topology.capacity.copy(),
                   access=topology.access_matrix(num_users))

    @property
    def num_users(self) -> int:
        return len(self.macro_link)

    def c(self, user: int, cell: int) -> int:
        return int(self.macro_link[user] == cell or self.phantom_link[user] == cell)

    def a(self, user: int, cell: int) -> bool:
        return bool(self.access[user, cell - self.num_macros])

    def free(self, cell: int) -> bool:
        return self.K[cell] < self.capacity[cell]

    def attach(self, user: int, cell: int):
        links = self.macro_link if cell < self.num_macros else self.phantom_link
        links[user] = cell
        self.K[cell] += 1

    def detach(self, user: int, cell: int):
        links = self.macro_link if cell < self.num_macros else self.phantom_link
        links[user] = NO_LINK
        self.K[cell] -= 1

    def copy(self) -> "ConnectionState":
        return ConnectionState(self.num_macros, self.capacity, self.access, self.macro_link.copy(),
                               self.phantom_link.copy(), self.K.copy())

    def check(self):
        """Raise AssertionError if any structural invariant is broken."""
        m = self.num_macros
        counts = np.zeros_like(self.K)
        for links in (self.macro_link, self.phantom_link):
            held = links[links >= 0]
            np.add.at(counts, held, 1)
        assert np.array_equal(counts, self.K), "K(j) != sum_i c(i, j)"
        assert np.all(self.K <= self.capacity), "capacity exceeded"
        ml, pl = self.macro_link, self.phantom_link
        assert np.all((ml == NO_LINK) | ((ml >= 0) & (ml < m))), "macro link to non-macro"
        assert np.all((pl == NO_LINK) | (pl >= m)), "phantom link to non-phantom"


def ranked(eta_row: np.ndarray, cells, threshold: float) -> list[int]:
    """Cells with eta strictly above threshold, best first, ties to lowest id."""
    cells = np.asarray(cells, dtype=np.int64)
    vals = eta_row[cells]
    keep = vals > threshold
    cells, vals = cells[keep], vals[keep]
    order = np.lexsort((cells, -vals))
    return [int(c) for c in cells[order]]


def _phantoms(conn: ConnectionState) -> range:
    return range(conn.num_macros, len(conn.K))


def _dwell_ok(policy, dwell, user, cell) -> bool:
    return not policy.dwell_check_enabled or dwell(user, cell) >= policy.T_expected


# ---------------------------------------------------------------------------
# initial association


def associate(num_users: int, topology: Topology, eta: np.ndarray, policy: HandoverPolicy,
              conn: ConnectionState | None = None, single_link: bool = False) -> ConnectionState:
    """Initial assignment of every user to the best macro and phantom.

    With ``single_link`` (baseline comparator) a user that obtained a phantom
    gives its macro channel back, so it ends with exactly one link.
    """
    conn = ConnectionState.empty(topology, num_users) if conn is None else conn
    macros = list(topology.macros)
    phantoms = list(topology.phantoms)
    for i in range(num_users):
        for j in ranked(eta[i], macros, policy.eta_m_th):
            if conn.free(j):
                conn.attach(i, j)
                break
        for j in ranked(eta[i], phantoms, policy.eta_ph_th):
            if conn.a(i, j) and conn.free(j):
                conn.attach(i, j)
                break
        if single_link and conn.phantom_link[i] != NO_LINK and conn.macro_link[i] != NO_LINK:
            conn.detach(i, int(conn.macro_link[i]))
    return conn


# ---------------------------------------------------------------------------
# per-step handover logic


def macro_handover_step(user: int, conn: ConnectionState, eta: np.ndarray, policy: HandoverPolicy,
                        time: float = 0.0) -> list[HandoverEvent]:
    """Macro-to-macro branch. On exhaustion the stale macro link is kept."""
    j = int(conn.macro_link[user])
    if j == NO_LINK or eta[user, j] >= policy.eta_m_th:
        return []
    serving = eta[user, j]
    for target in ranked(eta[user], range(conn.num_macros), policy.eta_m_th):
        if eta[user, target] - serving > policy.H_m and conn.free(target):
            conn.detach(user, j)
            conn.attach(user, target)
            return [HandoverEvent(time, user, MACRO_TO_MACRO, j, target)]
    return []


def phantom_handover_step(user: int, conn: ConnectionState, eta: np.ndarray, policy: HandoverPolicy,
                          dwell: DwellPredictor, time: float = 0.0) -> list[HandoverEvent]:
    """Phantom-to-phantom branch; a failed search releases the F2 link."""
    j = int(conn.phantom_link[user])
    if j == NO_LINK or eta[user, j] >= policy.eta_ph_th:
        return []
    serving = eta[user, j]
    for target in ranked(eta[user], _phantoms(conn), policy.eta_ph_th):
        if (eta[user, target] - serving > policy.H_ph and conn.a(user, target)
                and conn.free(target) and _dwell_ok(policy, dwell, user, target)):
            conn.detach(user, j)
            conn.attach(user, target)
            return [HandoverEvent(time, user, PHANTOM_TO_PHANTOM, j, target)]
    conn.detach(user, j)
    return [HandoverEvent(time, user, PHANTOM_DROP, j, None)]


def macro_to_phantom_step(user: int, conn: ConnectionState, eta: np.ndarray, policy: HandoverPolicy,
                          dwell: DwellPredictor, time: float = 0.0) -> list[HandoverEvent]:
    """Re-activate F2 for a user currently served by the macro only."""
    if conn.phantom_link[user] != NO_LINK:
        return []
    for target in ranked(eta[user], _phantoms(conn), policy.eta_ph_th):
        if conn.a(user, target) and conn.free(target) and _dwell_ok(policy, dwell, user, target):
            conn.attach(user, target)
            source = int(conn.macro_link[user])
            return [HandoverEvent(time, user, MACRO_TO_PHANTOM, None if source == NO_LINK else source, target)]
    return []


def proposed_step(user: int, conn: ConnectionState, eta: np.ndarray, policy: HandoverPolicy,
                  dwell: DwellPredictor, time: float = 0.0) -> list[HandoverEvent]:
    """All three branches for one user, in the order they run each step."""
    events = macro_handover_step(user, conn, eta, policy, time)
    events += phantom_handover_step(user, conn, eta, policy, dwell, time)
    events += macro_to_phantom_step(user, conn, eta, policy, dwell, time)
    return events


# ---------------------------------------------------------------------------
# single-attachment comparator


def baseline_step(user: int, conn: ConnectionState, eta: np.ndarray, policy: HandoverPolicy,
                  dwell: DwellPredictor, time: float = 0.0) -> list[HandoverEvent]:
    """One user under single attachment: macro or phantom, never both.

    A failing phantom with no acceptable phantom successor hands the user back
    to the best macro with a free channel (threshold not required, the macro
    is the umbrella of last resort). A macro user hands in to the best
    eligible phantom under the same gates as macro_to_phantom_step.
    """
    events: list[HandoverEvent] = []
    if conn.macro_link[user] != NO_LINK:
        events += macro_handover_step(user, conn, eta, policy, time)
    j = int(conn.phantom_link[user])
    if j != NO_LINK and eta[user, j] < policy.eta_ph_th:
        serving = eta[user, j]
        for target in ranked(eta[user], _phantoms(conn), policy.eta_ph_th):
            if (eta[user, target] - serving > policy.H_ph and conn.a(user, target)
                    and conn.free(target) and _dwell_ok(policy, dwell, user, target)):
                conn.detach(user, j)
                conn.attach(user, target)
                events.append(HandoverEvent(time, user, PHANTOM_TO_PHANTOM, j, target))
                break
        else:
            macros = np.arange(conn.num_macros)
            order = np.lexsort((macros, -eta[user, macros]))
            for target in macros[order]:
                if conn.free(int(target)):
                    conn.detach(user, j)
                    conn.attach(user, int(target))
                    events.append(HandoverEvent(time, user, BASELINE_PHANTOM_TO_MACRO, j, int(target)))
                    break
    source = int(conn.macro_link[user])
    if source != NO_LINK and conn.phantom_link[user] == NO_LINK:
        for target in ranked(eta[user], _phantoms(conn), policy.eta_ph_th):
            if conn.a(user, target) and conn.free(target) and _dwell_ok(policy, dwell, user, target):
                conn.detach(user, source)
                conn.attach(user, target)
                events.append(HandoverEvent(time, user, MACRO_TO_PHANTOM, source, target))
                break
    return events


# ---------------------------------------------------------------------------
# dwell time


def dwell_time(px: float, py: float, heading: float, speed: float,
               cx: float, cy: float, r: float) -> float:
    """Seconds a straight-line mover spends inside a disc from now on.

    Inside the disc this is the time to the exit point. Outside, it is the
    time between entry and exit along the ray, or 0 when the ray misses.
    """
    if speed == 0.0:
        return math.inf
    ux, uy = math.cos(heading), math.sin(heading)
    fx, fy = px - cx, py - cy
    b = fx * ux + fy * uy
    c = fx * fx + fy * fy - r * r
    disc = b * b - c
    if disc < 0.0:
        return 0.0
    root = math.sqrt(disc)
    t_exit = -b + root
    if t_exit <= 0.0:
        return 0.0
    t_enter = max(-b - root, 0.0)
    return (t_exit - t_enter) / speed


def predict_dwell_time(user: UserState, cell: CellSpec) -> float:
    return dwell_time(user.position[0], user.position[1], user.heading, user.speed,
                      cell.center[0], cell.center[1], cell.radius)
