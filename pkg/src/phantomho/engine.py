"""Fixed-step simulation loop tying scenario, radio and attachment together."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import attachment as att
from . import kernels
from .attachment import (
    BASELINE,
    BASELINE_PHANTOM_TO_MACRO,
    EVENT_KINDS,
    HANDOVER_KINDS,
    NO_LINK,
    PHANTOM_DROP,
    PROPOSED,
    ConnectionState,
    HandoverEvent,
    HandoverPolicy,
)
from .radio import FastLink, PropagationParams
from .scenario import ConfigError, ScenarioConfig, Topology, advance_positions, build_topology, free_step, spawn_users

S1, S2, S3 = 0, 1, 2
STATE_NAMES = ("S1", "S2", "S3")
SWEEP_AXES = ("num_users", "hysteresis", "dwell_toggle")
BACKENDS = ("numba", "python")


@dataclass
class SimConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    propagation: PropagationParams | None = None
    policy: HandoverPolicy = field(default_factory=HandoverPolicy)
    dt: float = 1.0
    duration: float = 1000.0
    replications: int = 10
    seed: int = 1
    record_trace: bool = False
    backend: str = "numba"  # "python" runs the reference attachment functions

    def __post_init__(self):
        if self.propagation is None:
            self.propagation = PropagationParams(case=self.scenario.case)
        self.validate()

    def validate(self):
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.duration < 0 or (self.duration > 0 and self.duration < self.dt):
            raise ConfigError("duration must be 0 or at least dt")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {BACKENDS}")
        if self.propagation.case != self.scenario.case:
            raise ConfigError("propagation case and scenario case disagree")
        self.scenario.validate()

    @property
    def num_steps(self) -> int:
        return int(math.floor(self.duration / self.dt + 1e-9))


@dataclass
class SimState:
    topology: Topology
    positions: np.ndarray
    headings: np.ndarray
    speeds: np.ndarray
    conn: ConnectionState
    shadow_rng: np.random.Generator
    time: float = 0.0
    eta: np.ndarray | None = None
    link: FastLink | None = None
    region_arrays: tuple = ()

    @property
    def num_users(self) -> int:
        return len(self.speeds)

    def dwell_predictor(self) -> att.DwellPredictor:
        cells = self.topology

        def predict(user: int, cell: int) -> float:
            c = cells[cell]
            return att.dwell_time(self.positions[user, 0], self.positions[user, 1], self.headings[user],
                                  self.speeds[user], c.center[0], c.center[1], c.radius)

        return predict

    def labels(self) -> np.ndarray:
        """S3 if holding a phantom link, S2 if inside a phantom disc without one, else S1."""
        topo = self.topology
        return kernels.labels(self.positions, self.conn.phantom_link, topo.centers, topo.radii, topo.num_macros)


def initial_state(config: SimConfig, seed: int) -> SimState:
    """Topology, users, first SINR snapshot and initial association."""
    scen = replace(config.scenario, seed=seed)
    streams = scen.streams()
    topo = build_topology(scen, streams["topology"])
    users = spawn_users(scen, topo, streams["users"])
    u = len(users)
    pos = np.array([usr.position for usr in users], dtype=float).reshape(u, 2)
    state = SimState(
        topology=topo,
        positions=pos,
        headings=np.array([usr.heading for usr in users], dtype=float),
        speeds=np.array([usr.speed for usr in users], dtype=float),
        conn=ConnectionState.empty(topo, u),
        shadow_rng=streams["shadowing"],
    )
    state.link = FastLink(topo, config.propagation)
    state.region_arrays = topo.region.packed()
    state.eta = state.link(pos, state.shadow_rng)
    att.associate(u, topo, state.eta, config.policy, state.conn,
                  single_link=config.policy.mode == BASELINE)
    return state


def _active_users(state: SimState, policy: HandoverPolicy) -> np.ndarray:
    """Users for which some branch can possibly act this step, in id order.

    Everyone else would fall through every branch without touching state.
    """
    conn, eta, m = state.conn, state.eta, state.conn.num_macros
    rows = np.arange(state.num_users)
    ml, pl = conn.macro_link, conn.phantom_link
    macro_low = (ml != NO_LINK) & (eta[rows, np.maximum(ml, 0)] < policy.eta_m_th)
    phantom_low = (pl != NO_LINK) & (eta[rows, np.maximum(pl, 0)] < policy.eta_ph_th)
    reachable = ((eta[:, m:] > policy.eta_ph_th) & conn.access).any(axis=1)
    hand_in = (pl == NO_LINK) & reachable
    if policy.mode == BASELINE:
        hand_in &= ml != NO_LINK
    return np.flatnonzero(macro_low | phantom_low | hand_in)


def step(state: SimState, config: SimConfig) -> list[HandoverEvent]:
    """Advance one dt: move, resample the channel, run the handover logic."""
    policy = config.policy
    if config.backend == "python":
        state.positions, state.headings = advance_positions(
            state.positions, state.headings, state.speeds, config.dt, state.topology.region)
    else:
        step = free_step(state.headings, state.speeds, config.dt)
        state.positions, state.headings = kernels.advance(state.positions, step, state.headings,
                                                          *state.region_arrays)
    state.time += config.dt
    state.eta = state.link(state.positions, state.shadow_rng)
    if config.backend == "python":
        dwell = state.dwell_predictor()
        decide = att.baseline_step if policy.mode == BASELINE else att.proposed_step
        events: list[HandoverEvent] = []
        for i in _active_users(state, policy):
            events += decide(int(i), state.conn, state.eta, policy, dwell, state.time)
        return events
    conn, topo = state.conn, state.topology
    rows = kernels.decide(state.eta, conn.macro_link, conn.phantom_link, conn.K, conn.capacity, conn.access,
                          topo.num_macros, policy.eta_m_th, policy.eta_ph_th, policy.H_m, policy.H_ph,
                          policy.T_expected, policy.dwell_check_enabled, policy.mode == BASELINE,
                          state.positions, state.headings, state.speeds, topo.centers, topo.radii)
    return [HandoverEvent(state.time, int(u), EVENT_KINDS[k], None if src < 0 else int(src),
                          None if dst < 0 else int(dst)) for u, k, src, dst in rows.tolist()]


@dataclass
class ReplicationResult:
    seed: int
    num_users: int
    events: list[HandoverEvent]
    occupancy: np.ndarray  # user-step counts per state
    unserved_user_steps: int
    trace: np.ndarray | None = None

    @property
    def counts(self) -> dict[str, int]:
        out = dict.fromkeys(EVENT_KINDS, 0)
        for ev in self.events:
            out[ev.kind] += 1
        return out

    @property
    def handovers(self) -> int:
        c = self.counts
        return sum(c[k] for k in HANDOVER_KINDS)

    @property
    def drops(self) -> int:
        return self.counts[PHANTOM_DROP]


def simulate_replication(config: SimConfig, seed: int, check: bool = False) -> ReplicationResult:
    state = initial_state(config, seed)
    occupancy = np.zeros(3, dtype=np.int64)
    unserved = 0
    events: list[HandoverEvent] = []
    trace = [] if config.record_trace else None

    def record():
        nonlocal unserved
        lab = state.labels()
        occupancy[:] += np.bincount(lab, minlength=3)
        unserved += int(np.sum((state.conn.macro_link == NO_LINK) & (state.conn.phantom_link == NO_LINK)))
        if trace is not None:
            trace.append(lab)

    record()
    for _ in range(config.num_steps):
        new = step(state, config)
        if check:
            state.conn.check()
            if config.policy.mode == PROPOSED:
                assert all(ev.kind != BASELINE_PHANTOM_TO_MACRO for ev in new)
        events += new
        record()
    if config.policy.mode == PROPOSED and any(ev.kind == BASELINE_PHANTOM_TO_MACRO for ev in events):
        raise AssertionError("phantom-to-macro handover in proposed mode")
    return ReplicationResult(seed, state.num_users, events, occupancy, unserved,
                             None if trace is None else np.array(trace))


@dataclass
class MetricsReport:
    avg_handover_per_user: float
    avg_handover_per_run: float
    std_handover_per_run: float
    counts: dict[str, float]
    drops: float
    unserved_user_steps: float
    occupancy: tuple[float, float, float]
    replications: list[ReplicationResult]
    config: SimConfig

    @property
    def events(self) -> list[HandoverEvent]:
        return [ev for rep in self.replications for ev in rep.events]

    @property
    def total_handovers(self) -> int:
        return sum(rep.handovers for rep in self.replications)

    def per_replication_rows(self) -> list[dict]:
        rows = []
        for k, rep in enumerate(self.replications):
            occ = rep.occupancy / max(rep.occupancy.sum(), 1)
            row = {"replication": k, "seed": rep.seed, "handovers": rep.handovers,
                   "handovers_per_user": rep.handovers / rep.num_users if rep.num_users else 0.0,
                   "drops": rep.drops, "unserved_user_steps": rep.unserved_user_steps}
            row.update(rep.counts)
            row.update({"occ_S1": occ[0], "occ_S2": occ[1], "occ_S3": occ[2]})
            rows.append(row)
        return rows


def aggregate(results: Sequence[ReplicationResult], config: SimConfig) -> MetricsReport:
    handovers = np.array([r.handovers for r in results], dtype=float)
    users = results[0].num_users
    occ = np.sum([r.occupancy for r in results], axis=0).astype(float)
    occ = occ / occ.sum() if occ.sum() else np.array([1.0, 0.0, 0.0])
    counts = {k: float(np.mean([r.counts[k] for r in results])) for k in EVENT_KINDS}
    return MetricsReport(
        avg_handover_per_user=float(handovers.mean() / users) if users else 0.0,
        avg_handover_per_run=float(handovers.mean()),
        std_handover_per_run=float(handovers.std(ddof=1)) if len(results) > 1 else 0.0,
        counts=counts,
        drops=float(np.mean([r.drops for r in results])),
        unserved_user_steps=float(np.mean([r.unserved_user_steps for r in results])),
        occupancy=(float(occ[0]), float(occ[1]), float(occ[2])),
        replications=list(results),
        config=config,
    )


def run(config: SimConfig, check: bool = False) -> MetricsReport:
    """All replications, seeded seed, seed+1, ..."""
    config.validate()
    results = [simulate_replication(config, config.seed + k, check) for k in range(config.replications)]
    return aggregate(results, config)


def with_axis(config: SimConfig, axis: str, value) -> SimConfig:
    if axis == "num_users":
        return replace(config, scenario=replace(config.scenario, num_users=int(value)))
    if axis == "hysteresis":
        return replace(config, policy=replace(config.policy, H_m=float(value), H_ph=float(value)))
    if axis == "dwell_toggle":
        return replace(config, policy=replace(config.policy, dwell_check_enabled=parse_toggle(value)))
    raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")


def parse_toggle(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("on", "true", "1", "yes"):
        return True
    if text in ("off", "false", "0", "no"):
        return False
    raise ConfigError(f"not a toggle value: {value!r}")


def sweep(config: SimConfig, axis: str, values: Sequence) -> list[MetricsReport]:
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    if len(values) == 0:
        raise ConfigError("sweep needs at least one value")
    return [run(with_axis(config, axis, v)) for v in values]


# ---------------------------------------------------------------------------
# CSV output


def events_csv(events: Sequence[HandoverEvent], fmt: str = "csv") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t" if fmt == "tsv" else ",", lineterminator="\n")
    w.writerow(["t", "user", "kind", "source", "target"])
    for ev in events:
        w.writerow(ev.csv_row())
    return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.9g}"
    return str(v)


METRIC_COLUMNS = ["replication", "seed", "handovers", "handovers_per_user", "drops", "unserved_user_steps",
                  *EVENT_KINDS, "occ_S1", "occ_S2", "occ_S3"]


def metrics_csv(report: MetricsReport, header_lines: Sequence[str] = (), fmt: str = "csv") -> str:
    """One row per replication plus a mean row and a std row."""
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, delimiter="\t" if fmt == "tsv" else ",", lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    rows = report.per_replication_rows()
    for row in rows:
        w.writerow([_fmt(row[c]) for c in METRIC_COLUMNS])
    for label, fn in (("mean", np.mean), ("std", lambda a: np.std(a, ddof=1) if len(a) > 1 else 0.0)):
        agg = [label, ""]
        for c in METRIC_COLUMNS[2:]:
            agg.append(_fmt(float(fn(np.array([r[c] for r in rows], dtype=float)))))
        w.writerow(agg)
    return buf.getvalue()


def trace_csv(report: MetricsReport, fmt: str = "csv") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t" if fmt == "tsv" else ",", lineterminator="\n")
    w.writerow(["replication", "step", "user", "state"])
    for k, rep in enumerate(report.replications):
        if rep.trace is None:
            continue
        for s, labels in enumerate(rep.trace):
            for u, lab in enumerate(labels):
                w.writerow([k, s, u, STATE_NAMES[lab]])
    return buf.getvalue()
