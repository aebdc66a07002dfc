"""Propagation, shadowing and SINR for the two tiers.

Powers are handled in mW internally; dB quantities only at the edges.
Shadowing is a fresh independent draw per link per call.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import kernels
from .kernels import wall_counts
from .scenario import INDOOR, MACRO, OUTDOOR, ConfigError, Topology

CO_TIER = "co_tier"
PAPER_LITERAL = "paper_literal"
MIN_DISTANCE = 1.0


@dataclass
class PropagationParams:
    case: str = OUTDOOR
    penetration_loss_db: float = 10.0  # L_ow
    wall_loss_db: float = 5.0  # w, per wall
    shadow_sigma_db: float = 6.0
    noise_power_dbm: float = -170.0
    interference_model: str = CO_TIER

    def __post_init__(self):
        if self.case not in (INDOOR, OUTDOOR):
            raise ConfigError(f"case must be indoor or outdoor, got {self.case!r}")
        if self.shadow_sigma_db < 0:
            raise ConfigError("shadow_sigma_db must be >= 0")
        if self.penetration_loss_db < 0 or self.wall_loss_db < 0:
            raise ConfigError("L_ow and w must be >= 0")
        if self.interference_model not in (CO_TIER, PAPER_LITERAL):
            raise ConfigError(f"unknown interference model {self.interference_model!r}")

    @property
    def noise_mw(self) -> float:
        return dbm_to_mw(self.noise_power_dbm)


@dataclass(frozen=True)
class LinkSample:
    path_loss_db: float
    shadowing_db: float
    gain_linear: float
    received_power_mw: float

    @classmethod
    def build(cls, path_loss_db, shadowing_db, tx_power_dbm):
        gain = 10.0 ** (-(path_loss_db + shadowing_db) / 10.0)
        return cls(path_loss_db, shadowing_db, gain, gain * dbm_to_mw(tx_power_dbm))


def dbm_to_mw(p_dbm):
    return 10.0 ** (p_dbm / 10.0)


def mw_to_dbm(p_mw):
    return 10.0 * np.log10(p_mw)


def path_loss_db(kind: str, case: str, d, q=0, params: PropagationParams | None = None):
    """Deterministic path loss in dB (no shadowing); d is clamped to 1 m."""
    params = params or PropagationParams(case=case)
    d = np.maximum(d, MIN_DISTANCE)
    walls = np.asarray(q) * params.wall_loss_db
    if case == OUTDOOR:
        if kind == MACRO:
            pl = 15.3 + 37.6 * np.log10(d)
        else:
            pl = np.maximum(15.3 + 37.6 * np.log10(d), 3.0 + 20.0 * np.log10(d)) + params.penetration_loss_db
    elif case == INDOOR:
        if kind == MACRO:
            pl = 15.3 + 37.6 * np.log10(d) + walls + params.penetration_loss_db
        else:
            pl = 37.0 + 20.0 * np.log10(d) + walls
    else:
        raise ConfigError(f"unknown case {case!r}")
    return float(pl) if np.ndim(pl) == 0 else pl


def sample_shadowing(rng: np.random.Generator, params: PropagationParams | None = None, size=None):
    """Zero-mean normal shadowing in dB with standard deviation shadow_sigma_db."""
    sigma = (params or PropagationParams()).shadow_sigma_db
    if sigma == 0.0:
        return 0.0 if size is None else np.zeros(size)
    return rng.normal(0.0, sigma, size)


def interferers(serving: int, topology: Topology, model: str) -> list[int]:
    """Cells whose power counts as interference against ``serving``."""
    cells = range(len(topology))
    if model == CO_TIER:
        tier = topology.is_macro[serving]
        return [j for j in cells if j != serving and topology.is_macro[j] == tier]
    group = topology.group[serving]
    return [j for j in cells if j != serving and topology.group[j] == group]


def sinr(user_id: int, serving_cell_id: int, topology: Topology,
         link_samples: Mapping[tuple[int, int], LinkSample], params: PropagationParams) -> float:
    """Linear SINR of one user towards one cell from per-link samples."""
    if not 0 <= serving_cell_id < len(topology):
        raise KeyError(f"unknown cell id {serving_cell_id}")
    signal = link_samples[(user_id, serving_cell_id)].received_power_mw
    interference = 0.0
    for j in interferers(serving_cell_id, topology, params.interference_model):
        sample = link_samples.get((user_id, j))
        if sample is not None:
            interference += sample.received_power_mw
    return signal / (interference + params.noise_mw)


# ---------------------------------------------------------------------------
# vectorised link budget used by the engine


def distance_matrix(positions: np.ndarray, topology: Topology) -> np.ndarray:
    diff = positions[:, None, :] - topology.centers[None, :, :]
    return np.hypot(diff[..., 0], diff[..., 1])


def path_loss_matrix(positions: np.ndarray, topology: Topology, params: PropagationParams,
                     walls: np.ndarray | None = None) -> np.ndarray:
    """(users x cells) deterministic path loss in dB."""
    d = distance_matrix(positions, topology)
    if params.case == INDOOR:
        q = wall_counts(positions, topology.centers, topology.walls) if walls is None else walls
    else:
        q = 0
    pl = np.empty_like(d)
    mac = topology.is_macro
    pl[:, mac] = path_loss_db(MACRO, params.case, d[:, mac], q if np.ndim(q) == 0 else q[:, mac], params)
    pl[:, ~mac] = path_loss_db("phantom", params.case, d[:, ~mac], q if np.ndim(q) == 0 else q[:, ~mac], params)
    return pl


def received_power_matrix(path_loss: np.ndarray, shadowing: np.ndarray, topology: Topology) -> np.ndarray:
    return 10.0 ** ((topology.tx_dbm[None, :] - path_loss - shadowing) / 10.0)


def _exclusive_sum(block: np.ndarray) -> np.ndarray:
    """Row-wise sum of all other columns, without total-minus-self cancellation."""
    n = block.shape[1]
    out = np.zeros_like(block)
    if n <= 1:
        return out
    before = np.cumsum(block, axis=1)
    after = np.cumsum(block[:, ::-1], axis=1)[:, ::-1]
    out[:, 1:] += before[:, :-1]
    out[:, :-1] += after[:, 1:]
    return out


def sinr_matrix(rx_mw: np.ndarray, topology: Topology, params: PropagationParams) -> np.ndarray:
    """Linear SINR of every user towards every cell."""
    interference = np.zeros_like(rx_mw)
    for cols in interference_classes(topology, params.interference_model):
        if len(cols):
            interference[:, cols] = _exclusive_sum(rx_mw[:, cols])
    return rx_mw / (interference + params.noise_mw)


def link_snapshot(positions: np.ndarray, topology: Topology, params: PropagationParams,
                  rng: np.random.Generator | None):
    """Path loss, shadowing, received power and SINR for all pairs."""
    pl = path_loss_matrix(positions, topology, params)
    if rng is None or params.shadow_sigma_db == 0.0:
        shadow = np.zeros_like(pl)
    else:
        shadow = rng.standard_normal(pl.shape) * params.shadow_sigma_db
    rx = received_power_matrix(pl, shadow, topology)
    return pl, shadow, rx, sinr_matrix(rx, topology, params)


def interference_classes(topology: Topology, model: str) -> list[np.ndarray]:
    """Groups of cells that interfere with each other."""
    if model == CO_TIER:
        return [np.flatnonzero(topology.is_macro), np.flatnonzero(~topology.is_macro)]
    return [np.flatnonzero(topology.group == g) for g in range(topology.num_macros)]


class FastLink:
    """Compiled equivalent of ``link_snapshot(...)[3]`` for one topology.

    Consumes the shadowing stream exactly like link_snapshot, so the two are
    interchangeable up to floating-point rounding.
    """

    def __init__(self, topology: Topology, params: PropagationParams):
        self.topology = topology
        self.params = params
        classes = [c for c in interference_classes(topology, params.interference_model) if len(c)]
        self.members = np.concatenate(classes).astype(np.int64) if classes else np.zeros(0, dtype=np.int64)
        self.offsets = np.cumsum([0] + [len(c) for c in classes]).astype(np.int64)
        self.walls = np.ascontiguousarray(topology.walls, dtype=float).reshape(-1, 4)
        self.sides = kernels.target_sides(topology.centers, self.walls)
        self.partition = kernels.side_partition(self.sides)

    def __call__(self, positions: np.ndarray, rng: np.random.Generator | None) -> np.ndarray:
        p, topo = self.params, self.topology
        shape = (len(positions), len(topo))
        if rng is None or p.shadow_sigma_db == 0.0:
            shadow = np.zeros(shape)
        else:
            shadow = rng.standard_normal(shape)
            shadow *= p.shadow_sigma_db
        return kernels.link_budget(np.ascontiguousarray(positions, dtype=float), topo.centers, topo.tx_dbm,
                                   topo.is_macro, self.walls, *self.partition, shadow, p.case == INDOOR,
                                   p.penetration_loss_db, p.wall_loss_db, p.noise_mw, self.members, self.offsets)


def fast_sinr(positions: np.ndarray, topology: Topology, params: PropagationParams,
              rng: np.random.Generator | None) -> np.ndarray:
    return FastLink(topology, params)(positions, rng)


def samples_from_matrices(pl: np.ndarray, shadow: np.ndarray, topology: Topology) -> dict:
    """Per-link LinkSample mapping, for the scalar sinr() path."""
    out = {}
    for i in range(pl.shape[0]):
        for j in range(pl.shape[1]):
            out[(i, j)] = LinkSample.build(pl[i, j], shadow[i, j], topology.tx_dbm[j])
    return out


def write_trace(path, positions, topology, pl, shadow, rx, eta):
    """Debug dump of one link-budget snapshot."""
    d = distance_matrix(positions, topology)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["user", "cell", "d_m", "pl_db", "shadow_db", "rx_dbm", "sinr_linear"])
        for i in range(pl.shape[0]):
            for j in range(pl.shape[1]):
                w.writerow([i, j, f"{d[i, j]:.9g}", f"{pl[i, j]:.9g}", f"{shadow[i, j]:.9g}",
                            f"{mw_to_dbm(rx[i, j]):.9g}", f"{eta[i, j]:.9g}"])


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


def linear_to_db(x: float) -> float:
    return 10.0 * math.log10(x)
