"""Strict flat key-value configuration files (YAML syntax).

One top-level mapping; every key is listed in SCHEMA. Unknown keys are an
error, never ignored. Keys left out (or set to null where allowed) take the
Table 1 value for the chosen case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

import yaml

from .attachment import BASELINE, PROPOSED, HandoverPolicy
from .engine import BACKENDS, SimConfig
from .radio import CO_TIER, PAPER_LITERAL, PropagationParams
from .scenario import INDOOR, OUTDOOR, REGION_BUILDINGS, REGION_MACROS, ConfigError, ScenarioConfig


@dataclass(frozen=True)
class Key:
    name: str
    section: str  # scenario | propagation | policy | sim
    kind: str  # int | float | bool | str | pair
    unit: str
    provenance: str
    choices: tuple = ()
    nullable: bool = False
    aliases: tuple = ()


T1 = "Table 1"
INV = "invented"
SCHEMA: tuple[Key, ...] = (
    Key("case", "scenario", "str", "-", f"{T1}: indoor / outdoor columns", (INDOOR, OUTDOOR)),
    Key("num_macros", "scenario", "int", "cells", f"{T1}: number of Macrocells M = 2", aliases=("M",)),
    Key("phantoms_per_macro", "scenario", "int", "cells", f"{T1}: phantoms per Macrocell N = 12 indoor, 8 outdoor",
        nullable=True, aliases=("N",)),
    Key("num_users", "scenario", "int", "users", f"{INV}: user count U, swept by the fig4 presets, default 100", aliases=("U",)),
    Key("speed_range", "scenario", "pair", "m/s", f"{T1}: user speed [0, 4.1] indoor, [0, 8.3] outdoor",
        nullable=True),
    Key("macro_radius", "scenario", "float", "m", f"{T1}: Macrocell radius R = 1000", aliases=("R",)),
    Key("phantom_radius", "scenario", "float", "m", f"{T1}: phantom radius r = 50 indoor, 250 outdoor",
        nullable=True, aliases=("r",)),
    Key("macro_spacing", "scenario", "float", "m", f"{INV}: macro center distance, null = tangent discs (2R)",
        nullable=True),
    Key("macro_tx_dbm", "scenario", "float", "dBm", f"{T1}: Macrocell transmit power 43"),
    Key("phantom_tx_dbm", "scenario", "float", "dBm", f"{T1}: phantom transmit power 23 indoor, 31.5 outdoor",
        nullable=True),
    Key("macro_capacity", "scenario", "int", "users", f"{INV}: N_m-MAX, not given in {T1}, default 1000",
        aliases=("N_m_max",)),
    Key("phantom_capacity", "scenario", "int", "users", f"{T1}: max users per phantom N_ph-MAX = 10",
        aliases=("N_ph_max",)),
    Key("open_probability", "scenario", "float", "-", "access probability 1/2 (analysis section)"),
    Key("subscriber_fraction", "scenario", "float", "-", f"{INV}: closed-cell subscriber share 0.1"),
    Key("apartment_pitch", "scenario", "float", "m", f"{INV}: indoor grid pitch, null = 2r", nullable=True),
    Key("ring_fractions", "scenario", "pair", "-", f"{INV}: outdoor ring radii as fractions of R (0.35, 0.72)"),
    Key("region", "scenario", "str", "-", f"{INV}: user region, buildings indoor, macros outdoor",
        (REGION_MACROS, REGION_BUILDINGS), nullable=True),
    Key("penetration_loss_db", "propagation", "float", "dB", f"{T1}: outdoor penetration loss L_ow = 10",
        aliases=("L_ow",)),
    Key("wall_loss_db", "propagation", "float", "dB per wall", f"{T1}: wall partition loss w = 5", aliases=("w",)),
    Key("shadow_sigma_db", "propagation", "float", "dB", f"{T1}: shadowing variance 6 dB, read as sigma = 6"),
    Key("noise_power_dbm", "propagation", "float", "dBm", f"{T1}: noise power -170"),
    Key("interference_model", "propagation", "str", "-", f"{INV}: co_tier (same band) or paper_literal",
        (CO_TIER, PAPER_LITERAL)),
    Key("eta_m_th", "policy", "float", "linear", f"{T1}: Macrocell SINR threshold 0.40"),
    Key("eta_ph_th", "policy", "float", "linear", f"{T1}: phantom SINR threshold 0.45"),
    Key("H_m", "policy", "float", "linear", f"{T1}: hysteresis margin 0.1"),
    Key("H_ph", "policy", "float", "linear", f"{T1}: hysteresis margin 0.1"),
    Key("T_expected", "policy", "float", "s", f"{T1}: dwell time threshold 5"),
    Key("dwell_check_enabled", "policy", "bool", "-", f"{INV}: dwell gate toggle, on"),
    Key("mode", "policy", "str", "-", f"{INV}: proposed or baseline comparator", (PROPOSED, BASELINE)),
    Key("dt", "sim", "float", "s", f"{INV}: step 1"),
    Key("duration", "sim", "float", "s", f"{INV}: 1000"),
    Key("replications", "sim", "int", "runs", f"{INV}: 10"),
    Key("seed", "sim", "int", "-", f"{INV}: base seed 1, replication i uses seed + i"),
    Key("record_trace", "sim", "bool", "-", f"{INV}: write trace.csv, off"),
    Key("backend", "sim", "str", "-", f"{INV}: numba kernels or the python reference", BACKENDS),
)
BY_NAME = {k.name: k for k in SCHEMA}
ALIASES = {a: k.name for k in SCHEMA for a in k.aliases}


def _coerce(key: Key, value: Any, line: int, source: str = "<config>"):
    where = f"{source}: line {line}: key {key.name!r}"
    if value is None:
        if key.nullable:
            return None
        raise ConfigError(f"{where} may not be null")
    if key.kind == "bool":
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{where} expects true/false, got {value!r}")
    if key.kind == "int":
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        raise ConfigError(f"{where} expects an integer, got {value!r}")
    if key.kind == "float":
        if isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value):
            return float(value)
        raise ConfigError(f"{where} expects a number, got {value!r}")
    if key.kind == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{where} expects a string, got {value!r}")
        if key.choices and value not in key.choices:
            raise ConfigError(f"{where} must be one of {', '.join(key.choices)}, got {value!r}")
        return value
    if key.kind == "pair":
        ok = (isinstance(value, list) and len(value) == 2
              and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value))
        if not ok:
            raise ConfigError(f"{where} expects a two-number list like [0, 4.1], got {value!r}")
        return tuple(float(v) for v in value)
    raise AssertionError(key.kind)


def parse_config_text(text: str, source: str = "<config>") -> dict[str, Any]:
    """Validated {canonical key: value} from YAML text, with line-numbered errors."""
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{source}: not valid YAML: {exc}") from None
    if root is None:
        return {}
    if not isinstance(root, yaml.MappingNode):
        raise ConfigError(f"{source}: top level must be a key: value mapping")
    out: dict[str, Any] = {}
    unknown = []
    for knode, vnode in root.value:
        name = knode.value
        line = knode.start_mark.line + 1
        canon = ALIASES.get(name, name)
        if canon not in BY_NAME:
            unknown.append(f"{name!r} (line {line})")
            continue
        if canon in out:
            raise ConfigError(f"{source}: line {line}: key {canon!r} given twice")
        try:
            value = yaml.safe_load(yaml.serialize(vnode))
        except yaml.YAMLError as exc:
            raise ConfigError(f"{source}: line {line}: {exc}") from None
        out[canon] = _coerce(BY_NAME[canon], value, line, source)
    if unknown:
        raise ConfigError(f"{source}: unknown key(s): {', '.join(unknown)}")
    return out


def build_config(values: dict[str, Any]) -> SimConfig:
    """SimConfig from canonical key values; absent keys take defaults."""
    unknown = set(values) - set(BY_NAME)
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(sorted(unknown))}")
    parts: dict[str, dict] = {"scenario": {}, "propagation": {}, "policy": {}, "sim": {}}
    for name, value in values.items():
        parts[BY_NAME[name].section][name] = value
    scen_kw = parts["scenario"]
    if "seed" in parts["sim"]:
        scen_kw["seed"] = parts["sim"]["seed"]
    scenario = ScenarioConfig(**scen_kw)
    propagation = PropagationParams(case=scenario.case, **parts["propagation"])
    try:
        policy = HandoverPolicy(**parts["policy"])
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return SimConfig(scenario=scenario, propagation=propagation, policy=policy, **parts["sim"])


def load_config(path) -> SimConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return build_config(parse_config_text(text, str(path)))


def config_values(config: SimConfig) -> dict[str, Any]:
    """Resolved canonical key values of a SimConfig, in schema order."""
    objs = {"scenario": config.scenario, "propagation": config.propagation, "policy": config.policy,
            "sim": config}
    out = {}
    for key in SCHEMA:
        value = getattr(objs[key.section], key.name)
        out[key.name] = list(value) if isinstance(value, tuple) else value
    return out


def dump_config(config: SimConfig) -> str:
    """Fully resolved config as YAML; reloading it gives an equal SimConfig."""
    lines = []
    for name, value in config_values(config).items():
        key = BY_NAME[name]
        text = yaml.safe_dump({name: value}, default_flow_style=True, width=1000).strip()[1:-1]
        lines.append(f"{text}  # {key.unit}; {key.provenance}")
    return "\n".join(lines) + "\n"


def provenance_lines(config: SimConfig) -> list[str]:
    """One `key = value [unit] (source)` line per key, for CSV headers."""
    out = []
    for name, value in config_values(config).items():
        key = BY_NAME[name]
        out.append(f"{name} = {value} [{key.unit}] ({key.provenance})")
    return out


def check_field_coverage():
    """Every schema key maps onto a real dataclass field (used by the tests)."""
    names = {
        "scenario": {f.name for f in fields(ScenarioConfig)},
        "propagation": {f.name for f in fields(PropagationParams)},
        "policy": {f.name for f in fields(HandoverPolicy)},
        "sim": {f.name for f in fields(SimConfig)},
    }
    return [k.name for k in SCHEMA if k.name not in names[k.section]]
