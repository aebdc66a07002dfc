"""Command-line front end.

    python -m phantomho simulate CONFIG
    python -m phantomho sweep CONFIG --axis num_users --values 50 100 150
    python -m phantomho analyze PARAMS [--csv]
    python -m phantomho preset {fig4_indoor,fig4_outdoor,fig5,fig6,baseline_compare,analysis_demo}
    python -m phantomho validate CONFIG

Exit status: 0 success, 1 configuration or usage error, 2 runtime or numeric error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as _dt
import io
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from . import __version__
from . import analysis
from .config import build_config, config_values, dump_config, load_config, parse_config_text, provenance_lines
from .engine import SWEEP_AXES, MetricsReport, SimConfig, events_csv, metrics_csv, run, trace_csv, with_axis
from .scenario import ConfigError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


@dataclass(frozen=True)
class ExperimentPreset:
    """A named experiment: shared overrides, then one run per case and axis value."""

    name: str
    base: dict = field(default_factory=dict)
    cases: tuple = ({},)  # extra overrides, one group of runs each
    axis: str | None = None
    values: tuple = ()
    output: str = ""  # summary CSV file name

    def points(self, seed: int | None = None) -> list[tuple[str, SimConfig]]:
        """(label, resolved config) for every run, in output order."""
        out = []
        for case in self.cases:
            values = {**self.base, **case}
            if seed is not None:
                values["seed"] = seed
            cfg = build_config(values)
            label = "-".join(str(v) for v in case.values()) or self.name
            if self.axis is None:
                out.append((label, cfg))
            else:
                for v in self.values:
                    out.append((f"{label}-{self.axis}={v}" if case else f"{self.axis}={v}", with_axis(cfg, self.axis, v)))
        return out


USERS = tuple(range(50, 501, 50))
HYSTERESIS = (0.0, 0.05, 0.1, 0.2, 0.4)
PRESETS: dict[str, ExperimentPreset] = {
    p.name: p
    for p in (
        ExperimentPreset("fig4_indoor", {"case": "indoor"}, axis="num_users", values=USERS, output="fig4_indoor.csv"),
        ExperimentPreset("fig4_outdoor", {"case": "outdoor"}, axis="num_users", values=USERS,
                         output="fig4_outdoor.csv"),
        ExperimentPreset("fig5", {"num_users": 200}, cases=({"case": "indoor"}, {"case": "outdoor"}),
                         axis="dwell_toggle", values=("on", "off"), output="fig5.csv"),
        ExperimentPreset("fig6", {"case": "indoor", "num_users": 200}, axis="hysteresis", values=HYSTERESIS,
                         output="fig6.csv"),
        ExperimentPreset("baseline_compare", {"num_users": 200},
                         cases=({"case": "indoor", "mode": "proposed"}, {"case": "indoor", "mode": "baseline"},
                                {"case": "outdoor", "mode": "proposed"}, {"case": "outdoor", "mode": "baseline"}),
                         output="baseline_compare.csv"),
        ExperimentPreset("analysis_demo", output="analysis.csv"),
    )
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="phantomho", description="Improved phantom cell handover simulator and analysis.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def outputs(sp):
        sp.add_argument("--format", choices=("csv", "tsv"), default="csv", help="delimiter of written tables")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--out", default="runs", help="parent directory of run directories (default: runs)")

    sp = sub.add_parser("simulate", help="run one configuration")
    sp.add_argument("config")
    sp.add_argument("--trace", action="store_true", help="also write trace.csv with per-step state labels")
    outputs(sp)

    sp = sub.add_parser("sweep", help="run one configuration over the values of one axis")
    sp.add_argument("config")
    sp.add_argument("--axis", required=True, choices=SWEEP_AXES)
    sp.add_argument("--values", required=True, nargs="+")
    outputs(sp)

    sp = sub.add_parser("analyze", help="closed-form probabilities from a parameter file")
    sp.add_argument("params")
    sp.add_argument("--csv", action="store_true", help="machine-readable quantity,value rows")

    sp = sub.add_parser("preset", help="run a named experiment")
    sp.add_argument("name", choices=sorted(PRESETS))
    outputs(sp)

    sp = sub.add_parser("validate", help="check a config file and print it fully resolved")
    sp.add_argument("config")
    return p


# ---------------------------------------------------------------------------
# output helpers


def make_run_dir(parent, name: str) -> Path:
    stamp = _dt.datetime.now().strftime("%Y%m%d-%H%M%S")
    base = Path(parent) / f"{stamp}-{name}"
    path, k = base, 1
    while path.exists():
        k += 1
        path = Path(f"{base}-{k}")
    path.mkdir(parents=True)
    return path


def _table(rows: Sequence[Sequence], header: Sequence[str], fmt: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t" if fmt == "tsv" else ",", lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([f"{v:.9g}" if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _events_table(report: MetricsReport, fmt: str) -> str:
    """Event log with a leading replication column."""
    sep = "\t" if fmt == "tsv" else ","
    lines = [sep.join(["replication", "t", "user", "kind", "source", "target"])]
    for k, rep in enumerate(report.replications):
        prefix = f"{k}{sep}"
        lines.extend(prefix + sep.join(ev.csv_row()) for ev in rep.events)
    return "\n".join(lines) + "\n"


def write_run(directory: Path, report: MetricsReport, fmt: str, trace: bool = False):
    directory.mkdir(parents=True, exist_ok=True)
    cfg = report.config
    (directory / "config.yaml").write_text(dump_config(cfg))
    (directory / f"events.{fmt}").write_text(_events_table(report, fmt))
    header = [f"phantomho {__version__}", f"seed = {cfg.seed} (replication i uses seed + i)",
              *provenance_lines(cfg)]
    (directory / f"metrics.{fmt}").write_text(metrics_csv(report, header, fmt))
    (directory / "summary.txt").write_text(summary_text(report))
    if trace:
        (directory / f"trace.{fmt}").write_text(trace_csv(report, fmt))


def summary_text(report: MetricsReport) -> str:
    lines = [
        f"replications: {len(report.replications)}",
        f"avg_handover_per_user: {report.avg_handover_per_user:.9g}",
        f"avg_handover_per_run: {report.avg_handover_per_run:.9g}",
        f"std_handover_per_run: {report.std_handover_per_run:.9g}",
        f"drops_per_run: {report.drops:.9g}",
        f"unserved_user_steps_per_run: {report.unserved_user_steps:.9g}",
        "counts_per_run:",
        *(f"  {k}: {v:.9g}" for k, v in report.counts.items()),
        "occupancy:",
        *(f"  {name}: {v:.9g}" for name, v in zip(("S1", "S2", "S3"), report.occupancy)),
    ]
    return "\n".join(lines) + "\n"


def _apply_seed(cfg: SimConfig, seed: int | None) -> SimConfig:
    if seed is None:
        return cfg
    return dataclasses.replace(cfg, seed=seed, scenario=dataclasses.replace(cfg.scenario, seed=seed))


# ---------------------------------------------------------------------------
# analysis parameter files


def load_analysis_params(path) -> analysis.AnalysisParams:
    text = Path(path).read_text() if path is not None else ""
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from None
    kinds = {f.name: f.type for f in dataclasses.fields(analysis.AnalysisParams)}
    values = {}
    if root is not None:
        if not isinstance(root, yaml.MappingNode):
            raise ConfigError(f"{path}: top level must be a key: value mapping")
        unknown = []
        for knode, vnode in root.value:
            line = knode.start_mark.line + 1
            if knode.value not in kinds:
                unknown.append(f"{knode.value!r} (line {line})")
                continue
            value = yaml.safe_load(yaml.serialize(vnode))
            want_int = kinds[knode.value] in ("int", int)
            if isinstance(value, bool) or not isinstance(value, (int, float)) or (want_int and not isinstance(value, int)):
                raise ConfigError(f"{path}: line {line}: key {knode.value!r} expects "
                                  f"{'an integer' if want_int else 'a number'}, got {value!r}")
            values[knode.value] = value if want_int else float(value)
        if unknown:
            raise ConfigError(f"{path}: unknown key(s): {', '.join(unknown)}")
    return analysis.AnalysisParams(**values)


def analysis_rows(result: dict) -> list[tuple[str, object]]:
    rows = []
    for key, value in result.items():
        if key == "P":
            for i in range(3):
                for j in range(3):
                    rows.append((f"P[{i + 1}{j + 1}]", float(value[i, j])))
        elif key == "stationary":
            for i, name in enumerate(analysis.STATE_LABELS):
                rows.append((f"pi_{name}", float(value[i])))
        else:
            rows.append((key, value if isinstance(value, bool) else float(value)))
    return rows


def analysis_table(result: dict) -> str:
    out = ["quantity                   value"]
    for key, value in analysis_rows(result):
        if key.startswith("P[") or key.startswith("pi_"):
            continue
        out.append(f"{key:<26} {value if isinstance(value, bool) else format(value, '.9g')}")
    out.append("transition matrix (column j = from state j):")
    P = result["P"]
    out.append("        " + "".join(f"{n:>14}" for n in analysis.STATE_LABELS))
    for i, name in enumerate(analysis.STATE_LABELS):
        out.append(f"  {name:<6}" + "".join(f"{P[i, j]:>14.9g}" for j in range(3)))
    out.append("stationary distribution:")
    for name, v in zip(analysis.STATE_LABELS, result["stationary"]):
        out.append(f"  {name:<6}{v:>14.9g}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args) -> int:
    cfg = _apply_seed(load_config(args.config), args.seed)
    if args.trace:
        cfg = dataclasses.replace(cfg, record_trace=True)
    report = run(cfg)
    directory = make_run_dir(args.out, Path(args.config).stem)
    write_run(directory, report, args.format, trace=cfg.record_trace)
    print(summary_text(report), end="")
    print(f"outputs: {directory}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _apply_seed(load_config(args.config), args.seed)
    points = [(f"{args.axis}={v}", with_axis(cfg, args.axis, v)) for v in args.values]
    directory = make_run_dir(args.out, f"{Path(args.config).stem}-{args.axis}")
    rows = _run_points(points, directory, args.format)
    text = _table([(label.split("=", 1)[1], r.avg_handover_per_run, r.std_handover_per_run,
                    r.avg_handover_per_user) for label, r in rows],
                  [args.axis, "avg_handover", "std", "avg_handover_per_user"], args.format)
    (directory / f"sweep.{args.format}").write_text(text)
    print(text, end="")
    print(f"outputs: {directory}")
    return EXIT_OK


def _run_points(points, directory: Path, fmt: str):
    out = []
    for label, cfg in points:
        report = run(cfg)
        write_run(directory / label, report, fmt)
        out.append((label, report))
    return out


def run_preset(name: str, directory: Path, fmt: str = "csv", seed: int | None = None) -> str:
    """Run a preset into ``directory``; returns the summary table text."""
    preset = PRESETS[name]
    if name == "analysis_demo":
        result = analysis.evaluate(analysis.AnalysisParams())
        text = _table(analysis_rows(result), ["quantity", "value"], fmt)
        (directory / preset.output.replace(".csv", f".{fmt}")).write_text(text)
        return analysis_table(result)
    results = _run_points(preset.points(seed), directory, fmt)
    if name in ("fig4_indoor", "fig4_outdoor"):
        header = ["num_users", "avg_handover", "std", "avg_handover_per_user"]
        rows = [(r.config.scenario.num_users, r.avg_handover_per_run, r.std_handover_per_run,
                 r.avg_handover_per_user) for _, r in results]
    elif name == "fig5":
        header = ["case", "dwell_check", "avg_handover", "std"]
        rows = [(r.config.scenario.case, "on" if r.config.policy.dwell_check_enabled else "off",
                 r.avg_handover_per_run, r.std_handover_per_run) for _, r in results]
    elif name == "fig6":
        header = ["hysteresis", "avg_handover", "std"]
        rows = [(r.config.policy.H_m, r.avg_handover_per_run, r.std_handover_per_run) for _, r in results]
    else:
        header = ["case", "mode", "avg_handover", "std", "ratio_to_baseline"]
        base = {r.config.scenario.case: r.avg_handover_per_run for _, r in results
                if r.config.policy.mode == "baseline"}
        rows = [(r.config.scenario.case, r.config.policy.mode, r.avg_handover_per_run, r.std_handover_per_run,
                 r.avg_handover_per_run / base[r.config.scenario.case] if base[r.config.scenario.case] else float("nan"))
                for _, r in results]
    text = _table(rows, header, fmt)
    (directory / preset.output.replace(".csv", f".{fmt}")).write_text(text)
    return text


def cmd_preset(args) -> int:
    directory = make_run_dir(args.out, args.name)
    text = run_preset(args.name, directory, args.format, args.seed)
    print(text, end="")
    print(f"outputs: {directory}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    result = analysis.evaluate(load_analysis_params(args.params))
    if args.csv:
        print(_table(analysis_rows(result), ["quantity", "value"], "csv"), end="")
    else:
        print(analysis_table(result), end="")
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    print(dump_config(cfg), end="")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "sweep": cmd_sweep, "analyze": cmd_analyze, "preset": cmd_preset,
            "validate": cmd_validate}


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = _parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (analysis.NumericError, ArithmeticError, RuntimeError, AssertionError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
