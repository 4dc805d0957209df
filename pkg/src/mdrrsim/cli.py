"""Command line entry point: run, sweep, validate and list bundled scenarios.

Exit codes: 0 success, 1 usage error, 2 scenario error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import logging
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Optional, Sequence

from . import __version__
from .core import TICKS_PER_SECOND, ConfigurationError
from .metrics import all_flow_metrics, fairness_index, station_mean_delay, station_throughput, windowed
from .scenario import (
    ScenarioError,
    apply_overrides,
    build_config,
    bundled_scenarios,
    check_key,
    load_raw,
    parse_value,
    set_key,
)
from .sim import SimConfig, SimResult, run

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SCENARIO = 2
EXIT_RUNTIME = 3

OUTPUT_ENV = "MDRRSIM_OUTPUT"
DEFAULT_OUTPUT = "mdrrsim-out"

# Bump whenever a column is added, removed, renamed or reordered.
CSV_SCHEMA_VERSION = 1

FLOW_COLUMNS = [
    "flow_id",
    "station_id",
    "service_class",
    "class_name",
    "scheduled",
    "distance_m",
    "mean_cinr_db",
    "final_profile",
    "generated_packets",
    "delivered_packets",
    "dropped_packets",
    "queued_packets",
    "delivered_bits",
    "throughput_bps",
    "mean_delay_s",
    "jitter_s",
    "rfc3550_jitter_s",
    "loss_ratio",
]
FRAME_COLUMNS = ["frame", "start_s", "symbols_budget", "symbols_used", "packets", "bytes", "backlog_packets"]
WEIGHT_COLUMNS = ["frame", "flow_id", "station_id", "reported_cinr_db", "profile", "weight", "quantum_bytes"]
WINDOW_COLUMNS = ["start_s", "end_s", "flow_id", "throughput_bps", "delivered_packets", "mean_delay_s"]
SWEEP_COLUMNS = ["parameter", "value"] + FLOW_COLUMNS


class UsageError(Exception):
    pass


class RuntimeFailure(Exception):
    pass


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _csv(columns: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def flow_rows(result: SimResult) -> list[list[Any]]:
    cfg = result.config
    stations = {s.station_id: s for s in cfg.stations}
    names = {f.flow_id: f.class_name for f in cfg.flows}
    rows = []
    for m in all_flow_metrics(result):
        rows.append([
            m.flow_id,
            m.station_id,
            m.service_class,
            names[m.flow_id],
            m.scheduled,
            stations[m.station_id].distance_m,
            result.mean_cinr(m.station_id),
            cfg.profiles[result.final_profile(m.station_id)].name,
            m.generated_packets,
            m.delivered_packets,
            m.dropped_packets,
            m.queued_packets,
            m.delivered_bits,
            m.throughput_bps,
            m.mean_delay_s,
            m.jitter_s,
            m.rfc3550_jitter_s,
            m.loss_ratio,
        ])
    return rows


def render_reports(result: SimResult) -> dict[str, str]:
    """File name to file contents for every report of one run."""
    frames = [
        [f.index, f.start_tick / TICKS_PER_SECOND, f.symbols_budget, f.symbols_used, f.packets, f.bytes, f.backlog]
        for f in result.frames
    ]
    weights = [
        [w.frame, w.flow_id, w.station_id, w.reported_cinr_db, w.profile, w.weight, w.quantum]
        for w in result.weights
    ]
    windows = [
        [w.start_s, w.end_s, w.flow_id, w.throughput_bps, w.delivered_packets, w.mean_delay_s]
        for w in windowed(result)
    ]
    return {
        "flows.csv": _csv(FLOW_COLUMNS, flow_rows(result)),
        "frames.csv": _csv(FRAME_COLUMNS, frames),
        "weights.csv": _csv(WEIGHT_COLUMNS, weights),
        "windows.csv": _csv(WINDOW_COLUMNS, windows),
        "summary.txt": render_summary(result),
    }


def render_summary(result: SimResult) -> str:
    cfg = result.config
    sc = cfg.scheduler
    lines = [
        f"mdrrsim {__version__}, csv schema {CSV_SCHEMA_VERSION}",
        f"duration_s {result.duration_s!r}  seed {cfg.seed}  load_factor {cfg.load_factor!r}",
        f"scheduler {sc.discipline.value} priority_mode {sc.priority_mode.value} "
        f"drr_mode {sc.drr_mode.value} weight_formula {sc.weight_formula.value} low_class {sc.low_discipline.value}",
        "",
        f"{'station':<12} {'distance_m':>10} {'cinr_db':>8} {'profile':<12} {'throughput_bps':>15} {'mean_delay_ms':>13}",
    ]
    throughputs = []
    for st in cfg.stations:
        tput = station_throughput(result, st.station_id)
        throughputs.append(tput)
        delay = station_mean_delay(result, st.station_id)
        cinr = result.mean_cinr(st.station_id)
        profile = cfg.profiles[result.final_profile(st.station_id)].name
        lines.append(
            f"{st.station_id:<12} {st.distance_m:>10.1f} "
            f"{'-' if cinr is None else format(cinr, '.2f'):>8} {profile:<12} {tput:>15.1f} "
            f"{'-' if delay is None else format(delay * 1e3, '.3f'):>13}"
        )
    lines.append("")
    try:
        lines.append(f"jain_fairness {fairness_index(throughputs):.6f}")
    except ValueError:
        lines.append("jain_fairness -")
    generated = sum(r.generated for r in result.flows.values())
    delivered = sum(r.delivered for r in result.flows.values())
    dropped = sum(r.dropped for r in result.flows.values())
    queued = sum(r.queued for r in result.flows.values())
    lines.append(f"packets generated {generated} delivered {delivered} dropped {dropped} queued {queued}")
    for stall in result.stalls:
        lines.append(f"stall: {stall}")
    return "\n".join(lines) + "\n"


def write_reports(result: SimResult, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in render_reports(result).items():
        (out_dir / name).write_text(text, encoding="utf-8", newline="")


def _load(scenario: str, overrides: Sequence[str], seed: Optional[int]) -> tuple[dict, SimConfig]:
    try:
        raw = load_raw(scenario)
    except FileNotFoundError as exc:
        raise ScenarioError(str(exc)) from None
    except OSError as exc:
        raise ScenarioError(f"cannot read {scenario}: {exc.strerror}") from None
    overrides = list(overrides)
    if seed is not None:
        overrides.append(f"sim.seed={seed}")
    apply_overrides(raw, overrides)
    return raw, build_config(raw)


def _execute(config: SimConfig, out_dir: Path) -> SimResult:
    try:
        result = run(config)
    except ConfigurationError as exc:
        raise RuntimeFailure(str(exc)) from None
    try:
        write_reports(result, out_dir)
    except OSError as exc:
        raise RuntimeFailure(f"cannot write reports to {out_dir}: {exc.strerror or exc}") from None
    return result


def _report(exc: Exception) -> int:
    if isinstance(exc, UsageError):
        print(f"mdrrsim: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if isinstance(exc, ScenarioError):
        print(f"mdrrsim: scenario error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    print(f"mdrrsim: error: {exc}", file=sys.stderr)
    return EXIT_RUNTIME


def default_output() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, DEFAULT_OUTPUT))


def run_command(
    scenario: str,
    output: Optional[Path] = None,
    overrides: Sequence[str] = (),
    seed: Optional[int] = None,
) -> int:
    out_dir = Path(output) if output is not None else default_output()
    try:
        _, config = _load(scenario, overrides, seed)
        result = _execute(config, out_dir)
    except (ScenarioError, RuntimeFailure) as exc:
        return _report(exc)
    sys.stdout.write(render_summary(result))
    return EXIT_OK


def _value_dir(parameter: str, value: Any) -> str:
    text = _cell(value) if not isinstance(value, list) else "_".join(_cell(v) for v in value)
    return re.sub(r"[^A-Za-z0-9._=-]", "_", f"{parameter}={text}")


def _sweep_one(job: tuple[SimConfig, str]) -> list[list[Any]]:
    config, out_dir = job
    return flow_rows(_execute(config, Path(out_dir)))


def sweep_command(
    scenario: str,
    parameter: str,
    values: Sequence[str],
    output: Optional[Path] = None,
    overrides: Sequence[str] = (),
    seed: Optional[int] = None,
    jobs: int = 1,
) -> int:
    """Run the scenario once per value of ``parameter`` and merge the flow tables."""
    out_dir = Path(output) if output is not None else default_output()
    try:
        if not values:
            raise UsageError("sweep needs at least one value")
        if jobs < 1:
            raise UsageError("--jobs must be >= 1")
        raw, _ = _load(scenario, overrides, seed)
        try:
            check_key(raw, parameter)
        except ScenarioError as exc:
            raise UsageError(f"not a sweepable parameter: {exc}") from None
        parsed = [parse_value(v) for v in values]
        dirs = [_value_dir(parameter, v) for v in parsed]
        if len(set(dirs)) != len(dirs):
            raise UsageError("sweep values must be distinct")
        configs = []
        for value in parsed:
            variant = copy.deepcopy(raw)
            set_key(variant, parameter, value)
            configs.append(build_config(variant))
        job_list = [(c, str(out_dir / d)) for c, d in zip(configs, dirs)]
        if jobs > 1 and len(job_list) > 1:
            with ProcessPoolExecutor(max_workers=min(jobs, len(job_list))) as pool:
                tables = list(pool.map(_sweep_one, job_list))
        else:
            tables = [_sweep_one(j) for j in job_list]
        rows = [[parameter, value, *row] for value, table in zip(values, tables) for row in table]
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "sweep.csv").write_text(_csv(SWEEP_COLUMNS, rows), encoding="utf-8", newline="")
    except (UsageError, ScenarioError, RuntimeFailure) as exc:
        return _report(exc)
    except OSError as exc:
        return _report(RuntimeFailure(f"cannot write reports to {out_dir}: {exc.strerror or exc}"))
    print(f"wrote {len(values)} runs and sweep.csv to {out_dir}")
    return EXIT_OK


def validate_command(scenario: str, overrides: Sequence[str] = (), seed: Optional[int] = None) -> int:
    try:
        _, config = _load(scenario, overrides, seed)
    except ScenarioError as exc:
        return _report(exc)
    flows = len(config.flows)
    print(f"{scenario}: ok ({len(config.stations)} stations, {flows} flows)")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse exits with 2 by default
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mdrrsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log warnings and progress")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p: argparse.ArgumentParser, outputs: bool = True) -> None:
        p.add_argument("scenario", help="scenario file or bundled scenario name")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="set a dotted scenario key, e.g. scheduler.discipline=RR (repeatable)")
        p.add_argument("--seed", type=int, help="replace sim.seed")
        if outputs:
            p.add_argument("--output", "-o", type=Path,
                           help=f"output directory (default: ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")
            p.add_argument("--format", choices=["csv"], default="csv", help="report format")

    common(sub.add_parser("run", help="run one scenario and write reports"))
    sweep = sub.add_parser("sweep", help="run a scenario once per parameter value")
    common(sweep)
    sweep.add_argument("parameter", help="dotted scenario key to vary, e.g. flows.ms2.min_reserved")
    sweep.add_argument("values", nargs="+", help="values, parsed as TOML literals")
    sweep.add_argument("--jobs", "-j", type=int, default=1, help="parallel runs")
    common(sub.add_parser("validate", help="load and validate a scenario"), outputs=False)
    sub.add_parser("list-scenarios", help="list bundled scenarios")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    if args.command == "run":
        return run_command(args.scenario, args.output, args.override, args.seed)
    if args.command == "sweep":
        return sweep_command(args.scenario, args.parameter, args.values, args.output,
                             args.override, args.seed, args.jobs)
    if args.command == "validate":
        return validate_command(args.scenario, args.override, args.seed)
    for name in bundled_scenarios():
        print(name)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
