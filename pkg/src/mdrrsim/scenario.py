"""Scenario files: TOML documents describing one simulation run.

Sections: ``[frame]`` (required), ``[channel]``, ``[scheduler]``, ``[sim]``,
``[[profiles]]``, ``[stations.<id>]`` and ``[flows.<id>]``. Every key has a
default that matches the voice-load uplink scenario; unknown keys are errors.
"""

from __future__ import annotations

import copy
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Optional, Sequence, Union

import tomlkit
from tomlkit.exceptions import TOMLKitError

from .amc import DEFAULT_UL_PROFILES, BurstProfile, ChannelParams, ProfileSet
from .core import ConfigurationError, FrameConfig, QoSParams, ServiceClass
from .disciplines import Discipline, DrrMode, PriorityMode
from .sim import (
    FlowConfig,
    Pattern,
    SchedulerConfig,
    SimConfig,
    StationConfig,
    TrafficSource,
    WeightFormula,
)

SCENARIO_SUFFIX = ".scn"


class ScenarioError(Exception):
    """Base class for problems with a scenario file."""


class ScenarioParseError(ScenarioError):
    pass


class ScenarioValidationError(ScenarioError):
    pass


_DEFAULT_FRAME = FrameConfig()
_DEFAULT_CHANNEL = ChannelParams()

FRAME_KEYS = {
    "frame_duration_s": (float, _DEFAULT_FRAME.frame_duration_s),
    "symbols_per_frame": (int, _DEFAULT_FRAME.symbols_per_frame),
    "data_subcarriers": (int, _DEFAULT_FRAME.data_subcarriers),
    "mtu_bytes": (int, _DEFAULT_FRAME.mtu_bytes),
    "symbol_duration_s": (float, _DEFAULT_FRAME.symbol_duration_s),
}
CHANNEL_KEYS = {
    "reference_cinr_db": (float, _DEFAULT_CHANNEL.reference_cinr_db),
    "reference_distance_m": (float, _DEFAULT_CHANNEL.reference_distance_m),
    "pathloss_exponent": (float, _DEFAULT_CHANNEL.pathloss_exponent),
    "noise_sigma_db": (float, _DEFAULT_CHANNEL.noise_sigma_db),
    "cqich_period_frames": (int, _DEFAULT_CHANNEL.cqich_period_frames),
}
SCHEDULER_KEYS = {
    "discipline": (str, "MDRR"),
    "priority_mode": (str, "strict"),
    "drr_mode": (str, "classic"),
    "weight_formula": (str, "cinr"),
    "low_class": (str, "RR"),
    "drr_quantum_bytes": (int, None),
}
SIM_KEYS = {
    "duration_s": (float, 100.0),
    "seed": (int, 1),
    "load_factor": (float, 1.0),
    "random_phase": (bool, False),
}
PROFILE_KEYS = {
    "name": (str, None),
    "modulation_bits": (int, None),
    "coding_rate": (str, None),
    "exit_db": (float, None),
    "entry_db": (float, None),
}
STATION_KEYS = {
    "distance_m": (float, None),
    "flows": (list, []),
}
FLOW_KEYS = {
    "class": (str, "rtPS"),
    "class_name": (str, "Silver_A"),
    "max_sustained": (float, 384000.0),
    "min_reserved": (float, 120000.0),
    "max_latency_s": (float, 0.03),
    "rate_bps": (float, 96000.0),
    "packet_bytes": (int, 240),
    "pattern": (str, "cbr"),
    "sizes": (list, []),
    "start_s": (float, 0.0),
    "stop_s": (float, None),
    "queue_capacity": (int, 100),
    "wrr_weight": (int, 1),
}
SECTIONS = {
    "frame": FRAME_KEYS,
    "channel": CHANNEL_KEYS,
    "scheduler": SCHEDULER_KEYS,
    "sim": SIM_KEYS,
}


def _typed(value: Any, kind: type, key: str) -> Any:
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ScenarioValidationError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ScenarioValidationError(f"{key}: expected an integer, got {value!r}")
        return value
    if kind is bool:
        if not isinstance(value, bool):
            raise ScenarioValidationError(f"{key}: expected true or false, got {value!r}")
        return value
    if kind is list:
        if not isinstance(value, list):
            raise ScenarioValidationError(f"{key}: expected an array, got {value!r}")
        return list(value)
    if not isinstance(value, str):
        raise ScenarioValidationError(f"{key}: expected a string, got {value!r}")
    return value


def _table(raw: Any, schema: dict, prefix: str) -> dict:
    if not isinstance(raw, dict):
        raise ScenarioValidationError(f"{prefix}: expected a table")
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ScenarioValidationError(f"{prefix}.{unknown[0]}: unknown key")
    out = {}
    for key, (kind, default) in schema.items():
        if key in raw:
            out[key] = _typed(raw[key], kind, f"{prefix}.{key}")
        else:
            out[key] = copy.copy(default)
    return out


def _require(values: dict, prefix: str, *keys: str) -> None:
    for key in keys:
        if values[key] is None:
            raise ScenarioValidationError(f"{prefix}.{key}: required")


def _enum(enum: type, text: str, key: str, parse: Optional[Callable] = None):
    try:
        if parse is not None:
            return parse(text)
        for member in enum:
            if member.value.lower() == text.lower():
                return member
    except ValueError:
        pass
    choices = ", ".join(m.value for m in enum)
    raise ScenarioValidationError(f"{key}: {text!r} is not one of {choices}")


def _fraction(text: str, key: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise ScenarioValidationError(f"{key}: {text!r} is not a rational number like \"3/4\"") from None


def _wrap(key: str, build: Callable):
    try:
        return build()
    except ConfigurationError as exc:
        msg = str(exc)
        raise ScenarioValidationError(msg if msg.startswith(key.split(".")[0]) else f"{key}: {msg}") from None


def build_config(raw: dict) -> SimConfig:
    """Validate a parsed scenario document and build the SimConfig it describes."""
    if not isinstance(raw, dict):
        raise ScenarioValidationError("scenario must be a table")
    if "frame" not in raw:
        raise ScenarioParseError("missing [frame] section")
    allowed = {*SECTIONS, "profiles", "stations", "flows"}
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ScenarioValidationError(f"{unknown[0]}: unknown section")
    sec = {name: _table(raw.get(name, {}), schema, name) for name, schema in SECTIONS.items()}

    f = sec["frame"]
    frame = _wrap("frame", lambda: FrameConfig(
        frame_duration_s=f["frame_duration_s"],
        symbols_per_frame=f["symbols_per_frame"],
        data_subcarriers=f["data_subcarriers"],
        mtu_bytes=f["mtu_bytes"],
        symbol_duration_s=f["symbol_duration_s"],
    ))
    c = sec["channel"]
    channel = _wrap("channel", lambda: ChannelParams(**c))

    s = sec["scheduler"]
    scheduler = SchedulerConfig(
        discipline=_enum(Discipline, s["discipline"], "scheduler.discipline"),
        priority_mode=_enum(PriorityMode, s["priority_mode"], "scheduler.priority_mode"),
        drr_mode=_enum(DrrMode, s["drr_mode"], "scheduler.drr_mode"),
        weight_formula=_enum(WeightFormula, s["weight_formula"], "scheduler.weight_formula"),
        low_discipline=_enum(Discipline, s["low_class"], "scheduler.low_class"),
        drr_quantum_bytes=s["drr_quantum_bytes"],
    )
    if scheduler.low_discipline not in (Discipline.RR, Discipline.MDRR):
        raise ScenarioValidationError("scheduler.low_class: must be RR or MDRR")

    if "profiles" in raw:
        rows = raw["profiles"]
        if not isinstance(rows, list) or not rows:
            raise ScenarioValidationError("profiles: expected a non-empty array of tables")
        built = []
        for i, row in enumerate(rows):
            key = f"profiles.{i}"
            p = _table(row, PROFILE_KEYS, key)
            _require(p, key, *PROFILE_KEYS)
            rate = _fraction(p["coding_rate"], f"{key}.coding_rate")
            built.append(_wrap(key, lambda p=p, rate=rate: BurstProfile(
                p["name"], p["modulation_bits"], rate, p["entry_db"], p["exit_db"]
            )))
        profiles = _wrap("profiles", lambda: ProfileSet(tuple(built)))
    else:
        profiles = DEFAULT_UL_PROFILES

    flows_raw = raw.get("flows", {})
    if not isinstance(flows_raw, dict):
        raise ScenarioValidationError("flows: expected a table of flow tables")
    flows: dict[str, FlowConfig] = {}
    for fid, row in flows_raw.items():
        flows[fid] = _build_flow(fid, _table(row, FLOW_KEYS, f"flows.{fid}"))

    if "stations" not in raw:
        raise ScenarioParseError("missing [stations] section")
    stations_raw = raw["stations"]
    if not isinstance(stations_raw, dict):
        raise ScenarioValidationError("stations: expected a table of station tables")
    stations = []
    used: dict[str, str] = {}
    for sid, row in stations_raw.items():
        key = f"stations.{sid}"
        st = _table(row, STATION_KEYS, key)
        _require(st, key, "distance_m")
        members = []
        for fid in st["flows"]:
            if fid not in flows:
                raise ScenarioValidationError(f"{key}.flows: undefined flow {fid!r}")
            if fid in used:
                raise ScenarioValidationError(f"{key}.flows: flow {fid!r} already belongs to {used[fid]}")
            used[fid] = sid
            members.append(flows[fid])
        stations.append(StationConfig(sid, st["distance_m"], tuple(members)))
    orphans = [fid for fid in flows if fid not in used]
    if orphans:
        raise ScenarioValidationError(f"flows.{orphans[0]}: not assigned to any station")

    m = sec["sim"]
    config = SimConfig(
        stations=tuple(stations),
        frame=frame,
        channel=channel,
        profiles=profiles,
        scheduler=scheduler,
        duration_s=m["duration_s"],
        seed=m["seed"],
        load_factor=m["load_factor"],
        random_phase=m["random_phase"],
    )
    try:
        config.validate()
    except ConfigurationError as exc:
        raise ScenarioValidationError(str(exc)) from None
    return config


def _build_flow(fid: str, v: dict) -> FlowConfig:
    key = f"flows.{fid}"
    cls = _enum(ServiceClass, v["class"], f"{key}.class", ServiceClass.parse)
    pattern = _enum(Pattern, v["pattern"], f"{key}.pattern")
    sizes = v["sizes"]
    if any(isinstance(x, bool) or not isinstance(x, int) for x in sizes):
        raise ScenarioValidationError(f"{key}.sizes: expected integers")
    qos = _wrap(key, lambda: QoSParams(cls, v["max_sustained"], v["min_reserved"], v["max_latency_s"]))
    source = _wrap(key, lambda: TrafficSource(
        fid, v["rate_bps"], v["packet_bytes"], pattern, tuple(sizes), v["start_s"], v["stop_s"]
    ))
    return FlowConfig(fid, qos, source, v["queue_capacity"], v["wrr_weight"], v["class_name"])


def parse_scenario(text: str) -> dict:
    try:
        return tomlkit.parse(text).unwrap()
    except TOMLKitError as exc:
        raise ScenarioParseError(f"malformed scenario: {exc}") from None


def resolve_scenario(name: Union[str, Path]) -> Path:
    """A filesystem path, or the name of a bundled scenario."""
    path = Path(name)
    if path.exists():
        return path
    bundled = resources.files("mdrrsim") / "scenarios" / path.name
    if not path.suffix:
        bundled = resources.files("mdrrsim") / "scenarios" / (path.name + SCENARIO_SUFFIX)
    if bundled.is_file():
        return Path(str(bundled))
    raise FileNotFoundError(f"no such scenario: {name}")


def bundled_scenarios() -> list[str]:
    root = resources.files("mdrrsim") / "scenarios"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(SCENARIO_SUFFIX))


def load_raw(path: Union[str, Path]) -> dict:
    text = resolve_scenario(path).read_text(encoding="utf-8")
    return parse_scenario(text)


def load_scenario(path: Union[str, Path], overrides: Sequence[str] = ()) -> SimConfig:
    raw = load_raw(path)
    apply_overrides(raw, overrides)
    return build_config(raw)


# -- overrides ---------------------------------------------------------------


def parse_value(text: str) -> Any:
    """TOML literal if it parses as one, otherwise a bare string."""
    try:
        return tomlkit.parse(f"v = {text}").unwrap()["v"]
    except TOMLKitError:
        return text


def _schema_for(parts: list[str]) -> Optional[dict]:
    head = parts[0]
    if head in SECTIONS and len(parts) == 2:
        return SECTIONS[head]
    if head == "profiles" and len(parts) == 3:
        return PROFILE_KEYS
    if head == "stations" and len(parts) == 3:
        return STATION_KEYS
    if head == "flows" and len(parts) == 3:
        return FLOW_KEYS
    return None


def check_key(raw: dict, path: str) -> None:
    """Raise ScenarioValidationError unless ``path`` names a settable scenario key."""
    parts = path.split(".")
    schema = _schema_for(parts)
    if schema is None or parts[-1] not in schema:
        raise ScenarioValidationError(f"{path}: unknown key")
    head = parts[0]
    if head == "profiles":
        rows = raw.get("profiles")
        if rows is None or not parts[1].isdigit() or int(parts[1]) >= len(rows):
            raise ScenarioValidationError(f"{path}: no such profile row")
    elif head in ("stations", "flows") and parts[1] not in raw.get(head, {}):
        raise ScenarioValidationError(f"{path}: no {head[:-1]} named {parts[1]!r}")


def set_key(raw: dict, path: str, value: Any) -> None:
    check_key(raw, path)
    parts = path.split(".")
    node: Any = raw
    for part in parts[:-1]:
        if isinstance(node, list):
            node = node[int(part)]
        else:
            node = node.setdefault(part, {})
    node[parts[-1]] = value


def apply_overrides(raw: dict, overrides: Sequence[str]) -> dict:
    """Apply ``key=value`` overrides in order; later ones win."""
    for item in overrides:
        if "=" not in item:
            raise ScenarioValidationError(f"override {item!r}: expected key=value")
        key, _, text = item.partition("=")
        set_key(raw, key.strip(), parse_value(text.strip()))
    return raw


# -- writing -----------------------------------------------------------------


def to_raw(config: SimConfig) -> dict:
    frame = config.frame
    ch = config.channel
    sc = config.scheduler
    scheduler: dict[str, Any] = {
        "discipline": sc.discipline.value,
        "priority_mode": sc.priority_mode.value,
        "drr_mode": sc.drr_mode.value,
        "weight_formula": sc.weight_formula.value,
        "low_class": sc.low_discipline.value,
    }
    if sc.drr_quantum_bytes is not None:
        scheduler["drr_quantum_bytes"] = sc.drr_quantum_bytes
    raw: dict[str, Any] = {
        "frame": {
            "frame_duration_s": frame.frame_duration_s,
            "symbols_per_frame": frame.symbols_per_frame,
            "data_subcarriers": frame.data_subcarriers,
            "mtu_bytes": frame.mtu_bytes,
            "symbol_duration_s": frame.symbol_duration_s,
        },
        "channel": {
            "reference_cinr_db": ch.reference_cinr_db,
            "reference_distance_m": ch.reference_distance_m,
            "pathloss_exponent": ch.pathloss_exponent,
            "noise_sigma_db": ch.noise_sigma_db,
            "cqich_period_frames": ch.cqich_period_frames,
        },
        "scheduler": scheduler,
        "sim": {
            "duration_s": config.duration_s,
            "seed": config.seed,
            "load_factor": config.load_factor,
            "random_phase": config.random_phase,
        },
        "profiles": [
            {
                "name": p.name,
                "modulation_bits": p.modulation_bits,
                "coding_rate": f"{p.coding_rate.numerator}/{p.coding_rate.denominator}",
                "exit_db": p.exit_threshold_db,
                "entry_db": p.entry_threshold_db,
            }
            for p in config.profiles
        ],
        "stations": {
            st.station_id: {"distance_m": st.distance_m, "flows": [f.flow_id for f in st.flows]}
            for st in config.stations
        },
        "flows": {},
    }
    for fc in config.flows:
        src = fc.source
        row: dict[str, Any] = {
            "class": fc.qos.service_class.value,
            "class_name": fc.class_name,
            "max_sustained": fc.qos.max_sustained_rate_bps,
            "min_reserved": fc.qos.min_reserved_rate_bps,
            "max_latency_s": fc.qos.max_latency_s,
            "rate_bps": src.rate_bps,
            "packet_bytes": src.packet_bytes,
            "pattern": src.pattern.value,
            "sizes": list(src.sizes),
            "start_s": src.start_s,
            "queue_capacity": fc.queue_capacity,
            "wrr_weight": fc.wrr_weight,
        }
        if src.stop_s is not None:
            row["stop_s"] = src.stop_s
        raw["flows"][fc.flow_id] = row
    return raw


def write_scenario(config: SimConfig) -> str:
    return tomlkit.dumps(to_raw(config))
