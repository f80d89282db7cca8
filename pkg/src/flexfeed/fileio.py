"""File formats: session CSV, price CSV, run configuration, JSON output.

All machine-readable output is JSON with a ``schema_version`` field and
deterministic serialization (sorted keys, floats at full round-trip
precision), so identical inputs and seeds produce byte-identical files.
The JSON Schemas for the configuration and every output document are
published under docs/schemas/ and mirrored here as constants.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import jsonschema

from .errors import ValidationError
from .model import (
    Instance,
    OperationalConstraints,
    Session,
    SignalGrid,
)

SCHEMA_VERSION = 1

SESSION_HEADER = ["session_id", "arrival_slot", "departure_slot", "energy", "peak_rate"]
PRICE_HEADER = ["slot", "price"]

RUN_CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "flexfeed run configuration",
    "type": "object",
    "additionalProperties": False,
    "required": ["horizon", "grid", "policy"],
    "properties": {
        "horizon": {"type": "integer", "minimum": 1},
        "grid": {
            "oneOf": [
                {
                    "type": "array",
                    "items": {"type": "number", "minimum": 0},
                    "minItems": 1,
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["min", "max", "levels"],
                    "properties": {
                        "min": {"type": "number", "minimum": 0},
                        "max": {"type": "number", "minimum": 0},
                        "levels": {"type": "integer", "minimum": 1},
                    },
                },
            ]
        },
        "policy": {"enum": ["LLF", "EDF", "FIM"]},
        "feedback": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["exact", "lookahead"]},
                "depth": {"type": "integer", "minimum": 1},
            },
        },
        "operator": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["rhc", "sampler"]},
                "beta": {"type": "number", "minimum": 0},
            },
        },
        "constraints": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "peak_limit": {"type": "number", "minimum": 0},
                "ramp_limit": {"type": "number", "minimum": 0},
                "initial_signal": {"type": "number", "minimum": 0},
            },
        },
        "seed": {"type": "integer", "minimum": 0},
        "log_base": {"type": "number", "exclusiveMinimum": 0},
    },
}

_PROBABILITY_ARRAY = {"type": "array", "items": {"type": "number"}}

FEEDBACK_OUTPUT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "flexfeed feedback output",
    "type": "object",
    "additionalProperties": False,
    "required": [
        "schema_version",
        "kind",
        "mode",
        "prefix",
        "levels",
        "probabilities",
        "entropy_bits",
        "log_base",
    ],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "kind": {"const": "feedback"},
        "mode": {"enum": ["exact", "lookahead"]},
        "depth": {"type": ["integer", "null"], "minimum": 1},
        "prefix": _PROBABILITY_ARRAY,
        "levels": _PROBABILITY_ARRAY,
        "probabilities": _PROBABILITY_ARRAY,
        "counts": {"type": "array", "items": {"type": "integer"}},
        "entropy_bits": {"type": "number"},
        "log_base": {"type": "number"},
    },
}

CAPACITY_OUTPUT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "flexfeed capacity output",
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version", "kind", "mode", "log_base"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "kind": {"const": "capacity"},
        "mode": {"enum": ["exact", "mc"]},
        "log_base": {"type": "number"},
        "feasible_count": {"type": "integer", "minimum": 0},
        "capacity_bits": {"type": "number"},
        "mean_bits": {"type": "number"},
        "std_error_bits": {"type": "number"},
        "n_trajectories": {"type": "integer", "minimum": 1},
        "dead_ends": {"type": "integer", "minimum": 0},
    },
}

SIMULATE_OUTPUT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "flexfeed simulation output",
    "type": "object",
    "additionalProperties": False,
    "required": [
        "schema_version",
        "kind",
        "policy",
        "seed",
        "signals",
        "delivered_per_slot",
        "entropy_bits_per_slot",
        "total_cost",
        "feasible",
        "violation",
        "unmet_energy",
        "metrics",
    ],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "kind": {"const": "simulate"},
        "policy": {"type": "string"},
        "seed": {"type": "integer"},
        "signals": _PROBABILITY_ARRAY,
        "delivered_per_slot": _PROBABILITY_ARRAY,
        "entropy_bits_per_slot": _PROBABILITY_ARRAY,
        "total_cost": {"type": "number"},
        "feasible": {"type": "boolean"},
        "violation": {
            "oneOf": [
                {"type": "null"},
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind", "slot", "detail"],
                    "properties": {
                        "kind": {"type": "string"},
                        "slot": {"type": "integer"},
                        "detail": {"type": "string"},
                    },
                },
            ]
        },
        "unmet_energy": {
            "type": "object",
            "additionalProperties": {"type": "number"},
        },
        "metrics": {
            "type": "object",
            "additionalProperties": False,
            "required": ["tracking_mse", "undelivered_fraction"],
            "properties": {
                "tracking_mse": {"type": "number"},
                "undelivered_fraction": {"type": "number"},
            },
        },
    },
}

CHECK_OUTPUT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "flexfeed check output",
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version", "kind", "ok", "problems"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "kind": {"const": "check"},
        "ok": {"type": "boolean"},
        "problems": {"type": "array", "items": {"type": "string"}},
    },
}

OUTPUT_SCHEMAS = {
    "run_config": RUN_CONFIG_SCHEMA,
    "feedback_output": FEEDBACK_OUTPUT_SCHEMA,
    "capacity_output": CAPACITY_OUTPUT_SCHEMA,
    "simulate_output": SIMULATE_OUTPUT_SCHEMA,
    "check_output": CHECK_OUTPUT_SCHEMA,
}


def dumps_deterministic(payload) -> str:
    """Serialize with sorted keys and round-trip-exact floats."""
    return json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n"


def validate_output(kind: str, payload) -> None:
    """Check an output document against its published schema."""
    jsonschema.validate(payload, OUTPUT_SCHEMAS[kind])


@dataclass(frozen=True)
class RunConfig:
    """Validated contents of a configuration file."""

    horizon: int
    grid: SignalGrid
    policy: str
    feedback_mode: str = "exact"
    feedback_depth: int = 1
    operator_mode: str = "rhc"
    beta: float = 0.0
    constraints: OperationalConstraints = OperationalConstraints()
    seed: int = 0
    log_base: float = 2.0


def parse_run_config(document) -> RunConfig:
    """Build a RunConfig from a parsed JSON document; unknown keys are rejected."""
    try:
        jsonschema.validate(document, RUN_CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "(top level)"
        raise ValidationError(f"config invalid at {path}: {exc.message}") from None
    grid_spec = document["grid"]
    if isinstance(grid_spec, list):
        grid = SignalGrid(tuple(grid_spec))
    else:
        grid = SignalGrid.uniform(grid_spec["min"], grid_spec["max"], grid_spec["levels"])
    feedback = document.get("feedback", {})
    operator = document.get("operator", {})
    cons_doc = document.get("constraints", {})
    constraints = OperationalConstraints(
        peak_limit=cons_doc.get("peak_limit"),
        ramp_limit=cons_doc.get("ramp_limit"),
        initial_signal=cons_doc.get("initial_signal", 0.0),
    )
    log_base = float(document.get("log_base", 2.0))
    if log_base == 1.0:
        raise ValidationError("log_base must not be 1")
    return RunConfig(
        horizon=document["horizon"],
        grid=grid,
        policy=document["policy"],
        feedback_mode=feedback.get("mode", "exact"),
        feedback_depth=feedback.get("depth", 1),
        operator_mode=operator.get("mode", "rhc"),
        beta=float(operator.get("beta", 0.0)),
        constraints=constraints,
        seed=document.get("seed", 0),
        log_base=log_base,
    )


def load_run_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            document = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path} is not valid JSON: {exc}") from None
    return parse_run_config(document)


def _parse_int(raw: str, what: str, line: int) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ValidationError(f"line {line}: {what} must be an integer, got {raw!r}") from None


def _parse_float(raw: str, what: str, line: int) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise ValidationError(f"line {line}: {what} must be a number, got {raw!r}") from None
    if not math.isfinite(value):
        raise ValidationError(f"line {line}: {what} must be finite, got {raw!r}")
    return value


def read_sessions(path) -> list[Session]:
    """Read a session CSV, reporting problems with their line numbers."""
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ValidationError(f"cannot read sessions {path}: {exc}") from None
    if not rows or rows[0] != SESSION_HEADER:
        raise ValidationError(
            f"sessions file must start with header {','.join(SESSION_HEADER)}"
        )
    sessions = []
    for line, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(SESSION_HEADER):
            raise ValidationError(
                f"line {line}: expected {len(SESSION_HEADER)} fields, got {len(row)}"
            )
        sid = row[0].strip()
        arrival = _parse_int(row[1], "arrival_slot", line)
        departure = _parse_int(row[2], "departure_slot", line)
        energy = _parse_float(row[3], "energy", line)
        peak = _parse_float(row[4], "peak_rate", line)
        try:
            sessions.append(Session(sid, arrival, departure, energy, peak))
        except ValidationError as exc:
            raise ValidationError([f"line {line}: {p}" for p in exc.problems]) from None
    return sessions


def write_sessions(path, sessions) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SESSION_HEADER)
        for s in sessions:
            writer.writerow([s.id, s.arrival, s.departure, repr(s.energy), repr(s.peak_rate)])


def read_prices(path, horizon: int) -> tuple[float, ...]:
    """Read a price CSV covering exactly slots 1..horizon."""
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ValidationError(f"cannot read prices {path}: {exc}") from None
    if not rows or rows[0] != PRICE_HEADER:
        raise ValidationError(f"price file must start with header {','.join(PRICE_HEADER)}")
    by_slot: dict[int, float] = {}
    for line, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 2:
            raise ValidationError(f"line {line}: expected 2 fields, got {len(row)}")
        slot = _parse_int(row[0], "slot", line)
        price = _parse_float(row[1], "price", line)
        if slot in by_slot:
            raise ValidationError(f"line {line}: duplicate slot {slot}")
        by_slot[slot] = price
    missing = [t for t in range(1, horizon + 1) if t not in by_slot]
    extra = [t for t in by_slot if not 1 <= t <= horizon]
    problems = []
    if missing:
        problems.append(f"missing prices for slots {missing}")
    if extra:
        problems.append(f"prices given for slots outside 1..{horizon}: {sorted(extra)}")
    if problems:
        raise ValidationError(problems)
    return tuple(by_slot[t] for t in range(1, horizon + 1))


def build_instance(config: RunConfig, sessions) -> Instance:
    """Combine a config and session list; propagates model validation errors."""
    return Instance(
        horizon=config.horizon,
        sessions=tuple(sessions),
        grid=config.grid,
        constraints=config.constraints,
    )


def parse_prefix(raw: str, grid: SignalGrid) -> tuple[float, ...]:
    """Parse a comma-separated prefix and snap each entry to the grid."""
    raw = raw.strip()
    if not raw:
        return ()
    out = []
    for part in raw.split(","):
        try:
            value = float(part)
        except ValueError:
            raise ValidationError(f"prefix entry {part!r} is not a number") from None
        out.append(grid.levels[grid.index_of(value)])
    return tuple(out)
