"""Problem files, result envelopes and configuration.

JSON floats are written with ``repr``, the shortest string that parses back
to the same double, so every number round-trips exactly.  CSV files use
``%.17g``.  The envelope timestamp comes from ``SOURCE_DATE_EPOCH`` when set
and is ``null`` otherwise, which keeps repeated runs byte-identical.
"""

from __future__ import annotations

import csv
import json
import os
import sys
from dataclasses import asdict, dataclass, field, is_dataclass
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from . import __version__
from .errors import InputError
from .michell import GroundStructure, LoadCase, build_grid_ground_structure, complete_ground_structure
from .mollify import DiscreteMeasure

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class SchemaError(InputError):
    """Input that is not valid JSON or violates its schema."""


_vec = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 3}
_pair = {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 2, "maxItems": 2}

PROBLEM_SCHEMA: dict = {
    "type": "object",
    "required": ["loads"],
    "properties": {
        "name": {"type": "string"},
        "dim": {"enum": [2, 3]},
        "nodes": {
            "type": "array",
            "minItems": 2,
            "items": {
                "type": "object",
                "required": ["id", "pos"],
                "properties": {"id": {"type": "integer", "minimum": 0}, "pos": _vec},
                "additionalProperties": False,
            },
        },
        "bars": {"type": "array", "items": _pair},
        "grid": {"type": "array", "items": {"type": "integer", "minimum": 2},
                 "minItems": 2, "maxItems": 3},
        "spacing": {"type": "number", "exclusiveMinimum": 0},
        "radius": {"type": "number", "exclusiveMinimum": 0},
        "loads": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["node", "f"],
                "properties": {"node": {"type": "integer", "minimum": 0}, "f": _vec},
                "additionalProperties": False,
            },
        },
    },
    "oneOf": [{"required": ["nodes"]}, {"required": ["grid"]}],
    "additionalProperties": False,
}

_weight = {"oneOf": [{"type": "number"},
                     {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}]}

MEASURE_SCHEMA: dict = {
    "type": "object",
    "properties": {
        "scalar": {"type": "boolean"},
        "atoms": {"type": "array", "items": {
            "type": "object", "required": ["pos", "w"],
            "properties": {"pos": _vec, "w": _weight}, "additionalProperties": False}},
        "segments": {"type": "array", "items": {
            "type": "object", "required": ["a", "b", "w"],
            "properties": {"a": _vec, "b": _vec, "w": _weight}, "additionalProperties": False}},
        "boxes": {"type": "array", "items": {
            "type": "object", "required": ["lo", "hi", "w"],
            "properties": {"lo": _vec, "hi": _vec, "w": _weight}, "additionalProperties": False}},
        "airy": {"type": "array", "items": {
            "type": "object", "required": ["center", "radius", "amplitude"],
            "properties": {"center": _vec, "radius": {"type": "number", "exclusiveMinimum": 0},
                           "amplitude": {"type": "number"}},
            "additionalProperties": False}},
    },
    "additionalProperties": False,
}


def parse_json_text(text: str, source: str = "<input>") -> Any:
    """``json.loads`` with line and column in the error message."""
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


def _validate(doc: Any, schema: dict, source: str) -> None:
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SchemaError(f"{source}: {where}: {exc.message}") from exc


def bundled_problem(name: str) -> Path | None:
    """Path of a problem file shipped with the package, by file name."""
    ref = resources.files("vanishing_mass") / "data" / Path(name).name
    return Path(str(ref)) if ref.is_file() else None


def resolve_problem_path(path: str | os.PathLike) -> Path:
    """The given path if it exists, else the bundled problem of the same file name."""
    p = Path(path)
    if p.is_file():
        return p
    alt = bundled_problem(p.name)
    if alt is not None:
        return alt
    raise InputError(f"problem file not found: {p}")


def problem_from_dict(doc: dict, source: str = "<problem>") -> tuple[GroundStructure, LoadCase]:
    """Ground structure and loads from a problem document.

    Nodes are given explicitly (ids dense ``0..N-1``) or generated from
    ``grid``, ``spacing`` and ``radius``.  Without ``bars``, explicit nodes
    are fully connected and grids use every pair within the radius.
    """
    _validate(doc, PROBLEM_SCHEMA, source)
    if "grid" in doc:
        g = doc["grid"]
        gs = build_grid_ground_structure(g[0], g[1], g[2] if len(g) == 3 else None,
                                         doc.get("spacing", 1.0), doc.get("radius"))
    else:
        nodes = sorted(doc["nodes"], key=lambda n: n["id"])
        if [n["id"] for n in nodes] != list(range(len(nodes))):
            raise SchemaError(f"{source}: nodes: ids must be 0..N-1 without gaps or repeats")
        pos = [n["pos"] for n in nodes]
        if len({len(p) for p in pos}) != 1:
            raise SchemaError(f"{source}: nodes: all positions need the same dimension")
        gs = complete_ground_structure(np.asarray(pos, dtype=float))
    if "dim" in doc and doc["dim"] != gs.dim:
        raise SchemaError(f"{source}: dim is {doc['dim']} but nodes are {gs.dim}D")
    n = len(gs.positions)
    if "bars" in doc:
        for a, b in doc["bars"]:
            if a >= n or b >= n or a == b:
                raise SchemaError(f"{source}: bars: invalid node pair [{a}, {b}]")
        gs = gs.with_bars(doc["bars"])
    loads: dict[int, np.ndarray] = {}
    for item in doc["loads"]:
        v = np.asarray(item["f"], dtype=float)
        if item["node"] >= n:
            raise SchemaError(f"{source}: loads: unknown node {item['node']}")
        if v.shape != (gs.dim,):
            raise SchemaError(f"{source}: loads: force at node {item['node']} has wrong dimension")
        loads[item["node"]] = loads.get(item["node"], 0.0) + v
    return gs, LoadCase(loads)


def load_problem(path) -> tuple[GroundStructure, LoadCase]:
    p = resolve_problem_path(path)
    return problem_from_dict(parse_json_text(p.read_text(), str(p)), str(p))


def measure_from_dict(doc: dict, source: str = "<measure>") -> DiscreteMeasure:
    _validate(doc, MEASURE_SCHEMA, source)
    lam = DiscreteMeasure(scalar=bool(doc.get("scalar", False)))
    for a in doc.get("atoms", []):
        lam.add_atom(a["pos"], a["w"])
    for s in doc.get("segments", []):
        lam.add_segment(s["a"], s["b"], s["w"])
    for b in doc.get("boxes", []):
        lam.add_box(b["lo"], b["hi"], b["w"])
    for a in doc.get("airy", []):
        lam.add_airy(a["center"], a["radius"], a["amplitude"])
    return lam


def load_measure(path) -> DiscreteMeasure:
    p = Path(path)
    return measure_from_dict(parse_json_text(p.read_text(), str(p)), str(p))


def load_config(path) -> dict:
    """Read a TOML configuration file."""
    p = Path(path)
    if not p.is_file():
        raise InputError(f"config file not found: {p}")
    try:
        with p.open("rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise SchemaError(f"{p}: {exc}") from exc


# ---------------------------------------------------------------- output


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    threshold: float
    passed: bool
    relation: str = "<="


@dataclass
class ResultEnvelope:
    version: str
    config: dict
    timestamp: str | None
    payload: Any
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def timestamp() -> str | None:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if not epoch:
        return None
    return datetime.fromtimestamp(int(epoch), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def make_envelope(config: dict, payload: Any, checks=()) -> ResultEnvelope:
    return ResultEnvelope(__version__, config, timestamp(), payload, list(checks))


def to_jsonable(obj: Any) -> Any:
    """Plain JSON types; non-finite floats become strings."""
    if is_dataclass(obj) and not isinstance(obj, type):
        return to_jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def dumps(obj: Any) -> str:
    return json.dumps(to_jsonable(obj), indent=2, allow_nan=False) + "\n"


def write_json(path, obj: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))
    return path


def read_envelope(path) -> ResultEnvelope:
    doc = json.loads(Path(path).read_text())
    checks = [CheckResult(**c) for c in doc.get("checks", [])]
    return ResultEnvelope(doc["version"], doc["config"], doc["timestamp"], doc["payload"], checks)


def _cell(v: Any) -> str:
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def write_csv(path, header: list[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path
