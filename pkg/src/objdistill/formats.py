"""Line-delimited JSON interchange formats.

Every file holds one JSON object per line. Writes are canonical (sorted keys,
no whitespace, shortest round-trip floats, trailing newline) so identical
values always produce identical bytes. Reads validate each record against a
named schema; unknown fields are an error in strict mode and a warning
otherwise. See ``docs/formats.md`` for the field tables.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable

import numpy as np
import yaml

from .geometry import ProposalSet


class FormatError(ValueError):
    """Schema violation, with the offending location when known."""

    def __init__(self, message: str, path=None, line: int | None = None,
                 field: str | None = None):
        self.path = None if path is None else str(path)
        self.line = line
        self.field = field
        where = []
        if self.path is not None:
            where.append(self.path)
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{': '.join([', '.join(where), message]) if where else message}")

    def record(self) -> dict:
        return {"error": "data", "message": str(self), "path": self.path,
                "line": self.line, "field": self.field}


class FormatWarning(UserWarning):
    pass


# -- field kinds --------------------------------------------------------------

def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _check_box(v) -> bool:
    return isinstance(v, list) and len(v) == 4 and all(_is_number(x) for x in v) \
        and v[2] > v[0] and v[3] > v[1]


_KIND_CHECKS = {
    "str": lambda v: isinstance(v, str),
    "int": lambda v: isinstance(v, int) and not isinstance(v, bool),
    "float": _is_number,
    "bool": lambda v: isinstance(v, bool),
    "box": _check_box,
    "box_or_null": lambda v: v is None or _check_box(v),
    "boxes": lambda v: isinstance(v, list) and all(_check_box(b) for b in v),
    "vector": lambda v: isinstance(v, list) and all(_is_number(x) for x in v),
    "ints": lambda v: isinstance(v, list) and all(isinstance(x, int) and not isinstance(x, bool) for x in v),
    "strs": lambda v: isinstance(v, list) and all(isinstance(x, str) for x in v),
    "matrix": lambda v: isinstance(v, list) and all(
        isinstance(row, list) and all(_is_number(x) for x in row) for row in v)
        and len({len(row) for row in v}) <= 1,
    "object": lambda v: isinstance(v, dict),
    "any": lambda v: True,
}

_KIND_NAMES = {
    "str": "a string", "int": "an integer", "float": "a finite number", "bool": "a boolean",
    "box": "[x1, y1, x2, y2] with x2 > x1 and y2 > y1",
    "box_or_null": "null or a valid box", "boxes": "a list of valid boxes",
    "vector": "a list of finite numbers", "ints": "a list of integers",
    "strs": "a list of strings", "matrix": "a rectangular list of number lists",
    "object": "an object", "any": "any value",
}


@dataclass(frozen=True)
class Schema:
    name: str
    required: dict
    optional: dict

    @property
    def fields(self) -> dict:
        return {**self.required, **self.optional}


def _schema(name: str, required: dict, optional: dict | None = None) -> Schema:
    return Schema(name, required, optional or {})


SCHEMAS = {s.name: s for s in (
    _schema("proposals", {"image_id": "str", "boxes": "boxes"}),
    _schema("scored_boxes", {"image_id": "str", "box": "box", "score": "float"}),
    _schema("scores", {"image_id": "str", "branch": "int", "probs": "matrix"},
            {"sigma_c": "matrix", "sigma_d": "matrix"}),
    _schema("labels", {"image_id": "str", "labels": "ints"}),
    _schema("evidence", {"image_id": "str", "index": "int", "kind": "str", "raw": "float",
                         "normalized": "float"}),
    _schema("mining", {"image_id": "str", "branch": "int", "index": "int", "label": "int",
                       "seed": "bool", "seed_index": "int", "reference": "box_or_null"},
            {"weight": "float"}),
    _schema("detections", {"image_id": "str", "boxes": "boxes", "scores": "vector",
                           "classes": "ints"}),
    _schema("ground_truth", {"image_id": "str", "boxes": "boxes", "classes": "ints"}),
    _schema("segmentation", {"image_id": "str", "count": "int", "labels": "matrix"}),
    _schema("schedule", {"n": "int", "alpha": "float"}),
    _schema("metrics", {"ap": "object", "map": "float", "corloc": "object",
                        "mean_corloc": "float"}, {"seed": "int", "name": "str"}),
    _schema("train_log", {"step": "int", "alpha": "float", "l_base": "float", "l_ref": "vector",
                          "l_box": "float", "total": "float"}, {"image_id": "str"}),
    _schema("ablation", {"name": "str", "seed": "int", "map": "float", "corloc": "float",
                         "dataset_hash": "str"}),
    _schema("manifest", {"command": "str", "version": "str", "argv": "strs", "inputs": "object",
                         "outputs": "object"}, {"config": "any", "threads": "int"}),
)}


def get_schema(name: str) -> Schema:
    try:
        return SCHEMAS[name]
    except KeyError:
        raise ValueError(f"unknown schema {name!r}; known: {', '.join(sorted(SCHEMAS))}") from None


# -- canonical writing --------------------------------------------------------

def plain(value: Any) -> Any:
    """Convert numpy containers and scalars to JSON-native Python values."""
    if isinstance(value, np.ndarray):
        return plain(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, dict):
        return {str(k): plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(v) for v in value]
    return value


def canonical_line(record: dict) -> str:
    try:
        return json.dumps(plain(record), sort_keys=True, separators=(",", ":"),
                          ensure_ascii=False, allow_nan=False)
    except ValueError as exc:
        raise FormatError(f"cannot serialize record: {exc}") from None


def validate_record(record: dict, schema: Schema, strict: bool = True, path=None,
                    line: int | None = None) -> dict:
    if not isinstance(record, dict):
        raise FormatError("record is not a JSON object", path, line)
    for name, kind in schema.required.items():
        if name not in record:
            raise FormatError("missing required field", path, line, name)
    for name, value in record.items():
        kind = schema.fields.get(name)
        if kind is None:
            if strict:
                raise FormatError(f"unknown field for schema {schema.name!r}", path, line, name)
            warnings.warn(f"{path or '<records>'}: line {line}: ignoring unknown field {name!r}",
                          FormatWarning, stacklevel=3)
            continue
        if not _KIND_CHECKS[kind](value):
            raise FormatError(f"expected {_KIND_NAMES[kind]}", path, line, name)
    return {k: v for k, v in record.items() if k in schema.fields}


def dumps_records(records: Iterable[dict], schema: str) -> str:
    sch = get_schema(schema)
    lines = []
    for i, rec in enumerate(records, start=1):
        rec = plain(rec)
        validate_record(rec, sch, strict=True, line=i)
        lines.append(canonical_line(rec) + "\n")
    return "".join(lines)


def write_records(path, records: Iterable[dict], schema: str) -> None:
    text = dumps_records(records, schema)
    Path(path).write_text(text, encoding="utf-8", newline="\n")


# -- reading ------------------------------------------------------------------

def loads_records(text: str, schema: str, strict: bool = True, path=None) -> list[dict]:
    sch = get_schema(schema)
    out = []
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    for i, raw in enumerate(lines, start=1):
        if not raw.strip():
            raise FormatError("blank line", path, i)
        try:
            rec = json.loads(raw, parse_constant=_reject_constant)
        except json.JSONDecodeError as exc:
            raise FormatError(f"malformed JSON ({exc.msg} at column {exc.colno})", path, i) from None
        except ValueError as exc:
            raise FormatError(str(exc), path, i) from None
        out.append(validate_record(rec, sch, strict, path, i))
    return out


def _reject_constant(name: str):
    raise ValueError(f"non-finite number {name} is not allowed")


def read_records(path, schema: str, strict: bool = True) -> list[dict]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError:
        raise FormatError("file is not UTF-8 text", path) from None
    return loads_records(text, schema, strict, path)


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# -- typed helpers ------------------------------------------------------------

def proposals_to_records(proposal_sets: Iterable[ProposalSet]) -> list[dict]:
    return [{"image_id": p.image_id, "boxes": p.boxes} for p in proposal_sets]


def records_to_proposals(records: list[dict], path=None) -> dict[str, ProposalSet]:
    out = {}
    for i, rec in enumerate(records, start=1):
        if rec["image_id"] in out:
            raise FormatError("duplicate image_id", path, i, "image_id")
        if not rec["boxes"]:
            raise FormatError("a proposal set needs at least one box", path, i, "boxes")
        out[rec["image_id"]] = ProposalSet(rec["image_id"], np.asarray(rec["boxes"], dtype=np.float64))
    return out


def write_proposals(path, proposal_sets: Iterable[ProposalSet]) -> None:
    write_records(path, proposals_to_records(proposal_sets), "proposals")


def read_proposals(path, strict: bool = True) -> dict[str, ProposalSet]:
    return records_to_proposals(read_records(path, "proposals", strict), path)


def evidence_records(report) -> list[dict]:
    """One record per box of an :class:`~objdistill.evidence.EvidenceReport`."""
    return [{"image_id": report.image_id, "index": i, "kind": report.kind,
             "raw": float(report.raw[i]), "normalized": float(report.values[i])}
            for i in range(len(report))]


def mining_records(image_id: str, branch: int, mined, weights, references: dict,
                   boxes) -> list[dict]:
    """One record per proposal: label, seed flag, claiming seed, reference box, weight."""
    seeds = {int(i) for v in mined.seeds.values() for i in v}
    boxes = np.asarray(boxes, dtype=np.float64)
    out = []
    for r in range(mined.labels.size):
        ref = references.get(r)
        out.append({"image_id": image_id, "branch": int(branch), "index": r,
                    "label": int(mined.labels[r]), "seed": r in seeds,
                    "seed_index": int(mined.seed_of[r]),
                    "reference": None if ref is None else boxes[ref],
                    "weight": float(weights[r])})
    return out


def index_by_image(records: list[dict], path=None) -> dict[str, dict]:
    out = {}
    for i, rec in enumerate(records, start=1):
        if rec["image_id"] in out:
            raise FormatError("duplicate image_id", path, i, "image_id")
        out[rec["image_id"]] = rec
    return out


# -- run configuration --------------------------------------------------------

def load_run_config(path, strict: bool = True):
    """Read a YAML mapping into a :class:`RunConfig`."""
    from .harness.training import RunConfig

    try:
        values = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise FormatError(f"malformed YAML: {getattr(exc, 'problem', exc)}", path,
                          None if mark is None else mark.line + 1) from None
    if values is None:
        values = {}
    if not isinstance(values, dict):
        raise FormatError("run config must be a mapping", path)
    known = set(RunConfig.__dataclass_fields__)
    for key in sorted(set(values) - known):
        if strict:
            raise FormatError("unknown config key", path, field=key)
        warnings.warn(f"{path}: ignoring unknown config key {key!r}", FormatWarning, stacklevel=2)
    try:
        return RunConfig.from_dict(values, strict=False)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"invalid run config: {exc}", path) from None


def dump_run_config(config) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=True, default_flow_style=False)
