"""Tabular log data model: attribute roles, schema files and log ingestion."""

from __future__ import annotations

import csv
import enum
import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

from .errors import EmptySplit, ParseError, SchemaInvalid, TimestampUnparseable

LABEL_KEY = "_label"


class AttributeRole(str, enum.Enum):
    OBJECT = "object"
    EVENT = "event"
    FEATURE = "feature"


@dataclass(frozen=True)
class Column:
    name: str
    role: AttributeRole


@dataclass(frozen=True)
class LogSchema:
    columns: tuple[Column, ...]
    timestamp_column: str
    object_delimiter: str = ";"

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaInvalid(f"duplicate column names in {names}")
        events = [c for c in self.columns if c.role is AttributeRole.EVENT]
        if len(events) != 1:
            raise SchemaInvalid(f"schema needs exactly one event column, got {len(events)}")
        if not any(c.role is AttributeRole.OBJECT for c in self.columns):
            raise SchemaInvalid("schema needs at least one object column")
        if not self.timestamp_column:
            raise SchemaInvalid("missing timestamp column")
        if self.timestamp_column == events[0].name:
            raise SchemaInvalid("timestamp column cannot be the event column")
        if self.timestamp_column in names:
            col = next(c for c in self.columns if c.name == self.timestamp_column)
            if col.role is not AttributeRole.FEATURE:
                raise SchemaInvalid("timestamp column must not be an object column")

    @property
    def event_column(self) -> str:
        return next(c.name for c in self.columns if c.role is AttributeRole.EVENT)

    @property
    def object_columns(self) -> list[str]:
        return [c.name for c in self.columns if c.role is AttributeRole.OBJECT]

    @property
    def feature_columns(self) -> list[str]:
        return [
            c.name
            for c in self.columns
            if c.role is AttributeRole.FEATURE and c.name != self.timestamp_column
        ]

    def to_dict(self) -> dict:
        return {
            "timestamp_column": self.timestamp_column,
            "object_delimiter": self.object_delimiter,
            "columns": [{"name": c.name, "role": c.role.value} for c in self.columns],
        }

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True)
class AnomalyLabel:
    event_label: int | None = None
    object_labels: dict[str, int] | None = None

    def __post_init__(self):
        vals = [] if self.event_label is None else [self.event_label]
        vals += list((self.object_labels or {}).values())
        if any(v not in (0, 1) for v in vals):
            raise ValueError(f"labels must be 0 or 1, got {vals}")

    @property
    def is_anomalous(self) -> bool:
        return self.event_label == 1 or any((self.object_labels or {}).values())

    def to_dict(self) -> dict:
        out = {}
        if self.event_label is not None:
            out["event"] = self.event_label
        if self.object_labels is not None:
            out["objects"] = dict(self.object_labels)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> AnomalyLabel:
        objs = d.get("objects")
        return cls(
            event_label=d.get("event"),
            object_labels=None if objs is None else {str(k): int(v) for k, v in objs.items()},
        )


@dataclass(frozen=True)
class LogEntry:
    """One timestamped row.

    ``objects`` is the deduplicated union of all object cells in column order;
    ``object_fields`` keeps the per-column split so the row can be written back.
    """

    index: int
    timestamp: int
    event_text: str
    objects: tuple[str, ...]
    features: dict[str, str] = field(default_factory=dict)
    object_fields: dict[str, tuple[str, ...]] = field(default_factory=dict)
    label: AnomalyLabel | None = None


def normalize_key(value: str) -> str:
    return value.strip()


def dedupe(values: Iterable[str]) -> tuple[str, ...]:
    return tuple(dict.fromkeys(values))


def schema_from_dict(doc: dict) -> LogSchema:
    try:
        columns = tuple(Column(str(c["name"]), AttributeRole(str(c["role"]).lower())) for c in doc["columns"])
        return LogSchema(
            columns=columns,
            timestamp_column=str(doc.get("timestamp_column") or ""),
            object_delimiter=str(doc.get("object_delimiter", ";")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaInvalid(f"malformed schema document: {exc}") from exc


def parse_schema(path) -> LogSchema:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaInvalid(f"{path}: not valid JSON ({exc})") from exc
    return schema_from_dict(doc)


def write_schema(schema: LogSchema, path) -> None:
    Path(path).write_text(json.dumps(schema.to_dict(), indent=2) + "\n")


def parse_timestamp(raw, row: int) -> int:
    if isinstance(raw, bool):
        raise TimestampUnparseable(row, f"bad timestamp {raw!r}")
    if isinstance(raw, int):
        return raw
    if isinstance(raw, float) and raw.is_integer():
        return int(raw)
    text = str(raw).strip()
    try:
        return int(text)
    except ValueError:
        pass
    try:
        dt = datetime.fromisoformat(text[:-1] + "+00:00" if text.endswith("Z") else text)
    except ValueError as exc:
        raise TimestampUnparseable(row, f"bad timestamp {raw!r}") from exc
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def _split_cell(raw, delimiter: str) -> tuple[str, ...]:
    if raw is None:
        return ()
    if isinstance(raw, list):
        parts = [str(p) for p in raw]
    else:
        parts = str(raw).split(delimiter) if delimiter else [str(raw)]
    return dedupe(k for k in (normalize_key(p) for p in parts) if k)


def row_to_entry(row: dict, schema: LogSchema, index: int) -> LogEntry:
    if schema.timestamp_column not in row:
        raise ParseError(index, f"missing timestamp column {schema.timestamp_column!r}")
    if schema.event_column not in row:
        raise ParseError(index, f"missing event column {schema.event_column!r}")
    ts = parse_timestamp(row[schema.timestamp_column], index)
    fields = {c: _split_cell(row.get(c), schema.object_delimiter) for c in schema.object_columns}
    objects = dedupe(o for c in schema.object_columns for o in fields[c])
    features = {c: "" if row.get(c) is None else str(row[c]) for c in schema.feature_columns}
    label = None
    raw_label = row.get(LABEL_KEY)
    if raw_label not in (None, ""):
        try:
            label = AnomalyLabel.from_dict(json.loads(raw_label) if isinstance(raw_label, str) else raw_label)
        except (ValueError, AttributeError, TypeError) as exc:
            raise ParseError(index, f"bad label {raw_label!r}") from exc
    text = row[schema.event_column]
    return LogEntry(
        index=index,
        timestamp=ts,
        event_text="" if text is None else str(text),
        objects=objects,
        features=features,
        object_fields=fields,
        label=label,
    )


def _read_rows(path: Path):
    if path.suffix.lower() in (".jsonl", ".ndjson", ".json"):
        with path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh):
                if not line.strip():
                    continue
                try:
                    row = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ParseError(lineno, f"invalid JSON: {exc}") from exc
                if not isinstance(row, dict):
                    raise ParseError(lineno, "JSONL line is not an object")
                yield row
    else:
        with path.open(encoding="utf-8", newline="") as fh:
            yield from csv.DictReader(fh)


def read_log(path, schema: LogSchema) -> list[LogEntry]:
    """Parse a CSV or JSONL log, stably sorted by timestamp.

    Entry indices are assigned after sorting so ``entries[i].index == i``.
    """
    rows = [row_to_entry(r, schema, i) for i, r in enumerate(_read_rows(Path(path)))]
    rows.sort(key=lambda e: e.timestamp)  # stable: ties keep file order
    return [_reindex(e, i) for i, e in enumerate(rows)]


def _reindex(entry: LogEntry, index: int) -> LogEntry:
    if entry.index == index:
        return entry
    return LogEntry(
        index=index,
        timestamp=entry.timestamp,
        event_text=entry.event_text,
        objects=entry.objects,
        features=entry.features,
        object_fields=entry.object_fields,
        label=entry.label,
    )


def entry_to_row(entry: LogEntry, schema: LogSchema) -> dict:
    row: dict = {schema.timestamp_column: entry.timestamp, schema.event_column: entry.event_text}
    for c in schema.object_columns:
        row[c] = schema.object_delimiter.join(entry.object_fields.get(c, ()))
    for c in schema.feature_columns:
        row[c] = entry.features.get(c, "")
    if entry.label is not None:
        row[LABEL_KEY] = entry.label.to_dict()
    return row


def write_log(entries: Sequence[LogEntry], schema: LogSchema, path) -> None:
    path = Path(path)
    rows = [entry_to_row(e, schema) for e in entries]
    if path.suffix.lower() == ".csv":
        names = [schema.timestamp_column] + [c.name for c in schema.columns if c.name != schema.timestamp_column]
        if any(LABEL_KEY in r for r in rows):
            names.append(LABEL_KEY)
        with path.open("w", encoding="utf-8", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=names)
            w.writeheader()
            for r in rows:
                if LABEL_KEY in r:
                    r = {**r, LABEL_KEY: json.dumps(r[LABEL_KEY], sort_keys=True)}
                w.writerow(r)
    else:
        with path.open("w", encoding="utf-8") as fh:
            for r in rows:
                fh.write(json.dumps(r, ensure_ascii=False) + "\n")


def split_train_test(log: Sequence[LogEntry], train_fraction: float):
    if not 0 < train_fraction < 1:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    k = int(len(log) * train_fraction + 1e-9)
    if k == 0 or k == len(log):
        raise EmptySplit(f"{len(log)} entries at fraction {train_fraction} leaves an empty side")
    return list(log[:k]), list(log[k:])
