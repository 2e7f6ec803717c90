"""Event-log loading, validation, entity splits and the baseline matrix."""
from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timezone
from functools import cached_property
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .errors import DatasetError, DegenerateSplitError, MissingDataFileError, ParseError, SchemaError
from .table import FeatureTable

DTYPES = ("int", "float", "categorical", "timestamp", "text")
NUMERIC_DTYPES = ("int", "float")


@dataclass(frozen=True)
class Column:
    name: str
    dtype: str
    description: str = ""


@dataclass(frozen=True)
class DataSchema:
    dataset_context: str
    columns: tuple
    entity_id_column: str
    timestamp_column: str
    baseline_feature_columns: tuple = ()

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if any(not isinstance(n, str) or not n for n in names):
            raise SchemaError("column names must be nonempty strings")
        dup = sorted(n for n, k in Counter(names).items() if k > 1)
        if dup:
            raise SchemaError(f"duplicate column names: {dup}")
        for c in self.columns:
            if c.dtype not in DTYPES:
                raise SchemaError(f"column {c.name!r}: unknown dtype {c.dtype!r}")
        if self.entity_id_column not in names:
            raise SchemaError(f"entity_id_column {self.entity_id_column!r} is not a declared column")
        if self.timestamp_column not in names:
            raise SchemaError(f"timestamp_column {self.timestamp_column!r} is not a declared column")
        if self.dtype(self.timestamp_column) not in ("timestamp", "int"):
            raise SchemaError("timestamp_column must have dtype timestamp or int")
        for b in self.baseline_feature_columns:
            if b not in names:
                raise SchemaError(f"baseline feature column {b!r} is not a declared column")
            if self.dtype(b) not in NUMERIC_DTYPES + ("categorical",):
                raise SchemaError(f"baseline feature column {b!r} must be numeric or categorical")

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def dtype(self, name: str) -> str:
        for c in self.columns:
            if c.name == name:
                return c.dtype
        raise KeyError(name)

    def has_column(self, name: str) -> bool:
        return any(c.name == name for c in self.columns)

    @classmethod
    def from_dict(cls, doc: dict) -> "DataSchema":
        required = ("dataset_context", "columns", "entity_id_column", "timestamp_column")
        missing = [k for k in required if k not in doc]
        if missing:
            raise SchemaError(f"schema missing keys: {missing}")
        cols = []
        for i, c in enumerate(doc["columns"]):
            if not isinstance(c, dict) or "name" not in c or "dtype" not in c:
                raise SchemaError(f"schema column #{i} needs 'name' and 'dtype'")
            cols.append(Column(c["name"], c["dtype"], c.get("description", "")))
        return cls(
            dataset_context=doc["dataset_context"],
            columns=tuple(cols),
            entity_id_column=doc["entity_id_column"],
            timestamp_column=doc["timestamp_column"],
            baseline_feature_columns=tuple(doc.get("baseline_feature_columns", [])),
        )

    def to_dict(self) -> dict:
        return {
            "dataset_context": self.dataset_context,
            "columns": [
                {"name": c.name, "dtype": c.dtype, "description": c.description}
                for c in self.columns
            ],
            "entity_id_column": self.entity_id_column,
            "timestamp_column": self.timestamp_column,
            "baseline_feature_columns": list(self.baseline_feature_columns),
        }

    def render(self) -> str:
        """Human-readable schema block used in agent prompts."""
        lines = [f"Context: {self.dataset_context}", "Columns:"]
        for c in self.columns:
            role = ""
            if c.name == self.entity_id_column:
                role = " [entity id]"
            elif c.name == self.timestamp_column:
                role = " [event time]"
            desc = f" - {c.description}" if c.description else ""
            lines.append(f"  {c.name} ({c.dtype}){role}{desc}")
        if self.baseline_feature_columns:
            lines.append("Raw baseline features: " + ", ".join(self.baseline_feature_columns))
        return "\n".join(lines)


def parse_timestamp(value) -> int:
    """Epoch seconds from an integer or an ISO-8601 date-time (naive = UTC)."""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return int(value)
    s = str(value).strip()
    try:
        return int(s)
    except ValueError:
        pass
    if s.endswith("Z"):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return math.floor(dt.timestamp())


def _coerce(value, dtype: str):
    if value is None or (isinstance(value, str) and value.strip() == ""):
        return None
    if dtype == "int":
        if isinstance(value, str):
            try:
                return int(value)
            except ValueError:
                f = float(value)
                if not f.is_integer():
                    raise ValueError(value)
                return int(f)
        f = float(value)
        if not f.is_integer():
            raise ValueError(value)
        return int(f)
    if dtype == "float":
        f = float(value)
        if not math.isfinite(f):
            raise ValueError(value)
        return f
    if dtype == "timestamp":
        return parse_timestamp(value)
    return str(value)


@dataclass
class EventLog:
    """Rows sorted by (timestamp, row_index); columns stored column-wise."""

    columns: dict
    row_index: list
    entity_column: str
    timestamp_column: str

    def __len__(self):
        return len(self.row_index)

    @property
    def entity_ids(self) -> list:
        return self.columns[self.entity_column]

    @property
    def timestamps(self) -> list:
        return self.columns[self.timestamp_column]

    @cached_property
    def entity_rows(self) -> dict:
        """Entity id -> positions in sorted order."""
        out: dict = {}
        for pos, eid in enumerate(self.entity_ids):
            out.setdefault(eid, []).append(pos)
        return out

    @cached_property
    def t_max(self) -> int:
        return max(self.timestamps)

    def value_frequencies(self, column: str) -> dict:
        """Category -> count / N over every event (nulls count toward N only)."""
        n = len(self)
        counts = Counter(v for v in self.columns[column] if v is not None)
        return {k: c / n for k, c in counts.items()}


@dataclass(frozen=True)
class LabelEntry:
    label: int
    split: Optional[str] = None


@dataclass
class LabelSet:
    entries: dict

    def __post_init__(self):
        tagged = [e.split is not None for e in self.entries.values()]
        if any(tagged) and not all(tagged):
            raise SchemaError("labels: split tags must be given for all entities or none")
        for eid, e in self.entries.items():
            if e.label not in (0, 1):
                raise ParseError(f"labels: entity {eid!r} has non-binary label {e.label!r}")
            if e.split not in (None, "train", "test"):
                raise ParseError(f"labels: entity {eid!r} has unknown split {e.split!r}")

    @property
    def has_splits(self) -> bool:
        return bool(self.entries) and next(iter(self.entries.values())).split is not None

    def ids(self) -> list:
        return sorted(self.entries)

    def label_vector(self, ids) -> np.ndarray:
        return np.array([self.entries[e].label for e in ids], dtype=float)


@dataclass(frozen=True)
class SplitSpec:
    mode: str = "from_labels"
    train_fraction: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("from_labels", "random"):
            raise DatasetError(f"unknown split mode {self.mode!r}")
        if self.mode == "random":
            if self.train_fraction is None or not 0.0 < self.train_fraction < 1.0:
                raise DatasetError("random split requires train_fraction in (0, 1)")

    @classmethod
    def from_dict(cls, doc: dict) -> "SplitSpec":
        return cls(doc.get("mode", "from_labels"), doc.get("train_fraction"), int(doc.get("seed", 0)))

    def to_dict(self) -> dict:
        return {"mode": self.mode, "train_fraction": self.train_fraction, "seed": self.seed}


@dataclass
class Dataset:
    schema: DataSchema
    events: EventLog
    labels: LabelSet
    paths: dict = field(default_factory=dict, compare=False)

    @property
    def labeled_ids(self) -> list:
        """Evaluation universe: labeled entities, sorted."""
        return self.labels.ids()

    @classmethod
    def from_rows(cls, schema: DataSchema, rows, labels: dict, source="events") -> "Dataset":
        """Build from an iterable of dict rows (strings or typed values).

        ``labels`` maps entity id to ``label`` or to ``(label, split)``.
        """
        names = schema.column_names
        cols = {n: [] for n in names}
        ts_col, id_col = schema.timestamp_column, schema.entity_id_column
        for i, row in enumerate(rows):
            lineno = i + 2
            for n in names:
                dtype = "timestamp" if n == ts_col else schema.dtype(n)
                raw = row.get(n)
                try:
                    v = _coerce(raw, dtype)
                except (ValueError, TypeError, OverflowError):
                    raise ParseError(
                        f"{source}: row {lineno}, column {n!r}: cannot parse {raw!r} as {dtype}",
                        row=lineno,
                        column=n,
                    ) from None
                if n == id_col:
                    if v is None:
                        raise ParseError(f"{source}: row {lineno}: missing entity id", lineno, n)
                    v = str(v)
                elif n == ts_col and v is None:
                    raise ParseError(f"{source}: row {lineno}: missing timestamp", lineno, n)
                cols[n].append(v)
        count = len(cols[id_col])
        if count == 0:
            raise DatasetError(f"{source}: event log has no rows")
        order = sorted(range(count), key=lambda r: (cols[ts_col][r], r))
        cols = {n: [v[r] for r in order] for n, v in cols.items()}
        events = EventLog(cols, order, id_col, ts_col)

        entries = {}
        for eid, spec in labels.items():
            lab, split = spec if isinstance(spec, tuple) else (spec, None)
            entries[str(eid)] = LabelEntry(int(lab), split)
        labelset = LabelSet(entries)
        absent = sorted(set(entries) - set(events.entity_rows))
        if absent:
            raise DatasetError(f"labeled entities missing from the event log: {absent[:5]}")
        return cls(schema, events, labelset)

    def dumps(self) -> str:
        """Canonical serialization (stable across loads of the same files)."""
        doc = {
            "schema": self.schema.to_dict(),
            "row_index": self.events.row_index,
            "columns": self.events.columns,
            "labels": {
                k: [e.label, e.split] for k, e in sorted(self.labels.entries.items())
            },
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def load_schema(path) -> DataSchema:
    path = Path(path)
    if not path.is_file():
        raise MissingDataFileError(f"schema file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from None
    return DataSchema.from_dict(doc)


def _read_csv(path: Path) -> tuple[list, list]:
    if not path.is_file():
        raise MissingDataFileError(f"file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    return header, rows


def load_dataset(events_path, labels_path, schema_path) -> Dataset:
    events_path, labels_path, schema_path = map(Path, (events_path, labels_path, schema_path))
    schema = load_schema(schema_path)

    header, raw = _read_csv(events_path)
    dup = sorted(n for n, k in Counter(header).items() if k > 1)
    if dup:
        raise SchemaError(f"{events_path}: duplicate header columns {dup}")
    undeclared = [h for h in header if not schema.has_column(h)]
    if undeclared:
        raise SchemaError(f"{events_path}: undeclared columns {undeclared}")
    absent = [n for n in schema.column_names if n not in header]
    if absent:
        raise SchemaError(f"{events_path}: declared columns missing from header {absent}")
    rows = []
    for i, rec in enumerate(raw):
        if len(rec) != len(header):
            raise ParseError(
                f"{events_path.name}: row {i + 2}: expected {len(header)} cells, got {len(rec)}",
                row=i + 2,
            )
        rows.append(dict(zip(header, rec)))

    lheader, lraw = _read_csv(labels_path)
    if lheader[:2] != ["entity_id", "label"] or len(lheader) > 3 or (
        len(lheader) == 3 and lheader[2] != "split"
    ):
        raise SchemaError(f"{labels_path}: header must be entity_id,label[,split]")
    labels: dict = {}
    for i, rec in enumerate(lraw):
        lineno = i + 2
        if len(rec) != len(lheader):
            raise ParseError(f"{labels_path.name}: row {lineno}: wrong cell count", row=lineno)
        try:
            lab = int(rec[1])
        except ValueError:
            raise ParseError(
                f"{labels_path.name}: row {lineno}, column 'label': cannot parse {rec[1]!r}",
                row=lineno,
                column="label",
            ) from None
        split = rec[2].strip() or None if len(rec) == 3 else None
        if rec[0] in labels:
            raise ParseError(f"{labels_path.name}: row {lineno}: duplicate entity {rec[0]!r}", lineno)
        labels[rec[0]] = (lab, split)

    ds = Dataset.from_rows(schema, rows, labels, source=events_path.name)
    ds.paths = {"events": str(events_path), "labels": str(labels_path), "schema": str(schema_path)}
    return ds


def _check_both_classes(dataset: Dataset, ids, side: str):
    labs = {dataset.labels.entries[e].label for e in ids}
    if labs != {0, 1}:
        raise DegenerateSplitError(f"{side} split must contain both classes (has {sorted(labs)})")


def split_entities(dataset: Dataset, spec: SplitSpec) -> tuple[set, set]:
    ids = dataset.labeled_ids
    if spec.mode == "from_labels":
        if not dataset.labels.has_splits:
            raise DatasetError("split mode from_labels needs a split column in the labels file")
        train = {e for e in ids if dataset.labels.entries[e].split == "train"}
        test = set(ids) - train
    else:
        if len(ids) < 4:
            raise DegenerateSplitError("random split needs at least 4 labeled entities")
        _check_both_classes(dataset, ids, "labeled")
        perm = np.random.default_rng(spec.seed).permutation(len(ids))
        # guard against 0.55 * 100 = 55.00000000000001 style float noise
        n_train = math.floor(spec.train_fraction * len(ids) + 1e-9)
        train = {ids[i] for i in perm[:n_train]}
        test = {ids[i] for i in perm[n_train:]}
    _check_both_classes(dataset, train, "train")
    _check_both_classes(dataset, test, "test")
    return train, test


def baseline_matrix(dataset: Dataset, ids) -> FeatureTable:
    """Raw per-entity features: earliest non-null value or frequency-encoded category."""
    ids = sorted(str(e) for e in ids)
    cols = list(dataset.schema.baseline_feature_columns)
    values = np.zeros((len(ids), len(cols)))
    log = dataset.events
    for j, name in enumerate(cols):
        column = log.columns[name]
        freq = (
            log.value_frequencies(name)
            if dataset.schema.dtype(name) == "categorical"
            else None
        )
        for i, eid in enumerate(ids):
            first: Any = None
            for pos in log.entity_rows.get(eid, ()):
                if column[pos] is not None:
                    first = column[pos]
                    break
            if first is None:
                continue
            values[i, j] = freq.get(first, 0.0) if freq is not None else float(first)
    return FeatureTable(ids, cols, values)
