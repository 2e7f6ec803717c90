"""Per-entity numeric feature tables."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import OutputContractError


@dataclass
class FeatureTable:
    """One row per entity, finite float values."""

    entity_ids: list[str]
    columns: list[str]
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.entity_ids = [str(e) for e in self.entity_ids]
        self.columns = list(self.columns)
        values = np.asarray(self.values, dtype=float)
        if values.size == 0:
            values = values.reshape(len(self.entity_ids), len(self.columns))
        if values.shape != (len(self.entity_ids), len(self.columns)):
            raise ValueError(
                f"values shape {values.shape} does not match "
                f"{len(self.entity_ids)} entities x {len(self.columns)} columns"
            )
        self.values = values

    @classmethod
    def empty(cls, entity_ids) -> "FeatureTable":
        ids = list(entity_ids)
        return cls(ids, [], np.zeros((len(ids), 0)))

    @property
    def shape(self):
        return self.values.shape

    def rows(self, entity_ids) -> "FeatureTable":
        """Select rows (in the requested order)."""
        pos = {e: i for i, e in enumerate(self.entity_ids)}
        ids = [str(e) for e in entity_ids]
        missing = [e for e in ids if e not in pos]
        if missing:
            raise KeyError(f"entities not in table: {missing[:5]}")
        idx = [pos[e] for e in ids]
        return FeatureTable(ids, self.columns, self.values[idx, :])

    def hstack(self, other: "FeatureTable") -> "FeatureTable":
        other = other.rows(self.entity_ids)
        return FeatureTable(
            self.entity_ids,
            self.columns + other.columns,
            np.hstack([self.values, other.values]),
        )

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["entity_id"] + self.columns)
        for eid, row in zip(self.entity_ids, self.values):
            writer.writerow([eid] + [repr(float(v)) for v in row])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    @classmethod
    def from_csv(cls, path) -> "FeatureTable":
        """Read a table written by an external runner or :meth:`to_csv`."""
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise OutputContractError(f"{path}: empty output file") from None
            if not header or header[0] != "entity_id":
                raise OutputContractError(f"{path}: first column must be entity_id")
            ids, rows = [], []
            for lineno, rec in enumerate(reader, start=2):
                if not rec:
                    continue
                if len(rec) != len(header):
                    raise OutputContractError(
                        f"{path}:{lineno}: expected {len(header)} cells, got {len(rec)}"
                    )
                vals = []
                for name, cell in zip(header[1:], rec[1:]):
                    try:
                        v = float(cell)
                    except ValueError:
                        raise OutputContractError(
                            f"{path}:{lineno}: non-numeric value {cell!r} in column {name!r}"
                        ) from None
                    if not math.isfinite(v):
                        raise OutputContractError(
                            f"{path}:{lineno}: non-finite value in column {name!r}"
                        )
                    vals.append(v)
                ids.append(rec[0])
                rows.append(vals)
        if len(set(ids)) != len(ids):
            raise OutputContractError(f"{path}: duplicate entity ids")
        values = np.array(rows, dtype=float).reshape(len(ids), len(header) - 1)
        return cls(ids, header[1:], values)
