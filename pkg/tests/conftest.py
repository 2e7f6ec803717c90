import json
from pathlib import Path

import pytest

from featevolve.dataset import DataSchema, Dataset
from featevolve.demo import build_demo


def make_schema(columns, baseline=(), entity="uid", ts="ts"):
    return DataSchema.from_dict({
        "dataset_context": "toy log",
        "columns": [{"name": n, "dtype": d} for n, d in columns],
        "entity_id_column": entity,
        "timestamp_column": ts,
        "baseline_feature_columns": list(baseline),
    })


TOY_COLUMNS = [("uid", "categorical"), ("action", "categorical"), ("ts", "int"),
               ("v", "float"), ("age", "int")]


def toy_dataset(rows, labels, columns=TOY_COLUMNS, baseline=()):
    return Dataset.from_rows(make_schema(columns, baseline), rows, labels)


def write_csv(path: Path, header, rows):
    lines = [",".join(header)] + [",".join(str(c) for c in r) for r in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


@pytest.fixture
def toy_files(tmp_path):
    """Three events, two labeled entities, on disk."""
    schema = {
        "dataset_context": "toy",
        "columns": [{"name": "uid", "dtype": "categorical"}, {"name": "action", "dtype": "categorical"},
                    {"name": "ts", "dtype": "int"}],
        "entity_id_column": "uid",
        "timestamp_column": "ts",
    }
    (tmp_path / "schema.json").write_text(json.dumps(schema))
    write_csv(tmp_path / "events.csv", ["uid", "action", "ts"],
              [["A", "view", 1], ["B", "buy", 2], ["A", "buy", 3]])
    write_csv(tmp_path / "labels.csv", ["entity_id", "label"], [["A", 1], ["B", 0]])
    return tmp_path


@pytest.fixture(scope="session")
def full_demo(tmp_path_factory):
    """The full planted-signal setup (data + transcripts + config)."""
    root = tmp_path_factory.mktemp("full_demo")
    return build_demo(root, "full")


@pytest.fixture(scope="session")
def ablation_demo(tmp_path_factory):
    root = tmp_path_factory.mktemp("ablation_demo")
    return build_demo(root, "ablation")
