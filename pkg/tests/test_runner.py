import sys

import pytest

from featevolve.errors import ExecutionTimeoutError, OutputContractError, RunnerError
from featevolve.runner import RunnerConfig, execute_external
from featevolve.table import FeatureTable

PY = sys.executable


@pytest.fixture
def prebuilt(tmp_path):
    path = tmp_path / "pre.csv"
    path.write_text("entity_id,f\nA,1.5\nB,2.0\n")
    return path


def test_identity_runner(prebuilt):
    cmd = f"{PY} -c \"import shutil, sys; shutil.copy(sys.argv[1], sys.argv[2])\" {prebuilt} {{output}}"
    t = execute_external(RunnerConfig(cmd, 30), "feature f = count()", {}, ["B", "A"])
    assert t.entity_ids == ["A", "B"] and t.values[:, 0].tolist() == [1.5, 2.0]


def test_program_placeholder_reaches_runner(tmp_path):
    script = tmp_path / "echo.py"
    script.write_text("import sys\ntext = open(sys.argv[1]).read()\n"
                      "open(sys.argv[2], 'w').write(f'entity_id,n\\nA,{len(text)}\\n')\n")
    t = execute_external(RunnerConfig(f"{PY} {script} {{program}} {{output}}", 30), "abcd", {}, ["A"])
    assert t.values[0, 0] == 4.0


def test_runner_failure_carries_stderr():
    cmd = f"{PY} -c \"import sys; sys.stderr.write('bad column'); sys.exit(1)\""
    with pytest.raises(RunnerError) as info:
        execute_external(RunnerConfig(cmd, 30), "", {}, ["A"])
    assert "bad column" in info.value.stderr


def test_missing_entity_and_timeout(prebuilt):
    cmd = f"{PY} -c \"import shutil, sys; shutil.copy(sys.argv[1], sys.argv[2])\" {prebuilt} {{output}}"
    with pytest.raises(OutputContractError):
        execute_external(RunnerConfig(cmd, 30), "", {}, ["A", "B", "C"])
    with pytest.raises(ExecutionTimeoutError):
        execute_external(RunnerConfig(f"{PY} -c \"import time; time.sleep(5)\"", 1), "", {}, ["A"])


def test_feature_table_csv_round_trip(tmp_path):
    t = FeatureTable(["A", "B"], ["x", "y"], [[0.1, 1e-300], [3.0, -2.5]])
    t.to_csv(tmp_path / "t.csv")
    back = FeatureTable.from_csv(tmp_path / "t.csv")
    assert back.entity_ids == t.entity_ids and (back.values == t.values).all()
