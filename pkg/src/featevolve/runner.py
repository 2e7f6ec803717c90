"""Subprocess runner for external feature programs and external learners."""
from __future__ import annotations

import logging
import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError, ExecutionTimeoutError, OutputContractError, RunnerError
from .table import FeatureTable

logger = logging.getLogger(__name__)

MAX_STDERR_CHARS = 4000


@dataclass
class RunnerConfig:
    command_template: str
    timeout_seconds: int = 60

    @classmethod
    def from_dict(cls, doc: dict) -> "RunnerConfig":
        if "command_template" not in doc:
            raise ConfigError("runner config needs command_template")
        return cls(doc["command_template"], int(doc.get("timeout_seconds", 60)))

    def to_dict(self) -> dict:
        return {"command_template": self.command_template, "timeout_seconds": self.timeout_seconds}


def run_command(template: str, placeholders: dict, timeout: float, cwd=None) -> subprocess.CompletedProcess:
    """Substitute ``{name}`` placeholders per argument and run without a shell."""
    args = []
    for part in shlex.split(template):
        for key, value in placeholders.items():
            part = part.replace("{" + key + "}", str(value))
        args.append(part)
    logger.debug("running %s", args)
    try:
        proc = subprocess.run(args, capture_output=True, text=True, timeout=timeout, cwd=cwd)
    except subprocess.TimeoutExpired:
        raise ExecutionTimeoutError(f"command timed out after {timeout} s: {args[0]}") from None
    except OSError as exc:
        raise RunnerError(f"cannot start {args[0]!r}: {exc}", str(exc)) from None
    if proc.returncode != 0:
        stderr = (proc.stderr or "").strip()[-MAX_STDERR_CHARS:]
        raise RunnerError(f"command exited with status {proc.returncode}: {stderr}", stderr)
    return proc


def read_table_for(path, ids) -> FeatureTable:
    """Read an output CSV and check it covers exactly the requested ids."""
    if not Path(path).is_file():
        raise OutputContractError(f"runner produced no output file at {path}")
    table = FeatureTable.from_csv(path)
    wanted = sorted(str(e) for e in ids)
    have = set(table.entity_ids)
    missing = [e for e in wanted if e not in have]
    if missing:
        raise OutputContractError(f"output is missing {len(missing)} requested entities, e.g. {missing[:3]}")
    return table.rows(wanted)


def execute_external(runner: RunnerConfig, program_text: str, dataset_paths: dict, ids) -> FeatureTable:
    """Run an arbitrary feature program through ``runner.command_template``.

    Placeholders: ``{program} {events} {labels} {schema} {output}``.
    """
    with tempfile.TemporaryDirectory(prefix="featevolve-ext-") as tmp:
        tmp = Path(tmp)
        program_path = tmp / "program.txt"
        program_path.write_text(program_text, encoding="utf-8")
        output = tmp / "features.csv"
        run_command(
            runner.command_template,
            {
                "program": program_path,
                "events": dataset_paths.get("events", ""),
                "labels": dataset_paths.get("labels", ""),
                "schema": dataset_paths.get("schema", ""),
                "output": output,
            },
            runner.timeout_seconds,
        )
        return read_table_for(output, ids)
