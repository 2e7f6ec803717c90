import json
import os
import sys

import numpy as np
import pytest

from featevolve.config import RunConfig
from featevolve.demo import agent_reply, critic_reply
from featevolve.errors import ConfigError, LockError
from featevolve.evaluation import auc
from featevolve.knowledge_base import KnowledgeBase
from featevolve.orchestrator import (
    LOCK_NAME, init_run, inject_idea, load_records, resume, run, select_best, step, union_program,
)

from conftest import write_csv


def demo_config(config_path, out_dir, **overrides) -> RunConfig:
    cfg = RunConfig.load(config_path)
    cfg.out_dir = str(out_dir)
    for k, v in overrides.items():
        setattr(cfg, k, v)
    return cfg


def visits(run_dir):
    kb = KnowledgeBase.load(run_dir / "knowledge_base.json")
    return [i.visit_count for i in kb.ideas], kb.total_visits


def test_accept_path_and_layout(full_demo, tmp_path):
    out = tmp_path / "run"
    result = run(demo_config(full_demo, out, max_iterations=1))
    rec = load_records(out)[0]
    assert rec["outcome"] == "accepted" and rec["feature_name"] == "recent_events_7d"
    assert visits(out) == ([1, 0], 1)
    it = out / "iterations" / "0001"
    for name in ("record.json", "program.fdl", "features.csv", "metrics.json"):
        assert (it / name).is_file()
    assert any((it / "transcripts").iterdir())
    for name in ("config.json", "knowledge_base.json", "state.json", "memory/long_term.txt", "memory/index.json",
                 "best/program.fdl", "best/features.csv", "best/metrics.json"):
        assert (out / name).is_file()
    assert not (out / LOCK_NAME).exists()
    assert result.metrics.auc == rec["metrics"]["auc"]


def test_forfeit_leaves_visit_counts_unchanged(full_demo, tmp_path):
    out = tmp_path / "run"
    assert run(demo_config(full_demo, out), stop_after=1) is None
    before = visits(out)
    resume(out, stop_after=2)
    rec = load_records(out)[1]
    assert rec["outcome"] == "forfeited_code" and len(rec["critiques"]) >= 3
    assert visits(out) == before
    kb = KnowledgeBase.load(out / "knowledge_base.json")
    assert kb.idea(1).features[0].status == "failed"


def test_no_priors_starts_with_create(full_demo, tmp_path):
    out = tmp_path / "run"
    run(demo_config(full_demo, out, prior_ideas=[], max_iterations=1))
    rec = load_records(out)[0]
    assert rec["action"] == "create" and rec["outcome"] == "idea_added"


def test_existing_run_and_bad_config(full_demo, tmp_path):
    out = tmp_path / "run"
    cfg = demo_config(full_demo, out, max_iterations=1)
    run(cfg)
    with pytest.raises(ConfigError):
        init_run(cfg)
    doc = json.loads(full_demo.read_text())
    doc["max_iterations"] = 0
    with pytest.raises(ConfigError):
        RunConfig.from_dict(doc, full_demo.parent)


def test_lock_and_injection(full_demo, tmp_path):
    out = tmp_path / "run"
    run(demo_config(full_demo, out, max_iterations=1))
    (out / LOCK_NAME).write_text(str(os.getpid()))
    with pytest.raises(LockError):
        inject_idea(out, "held")
    with pytest.raises(LockError):
        resume(out)
    (out / LOCK_NAME).write_text("999999999")  # dead process: stale lock
    new_id = inject_idea(out, "Weekend shoppers are loyal.")
    kb = KnowledgeBase.load(out / "knowledge_base.json")
    assert kb.idea(new_id).origin == "prior" and new_id == 2
    # idea 1 forfeits once and stays unvisited, so it is retried before the injected idea
    resume(out, max_iterations=5)
    picked = [r["idea_id"] for r in load_records(out) if r["action"] == "propose_feature"]
    assert picked[-1] == new_id and new_id not in picked[:-1]


def _complementary(tmp_path):
    """Label = 1 iff a_count + b_count >= 5; each count alone is only partly informative."""
    rng = np.random.default_rng(0)
    rows, labels = [], []
    t = 0
    for i in range(120):
        a, b = rng.integers(0, 5, 2)
        for action, k in (("a", a), ("b", b), ("c", 1)):
            for _ in range(k):
                t += 1
                rows.append([f"e{i:03d}", action, t])
        labels.append([f"e{i:03d}", int(a + b >= 5)])
    write_csv(tmp_path / "events.csv", ["uid", "action", "ts"], rows)
    write_csv(tmp_path / "labels.csv", ["entity_id", "label"], labels)
    (tmp_path / "schema.json").write_text(json.dumps({
        "dataset_context": "two signals",
        "columns": [{"name": "uid", "dtype": "categorical"}, {"name": "action", "dtype": "categorical"},
                    {"name": "ts", "dtype": "int"}],
        "entity_id_column": "uid", "timestamp_column": "ts"}))
    scripts = tmp_path / "transcripts"
    for role in ("idea_critic", "code_critic"):
        (scripts / role).mkdir(parents=True)
        (scripts / role / "default.txt").write_text(critic_reply("accept"))
    doc = {
        "dataset": {"events": "events.csv", "labels": "labels.csv", "schema": "schema.json",
                    "split": {"mode": "random", "train_fraction": 0.6, "seed": 1}},
        "provider": {"kind": "scripted", "scripted_dir": "transcripts"},
        "out_dir": "run", "max_iterations": 1, "prior_ideas": ["a matters", "b matters"],
    }
    (tmp_path / "config.json").write_text(json.dumps(doc))
    return RunConfig.load(tmp_path / "config.json"), np.array([r[1] for r in labels])


def test_select_best_union(tmp_path):
    cfg, _ = _complementary(tmp_path)
    state = init_run(cfg)
    table, program, metrics = select_best(state)
    assert table.values.shape[1] == 0 and program == "" and metrics == state.baseline
    state.idea_programs = {0: 'feature n = count() where action = "a"\n',
                           1: 'feature n = count() where action = "b"\n'}
    union = union_program(state)
    assert union == 'feature i0_n = count() where action = "a"\nfeature i1_n = count() where action = "b"\n'
    table, program, metrics = select_best(state)
    assert program == union and metrics.auc == 1.0
    ids = sorted(state.split[1])
    y = state.dataset.labels.label_vector(ids)
    sums = table.rows(ids).values.sum(axis=1)
    assert auc(y, sums) == 1.0  # the union separates the classes directly
    state.idea_programs = {0: state.idea_programs[0]}
    assert select_best(state)[1] == state.idea_programs[0]


def test_external_backend_step(tmp_path):
    cfg, _ = _complementary(tmp_path)
    counter = tmp_path / "count.py"
    counter.write_text(
        "import csv, sys\n"
        "counts = {}\n"
        "for r in csv.DictReader(open(sys.argv[1])):\n"
        "    counts[r['uid']] = counts.get(r['uid'], 0) + (r['action'] == 'a')\n"
        "with open(sys.argv[2], 'w') as fh:\n"
        "    fh.write('entity_id,na\\n')\n"
        "    for k, v in sorted(counts.items()):\n"
        "        fh.write(f'{k},{v}\\n')\n")
    doc = json.loads((tmp_path / "config.json").read_text())
    doc["dsl_backend"] = {"kind": "external",
                          "runner": {"command_template": f"{sys.executable} {counter} {{events}} {{output}}"}}
    doc["bandit"] = {"action_probs": {"propose_feature": 1, "synthesize": 0, "create": 0}}
    (tmp_path / "config.json").write_text(json.dumps(doc))
    scripts = tmp_path / "transcripts"
    (scripts / "feature_proposer").mkdir()
    (scripts / "feature_proposer" / "000.txt").write_text(agent_reply(
        {"name": "na", "reason": "r", "summary": "count of a", "pseudocode": "count a events"}))
    (scripts / "code_agent").mkdir()
    (scripts / "code_agent" / "000.txt").write_text(agent_reply({"program_text": "python: count a events"}))
    for role in ("evaluator", "short_term_memory"):
        (scripts / role).mkdir()
        (scripts / role / "default.txt").write_text(agent_reply({"text": "noted"}))
    state = init_run(RunConfig.load(tmp_path / "config.json"))
    rec = step(state)
    assert rec["outcome"] == "accepted" and rec["program"] == "python: count a events"
    assert rec["metrics"]["auc"] > state.baseline.auc
