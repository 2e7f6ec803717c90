"""The evolution loop: state ownership, per-iteration persistence and resume."""
from __future__ import annotations

import json
import logging
import os
import shutil
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .agents import AgentSuite, Critique, Forfeit, load_templates, make_provider, refine_loop
from .bandit import Action, choose_action, relative_score, select_idea
from .config import RunConfig
from .dataset import Dataset, load_dataset, split_entities
from .dsl import execute, parse, pretty_print, format_def
from .dsl.ast import FeatureDef, Derived, Program, rename_refs
from .errors import (
    ConfigError, DegenerateLabelsError, DSLError, IoError, LockError, OutputContractError,
    OutputParseError, RunnerError,
)
from .evaluation import MetricsReport, evaluate_feature_set
from .knowledge_base import KnowledgeBase, atomic_write
from .memory import EmbeddingIndex, LongTermMemory, retrieve_related, update_long_term
from .runner import execute_external
from .table import FeatureTable

logger = logging.getLogger(__name__)

OUTCOMES = ("accepted", "rejected", "idea_added", "forfeited_idea", "forfeited_code", "error")
LOCK_NAME = "run.lock"


def _dump(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def iteration_dir(run_dir, t: int) -> Path:
    return Path(run_dir) / "iterations" / f"{t:04d}"


# -- locking -------------------------------------------------------------------


def _pid_alive(pid: int) -> bool:
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


def is_locked(run_dir) -> bool:
    path = Path(run_dir) / LOCK_NAME
    if not path.exists():
        return False
    try:
        pid = int(path.read_text().strip() or 0)
    except (ValueError, OSError):
        return True
    return pid > 0 and _pid_alive(pid)


@contextmanager
def run_lock(run_dir):
    """Hold ``run.lock`` for the duration; stale locks of dead processes are taken over."""
    path = Path(run_dir) / LOCK_NAME
    if is_locked(run_dir):
        raise LockError(f"run directory {run_dir} is locked by another process")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(str(os.getpid()))
    try:
        yield
    finally:
        try:
            path.unlink()
        except FileNotFoundError:
            pass


# -- state -----------------------------------------------------------------------


@dataclass
class RunState:
    run_dir: Path
    config: RunConfig
    dataset: Dataset
    split: tuple
    kb: KnowledgeBase
    long_term: LongTermMemory
    index: EmbeddingIndex
    agents: AgentSuite
    rng: np.random.Generator
    baseline: MetricsReport
    iteration: int = 0
    idea_metrics: dict = field(default_factory=dict)
    idea_programs: dict = field(default_factory=dict)
    best: dict = field(default_factory=dict)
    best_trajectory: list = field(default_factory=list)

    def idea_metric(self, idea_id: int) -> float:
        return self.idea_metrics.get(idea_id, self.baseline.auc)

    def idea_program(self, idea_id: int) -> str:
        return self.idea_programs.get(idea_id, "")

    def state_doc(self) -> dict:
        return {
            "iteration": self.iteration,
            "rng_state": self.rng.bit_generator.state,
            "ordinals": dict(sorted(self.agents.ordinals.items())),
            "baseline": self.baseline.to_dict(),
            "idea_metrics": {str(k): v for k, v in sorted(self.idea_metrics.items())},
            "idea_programs": {str(k): v for k, v in sorted(self.idea_programs.items())},
            "best": self.best,
            "best_trajectory": self.best_trajectory,
            "long_term_updated_at": self.long_term.updated_at_iteration,
        }


@dataclass
class RunResult:
    run_dir: Path
    metrics: MetricsReport
    program: str
    table: FeatureTable
    best_trajectory: list


def _make_agents(config: RunConfig, dataset: Dataset) -> AgentSuite:
    return AgentSuite(
        provider=make_provider(config.provider),
        provider_config=config.provider,
        templates=load_templates(config.prompt_dir),
        schema=dataset.schema,
        exploration_c=config.bandit.exploration_c,
    )


def _load_dataset(config: RunConfig):
    d = config.dataset
    dataset = load_dataset(d.events, d.labels, d.schema)
    return dataset, split_entities(dataset, d.split)


def persist(state: RunState) -> None:
    """Write kb, memory and finally the state pointer."""
    run_dir = state.run_dir
    state.kb.save(run_dir / "knowledge_base.json")
    atomic_write(run_dir / "memory" / "long_term.txt", state.long_term.text)
    state.index.save(run_dir / "memory" / "index.json")
    atomic_write(run_dir / "state.json", _dump(state.state_doc()))


def init_run(config: RunConfig, run_dir=None) -> RunState:
    run_dir = Path(run_dir or config.out_dir)
    if (run_dir / "state.json").exists():
        raise ConfigError(f"{run_dir} already holds a run; use resume")
    dataset, split = _load_dataset(config)
    agents = _make_agents(config, dataset)
    run_dir.mkdir(parents=True, exist_ok=True)
    kb = KnowledgeBase()
    for text in config.prior_ideas:
        kb.add_idea(text, "prior")
    index = EmbeddingIndex(config.memory.dim)
    for idea in kb.ideas:
        index.update_idea(idea)
    baseline = evaluate_feature_set(FeatureTable.empty(dataset.labeled_ids), dataset, split, config.learner)
    state = RunState(
        run_dir=run_dir,
        config=config,
        dataset=dataset,
        split=split,
        kb=kb,
        long_term=LongTermMemory("", config.memory.max_chars, -1),
        index=index,
        agents=agents,
        rng=np.random.default_rng(config.bandit.rng_seed),
        baseline=baseline,
        best={"metric": baseline.auc, "idea_id": None, "program": "", "iteration": 0},
    )
    atomic_write(run_dir / "config.json", _dump(config.to_dict()))
    (run_dir / "iterations").mkdir(exist_ok=True)
    persist(state)
    return state


def load_state(run_dir) -> RunState:
    run_dir = Path(run_dir)
    config_path = run_dir / "config.json"
    if not config_path.is_file():
        raise IoError(f"{run_dir} is not a run directory (no config.json)")
    config = RunConfig.from_dict(json.loads(config_path.read_text(encoding="utf-8")), base_dir=run_dir)
    try:
        doc = json.loads((run_dir / "state.json").read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoError(f"cannot read run state: {exc}") from None
    dataset, split = _load_dataset(config)
    agents = _make_agents(config, dataset)
    agents.ordinals = dict(doc["ordinals"])
    kb = KnowledgeBase.load(run_dir / "knowledge_base.json")
    index = EmbeddingIndex.load(run_dir / "memory" / "index.json")
    for idea in kb.ideas:
        if idea.id not in index.entries:  # injected while stopped
            index.update_idea(idea)
    rng = np.random.default_rng()
    rng.bit_generator.state = doc["rng_state"]
    text = (run_dir / "memory" / "long_term.txt").read_text(encoding="utf-8")
    return RunState(
        run_dir=run_dir,
        config=config,
        dataset=dataset,
        split=split,
        kb=kb,
        long_term=LongTermMemory(text, config.memory.max_chars, doc["long_term_updated_at"]),
        index=index,
        agents=agents,
        rng=rng,
        baseline=MetricsReport.from_dict(doc["baseline"]),
        iteration=doc["iteration"],
        idea_metrics={int(k): v for k, v in doc["idea_metrics"].items()},
        idea_programs={int(k): v for k, v in doc["idea_programs"].items()},
        best=doc["best"],
        best_trajectory=doc["best_trajectory"],
    )


# -- one iteration -------------------------------------------------------------------


def _critique_dicts(history) -> list:
    return [{"verdict": c.verdict, "feedback": c.feedback} for c in history]


def _accept(_artifact) -> Critique:
    return Critique("accept", "")


def _exemplars(state: RunState, k: int) -> str:
    feats = [f for idea in state.kb.ideas for f in idea.accepted()]
    feats.sort(key=lambda f: (-f.score, f.id))
    return "\n".join(
        f"{f.name} (score {f.score:+.6f}): {(f.program_fragment or '').strip()}" for f in feats[:k]
    )


def compute_features(state: RunState, program_text: str) -> FeatureTable:
    ids = state.dataset.labeled_ids
    backend = state.config.dsl_backend
    if backend.kind == "external":
        return execute_external(backend.runner, program_text, state.dataset.paths, ids)
    if not program_text.strip():
        return FeatureTable.empty(ids)
    return execute(parse(program_text), state.dataset, ids, workers=backend.workers,
                   anchor=backend.anchor, time_budget=backend.time_budget_seconds)


def _idea_stage(state: RunState, action: Action, t: int, record: dict) -> None:
    cfg, agents, kb = state.config, state.agents, state.kb
    long_mem = state.long_term.text if cfg.ablation.memory else ""
    if action is Action.SYNTHESIZE:
        generate = lambda fb: agents.synthesize_idea(kb, long_mem, fb)  # noqa: E731
    else:
        generate = lambda fb: agents.create_idea(kb, long_mem, fb)  # noqa: E731
    critic = (lambda p: agents.critique_idea(p, kb)) if cfg.ablation.critics else _accept
    result = refine_loop(generate, critic, cfg.max_critic_iters)
    record["critiques"] = _critique_dicts(result.history)
    if isinstance(result, Forfeit):
        record["outcome"] = "forfeited_idea"
        return
    proposal = result.value
    origin = "synthesized" if action is Action.SYNTHESIZE else "created"
    idea_id = kb.add_idea(proposal.insight, origin, proposal.parent_ids, iteration=t)
    state.index.update_idea(kb.idea(idea_id))
    record.update(idea_id=idea_id, insight=proposal.insight, outcome="idea_added")


def _feature_stage(state: RunState, t: int, record: dict, artifacts: dict) -> None:
    cfg, agents, kb = state.config, state.agents, state.kb
    if cfg.ablation.ucb:
        idea_id = select_idea(kb, cfg.bandit)
    else:
        idea_id = int(state.rng.integers(len(kb.ideas)))
    idea = kb.idea(idea_id)
    record["idea_id"] = idea_id

    if cfg.ablation.memory:
        neighbors = [kb.idea(i) for i in retrieve_related(state.index, idea_id, cfg.memory.k)]
        try:
            short_mem = agents.build_short_term(idea, neighbors).text
        except OutputParseError as exc:
            logger.warning("short-term memory unavailable: %s", exc.reason)
            short_mem = ""
        long_mem = state.long_term.text
    else:
        short_mem = long_mem = ""

    idea_critic = (lambda p: agents.critique_idea(p, kb, idea)) if cfg.ablation.critics else _accept
    proposed = refine_loop(lambda fb: agents.propose_feature(idea, short_mem, long_mem, fb),
                           idea_critic, cfg.max_critic_iters)
    record["critiques"] = _critique_dicts(proposed.history)
    if isinstance(proposed, Forfeit):
        record["outcome"] = "forfeited_idea"
        return
    feature = proposed.value
    fid = kb.add_feature(idea_id, feature.name, feature.reason, feature.summary, feature.pseudocode, t)
    record.update(feature_id=fid, feature_name=feature.name)
    feat = idea.feature(fid)

    prior = state.idea_program(idea_id)
    external = cfg.dsl_backend.kind == "external"
    scope = f"idea_{idea_id}"

    def code_critic(code):
        if external and not code.program_text.strip():
            return Critique("reject", "program text is empty")
        if external and not cfg.ablation.critics:
            return _accept(code)
        return agents.critique_code(code, feature, prior, use_llm=cfg.ablation.critics,
                                    scope=scope, mechanical=not external)

    exemplars = _exemplars(state, cfg.exemplars_k)
    coded = refine_loop(lambda fb: agents.generate_code(feature, idea, prior, fb, exemplars,
                                                            splice=not external),
                        code_critic, cfg.max_critic_iters)
    record["critiques"] += _critique_dicts(coded.history)
    if isinstance(coded, Forfeit):
        kb.mark_failed(idea_id, fid)
        state.index.update_idea(idea)
        record["outcome"] = "forfeited_code"
        return

    if external:
        program_text = coded.value.program_text
        feat.program_fragment = program_text
    else:
        program = parse(coded.value.program_text)
        program_text = pretty_print(program)
        feat.program_fragment = format_def(program.defs[-1])
    record["program"] = program_text
    artifacts["program.fdl"] = program_text

    try:
        table = compute_features(state, program_text)
        metrics = evaluate_feature_set(table, state.dataset, state.split, cfg.learner)
    except (DSLError, RunnerError, OutputContractError, DegenerateLabelsError) as exc:
        kb.mark_failed(idea_id, fid)
        state.index.update_idea(idea)
        record.update(outcome="error", error=str(exc))
        return
    artifacts["features.csv"] = table.to_csv()
    artifacts["metrics.json"] = _dump(metrics.to_dict())

    previous = state.idea_metric(idea_id)
    score = relative_score(metrics.auc, previous)
    kb.record_outcome(idea_id, fid, score)
    state.index.update_idea(idea)
    record.update(metrics=metrics.to_dict(), score=score, previous_metric=previous,
                  outcome=feat.status)
    if feat.status == "accepted":
        state.idea_metrics[idea_id] = metrics.auc
        state.idea_programs[idea_id] = program_text
        if metrics.auc > state.best["metric"]:
            state.best = {"metric": metrics.auc, "idea_id": idea_id, "program": program_text, "iteration": t}

    if cfg.ablation.memory:
        try:
            summary = agents.evaluate_summarize(idea, feat, metrics, score, state.long_term.text)
            state.long_term = update_long_term(state.long_term, summary.text, t)
        except OutputParseError as exc:
            logger.warning("long-term memory not updated: %s", exc.reason)


def step(state: RunState) -> dict:
    """Run one iteration, write ``iterations/<t>/`` and persist the state."""
    t = state.iteration + 1
    state.agents.drain_calls()
    action = choose_action(state.kb, state.config.bandit, state.rng)
    record = {
        "iteration": t,
        "action": action.value,
        "idea_id": None,
        "feature_id": None,
        "program": "",
        "critiques": [],
        "metrics": None,
        "score": None,
        "outcome": None,
    }
    artifacts: dict = {}
    if action is Action.PROPOSE_FEATURE:
        _feature_stage(state, t, record, artifacts)
    else:
        _idea_stage(state, action, t, record)
    state.best_trajectory.append(state.best["metric"])
    record["best_metric"] = state.best["metric"]
    calls = state.agents.drain_calls()
    record["provider_calls"] = [f"{c.role_tag}#{c.ordinal}" for c in calls]

    out = iteration_dir(state.run_dir, t)
    if out.exists():
        shutil.rmtree(out)  # leftover of an interrupted attempt
    (out / "transcripts").mkdir(parents=True)
    for name, text in artifacts.items():
        (out / name).write_text(text, encoding="utf-8")
    for n, c in enumerate(calls):
        fname = f"{n:02d}_{c.role_tag.replace('/', '__')}_{c.ordinal:03d}.txt"
        (out / "transcripts" / fname).write_text(
            f"=== prompt ===\n{c.prompt}\n=== reply ===\n{c.reply}", encoding="utf-8")
    (out / "record.json").write_text(_dump(record), encoding="utf-8")
    state.iteration = t
    persist(state)
    logger.info("iteration %d: %s -> %s", t, action.value, record["outcome"])
    return record


# -- selection and whole runs ---------------------------------------------------------


def union_program(state: RunState) -> str:
    """All accepted definitions across ideas; colliding names get an idea prefix."""
    programs = [(i, state.idea_program(i)) for i in sorted(state.idea_programs) if state.idea_program(i)]
    if state.config.dsl_backend.kind == "external":
        return "\n".join(p for _, p in programs)
    parsed = [(i, parse(p)) for i, p in programs]
    counts: dict = {}
    for _, prog in parsed:
        for d in prog.defs:
            counts[d.name] = counts.get(d.name, 0) + 1
    defs = []
    for i, prog in parsed:
        mapping = {d.name: f"i{i}_{d.name}" for d in prog.defs if counts[d.name] > 1}
        for d in prog.defs:
            body = d.body
            if isinstance(body, Derived):
                body = Derived(rename_refs(body.expr, mapping))
            defs.append(FeatureDef(mapping.get(d.name, d.name), body))
    return pretty_print(Program(tuple(defs)))


def select_best(state: RunState):
    """Evaluate each idea's program and the union; return the best candidate.

    Returns ``(table, program_text, metrics)``; ties go to the earlier candidate.
    """
    candidates = [state.idea_program(i) for i in sorted(state.idea_programs) if state.idea_program(i)]
    if len(candidates) > 1:
        candidates.append(union_program(state))
    best = (FeatureTable.empty(state.dataset.labeled_ids), "", state.baseline)
    for text in candidates:
        table = compute_features(state, text)
        metrics = evaluate_feature_set(table, state.dataset, state.split, state.config.learner)
        if metrics.auc > best[2].auc:
            best = (table, text, metrics)
    return best


def finalize(state: RunState) -> RunResult:
    table, program, metrics = select_best(state)
    out = state.run_dir / "best"
    out.mkdir(parents=True, exist_ok=True)
    (out / "program.fdl").write_text(program, encoding="utf-8")
    table.to_csv(out / "features.csv")
    (out / "metrics.json").write_text(_dump(metrics.to_dict()), encoding="utf-8")
    return RunResult(state.run_dir, metrics, program, table, list(state.best_trajectory))


def _loop(state: RunState, stop_after: Optional[int]) -> RunResult:
    budget = state.config.wall_clock_budget_seconds
    started = time.monotonic()
    while state.iteration < state.config.max_iterations:
        if stop_after is not None and state.iteration >= stop_after:
            return None
        if budget is not None and time.monotonic() - started > budget:
            logger.info("wall-clock budget exhausted after %d iterations", state.iteration)
            break
        step(state)
    return finalize(state)


def run(config: RunConfig, stop_after: Optional[int] = None) -> Optional[RunResult]:
    """init_run followed by steps until ``max_iterations`` (or ``stop_after``)."""
    run_dir = Path(config.out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    with run_lock(run_dir):
        state = init_run(config, run_dir)
        return _loop(state, stop_after)


def resume(run_dir, max_iterations: Optional[int] = None, stop_after: Optional[int] = None):
    with run_lock(run_dir):
        state = load_state(run_dir)
        if max_iterations is not None:
            state.config.max_iterations = max_iterations
            atomic_write(Path(run_dir) / "config.json", _dump(state.config.to_dict()))
        return _loop(state, stop_after)


def inject_idea(run_dir, text: str) -> int:
    """Add a prior idea to a stopped run; the next resume sees it."""
    run_dir = Path(run_dir)
    if not (run_dir / "knowledge_base.json").is_file():
        raise IoError(f"{run_dir} is not a run directory")
    with run_lock(run_dir):
        kb = KnowledgeBase.load(run_dir / "knowledge_base.json")
        doc = json.loads((run_dir / "state.json").read_text(encoding="utf-8"))
        idea_id = kb.add_idea(text, "prior", iteration=doc["iteration"])
        kb.save(run_dir / "knowledge_base.json")
    return idea_id


def load_records(run_dir) -> list:
    root = Path(run_dir) / "iterations"
    if not root.is_dir():
        return []
    out = []
    for d in sorted(root.iterdir()):
        rec = d / "record.json"
        if rec.is_file():
            out.append(json.loads(rec.read_text(encoding="utf-8")))
    return out
