"""Command-line entry point: ``featevolve run|resume|export|report|inject-idea|demo``."""
from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from pathlib import Path

from .config import RunConfig
from .errors import ConfigError, DatasetError, FeatureEngineError, LockError, ProviderError
from .knowledge_base import KnowledgeBase
from . import orchestrator

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG, EXIT_DATASET, EXIT_PROVIDER = 0, 1, 2, 3, 4


def _apply_overrides(config: RunConfig, args) -> RunConfig:
    if args.iterations is not None:
        if args.iterations < 1:
            raise ConfigError("--iterations must be >= 1")
        config.max_iterations = args.iterations
    if args.seed is not None:
        config.bandit.rng_seed = args.seed
    if args.out is not None:
        config.out_dir = str(Path(args.out).resolve())
    if args.no_critics:
        config.ablation.critics = False
    if args.no_memory:
        config.ablation.memory = False
    if args.no_ucb:
        config.ablation.ucb = False
    return config


def _summary(result) -> str:
    m = result.metrics
    return (f"best auc={m.auc:.4f} accuracy={m.accuracy:.4f} f1={m.f1:.4f}\n"
            f"run directory: {result.run_dir}")


def cmd_run(args) -> int:
    config = _apply_overrides(RunConfig.load(args.config), args)
    result = orchestrator.run(config)
    print(_summary(result))
    return EXIT_OK


def cmd_resume(args) -> int:
    result = orchestrator.resume(args.run, max_iterations=args.iterations)
    print(_summary(result))
    return EXIT_OK


def cmd_export(args) -> int:
    src = Path(args.run) / "best"
    if not (src / "program.fdl").is_file():
        raise ConfigError(f"{args.run} has no best/ output yet; finish the run first")
    dest = Path(args.dest)
    dest.mkdir(parents=True, exist_ok=True)
    for name in ("program.fdl", "features.csv", "metrics.json"):
        shutil.copy2(src / name, dest / name)
    print(f"exported best program, features and metrics to {dest}")
    return EXIT_OK


def _fmt(x, spec="+.4f"):
    return "" if x is None else format(x, spec)


def iteration_table(records) -> str:
    header = f"{'iter':>4}  {'action':<15} {'idea':>4}  {'feature':<24} {'outcome':<15} {'score':>8}  {'best':>6}"
    lines = [header, "-" * len(header)]
    for r in records:
        idea = "" if r["idea_id"] is None else str(r["idea_id"])
        lines.append(
            f"{r['iteration']:>4}  {r['action']:<15} {idea:>4}  {(r.get('feature_name') or ''):<24} "
            f"{r['outcome']:<15} {_fmt(r['score']):>8}  {r['best_metric']:.4f}"
        )
    return "\n".join(lines)


def render_report(run_dir) -> str:
    run_dir = Path(run_dir)
    kb = KnowledgeBase.load(run_dir / "knowledge_base.json")
    records = orchestrator.load_records(run_dir)
    config = json.loads((run_dir / "config.json").read_text(encoding="utf-8"))
    out = [f"# Run report: {run_dir.name}", ""]
    out.append(f"Iterations completed: {len(records)} of {config['max_iterations']}. "
               f"Ablation switches: {json.dumps(config['ablation'], sort_keys=True)}.")
    best = run_dir / "best" / "metrics.json"
    if best.is_file():
        m = json.loads(best.read_text(encoding="utf-8"))
        out.append(f"Selected best program: auc {m['auc']:.4f}, accuracy {m['accuracy']:.4f}.")
    out += ["", "## Ideas and features", ""]
    for idea in kb.ideas:
        parents = f" from ideas {idea.parent_ids}" if idea.parent_ids else ""
        out.append(f"- **Idea {idea.id}** ({idea.origin}{parents}; visits {idea.visit_count}, "
                   f"cumulative score {idea.cumulative_score:+.4f}): {idea.insight}")
        for f in idea.features:
            score = f", score {f.score:+.4f}" if f.score is not None else ""
            out.append(f"  - feature {f.id} `{f.name}`: {f.status}{score}")
    out += ["", "## Best-metric trajectory", "", "```"]
    out += [f"{r['iteration']:>4}  {r['best_metric']:.4f}" for r in records]
    out += ["```", "", "## Iterations", "", "```", iteration_table(records), "```", ""]
    return "\n".join(out)


def cmd_report(args) -> int:
    run_dir = Path(args.run)
    if not (run_dir / "knowledge_base.json").is_file():
        raise ConfigError(f"{run_dir} is not a run directory")
    print(iteration_table(orchestrator.load_records(run_dir)))
    (run_dir / "report.md").write_text(render_report(run_dir), encoding="utf-8")
    print(f"\nwrote {run_dir / 'report.md'}")
    return EXIT_OK


def cmd_inject(args) -> int:
    idea_id = orchestrator.inject_idea(args.run, args.text)
    print(f"added idea {idea_id}")
    return EXIT_OK


def cmd_demo(args) -> int:
    from .demo import build_demo

    path = build_demo(args.dest, scenario=args.scenario)
    print(f"wrote demo setup; start it with: featevolve run --config {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="featevolve", description="LLM-driven feature evolution for event logs.")
    p.add_argument("-v", "--verbose", action="store_true", help="log each iteration")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="start a new run from a JSON config")
    r.add_argument("--config", required=True)
    r.add_argument("--iterations", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--out", help="override out_dir")
    r.add_argument("--no-critics", action="store_true", help="accept every proposal without critique")
    r.add_argument("--no-memory", action="store_true", help="disable short- and long-term memory")
    r.add_argument("--no-ucb", action="store_true", help="pick ideas uniformly at random")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("resume", help="continue a stopped run")
    s.add_argument("--run", required=True)
    s.add_argument("--iterations", type=int, help="raise the iteration budget")
    s.set_defaults(func=cmd_resume)

    e = sub.add_parser("export", help="copy the best program, features and metrics")
    e.add_argument("--run", required=True)
    e.add_argument("--dest", required=True)
    e.set_defaults(func=cmd_export)

    rep = sub.add_parser("report", help="print the iteration table and write report.md")
    rep.add_argument("--run", required=True)
    rep.set_defaults(func=cmd_report)

    i = sub.add_parser("inject-idea", help="add a human insight to a stopped run")
    i.add_argument("--run", required=True)
    i.add_argument("--text", required=True)
    i.set_defaults(func=cmd_inject)

    d = sub.add_parser("demo", help="write a synthetic dataset with scripted transcripts")
    d.add_argument("--dest", required=True)
    d.add_argument("--scenario", choices=["full", "ablation"], default="full")
    d.set_defaults(func=cmd_demo)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DatasetError as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return EXIT_DATASET
    except ProviderError as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except (LockError, FeatureEngineError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
