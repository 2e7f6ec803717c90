"""Synthetic churn log with a planted signal, plus scripted agent transcripts.

The generated directory is a complete, offline run setup: events/labels/schema,
a transcript tree for the scripted provider and a config file.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .dataset import Dataset

DAY = 86400
T0 = 1_700_000_000
HORIZON_DAYS = 30
FINAL_WINDOW_DAYS = 7
PLANTED_FEATURE = "recent_events_7d"

PRIOR_IDEAS = [
    "Users who are about to churn taper off their activity towards the end of the observation period.",
    "Spending behaviour reflects how engaged a user is with the product.",
]


def make_planted_log(n_entities: int = 200, seed: int = 7, positive_share: float = 0.4,
                     slowdown: float = 4.0):
    """Return (event rows, labels) where churners are ``slowdown``x quieter at the end."""
    rng = np.random.default_rng(seed)
    n_pos = int(round(n_entities * positive_share))
    labels_arr = np.array([1] * n_pos + [0] * (n_entities - n_pos))
    rng.shuffle(labels_arr)
    actions = ["view", "click", "cart", "purchase"]
    action_p = [0.55, 0.25, 0.12, 0.08]
    devices = ["ios", "android", "web"]
    final_start = HORIZON_DAYS - FINAL_WINDOW_DAYS
    rows, labels = [], {}
    for i in range(n_entities):
        uid = f"u{i:03d}"
        label = int(labels_arr[i])
        labels[uid] = label
        rate = rng.uniform(0.6, 1.1)
        device = devices[rng.integers(len(devices))]
        age = int(rng.integers(18, 70))
        early = rng.poisson(rate * final_start)
        late_rate = rate / slowdown if label == 1 else rate
        late = rng.poisson(late_rate * FINAL_WINDOW_DAYS)
        times = np.concatenate([
            rng.uniform(0, final_start * DAY, early),
            rng.uniform(final_start * DAY, HORIZON_DAYS * DAY, late),
        ])
        if len(times) == 0:
            times = rng.uniform(0, final_start * DAY, 1)
        for t in times:
            action = actions[rng.choice(len(actions), p=action_p)]
            amount = f"{rng.gamma(2.0, 15.0):.2f}" if action == "purchase" else ""
            rows.append({
                "user_id": uid,
                "action": action,
                "ts": str(T0 + int(t)),
                "amount": amount,
                "device": device,
                "age": str(age),
            })
    order = rng.permutation(len(rows))
    return [rows[k] for k in order], labels


SCHEMA = {
    "dataset_context": "Click-stream of a shopping app over 30 days; label 1 = the user churned afterwards.",
    "columns": [
        {"name": "user_id", "dtype": "categorical", "description": "user identifier"},
        {"name": "action", "dtype": "categorical", "description": "view, click, cart or purchase"},
        {"name": "ts", "dtype": "timestamp", "description": "event time, epoch seconds"},
        {"name": "amount", "dtype": "float", "description": "order value, purchases only"},
        {"name": "device", "dtype": "categorical", "description": "ios, android or web"},
        {"name": "age", "dtype": "int", "description": "user age in years"},
    ],
    "entity_id_column": "user_id",
    "timestamp_column": "ts",
    "baseline_feature_columns": ["age", "device"],
}


def write_dataset(dest, n_entities: int = 200, seed: int = 7) -> dict:
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    rows, labels = make_planted_log(n_entities, seed)
    with open(dest / "events.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=[c["name"] for c in SCHEMA["columns"]], lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    with open(dest / "labels.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["entity_id", "label"])
        for uid in sorted(labels):
            w.writerow([uid, labels[uid]])
    (dest / "schema.json").write_text(json.dumps(SCHEMA, indent=2) + "\n", encoding="utf-8")
    return {"events": "events.csv", "labels": "labels.csv", "schema": "schema.json"}


def final_window_means(dataset: Dataset, days: int = FINAL_WINDOW_DAYS) -> dict:
    """Mean per-entity event count in the final window, by class."""
    log = dataset.events
    cut = log.t_max - days * DAY
    sums, counts = {0: 0.0, 1: 0.0}, {0: 0, 1: 0}
    for eid in dataset.labeled_ids:
        lab = dataset.labels.entries[eid].label
        sums[lab] += sum(1 for p in log.entity_rows[eid] if log.timestamps[p] > cut)
        counts[lab] += 1
    return {k: sums[k] / counts[k] for k in sums}


# -- scripted transcripts ---------------------------------------------------------


def agent_reply(output: dict, note: str = "") -> str:
    doc = {
        "analyze": note or "Reviewed the schema, the idea and the available experience.",
        "self_reflect": "Checked that the answer only uses declared columns and is consistent with the idea.",
        "reconstruct": "Kept the answer minimal and directly computable.",
        "output": output,
    }
    return f"Here is my answer.\n\n```json\n{json.dumps(doc, indent=2)}\n```\n"


def critic_reply(verdict: str, feedback: str = "") -> str:
    doc = {"analyze": "", "self_reflect": "", "reconstruct": "",
           "output": {"verdict": verdict, "feedback": feedback}}
    return f"```json\n{json.dumps(doc)}\n```\n"


def _feature(name, summary, pseudocode, definition, bad_attempts=()):
    return {"name": name, "summary": summary, "pseudocode": pseudocode,
            "definition": definition, "bad": list(bad_attempts)}


# Per prior/created/synthesized idea: feature proposals in the order the idea
# will be asked for them. ``definition`` is the single new DSL line.
FULL_SCENARIO = {
    0: [
        _feature(PLANTED_FEATURE, "Number of events in the last seven days.",
                 "count the user's events with ts in the final 7 days of the log",
                 "count() window last 7 days"),
        _feature("recent_events_3d", "Events in the last three days.",
                 "count events within the final 3 days", "count() window last 3 days"),
        _feature("recent_views_7d", "Views in the last week.",
                 "count view events within the final 7 days",
                 'count() where action = "view" window last 7 days'),
        _feature("recent_clicks_14d", "Clicks in the last two weeks.",
                 "count click events within the final 14 days",
                 'count() where action = "click" window last 14 days'),
    ],
    1: [
        _feature("total_spend", "Total order value.", "sum amount over purchase events",
                 'sum(amount) where action = "purchase"',
                 bad_attempts=[
                     "feature total_spend = sum(price)\n",
                     'feature total_spend = sum(action) where action = "purchase"\n',
                     "feature spend = sum(amount)\n",
                 ]),
        _feature("recent_purchases", "Purchases in the last week.",
                 "count purchase events in the final 7 days",
                 'count() where action = "purchase" window last 7 days'),
        _feature("mean_order_value", "Average order value.", "mean amount of purchases",
                 "mean(amount)"),
    ],
    2: [
        _feature("teleport_events", "Count of teleport actions.",
                 "count events whose action is teleport", 'count() where action = "teleport"'),
        _feature("distinct_actions", "How many distinct action types a user performs.",
                 "nunique of action", "nunique(action)"),
        _feature("recent_distinct_actions", "Distinct action types in the final week.",
                 "nunique of action within the final 7 days", "nunique(action) window last 7 days"),
    ],
    3: [
        _feature("recent_cart_events", "Cart additions in the final week.",
                 "count cart events in the last 7 days",
                 'count() where action = "cart" window last 7 days'),
        _feature("recent_spend", "Order value in the final two weeks.",
                 "sum amount of purchases in the last 14 days",
                 'sum(amount) where action = "purchase" window last 14 days'),
    ],
    4: [
        _feature("refund_events", "Purchases with a negative amount.",
                 "count purchase events with amount below zero", "count() where amount < 0"),
        _feature("night_events", "Events between midnight and 6am.",
                 "count events whose hour is below 6", "count() where hour(ts) < 6"),
        _feature("weekend_events_recent", "Weekend events in the final week.",
                 "count events on Saturday/Sunday in the last 7 days",
                 "count() where dayofweek(ts) >= 5 window last 7 days"),
    ],
}

CREATED_IDEAS = [
    "The variety of actions a user performs indicates how deeply they use the product.",
    "Time-of-day and day-of-week habits reveal routine, sticky usage.",
]
SYNTHESIZED_IDEAS = [
    ("Fading activity combined with dropping spend is a stronger churn marker than either alone.", [0, 1]),
]


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def write_feature_transcripts(root: Path, scenario: dict, max_attempts: int = 3) -> None:
    """Proposer and code-agent replies per idea, in consumption order.

    Code replies carry only the new definition; the engine appends it to the
    idea's accepted program, so replay does not depend on earlier outcomes.
    """
    for idea_id, feats in scenario.items():
        pdir = root / "feature_proposer" / f"idea_{idea_id}"
        cdir = root / "code_agent" / f"idea_{idea_id}"
        code_n = 0
        for k, f in enumerate(feats):
            _write(pdir / f"{k:03d}.txt", agent_reply({
                "name": f["name"],
                "reason": f"Operationalizes idea {idea_id}: {f['summary']}",
                "summary": f["summary"],
                "pseudocode": f["pseudocode"],
            }))
            for bad in f["bad"]:
                _write(cdir / f"{code_n:03d}.txt", agent_reply({"program_text": bad}))
                code_n += 1
            if len(f["bad"]) >= max_attempts:
                continue  # the code loop forfeits before reaching a good reply
            line = f"feature {f['name']} = {f['definition']}\n"
            _write(cdir / f"{code_n:03d}.txt", agent_reply({"program_text": line}))
            code_n += 1


def write_common_transcripts(root: Path) -> None:
    _write(root / "idea_critic" / "default.txt", critic_reply("accept"))
    _write(root / "code_critic" / "default.txt", critic_reply("accept"))
    _write(root / "short_term_memory" / "default.txt", agent_reply(
        {"text": "Related ideas gained most from features restricted to the final days of the log; "
                 "constant or never-firing filters were useless."}))
    _write(root / "evaluator" / "default.txt", agent_reply(
        {"text": "Recency-windowed activity counts carry most of the signal.\n\n"
                 "Filters on values that never occur produce constant features and no gain."}))


def write_idea_transcripts(root: Path, created=CREATED_IDEAS, synthesized=SYNTHESIZED_IDEAS) -> None:
    for k, text in enumerate(created):
        _write(root / "idea_creator" / f"{k:03d}.txt", agent_reply({"insight": text}))
    for k, (text, parents) in enumerate(synthesized):
        _write(root / "idea_synthesizer" / f"{k:03d}.txt",
               agent_reply({"insight": text, "parent_ids": parents}))


# -- ablation scenario: one productive idea among constant-feature decoys -----------

ABLATION_PRIORS = [
    PRIOR_IDEAS[0],
    "Rare or impossible actions flag unusual accounts.",
    "Negative order values indicate refunds and dissatisfaction.",
    "Events far in the future of the log indicate clock problems.",
]


def _decoy_features(tag: str, condition: str, n: int) -> list:
    return [
        _feature(f"{tag}_{k}", f"Count of events matching a rare pattern ({k}).",
                 f"count events where {condition}", f"count() where {condition}")
        for k in range(n)
    ]


def ablation_scenario(n_decoy: int = 40) -> dict:
    return {
        0: [
            _feature("total_events", "Number of events over the whole log.",
                     "count all events", "count()"),
            _feature(PLANTED_FEATURE, "Number of events in the last seven days.",
                     "count events in the final 7 days", "count() window last 7 days"),
        ] + [
            _feature(f"recent_events_{d}d", f"Events in the last {d} days.",
                     f"count events in the final {d} days", f"count() window last {d} days")
            for d in (1, 2, 3, 4, 5, 6, 8, 9, 10, 11, 12)
        ],
        1: _decoy_features("teleport", 'action = "teleport"', n_decoy),
        2: _decoy_features("refund", "amount < 0", n_decoy),
        3: _decoy_features("future", f"ts > {T0 + 400 * DAY}", n_decoy),
    }


# -- whole setups ------------------------------------------------------------------

FULL_SEED = 3
ABLATION_SEED = 1


def write_config(dest: Path, *, iterations: int, seed: int, priors, action_probs,
                 ablation=None, out_dir="run") -> Path:
    doc = {
        "dataset": {"events": "data/events.csv", "labels": "data/labels.csv",
                    "schema": "data/schema.json",
                    "split": {"mode": "random", "train_fraction": 0.7, "seed": 11}},
        "provider": {"kind": "scripted", "scripted_dir": "transcripts"},
        "out_dir": out_dir,
        "max_iterations": iterations,
        "bandit": {"exploration_c": 1.41421356, "action_probs": action_probs, "rng_seed": seed},
        "max_critic_iters": 3,
        "prior_ideas": list(priors),
    }
    if ablation:
        doc["ablation"] = ablation
    path = dest / "config.json"
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return path


def build_demo(dest, scenario: str = "full", seed=None, iterations=None,
               n_entities: int = 200, data_seed: int = 7) -> Path:
    """Write data, transcripts and config.json under ``dest``; return the config path.

    ``scenario`` is ``"full"`` (all agents, mixed outcomes) or ``"ablation"``
    (feature proposals only, one productive idea among decoys).
    """
    dest = Path(dest)
    write_dataset(dest / "data", n_entities, data_seed)
    root = dest / "transcripts"
    write_common_transcripts(root)
    if scenario == "full":
        write_idea_transcripts(root)
        write_feature_transcripts(root, FULL_SCENARIO)
        return write_config(dest, iterations=iterations or 12,
                            seed=FULL_SEED if seed is None else seed, priors=PRIOR_IDEAS,
                            action_probs={"propose_feature": 0.6, "synthesize": 0.2, "create": 0.2})
    if scenario == "ablation":
        write_feature_transcripts(root, ablation_scenario())
        return write_config(dest, iterations=iterations or 12,
                            seed=ABLATION_SEED if seed is None else seed, priors=ABLATION_PRIORS,
                            action_probs={"propose_feature": 1.0, "synthesize": 0.0, "create": 0.0})
    raise ValueError(f"unknown demo scenario {scenario!r}")
