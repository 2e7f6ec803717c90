import json
import random

import pytest

from featevolve.errors import CorruptStateError, ProvenanceError, StateError
from featevolve.knowledge_base import KnowledgeBase, is_valid_feature_name


def _kb_with_features():
    kb = KnowledgeBase()
    kb.add_idea("recency matters", "prior")
    kb.add_idea("spend matters", "prior")
    f1 = kb.add_feature(0, "a", "r", "s", "p")
    f2 = kb.add_feature(0, "b", "r", "s", "p")
    f3 = kb.add_feature(0, "c", "r", "s", "p")
    kb.record_outcome(0, f1, 0.013)
    kb.record_outcome(0, f2, -0.01)
    kb.record_outcome(0, f3, 0.02)
    return kb


def test_add_idea_ids_and_provenance():
    kb = KnowledgeBase()
    assert kb.add_idea("first", "prior") == 0
    kb.add_idea("second", "created")
    kb.add_idea("third", "prior")
    sid = kb.add_idea("mix", "synthesized", [0, 2])
    assert kb.idea(sid).parent_ids == [0, 2]
    with pytest.raises(ProvenanceError):
        kb.add_idea("bad", "synthesized", [0])
    with pytest.raises(ProvenanceError):
        kb.add_idea("bad", "synthesized", [0, 9])
    with pytest.raises(ProvenanceError):
        kb.add_idea("bad", "created", [0])
    kb.validate()


def test_record_outcome_boundaries():
    kb = KnowledgeBase()
    kb.add_idea("x")
    ids = [kb.add_feature(0, n, "r", "s", "p") for n in ("a", "b", "c")]
    kb.record_outcome(0, ids[0], 0.013)
    kb.record_outcome(0, ids[1], 0.0)
    before = kb.idea(0).cumulative_score
    kb.record_outcome(0, ids[2], -0.004)
    statuses = [f.status for f in kb.idea(0).features]
    assert statuses == ["accepted", "rejected", "rejected"]
    assert kb.idea(0).cumulative_score == pytest.approx(before - 0.004, abs=1e-15)
    with pytest.raises(StateError):
        kb.record_outcome(0, ids[0], 0.1)


def test_failed_features_change_no_counts():
    kb = KnowledgeBase()
    kb.add_idea("x")
    fid = kb.add_feature(0, "a", "r", "s", "p")
    kb.mark_failed(0, fid)
    assert kb.total_visits == 0 and kb.idea(0).visit_count == 0
    kb.validate()


def test_accepted_program_order_and_growth():
    kb = _kb_with_features()
    assert [f.name for f in kb.accepted_program(0)] == ["a", "c"]
    assert kb.accepted_program(1) == []
    fid = kb.add_feature(1, "d", "r", "s", "p")
    kb.record_outcome(1, fid, 0.5)
    assert len(kb.accepted_program(1)) == 1


def test_feature_names_validated():
    assert is_valid_feature_name("recent_3d")
    assert not is_valid_feature_name("Recent")
    assert not is_valid_feature_name("count")
    kb = KnowledgeBase()
    kb.add_idea("x")
    kb.add_feature(0, "a", "r", "s", "p")
    with pytest.raises(ValueError):
        kb.add_feature(0, "a", "r", "s", "p")
    with pytest.raises(ValueError):
        kb.add_feature(0, "where", "r", "s", "p")


def test_round_trip(tmp_path):
    empty = KnowledgeBase()
    empty.save(tmp_path / "e.json")
    assert KnowledgeBase.load(tmp_path / "e.json") == empty
    kb = _kb_with_features()
    kb.add_idea("created one", "created")
    for n in ("d", "e", "f", "g"):
        kb.add_feature(2, n, "r", "s", "p")
    kb.save(tmp_path / "kb.json")
    assert KnowledgeBase.load(tmp_path / "kb.json") == kb


def test_corrupt_total_visits_detected(tmp_path):
    kb = _kb_with_features()
    doc = kb.to_dict()
    doc["total_visits"] += 1
    (tmp_path / "kb.json").write_text(json.dumps(doc))
    with pytest.raises(CorruptStateError):
        KnowledgeBase.load(tmp_path / "kb.json")


def test_validator_after_random_operations():
    rng = random.Random(5)
    kb = KnowledgeBase()
    pending = []
    for step in range(2000):
        op = rng.random()
        if op < 0.1 or not kb.ideas:
            if len(kb.ideas) >= 2 and rng.random() < 0.5:
                kb.add_idea(f"syn {step}", "synthesized", rng.sample(range(len(kb.ideas)), 2))
            else:
                kb.add_idea(f"idea {step}", rng.choice(["prior", "created"]))
        elif op < 0.5:
            i = rng.randrange(len(kb.ideas))
            pending.append((i, kb.add_feature(i, f"f{step}", "r", "s", "p")))
        elif pending:
            i, fid = pending.pop(rng.randrange(len(pending)))
            if rng.random() < 0.2:
                kb.mark_failed(i, fid)
            else:
                kb.record_outcome(i, fid, rng.uniform(-0.05, 0.05))
        if step % 97 == 0:
            kb.validate()
    kb.validate()
