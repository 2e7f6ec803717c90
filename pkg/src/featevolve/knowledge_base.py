"""Two-layer knowledge base: ideas (islands) holding feature implementations."""
from __future__ import annotations

import json
import math
import os
import re
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from .errors import CorruptStateError, IoError, ProvenanceError, StateError

ORIGINS = ("prior", "synthesized", "created")
STATUSES = ("pending", "accepted", "rejected", "failed")
IDENT_RE = re.compile(r"^[a-z_][a-z0-9_]*$")


def is_valid_feature_name(name: str) -> bool:
    from .dsl.lexer import KEYWORDS

    return isinstance(name, str) and bool(IDENT_RE.match(name)) and name not in KEYWORDS


@dataclass
class FeatureImpl:
    id: int
    name: str
    reason: str
    summary: str
    pseudocode: str
    status: str = "pending"
    score: Optional[float] = None
    iteration: int = 0
    program_fragment: Optional[str] = None

    @property
    def evaluated(self) -> bool:
        return self.status in ("accepted", "rejected")


@dataclass
class Idea:
    id: int
    insight: str
    origin: str
    parent_ids: list = field(default_factory=list)
    features: list = field(default_factory=list)
    visit_count: int = 0
    cumulative_score: float = 0.0
    created_at_iteration: int = 0

    @property
    def mean_score(self) -> float:
        return self.cumulative_score / self.visit_count if self.visit_count else 0.0

    def accepted(self) -> list:
        return [f for f in self.features if f.status == "accepted"]

    def rejected(self) -> list:
        return [f for f in self.features if f.status == "rejected"]

    def feature(self, feature_id: int) -> FeatureImpl:
        for f in self.features:
            if f.id == feature_id:
                return f
        raise KeyError(f"idea {self.id} has no feature {feature_id}")

    def embedding_text(self) -> str:
        return "\n".join([self.insight] + [f.summary for f in self.features])


@dataclass
class KnowledgeBase:
    ideas: list = field(default_factory=list)
    total_visits: int = 0
    next_feature_id: int = 0

    def __len__(self):
        return len(self.ideas)

    def idea(self, idea_id: int) -> Idea:
        if not 0 <= idea_id < len(self.ideas):
            raise KeyError(f"no idea with id {idea_id}")
        return self.ideas[idea_id]

    def add_idea(self, insight: str, origin: str = "prior", parent_ids=(), iteration: int = 0) -> int:
        if not insight or not insight.strip():
            raise ValueError("insight must be nonempty")
        if origin not in ORIGINS:
            raise ValueError(f"unknown origin {origin!r}")
        parents = [int(p) for p in parent_ids]
        if origin == "synthesized":
            if len(set(parents)) < 2:
                raise ProvenanceError("a synthesized idea needs at least two distinct parents")
            bad = [p for p in parents if not 0 <= p < len(self.ideas)]
            if bad:
                raise ProvenanceError(f"unknown parent ideas {bad}")
        elif parents:
            raise ProvenanceError(f"{origin} ideas take no parents")
        idea = Idea(len(self.ideas), insight, origin, sorted(set(parents)), created_at_iteration=iteration)
        self.ideas.append(idea)
        return idea.id

    def add_feature(self, idea_id: int, name: str, reason: str, summary: str,
                    pseudocode: str, iteration: int = 0) -> int:
        idea = self.idea(idea_id)
        if not is_valid_feature_name(name):
            raise ValueError(f"{name!r} is not a valid feature identifier")
        if any(f.name == name for f in idea.features):
            raise ValueError(f"idea {idea_id} already has a feature named {name!r}")
        fid = self.next_feature_id
        self.next_feature_id += 1
        idea.features.append(FeatureImpl(fid, name, reason, summary, pseudocode, iteration=iteration))
        return fid

    def record_outcome(self, idea_id: int, feature_id: int, score: float) -> None:
        idea = self.idea(idea_id)
        feat = idea.feature(feature_id)
        if feat.status != "pending":
            raise StateError(f"feature {feature_id} is {feat.status}, not pending")
        score = float(score)
        if not math.isfinite(score):
            raise ValueError("score must be finite")
        feat.score = score
        feat.status = "accepted" if score > 0 else "rejected"
        idea.visit_count += 1
        idea.cumulative_score += score
        self.total_visits += 1

    def mark_failed(self, idea_id: int, feature_id: int) -> None:
        feat = self.idea(idea_id).feature(feature_id)
        if feat.status != "pending":
            raise StateError(f"feature {feature_id} is {feat.status}, not pending")
        feat.status = "failed"

    def accepted_program(self, idea_id: int) -> list:
        return self.idea(idea_id).accepted()

    def accepted_program_text(self, idea_id: int) -> str:
        return "".join(f.program_fragment or "" for f in self.accepted_program(idea_id))

    # -- validation / persistence ---------------------------------------

    def validate(self) -> None:
        """Raise CorruptStateError on any invariant violation."""
        seen_fids = set()
        total = 0
        for pos, idea in enumerate(self.ideas):
            where = f"idea {idea.id}"
            if idea.id != pos:
                raise CorruptStateError(f"{where}: ids must be dense from 0 (found at {pos})")
            if idea.origin not in ORIGINS:
                raise CorruptStateError(f"{where}: bad origin {idea.origin!r}")
            if idea.origin == "synthesized":
                if len(set(idea.parent_ids)) < 2:
                    raise CorruptStateError(f"{where}: synthesized idea needs two parents")
            elif idea.parent_ids:
                raise CorruptStateError(f"{where}: only synthesized ideas have parents")
            if any(not 0 <= p < idea.id for p in idea.parent_ids):
                raise CorruptStateError(f"{where}: parents must precede the child")
            names = set()
            visits, cum = 0, []
            for f in idea.features:
                if f.id in seen_fids:
                    raise CorruptStateError(f"duplicate feature id {f.id}")
                seen_fids.add(f.id)
                if f.name in names or not is_valid_feature_name(f.name):
                    raise CorruptStateError(f"{where}: bad or duplicate feature name {f.name!r}")
                names.add(f.name)
                if f.status not in STATUSES:
                    raise CorruptStateError(f"{where}: feature {f.id} has status {f.status!r}")
                if f.status == "accepted" and not (f.score is not None and f.score > 0):
                    raise CorruptStateError(f"feature {f.id}: accepted needs a positive score")
                if f.status == "rejected" and not (f.score is not None and f.score <= 0):
                    raise CorruptStateError(f"feature {f.id}: rejected needs a score <= 0")
                if f.status in ("pending", "failed") and f.score is not None:
                    raise CorruptStateError(f"feature {f.id}: {f.status} features carry no score")
                if f.evaluated:
                    visits += 1
                    cum.append(f.score)
            if visits != idea.visit_count:
                raise CorruptStateError(f"{where}: visit_count {idea.visit_count} != {visits}")
            if abs(math.fsum(cum) - idea.cumulative_score) > 1e-12:
                raise CorruptStateError(f"{where}: cumulative_score does not match feature scores")
            total += idea.visit_count
        if total != self.total_visits:
            raise CorruptStateError(f"total_visits {self.total_visits} != sum of visit counts {total}")
        if seen_fids and self.next_feature_id <= max(seen_fids):
            raise CorruptStateError("next_feature_id collides with an existing feature id")

    def to_dict(self) -> dict:
        return {
            "total_visits": self.total_visits,
            "next_feature_id": self.next_feature_id,
            "ideas": [asdict(i) for i in self.ideas],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "KnowledgeBase":
        try:
            ideas = []
            for d in doc["ideas"]:
                feats = [FeatureImpl(**f) for f in d.get("features", [])]
                ideas.append(Idea(**{**d, "features": feats}))
            fids = [f.id for i in ideas for f in i.features]
            kb = cls(ideas, int(doc["total_visits"]),
                     int(doc.get("next_feature_id", max(fids, default=-1) + 1)))
        except (KeyError, TypeError) as exc:
            raise CorruptStateError(f"malformed knowledge base document: {exc}") from None
        kb.validate()
        return kb

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def save(self, path) -> None:
        atomic_write(path, self.dumps())

    @classmethod
    def load(cls, path) -> "KnowledgeBase":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise IoError(f"cannot read knowledge base {path}: {exc}") from None
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CorruptStateError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(doc)


def atomic_write(path, text: str) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from None
