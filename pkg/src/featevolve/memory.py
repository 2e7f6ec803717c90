"""Long-term experience document and embedding-based short-term context."""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CorruptStateError, IoError
from .knowledge_base import Idea, atomic_write

DEFAULT_DIM = 256
NO_NEIGHBORS_TEXT = "no related prior experience"

_TOKEN_SPLIT = re.compile(r"[^a-z0-9]+")


def _hash64(token: str, key: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=key).digest(), "little")


def embed(text: str, dim: int = DEFAULT_DIM) -> np.ndarray:
    """Signed hashed bag-of-words, L2-normalized (empty text stays zero)."""
    vec = np.zeros(dim)
    for token in _TOKEN_SPLIT.split(text.lower()):
        if not token:
            continue
        index = _hash64(token, b"featevolve-index") % dim
        sign = 1.0 if _hash64(token, b"featevolve-sign") % 2 else -1.0
        vec[index] += sign
    norm = np.linalg.norm(vec)
    return vec / norm if norm > 0 else vec


def cosine(a, b) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


@dataclass
class EmbeddingIndex:
    dim: int = DEFAULT_DIM
    entries: dict = field(default_factory=dict)

    def add(self, idea_id: int, vector) -> None:
        v = np.asarray(vector, dtype=float)
        if v.shape != (self.dim,):
            raise ValueError(f"expected a vector of length {self.dim}")
        n = np.linalg.norm(v)
        self.entries[int(idea_id)] = v / n if n > 0 else np.zeros(self.dim)

    def update_idea(self, idea: Idea, embedder=None) -> None:
        fn = embedder or (lambda t: embed(t, self.dim))
        self.add(idea.id, fn(idea.embedding_text()))

    def to_dict(self) -> dict:
        return {"dim": self.dim, "entries": {str(k): v.tolist() for k, v in sorted(self.entries.items())}}

    @classmethod
    def from_dict(cls, doc: dict) -> "EmbeddingIndex":
        idx = cls(int(doc["dim"]))
        for k, v in doc.get("entries", {}).items():
            idx.entries[int(k)] = np.asarray(v, dtype=float)
        return idx

    def save(self, path) -> None:
        atomic_write(path, json.dumps(self.to_dict(), sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "EmbeddingIndex":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except OSError as exc:
            raise IoError(f"cannot read index {path}: {exc}") from None
        except (ValueError, KeyError) as exc:
            raise CorruptStateError(f"{path}: malformed index ({exc})") from None


def retrieve_related(index: EmbeddingIndex, query_idea_id: int, k: int) -> list:
    """Top-k ids by cosine to the query, excluding the query and zero vectors."""
    q = index.entries[query_idea_id]
    scored = []
    for idea_id, v in index.entries.items():
        if idea_id == query_idea_id or not np.any(v):
            continue
        scored.append((-float(np.dot(q, v)), idea_id))
    scored.sort()
    return [i for _, i in scored[:k]]


@dataclass
class ShortTermMemory:
    text: str
    source_idea_ids: list = field(default_factory=list)


def render_idea_experience(idea: Idea) -> str:
    lines = [f"Idea {idea.id}: {idea.insight}"]
    for label, feats in (("positive", idea.accepted()), ("negative", idea.rejected())):
        for f in feats:
            lines.append(f"  {label} feature {f.name} (score {f.score:+.6f}): {f.summary}")
    if len(lines) == 1:
        lines.append("  no evaluated features yet")
    return "\n".join(lines)


def build_short_term(current: Idea, neighbors: list, complete_fn) -> ShortTermMemory:
    """Summarize neighbors' positive and negative features for ``current``.

    ``complete_fn(neighbor_block, current_block) -> str`` performs the LLM
    call; it is not invoked when there are no neighbors.
    """
    if not neighbors:
        return ShortTermMemory(NO_NEIGHBORS_TEXT, [])
    block = "\n\n".join(render_idea_experience(n) for n in neighbors)
    text = complete_fn(block, render_idea_experience(current))
    return ShortTermMemory(text, [n.id for n in neighbors])


@dataclass
class LongTermMemory:
    text: str = ""
    max_chars: int = 4000
    updated_at_iteration: int = -1


def truncate_paragraphs(text: str, max_chars: int) -> str:
    """Cut at the last paragraph end within ``max_chars`` (hard cut if none)."""
    if len(text) <= max_chars:
        return text
    ends = [m.start() for m in re.finditer(r"\n\s*\n", text) if m.start() <= max_chars]
    return text[: ends[-1]] if ends else text[:max_chars]


def update_long_term(mem: LongTermMemory, summary_text: str, iteration: int) -> LongTermMemory:
    return LongTermMemory(truncate_paragraphs(summary_text, mem.max_chars), mem.max_chars, iteration)
