"""Structured agent replies: the last fenced ``json`` block carries the answer."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Optional

from ..errors import OutputParseError
from ..knowledge_base import is_valid_feature_name

_FENCE_RE = re.compile(r"```json[ \t]*\r?\n(.*?)```", re.DOTALL)
REASONING_FIELDS = ("analyze", "self_reflect", "reconstruct")


@dataclass(frozen=True)
class ThinkTrace:
    analyze: str
    self_reflect: str
    reconstruct: str


@dataclass(frozen=True)
class IdeaProposal:
    insight: str
    parent_ids: list = field(default_factory=list)


@dataclass(frozen=True)
class FeatureProposal:
    name: str
    reason: str
    summary: str
    pseudocode: str


@dataclass(frozen=True)
class CodeProposal:
    program_text: str


@dataclass(frozen=True)
class Critique:
    verdict: str
    feedback: str = ""

    def __post_init__(self):
        if self.verdict not in ("accept", "reject"):
            raise ValueError(f"bad verdict {self.verdict!r}")
        if self.verdict == "reject" and not self.feedback.strip():
            raise ValueError("a rejection needs feedback")

    @property
    def accepted(self) -> bool:
        return self.verdict == "accept"


@dataclass(frozen=True)
class MemorySummary:
    text: str


def _string(out: dict, key: str, kind: str, nonempty=True) -> str:
    if key not in out:
        raise OutputParseError(f"{kind} output is missing the field {key!r}")
    v = out[key]
    if not isinstance(v, str):
        raise OutputParseError(f"{kind} field {key!r} must be a string")
    if nonempty and not v.strip():
        raise OutputParseError(f"{kind} field {key!r} must not be empty")
    return v


def _build(kind: str, out: dict):
    if kind == "idea":
        insight = _string(out, "insight", kind)
        parents = out.get("parent_ids", []) or []
        if not isinstance(parents, list) or not all(
            isinstance(p, int) and not isinstance(p, bool) for p in parents
        ):
            raise OutputParseError("idea field 'parent_ids' must be a list of integer idea ids")
        return IdeaProposal(insight.strip(), list(parents))
    if kind == "feature":
        name = _string(out, "name", kind).strip()
        vals = [_string(out, k, kind) for k in ("reason", "summary", "pseudocode")]
        if not is_valid_feature_name(name):
            raise OutputParseError(
                f"feature name {name!r} is not a valid lowercase identifier ([a-z_][a-z0-9_]*, not a keyword)"
            )
        return FeatureProposal(name, *vals)
    if kind == "code":
        return CodeProposal(_string(out, "program_text", kind))
    if kind == "critique":
        verdict = _string(out, "verdict", kind).strip().lower()
        if verdict not in ("accept", "reject"):
            raise OutputParseError("critique field 'verdict' must be 'accept' or 'reject'")
        feedback = _string(out, "feedback", kind, nonempty=False) if "feedback" in out else ""
        if verdict == "reject" and not feedback.strip():
            raise OutputParseError("a 'reject' verdict must carry nonempty feedback")
        return Critique(verdict, feedback)
    if kind == "summary":
        return MemorySummary(_string(out, "text", kind))
    raise ValueError(f"unknown output kind {kind!r}")


def parse_agent_output(text: str, expected_kind: str) -> tuple:
    """Return ``(ThinkTrace, payload)`` from the last fenced json block."""
    blocks = _FENCE_RE.findall(text or "")
    if not blocks:
        raise OutputParseError("reply contains no fenced ```json block")
    try:
        doc = json.loads(blocks[-1])
    except json.JSONDecodeError as exc:
        raise OutputParseError(f"the last ```json block is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise OutputParseError("the json block must be an object")
    lenient = expected_kind == "critique"
    trace = []
    for key in REASONING_FIELDS:
        if key not in doc:
            if lenient:
                trace.append("")
                continue
            raise OutputParseError(f"reply is missing the reasoning field {key!r}")
        v = doc[key]
        if not isinstance(v, str) or (not lenient and not v.strip()):
            raise OutputParseError(f"reasoning field {key!r} must be a nonempty string")
        trace.append(v)
    out = doc.get("output")
    if not isinstance(out, dict):
        raise OutputParseError("reply is missing the 'output' object")
    return ThinkTrace(*trace), _build(expected_kind, out)


@dataclass
class Refined:
    value: object
    history: list


@dataclass
class Forfeit:
    history: list


def refine_loop(generate, critic, max_z: int):
    """Alternate generate/critique until accepted or ``max_z`` rejections.

    ``generate(feedback)`` gets None on the first call and the latest
    rejection feedback afterwards. Unparseable generator output counts as a
    rejection with the parse error as feedback.
    """
    if max_z < 1:
        raise ValueError("max_z must be >= 1")
    history: list = []
    feedback: Optional[str] = None
    for _ in range(max_z):
        try:
            artifact = generate(feedback)
        except OutputParseError as exc:
            verdict = Critique("reject", f"output could not be used: {exc.reason}")
        else:
            try:
                verdict = critic(artifact)
            except OutputParseError as exc:
                verdict = Critique("reject", f"critic reply could not be used: {exc.reason}")
        history.append(verdict)
        if verdict.accepted:
            return Refined(artifact, history)
        feedback = verdict.feedback
    return Forfeit(history)
