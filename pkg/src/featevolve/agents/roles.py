"""The LLM-backed roles and the prompt templates they render."""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from ..bandit import ucb
from ..dataset import DataSchema
from ..dsl import GRAMMAR_REFERENCE, parse, pretty_print, typecheck
from ..errors import ConfigError, DSLError, OutputParseError
from ..knowledge_base import Idea, KnowledgeBase
from ..memory import ShortTermMemory, build_short_term, render_idea_experience
from .parsing import (
    CodeProposal, Critique, FeatureProposal, IdeaProposal, MemorySummary, parse_agent_output,
)
from .providers import ChatMessage, temperature_for

logger = logging.getLogger(__name__)

REQUIRED_PLACEHOLDERS = {
    "system": set(),
    "feature_proposer": {"schema", "idea", "short_memory", "long_memory", "grammar", "feedback"},
    "idea_synthesizer": {"schema", "knowledge_base", "long_memory", "feedback"},
    "idea_creator": {"schema", "knowledge_base", "long_memory", "feedback"},
    "code_agent": {"schema", "idea", "feature", "program", "grammar", "feedback"},
    "idea_critic": {"schema", "knowledge_base", "artifact"},
    "code_critic": {"schema", "feature", "artifact", "precheck", "grammar"},
    "evaluator": {"idea", "feature", "metrics", "long_memory"},
    "short_term_memory": {"idea", "neighbors"},
}
_PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")


def load_templates(prompt_dir=None) -> dict:
    """Read all role templates, preferring files in ``prompt_dir``.

    Raises ConfigError if a template lacks one of its required placeholders.
    """
    templates = {}
    packaged = resources.files("featevolve.agents") / "prompts"
    for role, required in REQUIRED_PLACEHOLDERS.items():
        override = Path(prompt_dir) / f"{role}.txt" if prompt_dir else None
        if override is not None and override.is_file():
            text = override.read_text(encoding="utf-8")
        else:
            text = (packaged / f"{role}.txt").read_text(encoding="utf-8")
        missing = required - set(_PLACEHOLDER_RE.findall(text))
        if missing:
            raise ConfigError(f"prompt template {role!r} lacks placeholders {sorted(missing)}")
        templates[role] = text
    return templates


def render(template: str, **values) -> str:
    def sub(m):
        key = m.group(1)
        return str(values[key]) if key in values else m.group(0)

    return _PLACEHOLDER_RE.sub(sub, template)


def render_idea(idea: Idea) -> str:
    return render_idea_experience(idea)


def render_kb(kb: KnowledgeBase, c: float) -> str:
    if not kb.ideas:
        return "(the knowledge base is empty)"
    lines = []
    for idea in kb.ideas:
        u = ucb(idea, kb.total_visits, c)
        parents = f", parents {idea.parent_ids}" if idea.parent_ids else ""
        lines.append(
            f"Idea {idea.id} [{idea.origin}{parents}] visits={idea.visit_count} "
            f"cumulative_score={idea.cumulative_score:+.6f} ucb={u:.6f}: {idea.insight}"
        )
        for f in idea.features:
            if f.evaluated:
                lines.append(f"    {f.status} {f.name} ({f.score:+.6f}): {f.summary}")
    return "\n".join(lines)


def render_feature(p: FeatureProposal) -> str:
    return (
        f"name: {p.name}\nreason: {p.reason}\nsummary: {p.summary}\n"
        f"pseudocode:\n{p.pseudocode}"
    )


def precheck_code(program_text: str, schema: DataSchema, prior_program: str,
                  feature_name: str) -> Optional[str]:
    """Mechanical check of a code proposal. Returns an error message or None."""
    try:
        program = parse(program_text)
        typecheck(program, schema)
    except DSLError as exc:
        return f"program rejected by the engine: {exc}"
    prior = parse(prior_program).defs if prior_program.strip() else ()
    if len(program.defs) != len(prior) + 1:
        return (
            f"program must contain the {len(prior)} accepted definitions followed by exactly "
            f"one new definition; found {len(program.defs)} definitions"
        )
    for i, (old, new) in enumerate(zip(prior, program.defs)):
        if old != new:
            return f"definition #{i + 1} ({old.name}) must be copied unchanged from the accepted program"
    if program.defs[-1].name != feature_name:
        return f"the new definition must be named {feature_name!r}, not {program.defs[-1].name!r}"
    return None


def splice_program(program_text: str, prior_program: str) -> str:
    """Prepend the accepted program when a reply holds only the new definition.

    Anything else (full programs, unparsable text) is returned untouched so the
    precheck can judge it.
    """
    if not prior_program.strip():
        return program_text
    try:
        defs = parse(program_text).defs
        prior_names = set(parse(prior_program).names)
    except DSLError:
        return program_text
    if len(defs) == 1 and defs[0].name not in prior_names:
        return prior_program.rstrip("\n") + "\n" + program_text.lstrip("\n")
    return program_text


@dataclass
class CallRecord:
    role_tag: str
    ordinal: int
    prompt: str
    reply: str


@dataclass
class AgentSuite:
    """Bundles the provider, templates and per-role call ordinals."""

    provider: object
    provider_config: object
    templates: dict
    schema: DataSchema
    exploration_c: float = 1.41421356
    ordinals: dict = field(default_factory=dict)
    calls: list = field(default_factory=list)

    # -- plumbing ----------------------------------------------------------

    def complete(self, role: str, prompt: str, scope: Optional[str] = None) -> str:
        tag = self.provider.resolve_role(role, scope)
        ordinal = self.ordinals.get(tag, 0)
        messages = [ChatMessage("system", self.templates["system"]), ChatMessage("user", prompt)]
        reply = self.provider.complete(messages, tag, ordinal, temperature_for(self.provider_config, role))
        self.ordinals[tag] = ordinal + 1
        self.calls.append(CallRecord(tag, ordinal, prompt, reply))
        return reply

    def ask(self, role: str, kind: str, prompt: str, scope: Optional[str] = None):
        reply = self.complete(role, prompt, scope)
        _, payload = parse_agent_output(reply, kind)
        return payload

    def drain_calls(self) -> list:
        out, self.calls = self.calls, []
        return out

    # -- idea agents -------------------------------------------------------

    def propose_feature(self, idea: Idea, short_mem: str, long_mem: str,
                        feedback: Optional[str] = None) -> FeatureProposal:
        prompt = render(
            self.templates["feature_proposer"],
            schema=self.schema.render(),
            idea=render_idea(idea),
            short_memory=short_mem or "(none)",
            long_memory=long_mem or "(none)",
            grammar=GRAMMAR_REFERENCE,
            feedback=feedback or "",
        )
        proposal = self.ask("feature_proposer", "feature", prompt, scope=f"idea_{idea.id}")
        if any(f.name == proposal.name for f in idea.features):
            raise OutputParseError(f"duplicate name: idea {idea.id} already has a feature named {proposal.name!r}")
        return proposal

    def synthesize_idea(self, kb: KnowledgeBase, long_mem: str,
                        feedback: Optional[str] = None) -> IdeaProposal:
        prompt = render(
            self.templates["idea_synthesizer"],
            schema=self.schema.render(),
            knowledge_base=render_kb(kb, self.exploration_c),
            long_memory=long_mem or "(none)",
            feedback=feedback or "",
        )
        proposal = self.ask("idea_synthesizer", "idea", prompt)
        parents = sorted(set(proposal.parent_ids))
        if len(parents) < 2:
            raise OutputParseError("a synthesized idea must list at least two distinct parent_ids")
        unknown = [p for p in parents if not 0 <= p < len(kb.ideas)]
        if unknown:
            raise OutputParseError(f"parent_ids {unknown} do not exist in the knowledge base")
        return IdeaProposal(proposal.insight, parents)

    def create_idea(self, kb: KnowledgeBase, long_mem: str,
                    feedback: Optional[str] = None) -> IdeaProposal:
        prompt = render(
            self.templates["idea_creator"],
            schema=self.schema.render(),
            knowledge_base=render_kb(kb, self.exploration_c),
            long_memory=long_mem or "(none)",
            feedback=feedback or "",
        )
        proposal = self.ask("idea_creator", "idea", prompt)
        if proposal.parent_ids:
            raise OutputParseError("a newly created idea must not list parent_ids")
        return proposal

    # -- code agent --------------------------------------------------------

    def generate_code(self, feature: FeatureProposal, idea: Idea, prior_program: str,
                      critic_feedback: Optional[str] = None, exemplars: str = "",
                      splice: bool = True) -> CodeProposal:
        prompt = render(
            self.templates["code_agent"],
            schema=self.schema.render(),
            idea=render_idea(idea),
            feature=render_feature(feature),
            program=prior_program or "(empty: this is the idea's first feature)",
            exemplars=exemplars or "(none yet)",
            grammar=GRAMMAR_REFERENCE,
            feedback=critic_feedback or "",
        )
        code = self.ask("code_agent", "code", prompt, scope=f"idea_{idea.id}")
        if splice:
            code = CodeProposal(splice_program(code.program_text, prior_program))
        return code

    # -- critics -----------------------------------------------------------

    def critique_idea(self, artifact, kb: KnowledgeBase, idea: Optional[Idea] = None) -> Critique:
        if isinstance(artifact, FeatureProposal):
            text = render_feature(artifact)
            context = render_idea(idea) if idea is not None else render_kb(kb, self.exploration_c)
        else:
            text = f"insight: {artifact.insight}"
            if artifact.parent_ids:
                text += f"\nparent_ids: {artifact.parent_ids}"
            context = render_kb(kb, self.exploration_c)
        prompt = render(
            self.templates["idea_critic"],
            schema=self.schema.render(),
            knowledge_base=context,
            artifact=text,
        )
        return self.ask("idea_critic", "critique", prompt)

    def critique_code(self, code: CodeProposal, feature: FeatureProposal, prior_program: str,
                      use_llm: bool = True, scope: Optional[str] = None,
                      mechanical: bool = True) -> Critique:
        """Mechanical parse/typecheck first; only a passing program reaches the LLM."""
        if mechanical:
            error = precheck_code(code.program_text, self.schema, prior_program, feature.name)
            if error is not None:
                return Critique("reject", error)
            shown = pretty_print(parse(code.program_text))
            status = "OK: parses and typechecks against the schema"
        else:
            shown = code.program_text
            status = "not checked (external backend)"
        if not use_llm:
            return Critique("accept", "")
        prompt = render(
            self.templates["code_critic"],
            schema=self.schema.render(),
            feature=render_feature(feature),
            artifact=shown,
            precheck=status,
            grammar=GRAMMAR_REFERENCE,
        )
        return self.ask("code_critic", "critique", prompt, scope=scope)

    def critique(self, kind: str, artifact, kb: KnowledgeBase, **kw) -> Critique:
        if kind == "idea":
            return self.critique_idea(artifact, kb, kw.get("idea"))
        if kind == "code":
            return self.critique_code(artifact, kw["feature"], kw.get("prior_program", ""))
        raise ValueError(f"unknown critique kind {kind!r}")

    # -- evaluator and memory ------------------------------------------------

    def evaluate_summarize(self, idea: Idea, feature, metrics, score: float,
                           long_mem: str) -> MemorySummary:
        metric_lines = "\n".join(f"{k}: {v:.6f}" for k, v in metrics.to_dict().items())
        prompt = render(
            self.templates["evaluator"],
            idea=render_idea(idea),
            feature=f"{feature.name}: {feature.summary}\nprogram:\n{feature.program_fragment or ''}",
            metrics=f"{metric_lines}\nrelative score (AUC gain over the idea's previous program): {score:+.6f}",
            long_memory=long_mem or "(empty)",
        )
        return self.ask("evaluator", "summary", prompt)

    def build_short_term(self, current: Idea, neighbors: list) -> ShortTermMemory:
        def call(neighbor_block, current_block):
            prompt = render(self.templates["short_term_memory"], idea=current_block, neighbors=neighbor_block)
            return self.ask("short_term_memory", "summary", prompt).text

        return build_short_term(current, neighbors, call)
