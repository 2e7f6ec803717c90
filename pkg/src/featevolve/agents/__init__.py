from .parsing import (
    CodeProposal, Critique, FeatureProposal, Forfeit, IdeaProposal, MemorySummary,
    Refined, ThinkTrace, parse_agent_output, refine_loop,
)
from .providers import (
    ChatMessage, HttpProvider, ProviderConfig, ScriptedProvider, make_provider,
)
from .roles import AgentSuite, load_templates, precheck_code, render, splice_program

__all__ = [
    "AgentSuite", "ChatMessage", "CodeProposal", "Critique", "FeatureProposal", "Forfeit",
    "HttpProvider", "IdeaProposal", "MemorySummary", "ProviderConfig", "Refined",
    "ScriptedProvider", "ThinkTrace", "load_templates", "make_provider",
    "parse_agent_output", "precheck_code", "refine_loop", "render", "splice_program",
]
