"""UCB selection over ideas and the per-iteration action draw."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigError, EmptyKnowledgeBaseError
from .knowledge_base import Idea, KnowledgeBase

DEFAULT_C = 1.41421356


class Action(str, Enum):
    PROPOSE_FEATURE = "propose_feature"
    SYNTHESIZE = "synthesize"
    CREATE = "create"


@dataclass
class BanditConfig:
    exploration_c: float = DEFAULT_C
    action_probs: dict = field(
        default_factory=lambda: {"propose_feature": 0.70, "synthesize": 0.15, "create": 0.15}
    )
    rng_seed: int = 0

    def __post_init__(self):
        if self.exploration_c < 0:
            raise ConfigError("exploration_c must be >= 0")
        keys = {a.value for a in Action}
        if set(self.action_probs) != keys:
            raise ConfigError(f"action_probs needs exactly the keys {sorted(keys)}")
        probs = [float(self.action_probs[a.value]) for a in Action]
        if any(p < 0 for p in probs) or abs(sum(probs) - 1.0) > 1e-12:
            raise ConfigError("action_probs must be nonnegative and sum to 1")

    @classmethod
    def from_dict(cls, doc: dict) -> "BanditConfig":
        base = cls()
        return cls(
            float(doc.get("exploration_c", base.exploration_c)),
            dict(doc.get("action_probs", base.action_probs)),
            int(doc.get("rng_seed", base.rng_seed)),
        )

    def to_dict(self) -> dict:
        return {
            "exploration_c": self.exploration_c,
            "action_probs": dict(self.action_probs),
            "rng_seed": self.rng_seed,
        }


def relative_score(metric_new: float, metric_prev: float) -> float:
    """Gain of the extended feature set over the idea's current one."""
    return float(metric_new) - float(metric_prev)


def ucb_value(cumulative_score: float, visits: int, total_visits: int, c: float) -> float:
    if visits == 0:
        return math.inf
    return cumulative_score / visits + c * math.sqrt(math.log(total_visits) / visits)


def ucb(idea: Idea, total_visits: int, c: float) -> float:
    return ucb_value(idea.cumulative_score, idea.visit_count, total_visits, c)


def select_idea(kb: KnowledgeBase, config: BanditConfig) -> int:
    """Argmax UCB; ties go to the smallest id."""
    if not kb.ideas:
        raise EmptyKnowledgeBaseError("cannot select from an empty knowledge base")
    best_id, best_val = None, -math.inf
    for idea in kb.ideas:
        val = ucb(idea, kb.total_visits, config.exploration_c)
        if best_id is None or val > best_val:
            best_id, best_val = idea.id, val
    return best_id


def choose_action(kb: KnowledgeBase, config: BanditConfig, rng: np.random.Generator) -> Action:
    """Draw an action with one uniform variate, then repair infeasible draws."""
    u = rng.random()
    acc = 0.0
    drawn = Action.CREATE
    for action in Action:
        acc += config.action_probs[action.value]
        if u < acc:
            drawn = action
            break
    if not kb.ideas:
        return Action.CREATE
    if drawn is Action.SYNTHESIZE and len(kb.ideas) < 2:
        return Action.CREATE
    return drawn
