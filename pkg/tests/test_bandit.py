import math

import mpmath
import numpy as np
import pytest

from featevolve.bandit import (
    Action, BanditConfig, choose_action, relative_score, select_idea, ucb, ucb_value,
)
from featevolve.errors import ConfigError, EmptyKnowledgeBaseError
from featevolve.knowledge_base import KnowledgeBase


def test_relative_score_examples():
    assert relative_score(0.701, 0.683) == pytest.approx(0.018, abs=1e-12)
    # case-study improvement over the raw features
    assert relative_score(0.653, 0.630) == pytest.approx(0.023, abs=1e-12)
    assert relative_score(0.42, 0.42) == 0.0


def test_ucb_examples():
    assert ucb_value(0.0, 0, 5, 1.0) == math.inf
    assert ucb_value(0.0, 1, 1, 1.0) == 0.0
    mpmath.mp.dps = 40
    oracle = mpmath.mpf("0.05") / 2 + mpmath.sqrt(mpmath.log(10) / 2)
    assert abs(ucb_value(0.05, 2, 10, 1.0) - float(oracle)) < 1e-9
    assert ucb_value(0.05, 2, 10, 1.0) == pytest.approx(1.09798301314467, abs=1e-12)


def _kb(stats):
    kb = KnowledgeBase()
    for i, (cum, visits) in enumerate(stats):
        kb.add_idea(f"idea {i}")
        kb.ideas[i].cumulative_score = cum
        kb.ideas[i].visit_count = visits
    kb.total_visits = sum(v for _, v in stats)
    return kb


def test_select_idea_examples():
    cfg = BanditConfig()
    assert select_idea(_kb([(0, 0), (0, 0)]), cfg) == 0
    assert select_idea(_kb([(0.05, 2), (0, 0)]), cfg) == 1
    kb = _kb([(0.1, 3), (0.3, 2), (-0.1, 1)])
    vals = [ucb(i, kb.total_visits, cfg.exploration_c) for i in kb.ideas]
    assert select_idea(kb, cfg) == int(np.argmax(vals))
    with pytest.raises(EmptyKnowledgeBaseError):
        select_idea(KnowledgeBase(), cfg)


def test_scale_shift_keeps_argmax():
    rng = np.random.default_rng(0)
    cfg = BanditConfig()
    for _ in range(50):
        visits = rng.integers(1, 20, size=5)
        means = rng.normal(0, 0.05, size=5)
        kb = _kb([(m * v, int(v)) for m, v in zip(means, visits)])
        shifted = _kb([((m + 0.3) * v, int(v)) for m, v in zip(means, visits)])
        for a, b in zip(kb.ideas, shifted.ideas):
            assert ucb(b, kb.total_visits, 1.4) == pytest.approx(ucb(a, kb.total_visits, 1.4) + 0.3, abs=1e-12)
        assert select_idea(kb, cfg) == select_idea(shifted, cfg)


def test_choose_action_repairs():
    rng = np.random.default_rng(0)
    cfg = BanditConfig()
    assert all(choose_action(KnowledgeBase(), cfg, rng) is Action.CREATE for _ in range(50))
    only_syn = BanditConfig(action_probs={"propose_feature": 0, "synthesize": 1, "create": 0})
    assert choose_action(_kb([(0, 0)]), only_syn, rng) is Action.CREATE
    assert choose_action(_kb([(0, 0), (0, 0)]), only_syn, rng) is Action.SYNTHESIZE
    only_prop = BanditConfig(action_probs={"propose_feature": 1, "synthesize": 0, "create": 0})
    assert all(choose_action(_kb([(0, 0)]), only_prop, rng) is Action.PROPOSE_FEATURE for _ in range(50))


def test_choose_action_consumes_one_draw():
    a, b = np.random.default_rng(3), np.random.default_rng(3)
    choose_action(_kb([(0, 0)]), BanditConfig(), a)
    b.random()
    assert a.random() == b.random()


def test_config_validation():
    with pytest.raises(ConfigError):
        BanditConfig(action_probs={"propose_feature": 0.5, "synthesize": 0.2, "create": 0.2})
    with pytest.raises(ConfigError):
        BanditConfig(exploration_c=-1)
    with pytest.raises(ConfigError):
        BanditConfig(action_probs={"propose_feature": 1.0})
