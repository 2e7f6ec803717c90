import itertools
import sys

import numpy as np
import pytest

from featevolve.dataset import SplitSpec, split_entities, load_dataset
from featevolve.dsl import execute, parse
from featevolve.errors import DegenerateLabelsError, RunnerError
from featevolve.evaluation import (
    LearnerConfig, LogisticRegressionGD, Standardizer, auc, classification_metrics,
    evaluate_feature_set, logistic_gradient, logistic_loss,
)
from featevolve.runner import RunnerConfig
from featevolve.table import FeatureTable


def brute_auc(labels, scores):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p, n in itertools.product(pos, neg))
    return total / (len(pos) * len(neg))


def test_standardizer_examples():
    s = Standardizer().fit(np.array([[0.0, 5.0], [2.0, 5.0]]))
    np.testing.assert_array_equal(s.transform(np.array([[0.0, 5.0], [2.0, 5.0]])), [[-1, 0], [1, 0]])
    assert s.transform(np.array([[4.0, 7.0]])).tolist() == [[3.0, 0.0]]
    assert s.get_params() == {}


def test_auc_examples():
    assert auc([0, 1], [0.2, 0.8]) == 1.0
    assert auc([1, 0], [0.5, 0.5]) == 0.5
    assert auc([1, 0, 1, 0], [0.9, 0.8, 0.3, 0.2]) == 0.75
    with pytest.raises(DegenerateLabelsError):
        auc([1, 1], [0.1, 0.2])


def test_auc_matches_brute_force_and_flip():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(2, 40))
        y = rng.integers(0, 2, n)
        y[0], y[1] = 0, 1
        s = rng.integers(0, 6, n) / 5.0  # many ties
        assert abs(auc(y, s) - brute_auc(y, s)) < 1e-12
        s2 = rng.normal(size=n)
        assert abs(auc(y, s2) - (1 - auc(y, -s2))) < 1e-12


def test_classification_metrics_examples():
    m = classification_metrics([1, 0, 1, 0], [0.9, 0.8, 0.3, 0.2])
    assert (m.precision, m.recall, m.f1, m.accuracy) == (0.5, 0.5, 0.5, 0.5)
    m = classification_metrics([1, 0, 1], [0.0, 0.0, 0.0])
    assert (m.precision, m.recall, m.f1) == (0.0, 0.0, 0.0)
    m = classification_metrics([1, 0, 1], [1.0, 0.0, 1.0])
    assert (m.accuracy, m.f1, m.auc) == (1.0, 1.0, 1.0)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    h = 1e-5
    for _ in range(20):
        X, y = rng.normal(size=(5, 3)), rng.integers(0, 2, 5).astype(float)
        w, b, lam = rng.normal(size=3), float(rng.normal()), 0.01
        gw, gb = logistic_gradient(w, b, X, y, lam)
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            fd = (logistic_loss(w + e, b, X, y, lam) - logistic_loss(w - e, b, X, y, lam)) / (2 * h)
            assert abs(fd - gw[k]) <= 1e-4 * max(1.0, abs(fd))
        fd_b = (logistic_loss(w, b + h, X, y, lam) - logistic_loss(w, b - h, X, y, lam)) / (2 * h)
        assert abs(fd_b - gb) <= 1e-4 * max(1.0, abs(fd_b))


def test_zero_width_model_predicts_base_rate():
    y = np.array([1, 1, 1, 0])
    model = LogisticRegressionGD(iterations=3000, learning_rate=0.5).fit(np.zeros((4, 0)), y)
    np.testing.assert_allclose(model.predict_proba(np.zeros((2, 0)))[:, 1], 0.75, atol=1e-6)


def test_separable_reaches_auc_one_and_loss_decreases():
    x = np.r_[-np.ones(10), np.ones(10)].reshape(-1, 1)
    y = np.r_[np.zeros(10), np.ones(10)]
    model = LogisticRegressionGD(l2_lambda=1e-4, learning_rate=0.5, iterations=500).fit(x, y)
    assert auc(y, model.predict_proba(x)[:, 1]) == 1.0
    slow = LogisticRegressionGD(learning_rate=0.01, iterations=200).fit(x, y)
    assert all(b <= a for a, b in zip(slow.loss_history_, slow.loss_history_[1:]))
    assert model.get_params() == {"l2_lambda": 1e-4, "learning_rate": 0.5, "iterations": 500}
    with pytest.raises(DegenerateLabelsError):
        LogisticRegressionGD().fit(x, np.ones(20))


def _demo_dataset(full_demo):
    root = full_demo.parent / "data"
    ds = load_dataset(root / "events.csv", root / "labels.csv", root / "schema.json")
    return ds, split_entities(ds, SplitSpec("random", 0.7, 11))


def test_planted_feature_separates(full_demo):
    ds, split = _demo_dataset(full_demo)
    empty = FeatureTable.empty(ds.labeled_ids)
    base = evaluate_feature_set(empty, ds, split, LearnerConfig())
    planted = execute(parse("feature r = count() window last 7 days"), ds)
    m = evaluate_feature_set(planted, ds, split, LearnerConfig())
    assert m.auc >= 0.85 > base.auc
    noise = np.random.default_rng(0).normal(size=(len(ds.labeled_ids), 1))
    noisy = planted.hstack(FeatureTable(ds.labeled_ids, ["noise"], noise))
    assert abs(evaluate_feature_set(noisy, ds, split, LearnerConfig()).auc - m.auc) < 0.05


def test_external_learner(full_demo, tmp_path):
    ds, split = _demo_dataset(full_demo)
    script = tmp_path / "learner.py"
    script.write_text(
        "import csv, sys\n"
        "rows = list(csv.reader(open(sys.argv[1])))\n"
        "with open(sys.argv[2], 'w') as fh:\n"
        "    fh.write('entity_id,score\\n')\n"
        "    for r in rows[1:]:\n"
        "        fh.write(f'{r[0]},{-float(r[-1])}\\n')\n")
    cfg = LearnerConfig("external", runner=RunnerConfig(f"{sys.executable} {script} {{test_csv}} {{output_csv}}"))
    planted = execute(parse("feature r = count() window last 7 days"), ds)
    assert evaluate_feature_set(planted, ds, split, cfg).auc >= 0.85
    bad = LearnerConfig("external", runner=RunnerConfig(f"{sys.executable} -c 'import sys; sys.exit(3)'"))
    with pytest.raises(RunnerError):
        evaluate_feature_set(planted, ds, split, bad)
