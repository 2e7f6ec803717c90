"""Reward computation: standardization, the built-in learner and metrics."""
from __future__ import annotations

import csv
import tempfile
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .dataset import Dataset, baseline_matrix
from .errors import ConfigError, DegenerateLabelsError, OutputContractError
from .runner import RunnerConfig, read_table_for, run_command
from .table import FeatureTable


def _as_matrix(X) -> np.ndarray:
    if isinstance(X, FeatureTable):
        return X.values
    return check_array(X, ensure_min_features=0, ensure_min_samples=1)


class Standardizer(TransformerMixin, BaseEstimator):
    """Train-statistics z-scoring; zero-variance columns become all zeros."""

    def fit(self, X, y=None):
        X = _as_matrix(X)
        self.mean_ = X.mean(axis=0)
        self.scale_ = X.std(axis=0)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = _as_matrix(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} columns, got {X.shape[1]}")
        out = np.zeros_like(X, dtype=float)
        live = self.scale_ > 0
        out[:, live] = (X[:, live] - self.mean_[live]) / self.scale_[live]
        return out


def fit_preprocess(train) -> Standardizer:
    return Standardizer().fit(train)


def apply(pre: Standardizer, table):
    return pre.transform(table)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def logistic_loss(w, b, X, y, l2_lambda) -> float:
    """Mean cross-entropy plus ``l2_lambda * ||w||^2`` (intercept unpenalized)."""
    z = X @ w + b
    return float(np.mean(np.logaddexp(0.0, z) - y * z) + l2_lambda * np.dot(w, w))


def logistic_gradient(w, b, X, y, l2_lambda):
    r = _sigmoid(X @ w + b) - y
    n = X.shape[0]
    return X.T @ r / n + 2.0 * l2_lambda * w, float(np.mean(r))


class LogisticRegressionGD(ClassifierMixin, BaseEstimator):
    """Full-batch gradient descent from zero weights for a fixed step count."""

    def __init__(self, l2_lambda=1e-3, learning_rate=0.1, iterations=300):
        self.l2_lambda = l2_lambda
        self.learning_rate = learning_rate
        self.iterations = iterations

    def fit(self, X, y):
        X = _as_matrix(X).astype(float)
        y = np.asarray(y, dtype=float).ravel()
        if len(y) != X.shape[0]:
            raise ValueError("X and y have different lengths")
        if set(np.unique(y)) != {0.0, 1.0}:
            raise DegenerateLabelsError("training labels must contain both classes 0 and 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        w = np.zeros(X.shape[1])
        b = 0.0
        history = []
        for _ in range(int(self.iterations)):
            history.append(logistic_loss(w, b, X, y, self.l2_lambda))
            gw, gb = logistic_gradient(w, b, X, y, self.l2_lambda)
            w = w - self.learning_rate * gw
            b = b - self.learning_rate * gb
        history.append(logistic_loss(w, b, X, y, self.l2_lambda))
        self.coef_, self.intercept_ = w, b
        self.loss_history_ = history
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        return _as_matrix(X) @ self.coef_ + self.intercept_

    def predict_proba(self, X):
        p = _sigmoid(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(int)


# -- metrics ---------------------------------------------------------------


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    auc: float

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc) -> "MetricsReport":
        return cls(**{k: float(doc[k]) for k in ("accuracy", "precision", "recall", "f1", "auc")})


def _check_binary(labels) -> np.ndarray:
    y = np.asarray(labels, dtype=float).ravel()
    if not (np.any(y == 1) and np.any(y == 0)):
        raise DegenerateLabelsError("metrics need both classes present")
    return y


def _average_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="mergesort")
    sx = x[order]
    ranks = np.empty(len(x))
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def auc(labels, scores) -> float:
    """P(random positive outranks random negative), ties counted one half."""
    y = _check_binary(labels)
    s = np.asarray(scores, dtype=float).ravel()
    if len(s) != len(y):
        raise ValueError("labels and scores differ in length")
    pos = y == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    ranks = _average_ranks(s)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def classification_metrics(labels, scores, threshold: float = 0.5) -> MetricsReport:
    y = _check_binary(labels)
    s = np.asarray(scores, dtype=float).ravel()
    pred = s >= threshold
    truth = y == 1
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    tn = int(np.sum(~pred & ~truth))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return MetricsReport((tp + tn) / len(y), precision, recall, f1, auc(y, s))


# -- reward loop -----------------------------------------------------------


@dataclass
class LearnerConfig:
    kind: str = "builtin_logreg"
    l2_lambda: float = 1e-3
    learning_rate: float = 0.1
    iterations: int = 300
    runner: Optional[RunnerConfig] = None

    def __post_init__(self):
        if self.kind not in ("builtin_logreg", "external"):
            raise ConfigError(f"unknown learner kind {self.kind!r}")
        if self.iterations < 1:
            raise ConfigError("learner iterations must be >= 1")
        if self.l2_lambda < 0 or self.learning_rate <= 0:
            raise ConfigError("learner needs l2_lambda >= 0 and learning_rate > 0")
        if self.kind == "external" and self.runner is None:
            raise ConfigError("external learner needs a runner")

    @classmethod
    def from_dict(cls, doc: dict) -> "LearnerConfig":
        runner = RunnerConfig.from_dict(doc["runner"]) if doc.get("runner") else None
        return cls(
            doc.get("kind", "builtin_logreg"),
            float(doc.get("l2_lambda", 1e-3)),
            float(doc.get("learning_rate", 0.1)),
            int(doc.get("iterations", 300)),
            runner,
        )

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "l2_lambda": self.l2_lambda,
            "learning_rate": self.learning_rate,
            "iterations": self.iterations,
            "runner": self.runner.to_dict() if self.runner else None,
        }

    def make_learner(self) -> LogisticRegressionGD:
        return LogisticRegressionGD(self.l2_lambda, self.learning_rate, self.iterations)


def _write_matrix_csv(path, table: FeatureTable, labels=None):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["entity_id"] + (["label"] if labels is not None else []) + table.columns)
        for i, (eid, row) in enumerate(zip(table.entity_ids, table.values)):
            lab = [int(labels[i])] if labels is not None else []
            w.writerow([eid] + lab + [repr(float(v)) for v in row])


def _external_scores(cfg: LearnerConfig, train: FeatureTable, y_train, test: FeatureTable):
    with tempfile.TemporaryDirectory(prefix="featevolve-learner-") as tmp:
        tmp = Path(tmp)
        _write_matrix_csv(tmp / "train.csv", train, y_train)
        _write_matrix_csv(tmp / "test.csv", test)
        run_command(
            cfg.runner.command_template,
            {"train_csv": tmp / "train.csv", "test_csv": tmp / "test.csv", "output_csv": tmp / "scores.csv"},
            cfg.runner.timeout_seconds,
        )
        out = read_table_for(tmp / "scores.csv", test.entity_ids)
    if out.columns != ["score"]:
        raise OutputContractError("learner output must have columns entity_id,score")
    return out.rows(test.entity_ids).values[:, 0]


def evaluate_feature_set(features: FeatureTable, dataset: Dataset, split, cfg: LearnerConfig,
                         threshold: float = 0.5) -> MetricsReport:
    """Train on the train ids (baseline + features) and score the test ids."""
    train_ids, test_ids = sorted(split[0]), sorted(split[1])
    full = baseline_matrix(dataset, train_ids + test_ids).hstack(features)
    train, test = full.rows(train_ids), full.rows(test_ids)
    y_train = dataset.labels.label_vector(train_ids)
    y_test = dataset.labels.label_vector(test_ids)
    if cfg.kind == "external":
        scores = _external_scores(cfg, train, y_train, test)
    else:
        pre = fit_preprocess(train)
        model = cfg.make_learner().fit(pre.transform(train), y_train)
        scores = model.predict_proba(pre.transform(test))[:, 1]
    if not np.all(np.isfinite(scores)):
        raise DegenerateLabelsError("learner produced non-finite scores")
    return classification_metrics(y_test, scores, threshold)
