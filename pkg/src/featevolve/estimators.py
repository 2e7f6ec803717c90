"""Estimator-style wrappers around feature programs and whole evolution runs."""
from __future__ import annotations

import copy
from typing import Optional

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import orchestrator
from .config import RunConfig
from .dataset import Dataset
from .dsl import execute, parse, pretty_print, typecheck


class FeatureProgramTransformer(TransformerMixin, BaseEstimator):
    """Compiles a feature program and applies it to datasets.

    ``fit`` only parses and typechecks against the dataset's schema; programs
    have no learned state. ``transform`` returns the entity-by-feature matrix
    for ``ids`` (default: the labeled entities, sorted).
    """

    def __init__(self, program_text: str = "", workers: int = 1, anchor: str = "global"):
        self.program_text = program_text
        self.workers = workers
        self.anchor = anchor

    def fit(self, X: Dataset, y=None):
        self.program_ = parse(self.program_text)
        typecheck(self.program_, X.schema)
        self.feature_names_out_ = list(self.program_.names)
        return self

    def transform_table(self, X: Dataset, ids=None):
        check_is_fitted(self, "program_")
        ids = X.labeled_ids if ids is None else sorted(ids)
        return execute(self.program_, X, ids, workers=self.workers, anchor=self.anchor)

    def transform(self, X: Dataset, ids=None):
        return self.transform_table(X, ids).values

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "program_")
        return list(self.feature_names_out_)


class FeatureEvolver(TransformerMixin, BaseEstimator):
    """Runs the agent loop once in ``fit`` and transforms with the best program.

    ``config`` is a RunConfig or a path to its JSON file. The dataset is taken
    from the config, so ``fit`` ignores its arguments apart from validation.
    """

    def __init__(self, config=None, iterations: Optional[int] = None, seed: Optional[int] = None,
                 out_dir: Optional[str] = None):
        self.config = config
        self.iterations = iterations
        self.seed = seed
        self.out_dir = out_dir

    def _resolved_config(self) -> RunConfig:
        if self.config is None:
            raise ValueError("FeatureEvolver needs a config")
        cfg = self.config if isinstance(self.config, RunConfig) else RunConfig.load(self.config)
        cfg = copy.deepcopy(cfg)
        if self.iterations is not None:
            cfg.max_iterations = self.iterations
        if self.seed is not None:
            cfg.bandit.rng_seed = self.seed
        if self.out_dir is not None:
            cfg.out_dir = str(self.out_dir)
        return cfg

    def fit(self, X=None, y=None):
        result = orchestrator.run(self._resolved_config())
        self.run_dir_ = result.run_dir
        self.program_text_ = result.program
        self.metrics_ = result.metrics
        self.best_trajectory_ = result.best_trajectory
        self.program_ = parse(result.program) if result.program.strip() else None
        return self

    def transform(self, X: Dataset, ids=None):
        check_is_fitted(self, "program_text_")
        ids = X.labeled_ids if ids is None else sorted(ids)
        if self.program_ is None:
            import numpy as np

            return np.zeros((len(ids), 0))
        return execute(self.program_, X, ids).values

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "program_text_")
        return [] if self.program_ is None else list(self.program_.names)

    def best_program(self) -> str:
        check_is_fitted(self, "program_text_")
        return pretty_print(self.program_) if self.program_ is not None else ""
