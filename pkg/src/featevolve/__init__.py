"""Autonomous feature engineering for event logs with LLM agents and a UCB bandit."""
from .bandit import Action, BanditConfig, choose_action, relative_score, select_idea, ucb
from .config import RunConfig
from .dataset import Dataset, DataSchema, SplitSpec, load_dataset, split_entities
from .estimators import FeatureEvolver, FeatureProgramTransformer
from .evaluation import LogisticRegressionGD, MetricsReport, Standardizer, auc, evaluate_feature_set
from .knowledge_base import KnowledgeBase
from .orchestrator import inject_idea, resume, run
from .table import FeatureTable

__version__ = "0.1.0"

__all__ = [
    "Action", "BanditConfig", "DataSchema", "Dataset", "FeatureEvolver", "FeatureProgramTransformer",
    "FeatureTable", "KnowledgeBase", "LogisticRegressionGD", "MetricsReport", "RunConfig",
    "SplitSpec", "Standardizer", "auc", "choose_action", "evaluate_feature_set", "inject_idea",
    "load_dataset", "relative_score", "resume", "run", "select_idea", "split_entities", "ucb",
]
