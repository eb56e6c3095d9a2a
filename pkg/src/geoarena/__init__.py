"""Pairwise-preference arena for ranking vision-language models on
image geolocalization: anonymous battles, human votes, and statistically
grounded leaderboards."""

from .core import (
    BattleLog,
    BattleRecord,
    ImageRef,
    ImageStore,
    ModelId,
    ModelRegistry,
    Outcome,
    RegistryEntry,
    append_battle,
    read_battles,
)
from .rating import (
    BTConfig,
    BTFitResult,
    EloConfig,
    Rating,
    bootstrap_ci,
    bt_fit,
    bt_fit_style,
    elo_expected,
    elo_run,
    elo_update,
    leaderboard,
)
from .style import StyleFeatures, extract_features, feature_difference
from .analysis import PairwiseMatrix, agreement_accuracy, dataset_composition, pairwise_matrix
from .simulator import SimModel, StyleProfile, SyntheticWorld, recovery_report, simulate

__version__ = "0.1.0"

__all__ = [
    "BattleLog",
    "BattleRecord",
    "BTConfig",
    "BTFitResult",
    "EloConfig",
    "ImageRef",
    "ImageStore",
    "ModelId",
    "ModelRegistry",
    "Outcome",
    "PairwiseMatrix",
    "Rating",
    "RegistryEntry",
    "SimModel",
    "StyleFeatures",
    "StyleProfile",
    "SyntheticWorld",
    "agreement_accuracy",
    "append_battle",
    "bootstrap_ci",
    "bt_fit",
    "bt_fit_style",
    "dataset_composition",
    "elo_expected",
    "elo_run",
    "elo_update",
    "extract_features",
    "feature_difference",
    "leaderboard",
    "pairwise_matrix",
    "read_battles",
    "recovery_report",
    "simulate",
]
