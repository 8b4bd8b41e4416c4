"""Decision trees robust to adversarial evasion under per-feature threat models."""

__version__ = "0.1.0"

from robtree.adversary import (
    AttackReport,
    adversarial_accuracy,
    enumerate_leaf_boxes,
    is_reachable,
    witness_perturbation,
)
from robtree.data import (
    Dataset,
    FoldPlan,
    Scaler,
    fetch_openml,
    load_arff,
    load_csv,
    minmax_scale,
    stratified_kfold,
)
from robtree.impurity import (
    AdversarialScore,
    SolutionLine,
    SplitCounts,
    adversarial_score_one_class,
    adversarial_score_two_class,
    apply_rho,
    gini,
    project_to_line,
    solution_line,
    split_score,
)
from robtree.splitter import best_robust_split
from robtree.threat import (
    ThreatModel,
    ThreatSpecError,
    null_threat,
    parse_threat_spec,
    perturbation_interval,
    reachable_categories,
)
from robtree.tree import (
    DecisionNode,
    FitParams,
    Leaf,
    Tree,
    deserialize,
    fit,
    load,
    save,
    serialize,
)

__all__ = [
    "AdversarialScore",
    "AttackReport",
    "Dataset",
    "DecisionNode",
    "FitParams",
    "FoldPlan",
    "Leaf",
    "Scaler",
    "SolutionLine",
    "SplitCounts",
    "ThreatModel",
    "ThreatSpecError",
    "Tree",
    "adversarial_accuracy",
    "adversarial_score_one_class",
    "adversarial_score_two_class",
    "apply_rho",
    "best_robust_split",
    "deserialize",
    "enumerate_leaf_boxes",
    "fetch_openml",
    "fit",
    "gini",
    "is_reachable",
    "load",
    "load_arff",
    "load_csv",
    "minmax_scale",
    "null_threat",
    "parse_threat_spec",
    "perturbation_interval",
    "project_to_line",
    "reachable_categories",
    "save",
    "serialize",
    "solution_line",
    "split_score",
    "stratified_kfold",
    "witness_perturbation",
    "__version__",
]
