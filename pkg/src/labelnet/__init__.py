"""Discover deterministic label relationships in multi-label data and make
predicted marginal probabilities consistent with them.

The package mines pairwise positive entailments and maximal mutual-exclusion
sets from a training split, represents them as a network of deterministic
nodes with leak parents, and corrects per-instance marginals by exact
inference under soft evidence. A cross-validation harness measures mean
average precision before and after correction.
"""

__version__ = "0.1.0"

from .dataset import (
    FeatureMatrix,
    FoldSplit,
    LabelMatrix,
    MultiLabelDataset,
    load_csv,
    load_mulan,
    save_csv,
    split_folds,
)
from .discovery import (
    ContingencyTable,
    Coexhaustion,
    Equivalence,
    Exclusion,
    PositiveEntailment,
    RelationshipSet,
    build_contingency,
    discover_pairwise,
    discover_relationships,
    escalate_minsup,
    mine_maximal_exclusions,
    relationship_report,
    relationship_set_from_report,
    transitive_reduction,
)
from .errors import (
    CycleError,
    DataContractError,
    EscalationError,
    InfeasibleEvidenceError,
    InvariantError,
    LabelNetError,
    MiningTimeout,
)
from .evaluation import (
    EvaluationReport,
    FoldReport,
    LabelRanking,
    average_precision,
    compare,
    map_score,
)
from .inference import (
    EvidenceModel,
    MarginalCorrector,
    attach_evidence,
    brute_force_posteriors,
    check_consistency,
    correct_marginals,
    induced_width,
    min_fill_order,
)
from .network import (
    LabelNetwork,
    Node,
    build_network,
    generate_leak_labels,
    network_from_json_dict,
)
from .pipeline import (
    FoldResult,
    NaiveBayesLearner,
    PipelineConfig,
    PredictionTable,
    PriorLearner,
    ingest_external_predictions,
    predict_marginals,
    read_predictions,
    run_cv,
    run_fold,
    run_split,
    train_binary_relevance,
    write_predictions,
)
