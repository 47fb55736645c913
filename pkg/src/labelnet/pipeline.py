"""End-to-end orchestration: discover, augment, predict, correct, evaluate.

Per cross-validation fold, relationships are mined on the training split
only, leak columns are derived from that split, one binary model is fitted
per real and leak label (or an external predictions file supplies the
marginals), and the test split's marginals are corrected on the fold's
network. Nothing from the test split reaches discovery or training.

The built-in learners are deliberately simple probability sources: the
correction step is learner-agnostic, and external prediction files are the
path for stronger models.
"""

from __future__ import annotations

import csv
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from contextlib import nullcontext
from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence

import numpy as np

from .dataset import (
    MISSING,
    FeatureMatrix,
    FoldSplit,
    LabelMatrix,
    MultiLabelDataset,
    split_folds,
)
from .discovery import (
    DEFAULT_MINSUP,
    RelationshipSet,
    discover_relationships,
    equivalence_classes,
    escalate_minsup,
    restrict,
)
from .errors import DataContractError
from .evaluation import EvaluationReport, FoldReport, compare
from .inference import DEFAULT_CLAMP, MarginalCorrector
from .network import LabelNetwork, build_network, generate_leak_labels

EXPLOIT_MODES = ("entail", "excl", "both", "none")


@dataclass(frozen=True, eq=False)
class PredictionTable:
    """Per-instance probability for every covered node, in dataset row order."""

    instance_ids: tuple[int, ...]
    node_names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.shape != (len(self.instance_ids), len(self.node_names)):
            raise DataContractError("prediction table shape mismatch")
        if len(set(self.node_names)) != len(self.node_names):
            raise DataContractError("duplicate node names in prediction table")
        if len(set(self.instance_ids)) != len(self.instance_ids):
            raise DataContractError("duplicate instance ids in prediction table")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "instance_ids", tuple(int(i) for i in self.instance_ids))
        object.__setattr__(self, "node_names", tuple(self.node_names))

    def column(self, name: str) -> np.ndarray:
        try:
            return self.values[:, self.node_names.index(name)]
        except ValueError:
            raise DataContractError(f"prediction table missing node {name!r}") from None

    def select(self, names: Sequence[str]) -> "PredictionTable":
        cols = [self.node_names.index(n) for n in names]
        return PredictionTable(self.instance_ids, tuple(names), self.values[:, cols])

    def __eq__(self, other):
        if not isinstance(other, PredictionTable):
            return NotImplemented
        return (
            self.instance_ids == other.instance_ids
            and self.node_names == other.node_names
            and np.array_equal(self.values, other.values)
        )


def write_predictions(table: PredictionTable, dest) -> None:
    ctx = nullcontext(dest) if hasattr(dest, "write") else open(
        dest, "w", encoding="utf-8", newline=""
    )
    with ctx as fh:
        writer = csv.writer(fh)
        writer.writerow(["instance_id", *table.node_names])
        for i, instance_id in enumerate(table.instance_ids):
            writer.writerow([instance_id, *(repr(v) for v in table.values[i])])


def read_predictions(source) -> PredictionTable:
    ctx = nullcontext(source) if hasattr(source, "read") else open(
        source, "r", encoding="utf-8", newline=""
    )
    with ctx as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataContractError("empty predictions file: missing header")
    header = rows[0]
    if not header or header[0] != "instance_id":
        raise DataContractError("predictions header must start with instance_id")
    names = tuple(header[1:])
    ids = []
    values = np.empty((len(rows) - 1, len(names)), dtype=np.float64)
    for i, row in enumerate(rows[1:], start=1):
        if len(row) != len(header):
            raise DataContractError(f"predictions row {i}: wrong field count")
        try:
            ids.append(int(row[0]))
        except ValueError:
            raise DataContractError(
                f"predictions row {i}: bad instance id {row[0]!r}"
            ) from None
        for j, cell in enumerate(row[1:]):
            try:
                p = float(cell)
            except ValueError:
                raise DataContractError(
                    f"predictions row {i}, column {names[j]!r}: "
                    f"{cell!r} is not a probability"
                ) from None
            if not 0.0 <= p <= 1.0:
                raise DataContractError(
                    f"predictions row {i}, column {names[j]!r}: "
                    f"{p} outside [0, 1]"
                )
            values[i - 1, j] = p
    return PredictionTable(tuple(ids), names, values)


# --- built-in learners -----------------------------------------------------


class BaseLearner(Protocol):
    """A per-label probability source."""

    def fit(self, features: FeatureMatrix, target: np.ndarray) -> "BaseLearner": ...

    def predict_proba(self, features: FeatureMatrix) -> np.ndarray: ...


class PriorLearner:
    """Laplace-smoothed label frequency, ignoring features."""

    def fit(self, features: FeatureMatrix, target: np.ndarray):
        target = np.asarray(target, dtype=bool)
        self.prior_ = (target.sum() + 1.0) / (len(target) + 2.0)
        return self

    def predict_proba(self, features: FeatureMatrix) -> np.ndarray:
        return np.full(features.n_instances, self.prior_)


class NaiveBayesLearner:
    """Bernoulli naive Bayes over nominal tokens and median-binarized numerics.

    Numeric features split at the training median; missing values are their
    own token. Additive smoothing (alpha = 1) reserves one slot for tokens
    unseen in training, so predictions stay strictly inside (0, 1).
    """

    def fit(self, features: FeatureMatrix, target: np.ndarray):
        target = np.asarray(target, dtype=bool)
        self.schema_ = tuple(
            (name, features.is_numeric(i))
            for i, name in enumerate(features.feature_names)
        )
        self.medians_ = [
            self._safe_median(col) if col.dtype.kind == "f" else None
            for col in features.columns
        ]
        n = len(target)
        n_pos = int(target.sum())
        self.log_prior_ = (
            np.log((n - n_pos + 1.0) / (n + 2.0)),
            np.log((n_pos + 1.0) / (n + 2.0)),
        )
        self.tables_ = []
        for j in range(features.n_features):
            tokens = self._tokenize(features.columns[j], self.medians_[j])
            vocab = sorted(set(tokens))
            counts = {t: [0, 0] for t in vocab}
            for t, y in zip(tokens, target):
                counts[t][int(y)] += 1
            denom = (
                n - n_pos + len(vocab) + 1.0,
                n_pos + len(vocab) + 1.0,
            )
            table = {
                t: (
                    np.log((c[0] + 1.0) / denom[0]),
                    np.log((c[1] + 1.0) / denom[1]),
                )
                for t, c in counts.items()
            }
            unseen = (np.log(1.0 / denom[0]), np.log(1.0 / denom[1]))
            self.tables_.append((table, unseen))
        return self

    @staticmethod
    def _safe_median(col: np.ndarray) -> float:
        present = col[~np.isnan(col)]
        return float(np.median(present)) if present.size else 0.0

    @staticmethod
    def _tokenize(col: np.ndarray, median: float | None) -> list[str]:
        if col.dtype.kind == "f":
            return [
                MISSING if np.isnan(v) else ("le" if v <= median else "gt")
                for v in col
            ]
        return [MISSING if v is None else str(v) for v in col]

    def predict_proba(self, features: FeatureMatrix) -> np.ndarray:
        schema = tuple(
            (name, features.is_numeric(i))
            for i, name in enumerate(features.feature_names)
        )
        if schema != self.schema_:
            raise DataContractError("feature schema does not match training")
        log_neg = np.full(features.n_instances, self.log_prior_[0])
        log_pos = np.full(features.n_instances, self.log_prior_[1])
        for j in range(features.n_features):
            table, unseen = self.tables_[j]
            tokens = self._tokenize(features.columns[j], self.medians_[j])
            for i, t in enumerate(tokens):
                ln, lp = table.get(t, unseen)
                log_neg[i] += ln
                log_pos[i] += lp
        return 1.0 / (1.0 + np.exp(log_neg - log_pos))


_LEARNERS = {"prior": PriorLearner, "nb": NaiveBayesLearner}


def make_learner(spec: str) -> BaseLearner:
    try:
        return _LEARNERS[spec]()
    except KeyError:
        raise DataContractError(
            f"unknown learner {spec!r}; expected one of {sorted(_LEARNERS)}"
        ) from None


def train_binary_relevance(
    learner_spec: str, features: FeatureMatrix, targets: LabelMatrix
) -> dict[str, BaseLearner]:
    """Fit one binary model per target column (real labels plus leak columns).

    A column constant on the split degenerates to its smoothed prior rather
    than erroring.
    """
    models: dict[str, BaseLearner] = {}
    for name in targets.label_names:
        column = targets.column(name)
        if column.all() or not column.any():
            model = PriorLearner()
        else:
            model = make_learner(learner_spec)
        models[name] = model.fit(features, column)
    return models


def predict_marginals(
    models: Mapping[str, BaseLearner],
    features: FeatureMatrix,
    instance_ids: Sequence[int],
) -> PredictionTable:
    names = tuple(models)
    values = np.empty((features.n_instances, len(names)), dtype=np.float64)
    for j, name in enumerate(names):
        values[:, j] = models[name].predict_proba(features)
    return PredictionTable(tuple(instance_ids), names, values)


def ingest_external_predictions(
    source,
    network: LabelNetwork,
    *,
    instance_ids: Sequence[int],
    dataset_labels: Sequence[str],
    leak_frequencies: Mapping[str, float],
) -> PredictionTable:
    """Read an external predictions file and align it to one split.

    The file must cover every real label; missing leak-node columns are
    imputed with the leak label's training frequency (with a warning), since
    an external tool may not have trained models for virtual labels.
    """
    table = read_predictions(source)
    for label in dataset_labels:
        if label not in table.node_names:
            raise DataContractError(f"external predictions missing label column {label!r}")

    row_of = {instance_id: i for i, instance_id in enumerate(table.instance_ids)}
    known = set(instance_ids)
    for instance_id in table.instance_ids:
        if instance_id not in known:
            raise DataContractError(
                f"external predictions contain unknown instance id {instance_id}"
            )
    rows = []
    for instance_id in instance_ids:
        if instance_id not in row_of:
            raise DataContractError(
                f"external predictions missing instance id {instance_id}"
            )
        rows.append(row_of[instance_id])

    wanted = list(dataset_labels) + [
        n for n in network.leak_nodes if n not in dataset_labels
    ]
    columns = []
    for name in wanted:
        if name in table.node_names:
            columns.append(table.column(name)[rows])
        else:
            freq = leak_frequencies.get(name)
            if freq is None:
                raise DataContractError(
                    f"no training frequency available to impute node {name!r}"
                )
            warnings.warn(
                f"external predictions missing leak column {name!r}; "
                f"imputing training frequency {freq:.6g}",
                stacklevel=2,
            )
            columns.append(np.full(len(rows), freq))
    values = np.stack(columns, axis=1) if columns else np.empty((len(rows), 0))
    return PredictionTable(tuple(instance_ids), tuple(wanted), values)


# --- fold orchestration ------------------------------------------------------


@dataclass(frozen=True)
class PipelineConfig:
    learner: str = "prior"  # prior | nb | external:<path>
    minsup_entail: int = DEFAULT_MINSUP
    minsup_excl: int = DEFAULT_MINSUP
    exploit: str = "both"  # entail | excl | both | none
    folds: int = 10
    seed: int = 0
    escalate: bool = False
    escalate_cap: int = 1000
    escalate_time: float = 60.0
    clamp_epsilon: float = DEFAULT_CLAMP
    threads: int | None = None

    def __post_init__(self):
        if self.exploit not in EXPLOIT_MODES:
            raise DataContractError(
                f"exploit must be one of {EXPLOIT_MODES}, got {self.exploit!r}"
            )
        if not (
            self.learner in _LEARNERS or self.learner.startswith("external:")
        ):
            raise DataContractError(f"unknown learner {self.learner!r}")


@dataclass(frozen=True, eq=False)
class FoldResult:
    fold_index: int
    relationships: RelationshipSet
    network: LabelNetwork
    raw_predictions: PredictionTable
    corrected_predictions: PredictionTable
    minsup_excl_used: int

    @property
    def relationship_count(self) -> int:
        return len(self.relationships.positive_entailments) + len(
            self.relationships.exclusions
        )


def run_split(
    dataset: MultiLabelDataset,
    train_idx: Sequence[int],
    test_idx: Sequence[int],
    config: PipelineConfig,
    fold_index: int = 0,
) -> FoldResult:
    """Run discovery/training on one split and correct the test marginals."""
    train_idx = np.asarray(train_idx, dtype=int)
    test_idx = np.asarray(test_idx, dtype=int)
    train_labels = dataset.labels.subset(train_idx)

    minsup_excl = config.minsup_excl
    if config.escalate and config.exploit in ("excl", "both"):
        minsup_excl, _ = escalate_minsup(
            train_labels,
            start=config.minsup_excl,
            cap_relationships=config.escalate_cap,
            cap_time=config.escalate_time,
        )
    discovered = discover_relationships(
        train_labels, config.minsup_entail, minsup_excl
    )
    relationships = restrict(discovered, config.exploit)
    augmented = generate_leak_labels(train_labels, relationships)
    network = build_network(relationships, dataset.labels.label_names)

    leak_columns = augmented.label_names[train_labels.n_labels :]
    leak_frequencies = {
        name: float(augmented.column(name).mean()) if augmented.n_instances else 0.0
        for name in leak_columns
    }

    test_ids = tuple(int(i) for i in test_idx)
    if config.learner.startswith("external:"):
        raw = ingest_external_predictions(
            config.learner[len("external:") :],
            network,
            instance_ids=test_ids,
            dataset_labels=dataset.labels.label_names,
            leak_frequencies=leak_frequencies,
        )
    else:
        models = train_binary_relevance(
            config.learner, dataset.features.subset(train_idx), augmented
        )
        raw = predict_marginals(models, dataset.features.subset(test_idx), test_ids)

    corrector = MarginalCorrector(network, clamp=config.clamp_epsilon)
    corrected_values = corrector.correct_batch(raw.node_names, raw.values)
    corrected = PredictionTable(raw.instance_ids, raw.node_names, corrected_values)
    corrected = _copy_equivalents(corrected, relationships)
    return FoldResult(
        fold_index, relationships, network, raw, corrected, minsup_excl
    )


def _copy_equivalents(
    table: PredictionTable, relationships: RelationshipSet
) -> PredictionTable:
    """Labels collapsed during discovery take their representative's posterior."""
    collapsed = equivalence_classes(
        relationships.equivalences, relationships.minsup_entail
    )
    if not collapsed:
        return table
    values = table.values.copy()
    index = {name: i for i, name in enumerate(table.node_names)}
    for member, representative in collapsed.items():
        if member in index and representative in index:
            values[:, index[member]] = values[:, index[representative]]
    return PredictionTable(table.instance_ids, table.node_names, values)


def run_fold(
    dataset: MultiLabelDataset,
    fold: FoldSplit,
    fold_index: int,
    config: PipelineConfig,
) -> FoldResult:
    if not 0 <= fold_index < fold.fold_count:
        raise DataContractError(
            f"fold index {fold_index} outside [0, {fold.fold_count})"
        )
    return run_split(
        dataset,
        fold.train_indices(fold_index),
        fold.test_indices(fold_index),
        config,
        fold_index,
    )


def run_cv(
    dataset: MultiLabelDataset, config: PipelineConfig
) -> tuple[list[FoldResult], EvaluationReport]:
    """Full cross-validation; folds are independent and may run concurrently."""
    fold_split = split_folds(dataset, config.folds, config.seed)

    def one(k: int) -> FoldResult:
        return run_fold(dataset, fold_split, k, config)

    if config.threads is not None and config.threads <= 1:
        results = [one(k) for k in range(config.folds)]
    else:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(one, range(config.folds)))
    results.sort(key=lambda r: r.fold_index)

    fold_reports: list[FoldReport] = []
    labels = dataset.labels.label_names
    for result in results:
        truth = dataset.labels.subset(fold_split.test_indices(result.fold_index))
        fold_reports.append(
            compare(
                result.raw_predictions.select(labels),
                result.corrected_predictions.select(labels),
                truth,
            )
        )
    report = EvaluationReport(
        tuple(fold_reports),
        tuple(r.relationship_count for r in results),
        config.minsup_entail,
        tuple(r.minsup_excl_used for r in results),
    )
    return results, report
