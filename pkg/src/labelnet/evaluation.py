"""Average precision, MAP, and before/after comparison reports.

AP is the non-interpolated retrieval form: the mean, over relevant
instances, of precision at their rank when instances are sorted by
descending score. Ties break by original instance index (stable sort), so
results are deterministic. A label with no relevant instance in the
evaluated split is non-evaluable and excluded from MAP.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

import numpy as np

from .dataset import LabelMatrix
from .errors import DataContractError

if TYPE_CHECKING:  # pragma: no cover
    from .pipeline import PredictionTable


@dataclass(frozen=True)
class LabelRanking:
    """Test instances for one label in descending-score order."""

    label: str
    relevance: tuple[bool, ...]


def rank_label(label: str, scores, truth) -> LabelRanking:
    s = np.asarray(scores, dtype=np.float64)
    t = np.asarray(truth, dtype=bool)
    if s.ndim != 1 or s.shape != t.shape:
        raise DataContractError("scores and truth must be equal-length vectors")
    if np.isnan(s).any():
        raise DataContractError(f"NaN score for label {label!r}")
    order = np.argsort(-s, kind="stable")
    return LabelRanking(label, tuple(bool(v) for v in t[order]))


def ap_of_ranking(ranking: LabelRanking) -> float | None:
    """AP of a ranked relevance list, or None when nothing is relevant."""
    rel = np.asarray(ranking.relevance, dtype=bool)
    n_relevant = int(rel.sum())
    if n_relevant == 0:
        return None
    hits = np.cumsum(rel)
    ranks = np.arange(1, len(rel) + 1)
    return float((hits[rel] / ranks[rel]).sum() / n_relevant)


def average_precision(scores, truth) -> float | None:
    return ap_of_ranking(rank_label("", scores, truth))


def map_score(rankings: Iterable[LabelRanking]) -> float:
    """Unweighted mean AP over evaluable labels."""
    aps = [ap for ap in (ap_of_ranking(r) for r in rankings) if ap is not None]
    if not aps:
        raise DataContractError("no evaluable labels (none has a relevant instance)")
    return float(np.mean(aps))


@dataclass(frozen=True)
class LabelOutcome:
    label: str
    ap_before: float | None
    ap_after: float | None

    @property
    def delta(self) -> float | None:
        if self.ap_before is None or self.ap_after is None:
            return None
        return self.ap_after - self.ap_before


@dataclass(frozen=True)
class FoldReport:
    """Before/after comparison on one evaluated split."""

    per_label: tuple[LabelOutcome, ...]
    map_before: float
    map_after: float

    @property
    def improvement_pct(self) -> float:
        if self.map_before == 0.0:
            return 0.0
        return 100.0 * (self.map_after - self.map_before) / self.map_before


def compare(
    before: "PredictionTable", after: "PredictionTable", truth: LabelMatrix
) -> FoldReport:
    """Per-label AP and MAP for two prediction tables over the same split."""
    if before.instance_ids != after.instance_ids:
        raise DataContractError("before/after tables cover different instances")
    if len(before.instance_ids) != truth.n_instances:
        raise DataContractError("prediction tables do not match the truth split")
    outcomes = []
    for label in truth.label_names:
        for table, which in ((before, "before"), (after, "after")):
            if label not in table.node_names:
                raise DataContractError(f"{which} table missing label {label!r}")
        t = truth.column(label)
        outcomes.append(
            LabelOutcome(
                label,
                ap_of_ranking(rank_label(label, before.column(label), t)),
                ap_of_ranking(rank_label(label, after.column(label), t)),
            )
        )
    evaluable_before = [o.ap_before for o in outcomes if o.ap_before is not None]
    evaluable_after = [o.ap_after for o in outcomes if o.ap_after is not None]
    if not evaluable_before:
        raise DataContractError("no evaluable labels in this split")
    return FoldReport(
        tuple(outcomes),
        float(np.mean(evaluable_before)),
        float(np.mean(evaluable_after)),
    )


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        return 0.0, 0.0
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), std


@dataclass(frozen=True)
class EvaluationReport:
    """Cross-fold aggregate mirroring the columns of a results table."""

    folds: tuple[FoldReport, ...]
    relationship_counts: tuple[int, ...]
    minsup_entail: int
    minsup_excl_used: tuple[int, ...]

    @property
    def map_before(self) -> tuple[float, float]:
        return _mean_std([f.map_before for f in self.folds])

    @property
    def map_after(self) -> tuple[float, float]:
        return _mean_std([f.map_after for f in self.folds])

    @property
    def improvement_pct(self) -> float:
        before = self.map_before[0]
        if before == 0.0:
            return 0.0
        return 100.0 * (self.map_after[0] - before) / before

    def per_label_summary(self) -> dict[str, dict[str, float | None]]:
        labels: dict[str, dict[str, list[float]]] = {}
        for fold in self.folds:
            for outcome in fold.per_label:
                entry = labels.setdefault(outcome.label, {"before": [], "after": []})
                if outcome.ap_before is not None:
                    entry["before"].append(outcome.ap_before)
                if outcome.ap_after is not None:
                    entry["after"].append(outcome.ap_after)
        summary = {}
        for label, entry in labels.items():
            before = float(np.mean(entry["before"])) if entry["before"] else None
            after = float(np.mean(entry["after"])) if entry["after"] else None
            delta = None if before is None or after is None else after - before
            summary[label] = {
                "ap_before_mean": before,
                "ap_after_mean": after,
                "delta_mean": delta,
            }
        return summary

    def to_json_dict(self) -> dict:
        mb, mb_std = self.map_before
        ma, ma_std = self.map_after
        count_mean, count_std = _mean_std(self.relationship_counts)
        return {
            "map_before": {"mean": mb, "std": mb_std},
            "map_after": {"mean": ma, "std": ma_std},
            "improvement_pct": round(self.improvement_pct, 3),
            "per_label": self.per_label_summary(),
            "relationships": {
                "count_mean": count_mean,
                "count_std": count_std,
                "counts": list(self.relationship_counts),
                "minsup_entail": self.minsup_entail,
                "minsup_excl": list(self.minsup_excl_used),
            },
            "folds": [
                {
                    "map_before": f.map_before,
                    "map_after": f.map_after,
                    "improvement_pct": round(f.improvement_pct, 3),
                }
                for f in self.folds
            ],
        }

    def to_text(self) -> str:
        mb, mb_std = self.map_before
        ma, ma_std = self.map_after
        count_mean, count_std = _mean_std(self.relationship_counts)
        lines = [
            f"{'fold':>4}  {'map_before':>10}  {'map_after':>10}  "
            f"{'impr%':>8}  {'relations':>9}  {'minsup_excl':>11}"
        ]
        for i, fold in enumerate(self.folds):
            count = self.relationship_counts[i] if i < len(self.relationship_counts) else 0
            minsup = self.minsup_excl_used[i] if i < len(self.minsup_excl_used) else "-"
            lines.append(
                f"{i:>4}  {fold.map_before:>10.4f}  {fold.map_after:>10.4f}  "
                f"{fold.improvement_pct:>8.3f}  {count:>9}  {minsup:>11}"
            )
        lines.append("")
        lines.append(
            f"mean  {mb:.4f} +/- {mb_std:.4f}  ->  {ma:.4f} +/- {ma_std:.4f}"
            f"  (impr {self.improvement_pct:.3f}%)"
        )
        lines.append(
            f"relationships per fold: {count_mean:.1f} +/- {count_std:.1f}"
        )
        return "\n".join(lines) + "\n"
