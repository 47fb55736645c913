"""Pairwise relationship extraction and maximal mutual-exclusion mining.

For every label pair the 2x2 co-occurrence table (S = both, T = only the
second, U = only the first, V = neither) decides which deterministic
relationship holds on the split:

* positive entailment a -> b  iff U = 0 (support S)
* pairwise exclusion          iff S = 0 (support T + U)
* coexhaustion                iff V = 0 (support T + U)
* equivalence                 iff T = U = 0 (support S)

Exclusion sets larger than two are grown levelwise from the qualifying
pairs: because excluded labels never co-occur, a set is mutually exclusive
exactly when all its pairs are, so candidate k+1-sets are joined from
k-sets sharing a prefix and checked against the pair graph alone. Only
maximal sets are kept.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .dataset import LabelMatrix
from .errors import CycleError, DataContractError, EscalationError, MiningTimeout

DEFAULT_MINSUP = 2


@dataclass(frozen=True, order=True)
class PositiveEntailment:
    antecedent: str
    consequent: str
    support: int


@dataclass(frozen=True, order=True)
class Exclusion:
    labels: tuple[str, ...]
    support: int


@dataclass(frozen=True, order=True)
class Coexhaustion:
    labels: tuple[str, str]
    support: int


@dataclass(frozen=True, order=True)
class Equivalence:
    labels: tuple[str, str]
    support: int


@dataclass(frozen=True)
class ContingencyTable:
    """Counts S (a and b), T (b only), U (a only), V (neither)."""

    S: int
    T: int
    U: int
    V: int

    @property
    def n_instances(self) -> int:
        return self.S + self.T + self.U + self.V


@dataclass(frozen=True)
class PairwiseRelationships:
    """Raw per-pair output, before exclusion growth and transitive reduction."""

    entailments: tuple[PositiveEntailment, ...]
    exclusion_pairs: tuple[Exclusion, ...]
    coexhaustions: tuple[Coexhaustion, ...]
    equivalences: tuple[Equivalence, ...]


@dataclass(frozen=True)
class RelationshipSet:
    """Canonical discovery result for one training split.

    positive_entailments are the support-filtered discovered edges, with
    equivalent labels collapsed onto their lexicographically smallest
    representative; redundant edges implied by chains stay in the report and
    are dropped only when the network is built. Exclusions are the maximal
    mutually exclusive sets under the exclusion minimum support.
    """

    positive_entailments: tuple[PositiveEntailment, ...]
    exclusions: tuple[Exclusion, ...]
    coexhaustions: tuple[Coexhaustion, ...]
    equivalences: tuple[Equivalence, ...]
    minsup_entail: int
    minsup_excl: int


def build_contingency(labels: LabelMatrix, a: str, b: str) -> ContingencyTable:
    """Count the four co-occurrence cells for labels ``a`` and ``b``."""
    if a == b:
        raise DataContractError(f"contingency table needs two distinct labels, got {a!r} twice")
    col_a = labels.column(a)
    col_b = labels.column(b)
    s = int(np.count_nonzero(col_a & col_b))
    t = int(np.count_nonzero(~col_a & col_b))
    u = int(np.count_nonzero(col_a & ~col_b))
    return ContingencyTable(s, t, u, labels.n_instances - s - t - u)


def _pair_counts(labels: LabelMatrix):
    v = labels.values.astype(np.int64)
    return v.T @ v, v.sum(axis=0)


def discover_pairwise(
    labels: LabelMatrix,
    minsup_entail: int = DEFAULT_MINSUP,
    minsup_excl: int = DEFAULT_MINSUP,
) -> PairwiseRelationships:
    """Extract all four relationship kinds from the O(q^2) pair grid.

    Entailments and exclusion pairs are support-filtered; coexhaustions and
    equivalences are always reported.
    """
    if minsup_entail < 1 or minsup_excl < 1:
        raise DataContractError("minimum support must be at least 1")
    co, pos = _pair_counts(labels)
    names = labels.label_names
    n = labels.n_instances

    entailments = []
    exclusion_pairs = []
    coexhaustions = []
    equivalences = []
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            s = int(co[i, j])
            u = int(pos[i]) - s  # i without j
            t = int(pos[j]) - s  # j without i
            v = n - s - t - u
            if u == 0 and s >= minsup_entail:
                entailments.append(PositiveEntailment(names[i], names[j], s))
            if t == 0 and s >= minsup_entail:
                entailments.append(PositiveEntailment(names[j], names[i], s))
            pair = tuple(sorted((names[i], names[j])))
            if s == 0 and t + u >= minsup_excl:
                exclusion_pairs.append(Exclusion(pair, t + u))
            if v == 0:
                coexhaustions.append(Coexhaustion(pair, t + u))
            if t == 0 and u == 0:
                equivalences.append(Equivalence(pair, s))
    return PairwiseRelationships(
        tuple(sorted(entailments)),
        tuple(sorted(exclusion_pairs)),
        tuple(sorted(coexhaustions)),
        tuple(sorted(equivalences)),
    )


def mine_maximal_exclusions(
    pairwise_exclusions: Iterable[tuple[str, str] | Exclusion],
    positive_counts: Mapping[str, int],
    minsup_excl: int,
    *,
    deadline: float | None = None,
) -> list[Exclusion]:
    """Grow maximal mutually exclusive label sets from exclusive pairs.

    ``pairwise_exclusions`` must hold pairs with zero co-occurrence on the
    source split. A set's support is the sum of its members' positive
    counts; pairs below ``minsup_excl`` cannot seed or extend a set. Raises
    MiningTimeout when ``deadline`` (time.monotonic seconds) passes.
    """
    if minsup_excl < 1:
        raise DataContractError("minimum support must be at least 1")

    def pos(label: str) -> int:
        try:
            return positive_counts[label]
        except KeyError:
            raise DataContractError(f"no positive count for label {label!r}") from None

    pairs = set()
    for item in pairwise_exclusions:
        a, b = item.labels if isinstance(item, Exclusion) else item
        if a == b:
            raise DataContractError(f"exclusion pair with identical labels: {a!r}")
        if pos(a) + pos(b) >= minsup_excl:
            pairs.add((min(a, b), max(a, b)))

    pair_set = frozenset(pairs)
    level = sorted(pairs)
    maximal: list[tuple[str, ...]] = []
    checked = 0
    while level:
        grown: set[tuple[str, ...]] = set()
        extended: set[tuple[str, ...]] = set()
        # Join step: two k-sets sharing their first k-1 items form a
        # candidate; it is a clique iff the one new pair is exclusive too.
        i = 0
        while i < len(level):
            j = i + 1
            prefix = level[i][:-1]
            while j < len(level) and level[j][:-1] == prefix:
                checked += 1
                if deadline is not None and checked % 1024 == 0:
                    if time.monotonic() > deadline:
                        raise MiningTimeout("exclusion mining exceeded its deadline")
                tail = (level[i][-1], level[j][-1])
                if tail in pair_set:
                    candidate = level[i] + (level[j][-1],)
                    grown.add(candidate)
                    # Every k-subset of a grown clique is non-maximal.
                    for k in range(len(candidate)):
                        extended.add(candidate[:k] + candidate[k + 1 :])
                j += 1
            i += 1
        maximal.extend(s for s in level if s not in extended)
        level = sorted(grown)
        if deadline is not None and time.monotonic() > deadline:
            raise MiningTimeout("exclusion mining exceeded its deadline")
    return sorted(
        Exclusion(s, sum(pos(x) for x in s)) for s in maximal
    )


def transitive_reduction(
    entailments: Iterable[PositiveEntailment],
) -> list[PositiveEntailment]:
    """Drop every entailment edge implied by a chain of others.

    The input must be a DAG; a cycle means the caller failed to collapse
    equivalent labels and is reported with the offending path.
    """
    edges: dict[tuple[str, str], int] = {}
    for e in entailments:
        if e.antecedent == e.consequent:
            raise DataContractError(f"self-entailment for label {e.antecedent!r}")
        key = (e.antecedent, e.consequent)
        if key in edges:
            raise DataContractError(f"duplicate entailment edge {key[0]!r} -> {key[1]!r}")
        edges[key] = e.support
    nodes = sorted({x for k in edges for x in k})
    succ = {u: sorted(v for (a, v) in edges if a == u) for u in nodes}

    _check_acyclic(nodes, succ)

    # reach[u] = every node reachable from u by one or more edges.
    reach: dict[str, set[str]] = {}
    for u in _reverse_topological(nodes, succ):
        r: set[str] = set()
        for v in succ[u]:
            r.add(v)
            r |= reach[v]
        reach[u] = r

    kept = []
    for (u, v), support in edges.items():
        if any(v in reach[w] for w in succ[u] if w != v):
            continue
        kept.append(PositiveEntailment(u, v, support))
    return sorted(kept)


def _check_acyclic(nodes: Sequence[str], succ: Mapping[str, Sequence[str]]) -> None:
    state = dict.fromkeys(nodes, 0)  # 0 new, 1 on stack, 2 done
    for start in nodes:
        if state[start]:
            continue
        stack = [(start, iter(succ[start]))]
        state[start] = 1
        path = [start]
        while stack:
            node, it = stack[-1]
            advanced = False
            for child in it:
                if state[child] == 1:
                    raise CycleError(path[path.index(child) :])
                if state[child] == 0:
                    state[child] = 1
                    path.append(child)
                    stack.append((child, iter(succ[child])))
                    advanced = True
                    break
            if not advanced:
                state[node] = 2
                path.pop()
                stack.pop()


def _reverse_topological(nodes, succ):
    indegree = dict.fromkeys(nodes, 0)
    for u in nodes:
        for v in succ[u]:
            indegree[v] += 1
    ready = sorted(u for u in nodes if indegree[u] == 0)
    order = []
    while ready:
        u = ready.pop(0)
        order.append(u)
        for v in succ[u]:
            indegree[v] -= 1
            if indegree[v] == 0:
                ready.append(v)
        ready.sort()
    return reversed(order)


def equivalence_classes(
    equivalences: Iterable[Equivalence], minsup_entail: int
) -> dict[str, str]:
    """Map each collapsed label to its class representative.

    Only equivalences whose support clears the entailment minimum collapse:
    below it, neither entailment direction is emitted, so the pair never
    threatens a cycle. Representatives are the lexicographically smallest
    members and do not appear as keys.
    """
    parent: dict[str, str] = {}

    def find(x: str) -> str:
        while parent.get(x, x) != x:
            parent[x] = parent.get(parent[x], parent[x])
            x = parent[x]
        return x

    for eq in equivalences:
        if eq.support < minsup_entail:
            continue
        a, b = (find(x) for x in eq.labels)
        if a != b:
            lo, hi = min(a, b), max(a, b)
            parent[hi] = lo
    return {x: find(x) for x in parent if find(x) != x}


def discover_relationships(
    labels: LabelMatrix,
    minsup_entail: int = DEFAULT_MINSUP,
    minsup_excl: int = DEFAULT_MINSUP,
    *,
    deadline: float | None = None,
) -> RelationshipSet:
    """Full discovery on one split: pairwise scan, collapse classes, mine sets."""
    pairwise = discover_pairwise(labels, minsup_entail, minsup_excl)
    classes = equivalence_classes(pairwise.equivalences, minsup_entail)

    def rep(x: str) -> str:
        return classes.get(x, x)

    mapped: dict[tuple[str, str], int] = {}
    for e in pairwise.entailments:
        a, c = rep(e.antecedent), rep(e.consequent)
        if a != c:
            # Class members have identical columns, so duplicates agree.
            mapped.setdefault((a, c), e.support)
    entailments = sorted(
        PositiveEntailment(a, c, s) for (a, c), s in mapped.items()
    )
    # Sanity only: the collapsed edge set must be acyclic.
    transitive_reduction(entailments)

    pos = labels.positive_counts()
    seed_pairs = {
        tuple(sorted((rep(a), rep(b))))
        for (a, b) in (x.labels for x in pairwise.exclusion_pairs)
    }
    exclusions = mine_maximal_exclusions(
        sorted(seed_pairs), pos, minsup_excl, deadline=deadline
    )
    return RelationshipSet(
        tuple(entailments),
        tuple(exclusions),
        pairwise.coexhaustions,
        pairwise.equivalences,
        minsup_entail,
        minsup_excl,
    )


def escalate_minsup(
    labels: LabelMatrix,
    start: int,
    cap_relationships: int,
    cap_time: float,
) -> tuple[int, list[Exclusion]]:
    """Double the exclusion minimum support until mining is tractable.

    Each attempt must finish within ``cap_time`` seconds and produce at most
    ``cap_relationships`` maximal sets; the first qualifying support wins.
    """
    if start < 2:
        raise DataContractError(f"escalation start must be at least 2, got {start}")
    if cap_relationships < 1:
        raise DataContractError("cap_relationships must be at least 1")
    n = labels.n_instances
    pairwise = discover_pairwise(labels, 1, 1)
    pos = labels.positive_counts()
    minsup = start
    while minsup <= n:
        try:
            sets = mine_maximal_exclusions(
                pairwise.exclusion_pairs,
                pos,
                minsup,
                deadline=time.monotonic() + cap_time,
            )
        except MiningTimeout:
            sets = None
        if sets is not None and len(sets) <= cap_relationships:
            return minsup, sets
        minsup *= 2
    raise EscalationError(
        f"no qualifying minimum support at or below the instance count ({n})"
    )


def restrict(relationships: RelationshipSet, exploit: str) -> RelationshipSet:
    """Keep only the relationship kinds selected for network construction.

    ``none`` empties everything (identity correction); ``excl`` keeps the
    equivalences so class collapsing stays consistent with discovery.
    """
    if exploit == "both":
        return relationships
    if exploit == "entail":
        return replace(relationships, exclusions=())
    if exploit == "excl":
        return replace(relationships, positive_entailments=())
    if exploit == "none":
        return replace(
            relationships,
            positive_entailments=(),
            exclusions=(),
            coexhaustions=(),
            equivalences=(),
        )
    raise DataContractError(
        f"exploit must be one of entail/excl/both/none, got {exploit!r}"
    )


# --- relationship report (JSON) ------------------------------------------------


def relationship_report(relationships: RelationshipSet) -> dict:
    """Serializable report with deterministic ordering."""
    return {
        "positive_entailments": [
            {"antecedent": e.antecedent, "consequent": e.consequent, "support": e.support}
            for e in relationships.positive_entailments
        ],
        "exclusions": [
            {"labels": list(x.labels), "support": x.support}
            for x in relationships.exclusions
        ],
        "coexhaustions": [
            {"labels": list(c.labels), "support": c.support}
            for c in relationships.coexhaustions
        ],
        "equivalences": [
            {"labels": list(q.labels), "support": q.support}
            for q in relationships.equivalences
        ],
        "minsup_entail": relationships.minsup_entail,
        "minsup_excl": relationships.minsup_excl,
    }


def relationship_set_from_report(report: Mapping) -> RelationshipSet:
    try:
        return RelationshipSet(
            tuple(
                PositiveEntailment(e["antecedent"], e["consequent"], int(e["support"]))
                for e in report["positive_entailments"]
            ),
            tuple(
                Exclusion(tuple(x["labels"]), int(x["support"]))
                for x in report["exclusions"]
            ),
            tuple(
                Coexhaustion(tuple(c["labels"]), int(c["support"]))
                for c in report["coexhaustions"]
            ),
            tuple(
                Equivalence(tuple(q["labels"]), int(q["support"]))
                for q in report["equivalences"]
            ),
            int(report["minsup_entail"]),
            int(report["minsup_excl"]),
        )
    except (KeyError, TypeError) as exc:
        raise DataContractError(f"malformed relationship report: {exc}") from None
