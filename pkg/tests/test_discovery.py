import itertools
import time

import numpy as np
import pytest

from labelnet import (
    CycleError,
    DataContractError,
    EscalationError,
    Exclusion,
    LabelMatrix,
    MiningTimeout,
    PositiveEntailment,
    build_contingency,
    discover_pairwise,
    discover_relationships,
    escalate_minsup,
    mine_maximal_exclusions,
    relationship_report,
    relationship_set_from_report,
    transitive_reduction,
)
from labelnet.discovery import equivalence_classes

from conftest import random_label_matrix


# --- independent oracles -------------------------------------------------------


def pairwise_oracle(labels: LabelMatrix, minsup_entail: int, minsup_excl: int):
    """Recount every pair cell-by-cell, straight from the matrix."""
    names = labels.label_names
    ents, excls, coex, equiv = [], [], [], []
    for a, b in itertools.combinations(names, 2):
        ca, cb = labels.column(a), labels.column(b)
        s = sum(1 for x, y in zip(ca, cb) if x and y)
        t = sum(1 for x, y in zip(ca, cb) if not x and y)
        u = sum(1 for x, y in zip(ca, cb) if x and not y)
        v = sum(1 for x, y in zip(ca, cb) if not x and not y)
        if u == 0 and s >= minsup_entail:
            ents.append((a, b, s))
        if t == 0 and s >= minsup_entail:
            ents.append((b, a, s))
        if s == 0 and t + u >= minsup_excl:
            excls.append((tuple(sorted((a, b))), t + u))
        if v == 0:
            coex.append((tuple(sorted((a, b))), t + u))
        if t == 0 and u == 0:
            equiv.append((tuple(sorted((a, b))), s))
    return sorted(ents), sorted(excls), sorted(coex), sorted(equiv)


def exclusion_oracle(labels: LabelMatrix, minsup_excl: int):
    """Exhaustive subset enumeration with the same zero-cell/support tests."""
    names = labels.label_names
    q = len(names)
    values = labels.values
    pos = values.sum(axis=0)
    qualifies = {}
    for i, j in itertools.combinations(range(q), 2):
        s = int((values[:, i] & values[:, j]).sum())
        qualifies[(i, j)] = s == 0 and pos[i] + pos[j] >= minsup_excl

    candidates = []
    for size in range(2, q + 1):
        for combo in itertools.combinations(range(q), size):
            if all(qualifies[p] for p in itertools.combinations(combo, 2)):
                candidates.append(frozenset(combo))
    maximal = [
        c for c in candidates if not any(c < other for other in candidates)
    ]
    return sorted(
        Exclusion(
            tuple(sorted(names[i] for i in c)),
            int(sum(pos[i] for i in c)),
        )
        for c in maximal
    )


def reachability(edges):
    nodes = sorted({x for e in edges for x in e})
    reach = {u: set() for u in nodes}
    adj = {u: [v for (a, v) in edges if a == u] for u in nodes}
    for u in nodes:
        stack = list(adj[u])
        while stack:
            v = stack.pop()
            if v not in reach[u]:
                reach[u].add(v)
                stack.extend(adj[v])
    return reach


# --- contingency -----------------------------------------------------------


class TestContingency:
    def test_toy_a_b(self, toy_labels):
        ct = build_contingency(toy_labels, "A", "B")
        assert (ct.S, ct.T, ct.U, ct.V) == (3, 2, 0, 5)
        assert ct.n_instances == 10

    def test_same_label_rejected(self, toy_labels):
        with pytest.raises(DataContractError):
            build_contingency(toy_labels, "A", "A")

    def test_unknown_label(self, toy_labels):
        with pytest.raises(DataContractError, match="'Z'"):
            build_contingency(toy_labels, "A", "Z")

    def test_empty_matrix(self):
        empty = LabelMatrix(("A", "B"), np.zeros((0, 2), dtype=bool))
        ct = build_contingency(empty, "A", "B")
        assert (ct.S, ct.T, ct.U, ct.V) == (0, 0, 0, 0)


class TestDiscoverPairwise:
    def test_toy_exact(self, toy_labels):
        pw = discover_pairwise(toy_labels, 2, 2)
        assert [(e.antecedent, e.consequent) for e in pw.entailments] == [
            ("A", "B"),
            ("A", "C"),
            ("B", "C"),
            ("D", "C"),
        ]
        assert [x.labels for x in pw.exclusion_pairs] == [
            ("A", "E"),
            ("A", "F"),
            ("E", "F"),
        ]
        assert pw.coexhaustions == ()
        assert pw.equivalences == ()

    def test_zero_positive_label_emits_no_entailment(self):
        values = np.array([[0, 1], [0, 1], [0, 0]], dtype=bool)
        pw = discover_pairwise(LabelMatrix(("a", "b"), values), 1, 1)
        assert all(e.antecedent != "a" for e in pw.entailments)

    def test_matches_oracle_on_random_matrices(self):
        rng = np.random.default_rng(42)
        for _ in range(40):
            labels = random_label_matrix(rng, 4, 8)
            minsup = int(rng.integers(1, 4))
            pw = discover_pairwise(labels, minsup, minsup)
            ents, excls, coex, equiv = pairwise_oracle(labels, minsup, minsup)
            assert [
                (e.antecedent, e.consequent, e.support) for e in pw.entailments
            ] == ents
            assert [(x.labels, x.support) for x in pw.exclusion_pairs] == excls
            assert [(c.labels, c.support) for c in pw.coexhaustions] == coex
            assert [(q.labels, q.support) for q in pw.equivalences] == equiv

    def test_minimum_support_validated(self, toy_labels):
        with pytest.raises(DataContractError):
            discover_pairwise(toy_labels, 0, 2)


class TestMineMaximalExclusions:
    def test_toy_single_set(self):
        pairs = [("A", "E"), ("A", "F"), ("E", "F")]
        pos = {"A": 3, "E": 3, "F": 3}
        result = mine_maximal_exclusions(pairs, pos, 2)
        assert result == [Exclusion(("A", "E", "F"), 9)]

    def test_empty_input(self):
        assert mine_maximal_exclusions([], {}, 2) == []

    def test_planted_clique_plus_pair(self):
        # Labels 0..3 pairwise exclusive (a 4-clique); labels 4/5 exclusive
        # between themselves but co-occurring with every clique member.
        rows = []
        for i in range(4):
            for partner in (4, 5):
                row = [0] * 6
                row[i] = 1
                row[partner] = 1
                rows.append(row)
        labels = LabelMatrix(
            tuple(f"L{i}" for i in range(6)), np.array(rows, dtype=bool)
        )
        pw = discover_pairwise(labels, 1, 1)
        mined = mine_maximal_exclusions(
            [x.labels for x in pw.exclusion_pairs], labels.positive_counts(), 1
        )
        assert mined == exclusion_oracle(labels, 1)
        assert [m.labels for m in mined] == [
            ("L0", "L1", "L2", "L3"),
            ("L4", "L5"),
        ]

    def test_matches_subset_enumeration(self):
        rng = np.random.default_rng(7)
        for _ in range(30):
            labels = random_label_matrix(rng, int(rng.integers(3, 9)), 12)
            minsup = int(rng.integers(1, 5))
            pw = discover_pairwise(labels, 1, 1)
            mined = mine_maximal_exclusions(
                [x.labels for x in pw.exclusion_pairs],
                labels.positive_counts(),
                minsup,
            )
            assert mined == exclusion_oracle(labels, minsup)

    def test_monotone_in_support(self):
        rng = np.random.default_rng(11)
        labels = random_label_matrix(rng, 8, 10)
        pw = discover_pairwise(labels, 1, 1)
        pairs = [x.labels for x in pw.exclusion_pairs]
        pos = labels.positive_counts()
        low = mine_maximal_exclusions(pairs, pos, 2)
        high = mine_maximal_exclusions(pairs, pos, 8)
        for hi_set in high:
            assert any(
                set(hi_set.labels) <= set(lo_set.labels) for lo_set in low
            )

    def test_deadline_raises(self):
        pairs = [("A", "B")]
        with pytest.raises(MiningTimeout):
            mine_maximal_exclusions(
                pairs, {"A": 2, "B": 2}, 2, deadline=time.monotonic() - 1.0
            )


class TestTransitiveReduction:
    def test_toy_chain(self):
        edges = [
            PositiveEntailment("a", "b", 3),
            PositiveEntailment("a", "c", 3),
            PositiveEntailment("b", "c", 5),
            PositiveEntailment("d", "c", 3),
        ]
        reduced = transitive_reduction(edges)
        assert [(e.antecedent, e.consequent) for e in reduced] == [
            ("a", "b"),
            ("b", "c"),
            ("d", "c"),
        ]

    def test_single_edge_unchanged(self):
        edges = [PositiveEntailment("a", "b", 2)]
        assert transitive_reduction(edges) == edges

    def test_cycle_reported(self):
        edges = [
            PositiveEntailment("a", "b", 2),
            PositiveEntailment("b", "c", 2),
            PositiveEntailment("c", "a", 2),
        ]
        with pytest.raises(CycleError) as excinfo:
            transitive_reduction(edges)
        assert set(excinfo.value.cycle) == {"a", "b", "c"}

    def test_random_dags_preserve_reachability(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            n = int(rng.integers(2, 9))
            nodes = [f"n{i}" for i in range(n)]
            edges = []
            for i in range(n):
                for j in range(i + 1, n):
                    if rng.random() < 0.35:
                        edges.append(PositiveEntailment(nodes[i], nodes[j], 1))
            reduced = transitive_reduction(edges)
            before = reachability([(e.antecedent, e.consequent) for e in edges])
            after = reachability(
                [(e.antecedent, e.consequent) for e in reduced]
            )
            for u in before:
                assert before[u] == after.get(u, set())
            # Minimality: removing any kept edge loses reachability.
            for e in reduced:
                remaining = [x for x in reduced if x != e]
                r = reachability(
                    [(x.antecedent, x.consequent) for x in remaining]
                )
                assert e.consequent not in r.get(e.antecedent, set())


class TestEquivalenceClasses:
    def test_equivalent_pair_collapses_and_reports(self):
        values = np.array(
            [[1, 1, 1], [1, 1, 0], [0, 0, 1], [1, 1, 0]], dtype=bool
        )
        labels = LabelMatrix(("x", "y", "z"), values)
        rels = discover_relationships(labels, 2, 2)
        assert [(q.labels, q.support) for q in rels.equivalences] == [
            (("x", "y"), 3)
        ]
        classes = equivalence_classes(rels.equivalences, rels.minsup_entail)
        assert classes == {"y": "x"}
        # No x<->y two-cycle survives in the entailment list.
        assert all(
            {e.antecedent, e.consequent} != {"x", "y"}
            for e in rels.positive_entailments
        )

    def test_low_support_equivalence_not_collapsed(self):
        values = np.array([[0, 0], [0, 0], [0, 0]], dtype=bool)
        labels = LabelMatrix(("x", "y"), values)
        rels = discover_relationships(labels, 2, 2)
        assert [(q.labels, q.support) for q in rels.equivalences] == [
            (("x", "y"), 0)
        ]
        assert equivalence_classes(rels.equivalences, 2) == {}


class TestDiscoverRelationships:
    def test_toy_full_set(self, toy_relationships):
        rels = toy_relationships
        assert [(e.antecedent, e.consequent, e.support) for e in rels.positive_entailments] == [
            ("A", "B", 3),
            ("A", "C", 3),
            ("B", "C", 5),
            ("D", "C", 3),
        ]
        assert [(x.labels, x.support) for x in rels.exclusions] == [
            (("A", "E", "F"), 9)
        ]

    def test_determinism(self, toy_labels):
        a = discover_relationships(toy_labels, 2, 2)
        b = discover_relationships(toy_labels, 2, 2)
        assert a == b
        assert relationship_report(a) == relationship_report(b)

    def test_report_round_trip(self, toy_relationships):
        report = relationship_report(toy_relationships)
        assert relationship_set_from_report(report) == toy_relationships


def _escalation_fixture():
    """14 exclusive pairs; ten die at support 64, four survive to 400."""
    n_blocks = 14
    q = 2 * n_blocks
    rows = []
    # Couple every cross-block label pair so only within-block pairs stay
    # exclusive.
    for u, v in itertools.combinations(range(q), 2):
        if u // 2 != v // 2:
            row = [0] * q
            row[u] = 1
            row[v] = 1
            rows.append(row)
    # Pad the first four blocks to a much larger positive count.
    for b in range(4):
        for member in (2 * b, 2 * b + 1):
            for _ in range(174):
                row = [0] * q
                row[member] = 1
                rows.append(row)
    names = tuple(f"L{i:02d}" for i in range(q))
    return LabelMatrix(names, np.array(rows, dtype=bool))


class TestEscalateMinsup:
    def test_toy_stays_at_start(self, toy_labels):
        minsup, sets = escalate_minsup(
            toy_labels, start=2, cap_relationships=10, cap_time=30.0
        )
        assert minsup == 2
        assert [x.labels for x in sets] == [("A", "E", "F")]

    def test_doubles_until_under_cap(self):
        labels = _escalation_fixture()
        pw = discover_pairwise(labels, 1, 1)
        pairs = [x.labels for x in pw.exclusion_pairs]
        pos = labels.positive_counts()
        # Direct mining at each level pins the expected escalation path.
        counts = {
            m: len(mine_maximal_exclusions(pairs, pos, m))
            for m in (2, 4, 8, 16, 32, 64)
        }
        assert all(counts[m] == 14 for m in (2, 4, 8, 16, 32))
        assert counts[64] == 4
        minsup, sets = escalate_minsup(
            labels, start=2, cap_relationships=10, cap_time=30.0
        )
        assert minsup == 64
        assert len(sets) == 4

    def test_zero_cap_rejected(self, toy_labels):
        with pytest.raises(DataContractError):
            escalate_minsup(toy_labels, start=2, cap_relationships=0, cap_time=1.0)

    def test_impossible_timebox_reports(self, toy_labels):
        with pytest.raises(EscalationError):
            escalate_minsup(
                toy_labels, start=2, cap_relationships=10, cap_time=-1.0
            )
