"""Translate discovered relationships into a network of deterministic nodes.

Every real label becomes a node. A label with discovered entailment parents
gets a deterministic-OR table over those parents plus one fresh leak parent
(``leak__<label>``) standing in for unmodelled causes. Each mutual-exclusion
set gets one leak node (``leakx__<members>``) and one constraint child over
members + leak whose table is 1 exactly when a single parent is true; the
constraint is pinned to true as observed evidence. Root nodes, leaks
included, carry a uniform prior.

Leak columns for training the corresponding virtual-label models are derived
from the same split the relationships were mined on:

* entailment leak for consequent b: true where b holds and no discovered
  parent does, false everywhere else;
* exclusion leak for a set: true exactly where every member is false.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np

from .dataset import LabelMatrix
from .discovery import RelationshipSet, equivalence_classes, transitive_reduction
from .errors import DataContractError, InvariantError

KIND_LABEL = "label"
KIND_LEAK_ENTAIL = "leak_entail"
KIND_LEAK_EXCL = "leak_excl"
KIND_CONSTRAINT = "constraint"

CPT_UNIFORM = "uniform_prior"
CPT_OR = "or"
CPT_EXACTLY_ONE = "exactly_one"


def leak_entail_name(consequent: str) -> str:
    return f"leak__{consequent}"


def leak_excl_name(members: Iterable[str]) -> str:
    return "leakx__" + "__".join(sorted(members))


def constraint_name(members: Iterable[str]) -> str:
    return "constraint__" + "__".join(sorted(members))


@dataclass(frozen=True)
class Node:
    name: str
    kind: str
    cpt: str
    parents: tuple[str, ...] = ()
    observed: bool = False
    # The consequent for entailment leaks, the member set for exclusion
    # leaks and constraints, empty for plain labels.
    detail: tuple[str, ...] = ()


@dataclass(frozen=True)
class LabelNetwork:
    nodes: tuple[Node, ...]

    def __post_init__(self):
        names = [n.name for n in self.nodes]
        if len(set(names)) != len(names):
            raise DataContractError("duplicate node names in network")
        known = set(names)
        for node in self.nodes:
            for p in node.parents:
                if p not in known:
                    raise DataContractError(
                        f"node {node.name!r} references unknown parent {p!r}"
                    )

    @cached_property
    def by_name(self) -> Mapping[str, Node]:
        return {n.name: n for n in self.nodes}

    def node(self, name: str) -> Node:
        try:
            return self.by_name[name]
        except KeyError:
            raise DataContractError(f"unknown node {name!r}") from None

    @cached_property
    def label_nodes(self) -> tuple[str, ...]:
        return tuple(n.name for n in self.nodes if n.kind == KIND_LABEL)

    @cached_property
    def leak_nodes(self) -> tuple[str, ...]:
        return tuple(
            n.name for n in self.nodes if n.kind in (KIND_LEAK_ENTAIL, KIND_LEAK_EXCL)
        )

    @cached_property
    def evidence_nodes(self) -> tuple[str, ...]:
        """Nodes that take per-instance probability evidence: labels + leaks."""
        return tuple(n.name for n in self.nodes if n.kind != KIND_CONSTRAINT)

    @cached_property
    def constraint_nodes(self) -> tuple[str, ...]:
        return tuple(n.name for n in self.nodes if n.kind == KIND_CONSTRAINT)

    @property
    def edges(self) -> list[tuple[str, str]]:
        return [(p, n.name) for n in self.nodes for p in n.parents]

    def to_json_dict(self) -> dict:
        nodes = []
        for n in self.nodes:
            entry = {
                "id": n.name,
                "kind": n.kind,
                "cpt": n.cpt,
                "observed": n.observed,
            }
            if n.kind == KIND_LEAK_ENTAIL:
                entry["consequent"] = n.detail[0]
            elif n.kind in (KIND_LEAK_EXCL, KIND_CONSTRAINT):
                entry["members"] = list(n.detail)
            nodes.append(entry)
        return {"nodes": nodes, "edges": [[p, c] for p, c in self.edges]}


def network_from_json_dict(data: Mapping) -> LabelNetwork:
    try:
        parents: dict[str, list[str]] = {n["id"]: [] for n in data["nodes"]}
        for parent, child in data["edges"]:
            if child not in parents:
                raise DataContractError(f"edge references unknown node {child!r}")
            parents[child].append(parent)
        nodes = []
        for n in data["nodes"]:
            if n["kind"] == KIND_LEAK_ENTAIL:
                detail = (n["consequent"],)
            elif n["kind"] in (KIND_LEAK_EXCL, KIND_CONSTRAINT):
                detail = tuple(n["members"])
            else:
                detail = ()
            nodes.append(
                Node(
                    n["id"],
                    n["kind"],
                    n["cpt"],
                    tuple(parents[n["id"]]),
                    bool(n["observed"]),
                    detail,
                )
            )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DataContractError):
            raise
        raise DataContractError(f"malformed network JSON: {exc}") from None
    return LabelNetwork(tuple(nodes))


def build_network(
    relationships: RelationshipSet, label_names: Iterable[str]
) -> LabelNetwork:
    """Construct the node set for one split's relationships.

    Entailment edges implied by chains are not represented: the discovered
    edge set is transitively reduced here, so a consequent's parents are its
    direct antecedents only. Labels collapsed into an equivalence class are
    represented by the class representative alone; callers copy the
    representative's posterior back onto members after inference.
    """
    label_names = tuple(label_names)
    if len(set(label_names)) != len(label_names):
        raise DataContractError("duplicate label names")
    known = set(label_names)

    collapsed = equivalence_classes(
        relationships.equivalences, relationships.minsup_entail
    )
    kept = [name for name in label_names if name not in collapsed]

    parents_of: dict[str, list[str]] = {}
    for e in transitive_reduction(relationships.positive_entailments):
        for x in (e.antecedent, e.consequent):
            if x not in known:
                raise DataContractError(f"entailment references unknown label {x!r}")
            if x in collapsed:
                raise DataContractError(
                    f"entailment references collapsed label {x!r}"
                )
        parents_of.setdefault(e.consequent, []).append(e.antecedent)

    for x in (m for excl in relationships.exclusions for m in excl.labels):
        if x not in known:
            raise DataContractError(f"exclusion references unknown label {x!r}")
        if x in collapsed:
            raise DataContractError(f"exclusion references collapsed label {x!r}")

    nodes: list[Node] = []
    taken = set(kept)

    def claim(name: str) -> str:
        if name in taken:
            raise DataContractError(f"generated node name {name!r} collides")
        taken.add(name)
        return name

    consequents = sorted(parents_of)
    for name in kept:
        if name in parents_of:
            leak = leak_entail_name(name)
            parents = tuple(sorted(parents_of[name])) + (leak,)
            nodes.append(Node(name, KIND_LABEL, CPT_OR, parents))
        else:
            nodes.append(Node(name, KIND_LABEL, CPT_UNIFORM))
    for consequent in consequents:
        nodes.append(
            Node(
                claim(leak_entail_name(consequent)),
                KIND_LEAK_ENTAIL,
                CPT_UNIFORM,
                detail=(consequent,),
            )
        )
    for excl in sorted(relationships.exclusions):
        members = tuple(sorted(excl.labels))
        leak = claim(leak_excl_name(members))
        nodes.append(Node(leak, KIND_LEAK_EXCL, CPT_UNIFORM, detail=members))
        nodes.append(
            Node(
                claim(constraint_name(members)),
                KIND_CONSTRAINT,
                CPT_EXACTLY_ONE,
                members + (leak,),
                observed=True,
                detail=members,
            )
        )
    network = LabelNetwork(tuple(nodes))

    expected = len(kept) + len(consequents) + 2 * len(relationships.exclusions)
    if len(network.nodes) != expected:
        raise InvariantError("node count does not match relationship structure")
    return network


def generate_leak_labels(
    labels: LabelMatrix, relationships: RelationshipSet
) -> LabelMatrix:
    """Append one boolean column per leak node, in network node order.

    Must be called with the same split the relationships were mined on;
    leak semantics are split-relative. Parent sets follow the network's
    reduced structure (a transitively redundant parent is contained in a
    kept one on this split, so it could not change the columns anyway).
    """
    columns = [labels.values]
    names = list(labels.label_names)

    parents_of: dict[str, list[str]] = {}
    for e in transitive_reduction(relationships.positive_entailments):
        parents_of.setdefault(e.consequent, []).append(e.antecedent)
    for consequent in sorted(parents_of):
        any_parent = np.zeros(labels.n_instances, dtype=bool)
        for parent in parents_of[consequent]:
            any_parent |= labels.column(parent)
        name = leak_entail_name(consequent)
        if name in names:
            raise DataContractError(f"leak column name {name!r} collides")
        names.append(name)
        columns.append((labels.column(consequent) & ~any_parent)[:, None])
    for excl in sorted(relationships.exclusions):
        any_member = np.zeros(labels.n_instances, dtype=bool)
        for member in excl.labels:
            any_member |= labels.column(member)
        name = leak_excl_name(excl.labels)
        if name in names:
            raise DataContractError(f"leak column name {name!r} collides")
        names.append(name)
        columns.append((~any_member)[:, None])
    return LabelMatrix(tuple(names), np.hstack(columns))
