"""Exact posterior computation under per-node soft evidence.

Each predicted probability p for a label or leak node enters the network as
a virtual-evidence likelihood pair (p, 1-p); constraint nodes are fixed to
true. Posteriors P(node = true | all evidence) are computed exactly by
variable elimination over binary variables. Observed constraints are
absorbed into their factor at construction (the exactly-one table is sliced
at child = true), so only label and leak nodes are ever eliminated.

Evidence probabilities are clamped into [eps, 1 - eps] before use; with the
deterministic tables in these networks a hard 0/1 could otherwise contradict
an observed constraint and annihilate the distribution.

The per-instance correction is a pure function of immutable inputs. The
batched engine evaluates many instances at once by carrying a leading batch
axis through every factor operation, which is also the supported way to run
corrections concurrently.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DataContractError,
    InfeasibleEvidenceError,
    InvariantError,
)
from .network import (
    CPT_EXACTLY_ONE,
    CPT_OR,
    KIND_CONSTRAINT,
    LabelNetwork,
)

DEFAULT_CLAMP = 1e-6

#: Largest number of free binary variables the enumeration oracle accepts.
ENUMERATION_LIMIT = 22

CONSISTENCY_ATOL = 1e-9


@dataclass(frozen=True)
class EvidenceModel:
    """Virtual-evidence likelihood weights per node, plus observed constraints."""

    weights: Mapping[str, tuple[float, float]]  # node -> (w_true, w_false)


def clamp_probability(p: float, eps: float = DEFAULT_CLAMP) -> float:
    return min(max(p, eps), 1.0 - eps)


def attach_evidence(
    network: LabelNetwork,
    predictions: Mapping[str, float],
    clamp: float = DEFAULT_CLAMP,
) -> EvidenceModel:
    """Turn predicted marginals into likelihood weights for every free node."""
    if not 0.0 < clamp < 0.5:
        raise DataContractError(f"clamp must lie in (0, 0.5), got {clamp}")
    weights = {}
    for name in network.evidence_nodes:
        if name not in predictions:
            raise DataContractError(f"predictions missing node {name!r}")
        p = float(predictions[name])
        if not 0.0 <= p <= 1.0:
            raise DataContractError(
                f"prediction for node {name!r} outside [0, 1]: {p}"
            )
        c = clamp_probability(p, clamp)
        weights[name] = (c, 1.0 - c)
    return EvidenceModel(weights)


# --- factors -------------------------------------------------------------------
#
# A factor holds a table over a sorted tuple of variables with a leading
# batch axis (length 1 for shared CPT factors). Axis i+1 indexes variable
# vars[i] with 0 = false, 1 = true.


class _Factor:
    __slots__ = ("vars", "table")

    def __init__(self, vars: tuple[str, ...], table: np.ndarray):
        self.vars = vars
        self.table = table

    def __repr__(self):  # pragma: no cover - debugging aid
        return f"_Factor(vars={self.vars}, batch={self.table.shape[0]})"


def _expand(table: np.ndarray, vars: tuple[str, ...], out: tuple[str, ...]):
    have = set(vars)
    shape = (table.shape[0],) + tuple(2 if v in have else 1 for v in out)
    return table.reshape(shape)


def _multiply(a: _Factor, b: _Factor) -> _Factor:
    out = tuple(sorted(set(a.vars) | set(b.vars)))
    return _Factor(out, _expand(a.table, a.vars, out) * _expand(b.table, b.vars, out))


def _sum_out(f: _Factor, var: str) -> _Factor:
    axis = f.vars.index(var) + 1
    remaining = f.vars[:axis - 1] + f.vars[axis:]
    return _Factor(remaining, f.table.sum(axis=axis))


def _normalized(f: _Factor) -> _Factor:
    # Rescaling per batch row keeps products in float range; posteriors are
    # ratios, so constants are free.
    axes = tuple(range(1, f.table.ndim))
    peak = f.table.max(axis=axes, keepdims=True) if axes else f.table
    safe = np.where(peak > 0.0, peak, 1.0)
    return _Factor(f.vars, f.table / safe)


def _or_factor(child: str, parents: tuple[str, ...]) -> _Factor:
    vars = tuple(sorted((child,) + parents))
    grid = np.indices((2,) * len(vars))
    any_parent = np.zeros(grid.shape[1:], dtype=bool)
    for p in parents:
        any_parent |= grid[vars.index(p)].astype(bool)
    table = (grid[vars.index(child)].astype(bool) == any_parent).astype(np.float64)
    return _Factor(vars, table[None, ...])


def _exactly_one_factor(parents: tuple[str, ...]) -> _Factor:
    # Constraint child already observed true; the factor covers parents only.
    vars = tuple(sorted(parents))
    grid = np.indices((2,) * len(vars))
    table = (grid.sum(axis=0) == 1).astype(np.float64)
    return _Factor(vars, table[None, ...])


def _prior_factor(var: str) -> _Factor:
    return _Factor((var,), np.array([[0.5, 0.5]]))


def _evidence_factor(var: str, w_true: np.ndarray, w_false: np.ndarray) -> _Factor:
    return _Factor((var,), np.stack([w_false, w_true], axis=1))


# --- elimination orders ----------------------------------------------------


def _moral_adjacency(
    network: LabelNetwork, absorb_observed: bool
) -> dict[str, set[str]]:
    """Undirected structure: parents married, directions dropped.

    With ``absorb_observed`` the observed constraint nodes disappear and
    their parent sets stay married, mirroring the factors actually built.
    """
    adj: dict[str, set[str]] = {}
    for node in network.nodes:
        if absorb_observed and node.kind == KIND_CONSTRAINT:
            clique = node.parents
        elif node.parents:
            clique = node.parents + (node.name,)
        else:
            clique = (node.name,)
        for v in clique:
            adj.setdefault(v, set())
        for a, b in itertools.combinations(clique, 2):
            adj[a].add(b)
            adj[b].add(a)
    if not absorb_observed:
        for node in network.nodes:
            adj.setdefault(node.name, set())
    return adj


def _min_fill(adj: Mapping[str, set[str]], targets: Iterable[str]) -> tuple[str, ...]:
    """Greedy minimum-fill order over ``targets``; ties break lexicographically."""
    live = {v: set(n for n in ns) for v, ns in adj.items()}
    remaining = set(targets)
    order = []
    while remaining:
        best = None
        for v in sorted(remaining):
            neighbors = [n for n in live[v] if n in live]
            fill = sum(
                1
                for a, b in itertools.combinations(neighbors, 2)
                if b not in live[a]
            )
            if best is None or fill < best[0]:
                best = (fill, v)
        _, v = best
        neighbors = [n for n in live[v] if n in live]
        for a, b in itertools.combinations(neighbors, 2):
            live[a].add(b)
            live[b].add(a)
        for n in neighbors:
            live[n].discard(v)
        del live[v]
        remaining.discard(v)
        order.append(v)
    return tuple(order)


def min_fill_order(network: LabelNetwork) -> tuple[str, ...]:
    """Deterministic greedy elimination order over the full moral graph."""
    adj = _moral_adjacency(network, absorb_observed=False)
    return _min_fill(adj, adj.keys())


def induced_width(network: LabelNetwork, order: Sequence[str]) -> int:
    """Largest eliminated cluster size minus one, on the full moral graph."""
    adj = _moral_adjacency(network, absorb_observed=False)
    if set(order) != set(adj):
        raise DataContractError("order must cover every node exactly once")
    live = {v: set(ns) for v, ns in adj.items()}
    width = 0
    for v in order:
        neighbors = [n for n in live[v] if n in live]
        width = max(width, len(neighbors))
        for a, b in itertools.combinations(neighbors, 2):
            live[a].add(b)
            live[b].add(a)
        for n in neighbors:
            live[n].discard(v)
        del live[v]
    return width


# --- compiled engine -----------------------------------------------------------


@dataclass(frozen=True)
class _Component:
    variables: tuple[str, ...]
    cpt_factors: tuple[_Factor, ...]
    orders: Mapping[str, tuple[str, ...]]  # query variable -> elimination order


class MarginalCorrector:
    """Reusable exact-inference engine for one network.

    Immutable after construction; `correct` and `correct_batch` share no
    mutable state and may be called from concurrent workers.
    """

    def __init__(self, network: LabelNetwork, clamp: float = DEFAULT_CLAMP):
        if not 0.0 < clamp < 0.5:
            raise DataContractError(f"clamp must lie in (0, 0.5), got {clamp}")
        self.network = network
        self.clamp = clamp
        self.evidence_nodes = network.evidence_nodes
        self._index = {name: i for i, name in enumerate(self.evidence_nodes)}

        adj = _moral_adjacency(network, absorb_observed=True)
        components = _connected_components(adj)
        singles = []
        compiled = []
        for comp in components:
            if len(comp) == 1:
                singles.append(comp[0])
                continue
            compiled.append(self._compile_component(comp, adj))
        # Unconnected nodes keep their clamped input: the uniform prior
        # cancels against the two-sided likelihood exactly.
        self._singles = tuple(singles)
        self._components = tuple(compiled)

    def _compile_component(self, comp, adj) -> _Component:
        comp_set = set(comp)
        factors = []
        for name in comp:
            node = self.network.node(name)
            if node.cpt == CPT_OR:
                factors.append(_or_factor(name, node.parents))
            else:
                factors.append(_prior_factor(name))
        for cname in self.network.constraint_nodes:
            node = self.network.node(cname)
            if set(node.parents) & comp_set:
                factors.append(_exactly_one_factor(node.parents))
        orders = {
            q: _min_fill(adj, comp_set - {q})
            for q in comp
        }
        return _Component(tuple(comp), tuple(factors), orders)

    def correct_batch(
        self,
        node_names: Sequence[str],
        probabilities: np.ndarray,
        *,
        validate: bool = True,
    ) -> np.ndarray:
        """Clamp and correct a (batch x node) probability array.

        ``node_names`` must cover every evidence node of the network; the
        returned array is aligned with ``node_names`` order. Columns for
        nodes outside the network pass through untouched.
        """
        probs = np.asarray(probabilities, dtype=np.float64)
        if probs.ndim != 2 or probs.shape[1] != len(node_names):
            raise DataContractError("probability array does not match node names")
        if probs.size and (
            np.isnan(probs).any() or probs.min() < 0.0 or probs.max() > 1.0
        ):
            raise DataContractError("probabilities must lie in [0, 1]")
        clamped = np.clip(probs, self.clamp, 1.0 - self.clamp)
        return self._correct_core(node_names, probs, clamped, validate)

    def _correct_core(self, node_names, probs, evidence, validate) -> np.ndarray:
        index = {name: i for i, name in enumerate(node_names)}
        col = {}
        for name in self.evidence_nodes:
            if name not in index:
                raise DataContractError(f"predictions missing node {name!r}")
            col[name] = index[name]

        out = probs.copy()
        for name in self._singles:
            # The uniform prior cancels against the two-sided likelihood, so
            # an unconnected node keeps its (clamped) input exactly.
            out[:, col[name]] = evidence[:, col[name]]
        for component in self._components:
            w_true = {v: evidence[:, col[v]] for v in component.variables}
            for v in component.variables:
                out[:, col[v]] = self._posterior(component, v, w_true)
        if validate and out.size:
            check_consistency(self.network, node_names, out)
        return out

    def correct(self, predictions: Mapping[str, float]) -> dict[str, float]:
        """Correct a single instance given as a node -> probability mapping."""
        names = self.evidence_nodes
        for name in names:
            if name not in predictions:
                raise DataContractError(f"predictions missing node {name!r}")
        row = np.array([[predictions[name] for name in names]])
        corrected = self.correct_batch(names, row)
        return {name: float(corrected[0, i]) for i, name in enumerate(names)}

    def _posterior(self, component: _Component, query: str, w_true) -> np.ndarray:
        factors = list(component.cpt_factors)
        for v in component.variables:
            wt = w_true[v]
            factors.append(_evidence_factor(v, wt, 1.0 - wt))
        for v in component.orders[query]:
            touching = [f for f in factors if v in f.vars]
            rest = [f for f in factors if v not in f.vars]
            product = touching[0]
            for f in touching[1:]:
                product = _multiply(product, f)
            factors = rest + [_normalized(_sum_out(product, v))]
        result = factors[0]
        for f in factors[1:]:
            result = _multiply(result, f)
        if result.vars != (query,):
            raise InvariantError("elimination left unexpected variables")
        table = result.table
        z = table.sum(axis=1)
        bad = np.flatnonzero(~(z > 0.0))
        if bad.size:
            raise InfeasibleEvidenceError(
                f"evidence contradicts constraints for instance(s) {bad.tolist()}"
            )
        return table[:, 1] / z


def correct_marginals(
    network: LabelNetwork, evidence: EvidenceModel
) -> dict[str, float]:
    """Exact posterior P(node = true | evidence) for every label and leak node.

    Likelihood pairs are used as given (only their ratio matters); the
    consistency invariants are theorems of the model exactly when every
    weight is positive, so validation is skipped for hand-built evidence
    with hard zeros.
    """
    names = network.evidence_nodes
    w = []
    strictly_positive = True
    for name in names:
        if name not in evidence.weights:
            raise DataContractError(f"evidence missing node {name!r}")
        w_true, w_false = evidence.weights[name]
        if w_true < 0 or w_false < 0 or (w_true == 0 and w_false == 0):
            raise DataContractError(f"invalid likelihood weights for node {name!r}")
        strictly_positive &= w_true > 0 and w_false > 0
        w.append(w_true / (w_true + w_false))
    corrector = MarginalCorrector(network)
    row = np.array([w])
    corrected = corrector._correct_core(names, row, row, validate=strictly_positive)
    return {name: float(corrected[0, i]) for i, name in enumerate(names)}


def brute_force_posteriors(
    network: LabelNetwork, evidence: EvidenceModel
) -> dict[str, float]:
    """Reference posteriors by full joint enumeration.

    Intentionally independent of the factor machinery: weights come straight
    from walking the network definition for every one of the 2^n states.
    """
    names = network.evidence_nodes
    n = len(names)
    if n > ENUMERATION_LIMIT:
        raise DataContractError(
            f"network too large for enumeration: {n} > {ENUMERATION_LIMIT} variables"
        )
    index = {name: i for i, name in enumerate(names)}
    states = ((np.arange(2**n)[:, None] >> np.arange(n)[None, :]) & 1).astype(bool)

    weight = np.ones(2**n, dtype=np.float64)
    for name in names:
        if name not in evidence.weights:
            raise DataContractError(f"evidence missing node {name!r}")
        w_true, w_false = evidence.weights[name]
        weight *= np.where(states[:, index[name]], w_true, w_false)
    for node in network.nodes:
        if node.kind == KIND_CONSTRAINT:
            true_parents = np.zeros(2**n, dtype=np.int64)
            for p in node.parents:
                true_parents += states[:, index[p]]
            weight *= true_parents == 1
        elif node.cpt == CPT_OR:
            any_parent = np.zeros(2**n, dtype=bool)
            for p in node.parents:
                any_parent |= states[:, index[p]]
            weight *= states[:, index[node.name]] == any_parent
        else:
            weight *= 0.5
    z = weight.sum()
    if not z > 0.0:
        raise InfeasibleEvidenceError("evidence contradicts constraints")
    return {
        name: float(weight[states[:, index[name]]].sum() / z) for name in names
    }


def _connected_components(adj: Mapping[str, set[str]]) -> list[list[str]]:
    seen: set[str] = set()
    components = []
    for start in sorted(adj):
        if start in seen:
            continue
        queue = [start]
        seen.add(start)
        comp = []
        while queue:
            v = queue.pop()
            comp.append(v)
            for nb in adj[v]:
                if nb not in seen:
                    seen.add(nb)
                    queue.append(nb)
        components.append(sorted(comp))
    return components


def check_consistency(
    network: LabelNetwork,
    node_names: Sequence[str],
    probabilities: np.ndarray,
    *,
    atol: float = CONSISTENCY_ATOL,
) -> None:
    """Raise InvariantError unless corrected marginals obey the relationships.

    Checks, for every instance row: posteriors strictly inside (0, 1);
    P(child) within [max parent, sum of parents] for every deterministic-OR
    node (which subsumes per-edge monotonicity); every observed exclusion
    group summing to one.
    """
    probs = np.asarray(probabilities, dtype=np.float64)
    col = {name: i for i, name in enumerate(node_names)}
    for name in network.evidence_nodes:
        if name not in col:
            raise DataContractError(f"corrected table missing node {name!r}")
        p = probs[:, col[name]]
        if not ((p > 0.0) & (p < 1.0)).all():
            raise InvariantError(f"posterior for {name!r} outside (0, 1)")
    for node in network.nodes:
        if node.cpt == CPT_OR:
            child = probs[:, col[node.name]]
            parents = probs[:, [col[p] for p in node.parents]]
            if (child < parents.max(axis=1) - atol).any():
                raise InvariantError(
                    f"P({node.name}) below a parent posterior (monotonicity)"
                )
            if (child > parents.sum(axis=1) + atol).any():
                raise InvariantError(
                    f"P({node.name}) above the union bound of its parents"
                )
        elif node.kind == KIND_CONSTRAINT:
            group = probs[:, [col[p] for p in node.parents]].sum(axis=1)
            if (np.abs(group - 1.0) > atol).any():
                raise InvariantError(
                    f"exclusion group of {node.name!r} does not sum to 1"
                )
