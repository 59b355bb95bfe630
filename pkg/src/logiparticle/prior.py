"""Exact inference over a weighted-formula (Markov logic) prior on initial states.

Potentials are kept as log-tables of shape ``(2,) * len(scope)``; axis ``j``
is the value of ``scope[j]``, and scopes are sorted universe atom indices.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .domain import PRAM, MLNPrior
from .errors import CNFTooLarge, UniverseTooLarge, ZeroEvidence
from .fol import Const, Formula, Truth, atoms, free_vars, substitute_terms, to_cnf, to_text
from .universe import Universe, truth_table

MAX_GROUNDINGS = 1_000_000
MAX_CLAUSES = 256
MAX_TABLE_SCOPE = 22
LOG2 = math.log(2.0)


@dataclass
class Factor:
    scope: tuple[int, ...]
    logv: np.ndarray
    source: str = ""

    @property
    def values(self) -> np.ndarray:
        return np.exp(self.logv)

    def __repr__(self):
        return f"Factor(scope={self.scope}, source={self.source!r})"


@dataclass
class GroundMarkovNet:
    universe: Universe
    nodes: tuple[int, ...]
    factors: list[Factor] = field(default_factory=list)

    def node_atoms(self):
        return [self.universe.atoms[i] for i in self.nodes]

    def with_factors(self, extra: Sequence[Factor], nodes: Iterable[int] = ()) -> "GroundMarkovNet":
        allnodes = set(self.nodes) | set(nodes)
        for f in extra:
            allnodes.update(f.scope)
        return GroundMarkovNet(self.universe, tuple(sorted(allnodes)), self.factors + list(extra))

    def neighbours(self) -> dict[int, set[int]]:
        adj: dict[int, set[int]] = {v: set() for v in self.nodes}
        for f in self.factors:
            for v in f.scope:
                adj.setdefault(v, set()).update(u for u in f.scope if u != v)
        return adj

    def induced_width(self) -> int:
        """Largest clique created by the min-degree elimination order."""
        adj = {v: set(n) for v, n in self.neighbours().items()}
        width = 0
        while adj:
            v = min(adj, key=lambda x: (len(adj[x]), to_text(self.universe.atoms[x])))
            nb = adj.pop(v)
            width = max(width, len(nb))
            for u in nb:
                adj[u] |= nb - {u}
                adj[u].discard(v)
        return width

    def summary(self) -> str:
        lines = [f"nodes ({len(self.nodes)}): " + ", ".join(str(a) for a in self.node_atoms()),
                 f"factors ({len(self.factors)}):"]
        for f in self.factors:
            names = ", ".join(str(self.universe.atoms[i]) for i in f.scope)
            lines.append(f"  [{names}] {f.source}")
        lines.append(f"induced width (min-degree): {self.induced_width()}")
        return "\n".join(lines)


def _table_factor(g: Formula, universe: Universe, weight: float | None, source: str) -> Factor:
    scope = tuple(sorted({universe.index[a] for a in atoms(g)}))
    table = truth_table(g, [universe.atoms[i] for i in scope])
    if weight is None:
        with np.errstate(divide="ignore"):
            logv = np.log(table.astype(float))
    else:
        logv = weight * table.astype(float)
    return Factor(scope, logv, source)


def groundings(f: Formula, constants: Sequence[str]):
    fv = sorted(free_vars(f), key=lambda v: v.name)
    for combo in itertools.product(constants, repeat=len(fv)):
        b = {v: Const(c) for v, c in zip(fv, combo)}
        yield b, substitute_terms(f, b)


def build_prior_network(prior: MLNPrior, universe: Universe,
                        max_groundings: int = MAX_GROUNDINGS) -> GroundMarkovNet:
    """One factor per non-constant grounding of each weighted formula."""
    factors: list[Factor] = []
    count = 0
    for f, w in prior.formulas:
        nfree = len(free_vars(f))
        count += len(universe.constants) ** nfree
        if count > max_groundings:
            raise UniverseTooLarge(f"prior has more than {max_groundings} groundings")
        for b, gf in groundings(f, universe.constants):
            g = universe.ground(gf)
            if isinstance(g, Truth):
                continue
            where = ", ".join(f"{v.name}={c.name}" for v, c in b.items())
            src = f"{w:g}: {to_text(f)}" + (f" [{where}]" if where else "")
            factors.append(_table_factor(g, universe, w, src))
    nodes = sorted({v for fac in factors for v in fac.scope})
    return GroundMarkovNet(universe, tuple(nodes), factors)


def prior_network(pram: PRAM) -> GroundMarkovNet:
    memo = pram.memo
    if "prior_net" not in memo:
        memo["prior_net"] = build_prior_network(pram.prior, pram.universe)
    return memo["prior_net"]


def indicator_factors(g: Formula, universe: Universe, label: str,
                      max_clauses: int = MAX_CLAUSES) -> list[Factor]:
    """0/1 factors whose product is the characteristic function of ``g``.

    One factor per CNF clause; a single table over all of ``g``'s atoms is
    used when the clause form would exceed ``max_clauses``.
    """
    if isinstance(g, Truth):
        if g.value:
            return []
        return [Factor((), np.array(-np.inf), f"{label}: false")]
    try:
        cnf = to_cnf(g, max_clauses)
    except CNFTooLarge:
        if len({a for a in atoms(g)}) > MAX_TABLE_SCOPE:
            raise
        return [_table_factor(g, universe, None, f"{label}: {to_text(g)}")]
    if len(cnf) > max_clauses:
        return [_table_factor(g, universe, None, f"{label}: {to_text(g)}")]
    out = []
    for clause in cnf:
        if not clause:
            out.append(Factor((), np.array(-np.inf), f"{label}: empty clause"))
            continue
        scope = tuple(sorted({universe.index[a] for a, _ in clause}))
        table = np.zeros((2,) * len(scope), dtype=float)
        # the only falsifying assignment sets each literal false
        falsify = [0] * len(scope)
        for a, pos in clause:
            falsify[scope.index(universe.index[a])] = 0 if pos else 1
        table[tuple(falsify)] = -np.inf
        text = " | ".join(str(a) if pos else f"~{a}" for a, pos in
                          sorted(clause, key=lambda lit: (universe.index[lit[0]], lit[1])))
        out.append(Factor(scope, table, f"{label} clause: {text}"))
    return out


# -- variable elimination ------------------------------------------------------

def _aligned(f: Factor, scope: tuple[int, ...]) -> np.ndarray:
    shape = [2 if v in f.scope else 1 for v in scope]
    return f.logv.reshape(shape)


def multiply(factors: Sequence[Factor]) -> Factor:
    scope = tuple(sorted({v for f in factors for v in f.scope}))
    out = np.zeros((2,) * len(scope))
    for f in factors:
        out = out + _aligned(f, scope)
    return Factor(scope, out, "product")


def sum_out(f: Factor, var: int) -> Factor:
    axis = f.scope.index(var)
    with np.errstate(invalid="ignore"):
        logv = np.logaddexp.reduce(f.logv, axis=axis)
    return Factor(f.scope[:axis] + f.scope[axis + 1:], logv, "marginal")


def eliminate(net: GroundMarkovNet, keep: Iterable[int] = (),
              tie_break: Callable[[int], object] | None = None) -> Factor:
    """Sum every node outside ``keep`` out of the factor product.

    Nodes are eliminated min-degree first; ties go to the lexicographically
    smallest atom unless ``tie_break`` supplies another key. Nodes that no
    factor touches contribute a factor of 2 each.
    """
    keep = set(keep)
    if not keep <= set(net.nodes):
        raise ValueError("keep must be a subset of the network's nodes")
    if tie_break is None:
        names = {v: to_text(net.universe.atoms[v]) for v in net.nodes}
        tie_break = names.__getitem__
    factors = list(net.factors)
    const = 0.0
    touched = {v for f in factors for v in f.scope}
    for v in net.nodes:
        if v not in keep and v not in touched:
            const += LOG2
    todo = {v for v in touched if v not in keep}
    while todo:
        def degree(v):
            nb = set()
            for f in factors:
                if v in f.scope:
                    nb.update(f.scope)
            return len(nb) - 1
        v = min(todo, key=lambda x: (degree(x), tie_break(x)))
        todo.discard(v)
        inside = [f for f in factors if v in f.scope]
        factors = [f for f in factors if v not in f.scope]
        factors.append(sum_out(multiply(inside), v))
    result = multiply(factors) if factors else Factor((), np.array(0.0))
    scope = tuple(sorted(keep))
    logv = np.broadcast_to(_aligned(result, scope), (2,) * len(scope)) + const
    return Factor(scope, np.array(logv), "eliminate")


def log_partition(net: GroundMarkovNet) -> float:
    return float(eliminate(net).logv)


def relevant_nodes(net: GroundMarkovNet, seeds: Iterable[int]) -> set[int]:
    """``seeds`` plus every prior node joined to one of them by a factor path."""
    adj = net.neighbours()
    seen = set(seeds)
    stack = list(seen)
    while stack:
        v = stack.pop()
        for u in adj.get(v, ()):
            if u not in seen:
                seen.add(u)
                stack.append(u)
    return seen


def query_network(pram: PRAM, q: Formula, given: Formula, restrict: bool = True
                  ) -> tuple[GroundMarkovNet, list[Factor], list[Factor]]:
    """The (possibly restricted) prior network plus query and evidence indicators."""
    u = pram.universe
    for f in (q, given):
        if free_vars(f):
            raise ValueError(f"formula has free variables: {f}")
        u.check_symbols(f)
    gq, gg = u.ground(q), u.ground(given)
    qf = indicator_factors(gq, u, "query")
    ef = indicator_factors(gg, u, "evidence")
    base = prior_network(pram)
    seeds = {v for f in qf + ef for v in f.scope}
    if restrict:
        nodes = relevant_nodes(base, seeds)
        kept = [f for f in base.factors if f.scope and f.scope[0] in nodes]
    else:
        nodes = set(range(u.n))
        kept = list(base.factors)
    net = GroundMarkovNet(u, tuple(sorted(nodes | seeds)), kept)
    return net, qf, ef


def prior_fof(q: Formula, given: Formula, pram: PRAM, restrict: bool = True) -> float:
    """``P0(q | given)`` by variable elimination on the relevant subnetwork."""
    net, qf, ef = query_network(pram, q, given, restrict)
    den = log_partition(net.with_factors(ef))
    if den == -np.inf:
        raise ZeroEvidence(f"evidence has zero prior probability: {given}")
    if not qf:
        return 1.0
    num = log_partition(net.with_factors(ef + qf))
    return float(min(1.0, max(0.0, math.exp(num - den))))


def state_log_weights(prior: MLNPrior, universe: Universe) -> np.ndarray:
    """Unnormalized log-weight of every state: sum of weights of satisfied groundings."""
    logw = np.zeros(universe.num_states)
    for f, w in prior.formulas:
        for _, gf in groundings(f, universe.constants):
            logw += w * universe.mask(gf)
    return logw


def state_distribution(pram: PRAM) -> np.ndarray:
    """Normalized prior probability of every state (cached)."""
    memo = pram.memo
    if "p0" not in memo:
        logw = state_log_weights(pram.prior, pram.universe)
        p = np.exp(logw - logw.max())
        p /= p.sum()
        p.setflags(write=False)
        memo["p0"] = p
    return memo["p0"]


def brute_force_prior(q: Formula, given: Formula, prior: MLNPrior, universe: Universe) -> float:
    """``P0(q | given)`` by summing weights over every state."""
    logw = state_log_weights(prior, universe)
    w = np.exp(logw - logw.max())
    g = universe.mask(given)
    den = w[g].sum()
    if den <= 0:
        raise ZeroEvidence(f"evidence has zero prior probability: {given}")
    return float(w[g & universe.mask(q)].sum() / den)
