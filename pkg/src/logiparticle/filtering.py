"""First-order particle filtering: particle evaluation, samplers and the estimator."""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .domain import (PRAM, GroundDetAction, GroundProbAction, partition_dists, partition_guards)
from .errors import AllParticlesDead, ZeroEvidence
from .fol import TRUE, Formula, conj, simplify
from .prior import prior_fof
from .transition import (CurrentStateFormula, FOParticle, progress, reg_seq, step_condition)

log = logging.getLogger(__name__)

DEFAULT_RETRIES = 100


def cached_fof(pram: PRAM, q: Formula, given: Formula) -> float:
    cache = pram.memo.setdefault("fof", {})
    key = (q, given)
    if key not in cache:
        cache[key] = prior_fof(q, given, pram)
    return cache[key]


# -- problem -------------------------------------------------------------------

@dataclass
class FilterProblem:
    pram: PRAM
    actions: tuple[GroundProbAction, ...]
    observations: tuple[Formula, ...]
    query: Formula
    _tree: "_PrefixTree | None" = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.actions = tuple(self.actions)
        obs = list(self.observations)
        if len(obs) > len(self.actions) + 1:
            raise ValueError("at most one observation per time step")
        obs += [TRUE] * (len(self.actions) + 1 - len(obs))
        self.observations = tuple(obs)
        for f in self.observations + (self.query,):
            self.pram.check_formula(f)

    @property
    def horizon(self) -> int:
        return len(self.actions)

    @property
    def tree(self) -> "_PrefixTree":
        if self._tree is None:
            self._tree = _PrefixTree(self)
        return self._tree


@dataclass
class PosteriorEstimate:
    value: float
    particles: list[FOParticle]
    weights: np.ndarray
    ess_history: list[float]
    killed: int
    seed: int | None
    retries: int = 0

    @property
    def ess_min(self) -> float:
        return min(self.ess_history) if self.ess_history else float(len(self.particles))


# -- particle evaluation ----------------------------------------------------------

def pfof(q: Formula, particle: FOParticle, pram: PRAM) -> float:
    """Probability of ``q`` now, given the particle's actions and observations."""
    return cached_fof(pram, reg_seq(q, particle.actions, pram), particle.evidence)


def partition_occupancy(a: GroundProbAction, particle: FOParticle, pram: PRAM) -> list[float]:
    return [cached_fof(pram, reg_seq(g, particle.actions, pram), particle.evidence)
            for g in partition_guards(pram, a)]


def det_posterior(a: GroundProbAction, particle: FOParticle, pram: PRAM
                  ) -> dict[GroundDetAction, float]:
    """Distribution of the deterministic execution of ``a`` after ``particle``."""
    out: dict[GroundDetAction, float] = {}
    for occ, dist in zip(partition_occupancy(a, particle, pram), partition_dists(pram, a)):
        for da, p in dist.items():
            out[da] = out.get(da, 0.0) + occ * p
    return out


# -- shared prefix tree ----------------------------------------------------------

class _Node:
    """One sampled prefix; shared by every particle (and run) that reaches it."""

    __slots__ = ("particle", "mass", "t", "children", "options")

    def __init__(self, particle: FOParticle, mass: float, t: int):
        self.particle = particle
        self.mass = mass  # prior probability of the prefix evidence
        self.t = t
        self.children: dict[tuple[GroundDetAction, int], _Node] = {}
        self.options: dict[str, tuple] = {}


class _PrefixTree:
    def __init__(self, problem: FilterProblem):
        self.problem = problem
        pram = problem.pram
        o0 = problem.observations[0]
        mass = cached_fof(pram, o0, TRUE)
        if mass <= 0:
            raise ZeroEvidence(f"initial observation has zero prior probability: {o0}")
        cur = CurrentStateFormula.of(o0, pram.universe)
        self.root = _Node(FOParticle((), 1.0, cur, simplify(o0), ()), mass, 0)
        self.pfof_cache: dict[tuple[int, Formula], float] = {}

    def _candidates(self, node: _Node):
        pram = self.problem.pram
        a = self.problem.actions[node.t]
        for i, (g, dist) in enumerate(zip(partition_guards(pram, a), partition_dists(pram, a))):
            for da, p in dist.items():
                yield i, g, da, p

    def _conditional(self, node: _Node, f: Formula) -> float:
        return cached_fof(self.problem.pram, f, node.particle.evidence)

    def child(self, node: _Node, da: GroundDetAction, i: int, guard: Formula,
              cond: float) -> _Node:
        """The node after ``da`` selected by partition ``i``; ``cond`` = P(step | prefix)."""
        key = (da, i)
        if key not in node.children:
            pram = self.problem.pram
            o = self.problem.observations[node.t + 1]
            part = node.particle
            hist = part.actions
            full = step_condition(pram, hist, da, o, guard)
            cur = part.cur
            if guard != TRUE:
                cur = CurrentStateFormula(cur.universe, cur.mask & pram.universe.mask(guard))
            child = FOParticle(hist + (da,), 1.0, progress(cur, da, o, pram),
                               simplify(conj(part.evidence, full)), part.guards + (guard,))
            node.children[key] = _Node(child, node.mass * cond, node.t + 1)
        return node.children[key]

    def conditioned(self, node: _Node):
        """Options ``(child, prob)`` with prob = P(da, partition | prefix, o^{0:t})."""
        if "cond" not in node.options:
            pram = self.problem.pram
            o = self.problem.observations[node.t + 1]
            hist = node.particle.actions
            opts, weights = [], []
            for i, g, da, p in self._candidates(node):
                c = self._conditional(node, step_condition(pram, hist, da, o, g))
                if c > 0:
                    opts.append(self.child(node, da, i, g, c))
                    weights.append(p * c)
            w = np.array(weights)
            total = w.sum() if len(w) else 0.0
            node.options["cond"] = (opts, w / total if total > 0 else w, total)
        return node.options["cond"]

    def unconditioned(self, node: _Node):
        """Options sampled ignoring the coming observation and executability.

        Returns ``(children_or_None, prob)``; ``None`` marks a choice that
        leaves no consistent state.
        """
        if "plain" not in node.options:
            pram = self.problem.pram
            o = self.problem.observations[node.t + 1]
            hist = node.particle.actions
            opts, weights = [], []
            for i, g, da, p in self._candidates(node):
                occ = self._conditional(node, reg_seq(g, hist, pram))
                if occ <= 0:
                    continue
                c = self._conditional(node, step_condition(pram, hist, da, o, g))
                opts.append(self.child(node, da, i, g, c) if c > 0 else None)
                weights.append(p * occ)
            w = np.array(weights)
            node.options["plain"] = (opts, w / w.sum() if len(w) else w)
        return node.options["plain"]

    def proposal(self, node: _Node):
        """Proposal ignoring the current state: ``(child_or_None, prob, incremental weight)``."""
        if "prop" not in node.options:
            pram = self.problem.pram
            o = self.problem.observations[node.t + 1]
            hist = node.particle.actions
            opts, probs, incs = [], [], []
            for i, g, da, p in self._candidates(node):
                prop = cached_fof(pram, reg_seq(g, hist, pram), TRUE)
                if prop <= 0:
                    continue
                c = self._conditional(node, step_condition(pram, hist, da, o, g))
                opts.append(self.child(node, da, i, g, c) if c > 0 else None)
                probs.append(p * prop)
                incs.append(c / prop)
            pr = np.array(probs)
            node.options["prop"] = (opts, pr / pr.sum() if len(pr) else pr, np.array(incs))
        return node.options["prop"]

    def pfof(self, node: _Node) -> float:
        key = (id(node), self.problem.query)
        if key not in self.pfof_cache:
            self.pfof_cache[key] = pfof(self.problem.query, node.particle, self.problem.pram)
        return self.pfof_cache[key]


def _groups(nodes: Sequence[_Node | None], idx: np.ndarray):
    out: dict[int, list[int]] = defaultdict(list)
    for n in idx:
        out[id(nodes[n])].append(int(n))
    return out.values()


def _pick(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    cum = np.cumsum(probs)
    cum /= cum[-1]
    return np.minimum(np.searchsorted(cum, u, side="right"), len(probs) - 1)


# -- samplers ------------------------------------------------------------------------

@dataclass
class SampleResult:
    nodes: list
    weights: np.ndarray
    ess_history: list[float]
    killed: int
    retries: int = 0


def s_actions(problem: FilterProblem, N: int, seed: int = 0, condition_on_observation: bool = True,
              max_retries: int = DEFAULT_RETRIES) -> SampleResult:
    """Sample N prefixes step by step from the exact execution posterior; weights 1/N.

    By default each step conditions on the observation that follows it and on
    executability. With ``condition_on_observation=False`` the step ignores
    them and a choice that leaves no consistent state is redrawn from the
    remaining choices, at most ``max_retries`` times.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    tree = problem.tree
    T = problem.horizon
    rng = np.random.default_rng(seed)
    U = rng.random((N, T))
    nodes: list[_Node | None] = [tree.root] * N
    alive = np.ones(N, dtype=bool)
    retries = 0
    for t in range(T):
        for idx in _groups(nodes, np.flatnonzero(alive)):
            node = nodes[idx[0]]
            if condition_on_observation:
                opts, probs, _ = tree.conditioned(node)
            else:
                opts, probs = tree.unconditioned(node)
            if not opts or not np.any(probs > 0):
                alive[idx] = False
                continue
            picks = _pick(probs, U[idx, t])
            for n, c in zip(idx, picks):
                child = opts[c]
                if child is None:
                    child, used = _redraw(opts, probs, c, seed, n, t, max_retries)
                    retries += used
                if child is None:
                    alive[n] = False
                    log.debug("particle %d died at step %d", n, t + 1)
                nodes[n] = child
    killed = int(N - alive.sum())
    if not alive.any():
        raise AllParticlesDead("every particle became inconsistent with the observations")
    weights = np.full(N, 1.0 / N)
    if killed:
        weights = np.where(alive, 1.0 / alive.sum(), 0.0)
    return SampleResult(nodes, weights, [float(alive.sum())] * T, killed, retries)


def _redraw(opts, probs, first: int, seed: int, n: int, t: int, max_retries: int):
    rng = np.random.default_rng([seed, n, t])
    p = probs.copy()
    p[first] = 0.0
    used = 0
    while used < max_retries and p.sum() > 0:
        used += 1
        c = int(rng.choice(len(p), p=p / p.sum()))
        if opts[c] is not None:
            return opts[c], used
        p[c] = 0.0
    return None, used


def ess(weights: Sequence[float]) -> float:
    w = np.asarray(weights, dtype=float)
    return float(1.0 / np.sum(w ** 2))


def resample_indices(weights: Sequence[float], rng: np.random.Generator,
                     scheme: str = "multinomial") -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    if not total > 0:
        raise AllParticlesDead("cannot resample: all weights are zero")
    w = w / total
    N = len(w)
    cum = np.cumsum(w)
    cum[-1] = 1.0
    if scheme == "multinomial":
        u = rng.random(N)
    elif scheme == "systematic":
        u = (rng.random() + np.arange(N)) / N
    else:
        raise ValueError(f"unknown resampling scheme {scheme!r}")
    return np.searchsorted(cum, u, side="right")


def resample(particles: Sequence, weights: Sequence[float], seed=0, scheme: str = "multinomial"):
    """Draw N particles with replacement; returns ``(particles, uniform weights)``."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    idx = resample_indices(weights, rng, scheme)
    return [particles[i] for i in idx], np.full(len(idx), 1.0 / len(idx))


def sr_actions(problem: FilterProblem, N: int, ess_threshold: float | None = None, seed: int = 0,
               resampling: bool = True, scheme: str = "multinomial") -> SampleResult:
    """Sequential importance sampling with resampling.

    Actions are proposed ignoring the current state; each particle's weight is
    multiplied by target step mass over proposal probability. Resampling fires
    when the effective sample size drops below ``ess_threshold`` (default N/2).
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    if ess_threshold is None:
        ess_threshold = N / 2
    if not 0 < ess_threshold <= N:
        raise ValueError("ess_threshold must lie in (0, N]")
    tree = problem.tree
    T = problem.horizon
    rng = np.random.default_rng(seed)
    U = rng.random((N, T))
    nodes: list[_Node | None] = [tree.root] * N
    w = np.full(N, 1.0 / N)
    history = []
    for t in range(T):
        live = np.flatnonzero(w > 0)
        for idx in _groups(nodes, live):
            opts, probs, incs = tree.proposal(nodes[idx[0]])
            if not opts:
                w[idx] = 0.0
                continue
            picks = _pick(probs, U[idx, t])
            for n, c in zip(idx, picks):
                nodes[n] = opts[c]
                w[n] *= incs[c] if opts[c] is not None else 0.0
        total = w.sum()
        if not total > 0:
            raise AllParticlesDead(f"all particle weights are zero after step {t + 1}")
        w = w / total
        e = ess(w)
        history.append(e)
        if resampling and e < ess_threshold and t < T - 1:
            idx = resample_indices(w, rng, scheme)
            nodes = [nodes[i] for i in idx]
            w = np.full(N, 1.0 / N)
    killed = int(np.sum(w == 0))
    return SampleResult(nodes, w, history, killed)


def sr_nostate(problem: FilterProblem, N: int, seed: int = 0, **_) -> SampleResult:
    """Ablation without state tracking: no resampling, consistency only through weights."""
    return sr_actions(problem, N, seed=seed, resampling=False)


SAMPLERS = {"fofa-s": s_actions, "fofa-sr": sr_actions, "fofa-sr-nostate": sr_nostate}


def fofa(sampler, problem: FilterProblem, N: int, seed: int = 0, **kwargs) -> PosteriorEstimate:
    """Estimate P(query | actions, observations) as the weighted sum of particle values."""
    if isinstance(sampler, str):
        sampler = SAMPLERS[sampler]
    res = sampler(problem, N, seed=seed, **kwargs)
    tree = problem.tree
    w = np.asarray(res.weights, dtype=float)
    total = 0.0
    cache: dict[int, float] = {}
    particles = []
    for n, node in enumerate(res.nodes):
        if node is None or w[n] == 0:
            continue
        key = id(node)
        if key not in cache:
            cache[key] = tree.pfof(node)
        total += w[n] * cache[key]
        particles.append(_weighted(node.particle, float(w[n])))
    value = float(min(1.0, max(0.0, total / w.sum())))
    return PosteriorEstimate(value, particles, w, res.ess_history, res.killed, seed, res.retries)


def _weighted(p: FOParticle, weight: float) -> FOParticle:
    return FOParticle(p.actions, weight, p.cur, p.evidence, p.guards)


def s_actions_limit(problem: FilterProblem) -> float:
    """The value FOFA with S-Actions converges to, by walking every sampled branch.

    Branches that reach a step with no consistent choice die and are
    renormalized away, as in the sampler.
    """
    tree = problem.tree

    def walk(node: _Node) -> tuple[float, float]:
        if node.t == problem.horizon:
            return 1.0, tree.pfof(node)
        opts, probs, _ = tree.conditioned(node)
        live = val = 0.0
        for p, c in zip(probs, opts):
            m, v = walk(c)
            live += p * m
            val += p * m * v
        return live, (val / live if live > 0 else 0.0)

    live, value = walk(tree.root)
    if live <= 0:
        raise AllParticlesDead("no branch survives every observation")
    return value
