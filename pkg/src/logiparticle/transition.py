"""Deterministic-action semantics: applicability, transition, regression, progression."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Sequence

import numpy as np

from .domain import PRAM, GroundDetAction, binding
from .errors import PreconditionViolated
from .fol import (FALSE, TRUE, And, Atom, Const, Exists, Forall, Formula, Iff, Implies, Not, Or,
                  Truth, Var, conj, disj, simplify, substitute_terms)
from .universe import State, Universe, evaluate


@dataclass(frozen=True)
class GroundedAxioms:
    """A deterministic action's axioms with its parameters bound."""
    action: GroundDetAction
    precondition: Formula
    heads: tuple[tuple[Atom, Formula], ...]


def axioms(pram: PRAM, da: GroundDetAction) -> GroundedAxioms:
    key = ("axioms", da)
    memo = pram.memo
    if key not in memo:
        schema = pram.det_schema(da.name)
        if len(da.args) != len(schema.params):
            raise ValueError(f"{da.name} expects {len(schema.params)} arguments")
        b = binding(schema.params, da.args)
        heads = tuple((substitute_terms(ax.head, b), substitute_terms(ax.formula, b))
                      for ax in schema.successors)
        memo[key] = GroundedAxioms(da, substitute_terms(schema.precondition, b), heads)
    return memo[key]


class _Ambiguous(Exception):
    """A head pattern can only be matched once ``var`` is fixed to a constant."""

    def __init__(self, var: Var):
        super().__init__(var.name)
        self.var = var


def _match(head: Atom, a: Atom) -> dict[Var, object] | None:
    if head.pred != a.pred:
        return None
    for h, t in zip(head.args, a.args):
        if isinstance(h, Const) and isinstance(t, Const) and h != t:
            return None
    mapping: dict[Var, object] = {}
    for h, t in zip(head.args, a.args):
        if isinstance(h, Const):
            if isinstance(t, Var):
                raise _Ambiguous(t)
            continue
        if h in mapping and mapping[h] != t:
            if isinstance(t, Const) and isinstance(mapping[h], Const):
                return None
            raise _Ambiguous(t if isinstance(t, Var) else mapping[h])
        mapping[h] = t
    return mapping


def successor(pram: PRAM, da: GroundDetAction, a: Atom) -> Formula:
    """The formula that held before ``da`` iff ``a`` holds after it."""
    for head, body in axioms(pram, da).heads:
        m = _match(head, a)
        if m is not None:
            return substitute_terms(body, m)
    return a


def _full_range(universe: Universe, pram: PRAM, a: Atom) -> bool:
    # lifted matching is only sound when every variable position spans all constants
    decl = pram.language.fluent(a.pred)
    doms = pram.language.domains(decl)
    n = len(pram.language.constants)
    return all(isinstance(t, Const) or len(d) == n for t, d in zip(a.args, doms))


def _regress(f: Formula, pram: PRAM, da: GroundDetAction) -> Formula:
    if isinstance(f, Atom):
        universe = pram.universe
        if f.is_ground:
            if f not in universe.index:
                return FALSE
            return successor(pram, da, f)
        if not _full_range(universe, pram, f):
            raise _Ambiguous(next(t for t in f.args if isinstance(t, Var)))
        return successor(pram, da, f)
    if isinstance(f, Truth):
        return f
    if isinstance(f, Not):
        return Not(_regress(f.arg, pram, da))
    if isinstance(f, And):
        return conj(*(_regress(c, pram, da) for c in f.args))
    if isinstance(f, Or):
        return disj(*(_regress(c, pram, da) for c in f.args))
    if isinstance(f, Implies):
        return Implies(_regress(f.lhs, pram, da), _regress(f.rhs, pram, da))
    if isinstance(f, Iff):
        return Iff(_regress(f.lhs, pram, da), _regress(f.rhs, pram, da))
    if isinstance(f, (Forall, Exists)):
        try:
            return type(f)(f.var, _regress(f.body, pram, da))
        except _Ambiguous as amb:
            if amb.var != f.var:
                raise
        join = conj if isinstance(f, Forall) else disj
        cases = [substitute_terms(f.body, {f.var: Const(c)}) for c in pram.language.constants]
        return join(*(_regress(c, pram, da) for c in cases))
    raise TypeError(f"not a formula: {f!r}")


def regress(f: Formula, da: GroundDetAction, pram: PRAM) -> Formula:
    """Rewrite ``f`` about the state after ``da`` into a formula about the state before.

    Sound on every state where ``da`` is applicable.
    """
    return simplify(_regress(f, pram, da))


def reg_seq(f: Formula, actions: Sequence[GroundDetAction], pram: PRAM) -> Formula:
    return reduce(lambda g, da: regress(g, da, pram), reversed(tuple(actions)), f)


def precondition(pram: PRAM, da: GroundDetAction) -> Formula:
    return axioms(pram, da).precondition


def applicable(s: State, da: GroundDetAction, pram: PRAM) -> bool:
    return evaluate(s, precondition(pram, da))


def apply(s: State, da: GroundDetAction, pram: PRAM) -> State:
    if not applicable(s, da, pram):
        raise PreconditionViolated(f"{da} is not applicable in {s}")
    bits = 0
    for i, a in enumerate(s.universe.atoms):
        if evaluate(s, successor(pram, da, a)):
            bits |= 1 << i
    return State(s.universe, bits)


def transition_table(pram: PRAM, da: GroundDetAction) -> tuple[np.ndarray, np.ndarray]:
    """``(applicable_mask, next_state)`` arrays over all states of the universe."""
    key = ("table", da)
    memo = pram.memo
    if key not in memo:
        u = pram.universe
        ok = u.mask(precondition(pram, da))
        nxt = np.zeros(u.num_states, dtype=np.int64)
        for i, a in enumerate(u.atoms):
            nxt |= u.mask(successor(pram, da, a)).astype(np.int64) << i
        ok.setflags(write=False)
        nxt.setflags(write=False)
        memo[key] = (ok, nxt)
    return memo[key]


class CurrentStateFormula:
    """A set of states, held as a model mask with a lazily built formula view."""

    __slots__ = ("universe", "mask", "_symbolic")

    def __init__(self, universe: Universe, mask: np.ndarray, symbolic: Formula | None = None):
        self.universe = universe
        mask = np.asarray(mask, dtype=bool)
        mask.setflags(write=False)
        self.mask = mask
        self._symbolic = symbolic

    @classmethod
    def of(cls, f: Formula, universe: Universe) -> "CurrentStateFormula":
        return cls(universe, universe.mask(f), f)

    @property
    def symbolic(self) -> Formula:
        if self._symbolic is None:
            self._symbolic = self.universe.formula_of_mask(self.mask)
        return self._symbolic

    @property
    def satisfiable(self) -> bool:
        return bool(self.mask.any())

    def models(self) -> frozenset[State]:
        return frozenset(State(self.universe, int(b)) for b in np.flatnonzero(self.mask))

    def __eq__(self, other):
        if not isinstance(other, CurrentStateFormula):
            return NotImplemented
        return np.array_equal(self.mask, other.mask)

    def __hash__(self):
        return hash(self.mask.tobytes())

    def __repr__(self):
        return f"CurrentStateFormula({int(self.mask.sum())} states)"


def image(pram: PRAM, mask: np.ndarray, da: GroundDetAction) -> np.ndarray:
    ok, nxt = transition_table(pram, da)
    out = np.zeros_like(mask, dtype=bool)
    out[nxt[mask & ok]] = True
    return out


def progress(cur: CurrentStateFormula, da: GroundDetAction, o: Formula, pram: PRAM
             ) -> CurrentStateFormula:
    """States reachable from ``cur`` by executing ``da``, filtered by ``o``.

    An empty result is returned (not raised) when nothing survives.
    """
    new = image(pram, cur.mask, da)
    if o != TRUE:
        new &= pram.universe.mask(o)
    return CurrentStateFormula(pram.universe, new)


@dataclass
class FOParticle:
    """A sampled sequence of ground deterministic actions.

    ``guards[t]`` is the partition guard that selected ``actions[t]``.
    ``evidence`` is the time-0 formula equivalent to "every guard held, the
    sequence was executable and every observation so far held"; ``cur`` is
    the set of states the system can be in now.
    """
    actions: tuple[GroundDetAction, ...]
    weight: float
    cur: CurrentStateFormula
    evidence: Formula = field(default=TRUE)
    guards: tuple[Formula, ...] = ()

    @property
    def alive(self) -> bool:
        return self.weight > 0 and self.cur.satisfiable


def step_condition(pram: PRAM, history: Sequence[GroundDetAction], da: GroundDetAction,
                   o: Formula = TRUE, guard: Formula = TRUE) -> Formula:
    """Time-0 formula for: ``guard`` held, ``da`` was executable and ``o`` held after it."""
    step = conj(guard, precondition(pram, da), regress(o, da, pram))
    return reg_seq(simplify(step), history, pram)


def advance(pram: PRAM, particle: FOParticle, da: GroundDetAction, o: Formula = TRUE,
            guard: Formula = TRUE) -> FOParticle:
    """Append ``da`` (selected under ``guard``) and filter by ``o``."""
    cond = step_condition(pram, particle.actions, da, o, guard)
    cur = particle.cur
    if guard != TRUE:
        cur = CurrentStateFormula(cur.universe, cur.mask & pram.universe.mask(guard))
    return FOParticle(particle.actions + (da,), particle.weight, progress(cur, da, o, pram),
                      simplify(conj(particle.evidence, cond)), particle.guards + (guard,))


def initial_particle(pram: PRAM, o0: Formula, weight: float = 1.0) -> FOParticle:
    return FOParticle((), weight, CurrentStateFormula.of(o0, pram.universe), o0)
