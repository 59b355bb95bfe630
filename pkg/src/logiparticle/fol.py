"""Function-free first-order formulas over fluent atoms, on a finite universe.

Formulas are immutable values. ``conj`` and ``disj`` are the preferred way to
build conjunctions and disjunctions: they flatten nested operators and drop
duplicate children while keeping the original order, so printed output stays
readable. ``canonical`` additionally sorts children and is what structural
equality "up to normalization" means throughout the package.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Union

from .errors import CNFTooLarge, EmptyUniverse, UnknownConstant


@dataclass(frozen=True, slots=True)
class Var:
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True, slots=True)
class Const:
    name: str

    def __str__(self):
        return self.name


Term = Union[Var, Const]


def term(name: str | Term) -> Term:
    if isinstance(name, (Var, Const)):
        return name
    return Var(name) if name.startswith("?") else Const(name)


class Formula:
    __slots__ = ()

    def __str__(self):
        return to_text(self)

    def __repr__(self):
        return f"{type(self).__name__}<{to_text(self)}>"

    def __invert__(self):
        return Not(self)

    def __and__(self, other):
        return conj(self, other)

    def __or__(self, other):
        return disj(self, other)


@dataclass(frozen=True, slots=True, repr=False)
class Atom(Formula):
    pred: str
    args: tuple[Term, ...] = ()

    @property
    def is_ground(self) -> bool:
        return all(isinstance(a, Const) for a in self.args)


@dataclass(frozen=True, slots=True, repr=False)
class Truth(Formula):
    value: bool


TRUE = Truth(True)
FALSE = Truth(False)


@dataclass(frozen=True, slots=True, repr=False)
class Not(Formula):
    arg: Formula


@dataclass(frozen=True, slots=True, repr=False)
class And(Formula):
    args: tuple[Formula, ...]


@dataclass(frozen=True, slots=True, repr=False)
class Or(Formula):
    args: tuple[Formula, ...]


@dataclass(frozen=True, slots=True, repr=False)
class Implies(Formula):
    lhs: Formula
    rhs: Formula


@dataclass(frozen=True, slots=True, repr=False)
class Iff(Formula):
    lhs: Formula
    rhs: Formula


@dataclass(frozen=True, slots=True, repr=False)
class Forall(Formula):
    var: Var
    body: Formula


@dataclass(frozen=True, slots=True, repr=False)
class Exists(Formula):
    var: Var
    body: Formula


Quantifier = (Forall, Exists)


def atom(pred: str, *args: str | Term) -> Atom:
    return Atom(pred, tuple(term(a) for a in args))


def _flatten(kind, parts: Iterable[Formula]) -> tuple[Formula, ...]:
    seen: dict[Formula, None] = {}
    for p in parts:
        if isinstance(p, kind):
            for q in p.args:
                seen.setdefault(q, None)
        else:
            seen.setdefault(p, None)
    return tuple(seen)


def conj(*parts: Formula) -> Formula:
    args = _flatten(And, parts)
    if not args:
        return TRUE
    if len(args) == 1:
        return args[0]
    return And(args)


def disj(*parts: Formula) -> Formula:
    args = _flatten(Or, parts)
    if not args:
        return FALSE
    if len(args) == 1:
        return args[0]
    return Or(args)


def negate(f: Formula) -> Formula:
    """Negation that cancels double negation and flips truth constants."""
    if isinstance(f, Not):
        return f.arg
    if isinstance(f, Truth):
        return FALSE if f.value else TRUE
    return Not(f)


def children(f: Formula) -> tuple[Formula, ...]:
    if isinstance(f, (Atom, Truth)):
        return ()
    if isinstance(f, Not):
        return (f.arg,)
    if isinstance(f, (And, Or)):
        return f.args
    if isinstance(f, (Implies, Iff)):
        return (f.lhs, f.rhs)
    return (f.body,)


def rebuild(f: Formula, parts: tuple[Formula, ...]) -> Formula:
    if isinstance(f, Not):
        return Not(parts[0])
    if isinstance(f, And):
        return conj(*parts)
    if isinstance(f, Or):
        return disj(*parts)
    if isinstance(f, Implies):
        return Implies(*parts)
    if isinstance(f, Iff):
        return Iff(*parts)
    if isinstance(f, (Forall, Exists)):
        return type(f)(f.var, parts[0])
    return f


# -- queries -----------------------------------------------------------------

def free_vars(f: Formula) -> frozenset[Var]:
    if isinstance(f, Atom):
        return frozenset(a for a in f.args if isinstance(a, Var))
    if isinstance(f, (Forall, Exists)):
        return free_vars(f.body) - {f.var}
    out: frozenset[Var] = frozenset()
    for c in children(f):
        out |= free_vars(c)
    return out


def all_vars(f: Formula) -> set[Var]:
    if isinstance(f, Atom):
        return {a for a in f.args if isinstance(a, Var)}
    out = {f.var} if isinstance(f, (Forall, Exists)) else set()
    for c in children(f):
        out |= all_vars(c)
    return out


def atoms(f: Formula) -> list[Atom]:
    """Distinct atoms in order of first appearance."""
    seen: dict[Atom, None] = {}

    def walk(g):
        if isinstance(g, Atom):
            seen.setdefault(g, None)
        for c in children(g):
            walk(c)

    walk(f)
    return list(seen)


def constants_of(f: Formula) -> set[str]:
    return {a.name for at in atoms(f) for a in at.args if isinstance(a, Const)}


def has_quantifier(f: Formula) -> bool:
    if isinstance(f, (Forall, Exists)):
        return True
    return any(has_quantifier(c) for c in children(f))


def size(f: Formula) -> int:
    return 1 + sum(size(c) for c in children(f))


# -- substitution and grounding ---------------------------------------------

def _fresh(base: Var, taken: set[str]) -> Var:
    for i in itertools.count(1):
        name = f"{base.name}_{i}"
        if name not in taken:
            return Var(name)
    raise AssertionError("unreachable")


def substitute_terms(f: Formula, mapping: Mapping[Var, Term]) -> Formula:
    """Replace free variables by terms, renaming bound variables to avoid capture."""
    if not mapping:
        return f
    if isinstance(f, Atom):
        if not any(isinstance(a, Var) and a in mapping for a in f.args):
            return f
        return Atom(f.pred, tuple(mapping.get(a, a) if isinstance(a, Var) else a for a in f.args))
    if isinstance(f, Truth):
        return f
    if isinstance(f, (Forall, Exists)):
        inner = {k: v for k, v in mapping.items() if k != f.var}
        if not inner:
            return f
        var, body = f.var, f.body
        if any(v == var for v in inner.values()) and free_vars(body) & set(inner):
            taken = {v.name for v in all_vars(body)} | {v.name for v in inner.values() if isinstance(v, Var)}
            taken |= {k.name for k in inner}
            new = _fresh(var, taken)
            body = substitute_terms(body, {var: new})
            var = new
        return type(f)(var, substitute_terms(body, inner))
    return rebuild(f, tuple(substitute_terms(c, mapping) for c in children(f)))


def substitute(f: Formula, binding: Mapping[Var | str, Const | str],
               constants: Iterable[str] | None = None) -> Formula:
    """Bind free variables of ``f`` to constants.

    With ``constants`` given, every binding target must be one of them.
    """
    known = None if constants is None else set(constants)
    mapping: dict[Var, Term] = {}
    for k, v in binding.items():
        var = k if isinstance(k, Var) else Var(k)
        c = v if isinstance(v, Const) else Const(v)
        if known is not None and c.name not in known:
            raise UnknownConstant(f"constant {c.name!r} is not in the universe")
        mapping[var] = c
    return substitute_terms(f, mapping)


def ground(f: Formula, constants: Iterable[str]) -> Formula:
    """Expand quantifiers over a finite set of constants.

    Returns ``f`` itself when it has no quantifiers, which makes grounding
    idempotent.
    """
    consts = sorted(constants) if isinstance(constants, (set, frozenset)) else list(constants)
    if not has_quantifier(f):
        return f
    return _ground(f, tuple(Const(c) for c in consts))


def _ground(f: Formula, consts: tuple[Const, ...]) -> Formula:
    if isinstance(f, (Forall, Exists)):
        if not consts:
            raise EmptyUniverse("cannot ground a quantifier over an empty universe")
        parts = [_ground(substitute_terms(f.body, {f.var: c}), consts) for c in consts]
        return conj(*parts) if isinstance(f, Forall) else disj(*parts)
    if not has_quantifier(f):
        return f
    return rebuild(f, tuple(_ground(c, consts) for c in children(f)))


def replace_atoms(f: Formula, fn) -> Formula:
    """Rebuild ``f`` with every atom ``a`` replaced by ``fn(a)``."""
    if isinstance(f, Atom):
        return fn(f)
    if isinstance(f, Truth):
        return f
    return rebuild(f, tuple(replace_atoms(c, fn) for c in children(f)))


# -- normal forms --------------------------------------------------------------

def to_nnf(f: Formula, positive: bool = True) -> Formula:
    """Negation normal form with ``=>`` and ``<=>`` eliminated."""
    if isinstance(f, Atom):
        return f if positive else Not(f)
    if isinstance(f, Truth):
        return f if positive else negate(f)
    if isinstance(f, Not):
        return to_nnf(f.arg, not positive)
    if isinstance(f, And):
        parts = tuple(to_nnf(c, positive) for c in f.args)
        return conj(*parts) if positive else disj(*parts)
    if isinstance(f, Or):
        parts = tuple(to_nnf(c, positive) for c in f.args)
        return disj(*parts) if positive else conj(*parts)
    if isinstance(f, Implies):
        return to_nnf(disj(Not(f.lhs), f.rhs), positive)
    if isinstance(f, Iff):
        a, b = f.lhs, f.rhs
        if positive:
            return to_nnf(conj(disj(Not(a), b), disj(a, Not(b))))
        return to_nnf(conj(disj(a, b), disj(Not(a), Not(b))))
    if isinstance(f, Forall):
        return Forall(f.var, to_nnf(f.body)) if positive else Exists(f.var, to_nnf(f.body, False))
    if isinstance(f, Exists):
        return Exists(f.var, to_nnf(f.body)) if positive else Forall(f.var, to_nnf(f.body, False))
    raise TypeError(f"not a formula: {f!r}")


Literal = tuple[Atom, bool]
Clause = frozenset  # of Literal


@dataclass(frozen=True)
class ClauseSet:
    """A conjunction of clauses; each clause is a frozenset of (atom, polarity)."""

    clauses: tuple[Clause, ...]

    def atoms(self) -> list[Atom]:
        seen: dict[Atom, None] = {}
        for c in self.clauses:
            for a, _ in sorted(c, key=_lit_key):
                seen.setdefault(a, None)
        return list(seen)

    def to_formula(self) -> Formula:
        return conj(*(disj(*(a if pos else Not(a) for a, pos in sorted(c, key=_lit_key)))
                      for c in self.clauses))

    def as_lists(self) -> list[list[str]]:
        return [[str(a) if pos else f"~{a}" for a, pos in sorted(c, key=_lit_key)]
                for c in self.clauses]

    def __len__(self):
        return len(self.clauses)

    def __iter__(self):
        return iter(self.clauses)


def _lit_key(lit: Literal):
    return (to_text(lit[0]), lit[1])


def _is_tautology(clause) -> bool:
    return any((a, not pos) in clause for a, pos in clause)


def to_cnf(f: Formula, max_clauses: int | None = None) -> ClauseSet:
    """Clausal form of a ground formula by distribution (no auxiliary atoms).

    Raises ``CNFTooLarge`` when an intermediate clause list exceeds
    ``max_clauses``.
    """
    if has_quantifier(f) or free_vars(f):
        raise ValueError("to_cnf expects a ground, quantifier-free formula")
    clauses = _cnf(to_nnf(f), max_clauses)
    return ClauseSet(tuple(_remove_subsumed(clauses)))


def _cnf(f: Formula, cap) -> list[Clause]:
    if isinstance(f, Truth):
        return [] if f.value else [frozenset()]
    if isinstance(f, Atom):
        return [frozenset({(f, True)})]
    if isinstance(f, Not):
        return [frozenset({(f.arg, False)})]
    if isinstance(f, And):
        out: dict[Clause, None] = {}
        for c in f.args:
            for cl in _cnf(c, cap):
                out.setdefault(cl, None)
        return list(out)
    if isinstance(f, Or):
        acc: list[Clause] = [frozenset()]
        for c in f.args:
            sub = _cnf(c, cap)
            merged: dict[Clause, None] = {}
            for x in acc:
                for y in sub:
                    u = x | y
                    if not _is_tautology(u):
                        merged.setdefault(u, None)
            acc = list(merged)
            if cap is not None and len(acc) > cap:
                raise CNFTooLarge(f"CNF exceeds {cap} clauses")
            if not acc:
                return []
        return acc
    raise TypeError(f"unexpected node in NNF: {f!r}")


def _remove_subsumed(clauses: list[Clause]) -> list[Clause]:
    if len(clauses) > 2000:
        return clauses
    ordered = sorted(clauses, key=len)
    kept: list[Clause] = []
    for c in ordered:
        if not any(k <= c for k in kept):
            kept.append(c)
    keep = set(kept)
    return [c for c in clauses if c in keep]


def canonical(f: Formula) -> Formula:
    """Children of commutative operators sorted by their printed form."""
    if isinstance(f, (Atom, Truth)):
        return f
    if isinstance(f, (And, Or)):
        parts = sorted(_flatten(type(f), (canonical(c) for c in f.args)), key=to_text)
        return type(f)(tuple(parts)) if len(parts) > 1 else parts[0]
    if isinstance(f, Iff):
        a, b = sorted((canonical(f.lhs), canonical(f.rhs)), key=to_text)
        return Iff(a, b)
    return rebuild(f, tuple(canonical(c) for c in children(f)))


# -- simplification ------------------------------------------------------------

def _is_literal(f: Formula) -> bool:
    return isinstance(f, Atom) or (isinstance(f, Not) and isinstance(f.arg, Atom))


def _literal(f: Formula) -> tuple[Atom, bool]:
    return (f, True) if isinstance(f, Atom) else (f.arg, False)


def assume(f: Formula, assignment: Mapping[Atom, bool]) -> Formula:
    """Replace atoms by truth constants (no simplification)."""
    if not assignment:
        return f
    if isinstance(f, Atom):
        v = assignment.get(f)
        return f if v is None else (TRUE if v else FALSE)
    if isinstance(f, Truth):
        return f
    if isinstance(f, (Forall, Exists)):
        inner = {a: v for a, v in assignment.items() if f.var not in a.args}
        return type(f)(f.var, assume(f.body, inner))
    return rebuild(f, tuple(assume(c, assignment) for c in children(f)))


def simplify(f: Formula) -> Formula:
    """Model-preserving cleanup.

    Folds truth constants, removes duplicate and complementary children,
    applies absorption and propagates unit literals into sibling subformulas.
    """
    if isinstance(f, (Atom, Truth)):
        return f
    if isinstance(f, Not):
        return negate(simplify(f.arg))
    if isinstance(f, Implies):
        a, b = simplify(f.lhs), simplify(f.rhs)
        if isinstance(a, Truth):
            return b if a.value else TRUE
        if isinstance(b, Truth):
            return TRUE if b.value else negate(a)
        if a == b:
            return TRUE
        if _is_literal(a):
            lit = _literal(a)
            b = simplify(assume(b, {lit[0]: lit[1]}))
            if isinstance(b, Truth):
                return TRUE if b.value else negate(a)
        if _is_literal(b):
            lit = _literal(b)
            a = simplify(assume(a, {lit[0]: not lit[1]}))
            if isinstance(a, Truth):
                return b if a.value else TRUE
        return Implies(a, b)
    if isinstance(f, Iff):
        a, b = simplify(f.lhs), simplify(f.rhs)
        if isinstance(a, Truth):
            return b if a.value else negate(b)
        if isinstance(b, Truth):
            return a if b.value else negate(a)
        if a == b:
            return TRUE
        if negate(a) == b or negate(b) == a:
            return FALSE
        return Iff(a, b)
    if isinstance(f, (Forall, Exists)):
        body = simplify(f.body)
        if isinstance(body, Truth) or f.var not in free_vars(body):
            return body
        return type(f)(f.var, body)
    if isinstance(f, And):
        return _simplify_junction(f.args, is_and=True)
    if isinstance(f, Or):
        return _simplify_junction(f.args, is_and=False)
    raise TypeError(f"not a formula: {f!r}")


def _simplify_junction(args, is_and: bool, depth: int = 0) -> Formula:
    kind = And if is_and else Or
    absorbing, neutral = (FALSE, TRUE) if is_and else (TRUE, FALSE)
    build = conj if is_and else disj
    parts = []
    for c in args:
        s = simplify(c)
        if s == absorbing:
            return absorbing
        if s == neutral:
            continue
        parts.append(s)
    parts = list(_flatten(kind, parts))
    present = set(parts)
    if any(negate(p) in present for p in parts):
        return absorbing
    # absorption: a & (a | b) -> a, a | (a & b) -> a
    dual = Or if is_and else And
    parts = [p for p in parts
             if not (isinstance(p, dual) and any(q in present for q in p.args if q is not p))]
    # unit propagation into non-literal siblings
    units = {}
    for p in parts:
        if _is_literal(p):
            a, pos = _literal(p)
            units[a] = pos if is_and else not pos
    if units and depth < 8:
        changed = False
        new_parts = []
        for p in parts:
            if _is_literal(p):
                new_parts.append(p)
                continue
            q = simplify(assume(p, units))
            changed |= q != p
            new_parts.append(q)
        if changed:
            return _simplify_junction(new_parts, is_and, depth + 1)
    return build(*parts)


# -- printing ------------------------------------------------------------------

_PREC = {Iff: 1, Implies: 2, Or: 3, And: 4, Not: 5}


def _prec(f: Formula) -> int:
    if isinstance(f, (Forall, Exists)):
        return 0
    return _PREC.get(type(f), 6)


def to_text(f: Formula) -> str:
    if isinstance(f, Atom):
        if not f.args:
            return f.pred
        return f"{f.pred}({','.join(a.name for a in f.args)})"
    if isinstance(f, Truth):
        return "true" if f.value else "false"
    if isinstance(f, Not):
        return "~" + _wrap(f.arg, 5)
    if isinstance(f, And):
        return " & ".join(_wrap(c, 5) for c in f.args)
    if isinstance(f, Or):
        return " | ".join(_wrap(c, 4) for c in f.args)
    if isinstance(f, Implies):
        return f"{_wrap(f.lhs, 3)} => {_wrap(f.rhs, 2)}"
    if isinstance(f, Iff):
        return f"{_wrap(f.lhs, 2)} <=> {_wrap(f.rhs, 2)}"
    if isinstance(f, (Forall, Exists)):
        word = "forall" if isinstance(f, Forall) else "exists"
        return f"{word} {f.var.name} . {to_text(f.body)}"
    raise TypeError(f"not a formula: {f!r}")


def _wrap(f: Formula, min_prec: int) -> str:
    text = to_text(f)
    return text if _prec(f) >= min_prec else f"({text})"


def iter_subformulas(f: Formula) -> Iterator[Formula]:
    yield f
    for c in children(f):
        yield from iter_subformulas(c)
