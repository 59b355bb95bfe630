"""Ground fluents, states and brute-force semantics on a finite universe.

A state is an integer bitmask over the universe's ground fluent atoms (bit ``i``
is the truth value of ``universe.atoms[i]``). Ground atoms of a declared fluent
whose arguments fall outside the fluent's argument domains are not part of the
language; they evaluate to false everywhere.
"""
from __future__ import annotations

import itertools
import os
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import UndeclaredSymbol, UniverseTooLarge
from .fol import (FALSE, TRUE, And, Atom, Const, Exists, Forall, Formula, Iff, Implies, Not, Or,
                  Truth, atoms, conj, disj, free_vars, ground, replace_atoms, simplify)

DEFAULT_CAP = 2 ** 22


def enumeration_cap() -> int:
    """Maximum number of states that may be enumerated (``LOGIPARTICLE_CAP`` overrides)."""
    raw = os.environ.get("LOGIPARTICLE_CAP")
    if raw:
        return int(float(raw))
    return DEFAULT_CAP


class Universe:
    """The finite set of ground fluent atoms of a language."""

    def __init__(self, fluents: Sequence[tuple[str, Sequence[Sequence[str]]]],
                 constants: Sequence[str], cap: int | None = None):
        self.constants: tuple[str, ...] = tuple(constants)
        self.arity = {name: len(domains) for name, domains in fluents}
        grounded = []
        for name, domains in fluents:
            for args in itertools.product(*domains):
                grounded.append(Atom(name, tuple(Const(a) for a in args)))
        self.atoms: tuple[Atom, ...] = tuple(grounded)
        self.index: dict[Atom, int] = {a: i for i, a in enumerate(self.atoms)}
        self.n = len(self.atoms)
        self.cap = enumeration_cap() if cap is None else cap

    def __repr__(self):
        return f"Universe({self.n} ground fluents, {len(self.constants)} constants)"

    @property
    def num_states(self) -> int:
        return 1 << self.n

    def check_cap(self):
        if self.num_states > self.cap:
            raise UniverseTooLarge(
                f"{self.num_states} states exceed the enumeration cap of {self.cap}")

    def check_symbols(self, f: Formula):
        for a in atoms(f):
            if a.pred not in self.arity:
                raise UndeclaredSymbol(f"unknown fluent {a.pred!r}")
            if len(a.args) != self.arity[a.pred]:
                raise UndeclaredSymbol(
                    f"fluent {a.pred} expects {self.arity[a.pred]} arguments, got {len(a.args)}")
            for t in a.args:
                if isinstance(t, Const) and t.name not in self.constants:
                    raise UndeclaredSymbol(f"unknown constant {t.name!r}")

    def ground(self, f: Formula) -> Formula:
        """Ground quantifiers, fold out-of-language atoms to false, simplify."""
        g = ground(f, self.constants)
        g = replace_atoms(g, lambda a: a if a in self.index else FALSE)
        return simplify(g)

    # -- states ------------------------------------------------------------

    def state(self, bits: int) -> "State":
        return State(self, int(bits))

    def state_from(self, true_atoms: Iterable[Atom]) -> "State":
        bits = 0
        for a in true_atoms:
            bits |= 1 << self.index[a]
        return State(self, bits)

    def states(self) -> Iterator["State"]:
        self.check_cap()
        for bits in range(self.num_states):
            yield State(self, bits)

    def random_state(self, rng: np.random.Generator) -> "State":
        return State(self, int(rng.integers(0, self.num_states)))

    # -- vectorized semantics ---------------------------------------------

    @cached_property
    def _columns(self) -> list[np.ndarray]:
        self.check_cap()
        idx = np.arange(self.num_states, dtype=np.int64)
        return [((idx >> i) & 1).astype(bool) for i in range(self.n)]

    def mask(self, f: Formula) -> np.ndarray:
        """Boolean vector over all states: entry ``s`` is true iff ``s |= f``."""
        if free_vars(f):
            raise ValueError(f"formula has free variables: {f}")
        g = self.ground(f)
        cols = self._columns
        return vector_eval(g, lambda a: cols[self.index[a]], self.num_states)

    def sample_columns(self, bits: Sequence[int]) -> list[np.ndarray]:
        """Per-atom value vectors over the given states."""
        if self.n <= 62:
            arr = np.asarray(bits, dtype=np.int64)
            return [((arr >> i) & 1).astype(bool) for i in range(self.n)]
        return [np.array([(b >> i) & 1 for b in bits], dtype=bool) for i in range(self.n)]

    def sample_mask(self, f: Formula, cols: list[np.ndarray]) -> np.ndarray:
        """Like ``mask`` but over the states behind ``sample_columns`` (no enumeration cap)."""
        g = self.ground(f)
        return vector_eval(g, lambda a: cols[self.index[a]], len(cols[0]) if cols else 0)

    def models(self, f: Formula) -> frozenset["State"]:
        m = self.mask(f)
        return frozenset(State(self, int(b)) for b in np.flatnonzero(m))

    def describe(self, bits: int) -> Formula:
        """The complete conjunction of literals describing one state."""
        return conj(*(a if (bits >> i) & 1 else Not(a) for i, a in enumerate(self.atoms)))

    def formula_of_mask(self, mask: np.ndarray) -> Formula:
        """A formula whose models are exactly the states flagged in ``mask``."""
        picked = np.flatnonzero(mask)
        if len(picked) == 0:
            return FALSE
        if len(picked) == self.num_states:
            return TRUE
        return simplify(disj(*(self.describe(int(b)) for b in picked)))


@dataclass(frozen=True)
class State:
    universe: Universe = field(compare=False, repr=False)
    bits: int

    def __getitem__(self, a: Atom) -> bool:
        i = self.universe.index.get(a)
        if i is None:
            return False
        return bool((self.bits >> i) & 1)

    def assignment(self) -> dict[Atom, bool]:
        return {a: bool((self.bits >> i) & 1) for i, a in enumerate(self.universe.atoms)}

    def true_atoms(self) -> list[Atom]:
        return [a for i, a in enumerate(self.universe.atoms) if (self.bits >> i) & 1]

    def with_values(self, values: Mapping[Atom, bool]) -> "State":
        bits = self.bits
        for a, v in values.items():
            i = self.universe.index[a]
            bits = bits | (1 << i) if v else bits & ~(1 << i)
        return State(self.universe, bits)

    def __str__(self):
        return "{" + ", ".join(str(a) for a in self.true_atoms()) + "}"


def evaluate(s: State, f: Formula) -> bool:
    """Truth of a closed formula in a state; quantifiers are grounded first."""
    return _eval(s, _grounded(f, s.universe.constants))


@lru_cache(maxsize=1 << 16)
def _grounded(f: Formula, constants: tuple[str, ...]) -> Formula:
    if free_vars(f):
        raise ValueError(f"formula has free variables: {f}")
    return ground(f, constants)


def _eval(s: State, f: Formula) -> bool:
    if isinstance(f, Atom):
        return s[f]
    if isinstance(f, Truth):
        return f.value
    if isinstance(f, Not):
        return not _eval(s, f.arg)
    if isinstance(f, And):
        return all(_eval(s, c) for c in f.args)
    if isinstance(f, Or):
        return any(_eval(s, c) for c in f.args)
    if isinstance(f, Implies):
        return (not _eval(s, f.lhs)) or _eval(s, f.rhs)
    if isinstance(f, Iff):
        return _eval(s, f.lhs) == _eval(s, f.rhs)
    raise TypeError(f"unexpected node after grounding: {f!r}")


def models(f: Formula, universe: Universe) -> frozenset[State]:
    """All states of ``universe`` satisfying ``f`` (refuses above the cap)."""
    return universe.models(f)


def vector_eval(f: Formula, column, length: int) -> np.ndarray:
    """Evaluate a ground quantifier-free formula over many assignments at once.

    ``column(atom)`` returns the boolean vector of that atom's values.
    """
    if isinstance(f, Atom):
        return column(f)
    if isinstance(f, Truth):
        return np.full(length, f.value, dtype=bool)
    if isinstance(f, Not):
        return ~vector_eval(f.arg, column, length)
    if isinstance(f, And):
        out = vector_eval(f.args[0], column, length).copy()
        for c in f.args[1:]:
            out &= vector_eval(c, column, length)
        return out
    if isinstance(f, Or):
        out = vector_eval(f.args[0], column, length).copy()
        for c in f.args[1:]:
            out |= vector_eval(c, column, length)
        return out
    if isinstance(f, Implies):
        return ~vector_eval(f.lhs, column, length) | vector_eval(f.rhs, column, length)
    if isinstance(f, Iff):
        return vector_eval(f.lhs, column, length) == vector_eval(f.rhs, column, length)
    if isinstance(f, (Forall, Exists)):
        raise TypeError("ground the formula before vector evaluation")
    raise TypeError(f"not a formula: {f!r}")


def truth_table(f: Formula, scope: Sequence[Atom]) -> np.ndarray:
    """Truth values of ``f`` as an array of shape ``(2,) * len(scope)``.

    Axis ``j`` indexes the value of ``scope[j]``. Atoms outside ``scope`` must
    not occur in ``f``.
    """
    k = len(scope)
    idx = np.arange(1 << k, dtype=np.int64)
    pos = {a: j for j, a in enumerate(scope)}
    values = vector_eval(f, lambda a: ((idx >> (k - 1 - pos[a])) & 1).astype(bool), 1 << k)
    return values.reshape((2,) * k) if k else values.reshape(())
