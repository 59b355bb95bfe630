"""PRAM data model, domain-file reader/writer and static validation."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
from lark import Token, Tree

from .errors import (ArityMismatch, DomainSyntaxError, NoPartition, MultiplePartitions,
                     NormalizationError, UndeclaredSymbol, ValidationFailed)
from .fol import (TRUE, Atom, Const, Formula, Term, Var, all_vars, atoms, disj, free_vars, negate,
                  simplify, substitute_terms, to_text)
from .syntax import FormulaBuilder, parse_atom, parse_domain_tree
from .universe import State, Universe, evaluate

PROB_TOL = 1e-9


# -- data model ----------------------------------------------------------------

@dataclass(frozen=True)
class FluentDecl:
    name: str
    arity: int
    sorts: tuple[str, ...] | None = None


@dataclass(frozen=True)
class Language:
    constants: tuple[str, ...]
    fluents: tuple[FluentDecl, ...]
    sorts: tuple[tuple[str, tuple[str, ...]], ...] = ()
    variables: tuple[str, ...] = ()
    prob_action_names: tuple[str, ...] = ()
    det_action_names: tuple[str, ...] = ()

    def domains(self, fluent: FluentDecl) -> list[tuple[str, ...]]:
        if fluent.sorts is None:
            return [self.constants] * fluent.arity
        table = dict(self.sorts)
        return [table[s] for s in fluent.sorts]

    def fluent(self, name: str) -> FluentDecl:
        for f in self.fluents:
            if f.name == name:
                return f
        raise KeyError(name)


@dataclass(frozen=True)
class SuccessorAxiom:
    """``head`` holds after the action iff ``formula`` held before it.

    Heads are patterns over the action's parameters, fresh variables and
    constants; the first head matching a ground fluent defines its successor.
    """
    head: Atom
    formula: Formula


@dataclass(frozen=True)
class DetActionSchema:
    name: str
    params: tuple[Var, ...]
    precondition: Formula = TRUE
    successors: tuple[SuccessorAxiom, ...] = ()


@dataclass(frozen=True)
class Outcome:
    action: str
    args: tuple[Term, ...]
    prob: float


@dataclass(frozen=True)
class Partition:
    guard: Formula | None  # None marks the trailing ``otherwise`` partition
    outcomes: tuple[Outcome, ...]


@dataclass(frozen=True)
class ProbActionSchema:
    name: str
    params: tuple[Var, ...]
    partitions: tuple[Partition, ...]

    def guards(self) -> list[Formula]:
        """Partition guards with ``otherwise`` expanded to the negated disjunction."""
        out = []
        for p in self.partitions:
            if p.guard is None:
                out.append(simplify(negate(disj(*out))) if out else TRUE)
            else:
                out.append(p.guard)
        return out


@dataclass(frozen=True)
class MLNPrior:
    formulas: tuple[tuple[Formula, float], ...] = ()


@dataclass(frozen=True, order=True)
class GroundAction:
    name: str
    args: tuple[str, ...] = ()

    def __str__(self):
        return f"{self.name}({','.join(self.args)})"

    @classmethod
    def parse(cls, text: str):
        a = parse_atom(text.strip())
        if any(isinstance(t, Var) for t in a.args):
            raise DomainSyntaxError(f"action reference must be ground: {text}")
        return cls(a.pred, tuple(t.name for t in a.args))


class GroundDetAction(GroundAction):
    pass


class GroundProbAction(GroundAction):
    pass


@dataclass(frozen=True)
class PRAM:
    language: Language
    det_actions: tuple[DetActionSchema, ...]
    prob_actions: tuple[ProbActionSchema, ...]
    prior: MLNPrior = MLNPrior()

    @cached_property
    def universe(self) -> Universe:
        lang = self.language
        return Universe([(f.name, lang.domains(f)) for f in lang.fluents], lang.constants)

    @cached_property
    def memo(self) -> dict:
        """Per-model cache shared by the inference routines (not part of equality)."""
        return {}

    def det_schema(self, name: str) -> DetActionSchema:
        for d in self.det_actions:
            if d.name == name:
                return d
        raise UndeclaredSymbol(f"unknown deterministic action {name!r}")

    def prob_schema(self, name: str) -> ProbActionSchema:
        for p in self.prob_actions:
            if p.name == name:
                return p
        raise UndeclaredSymbol(f"unknown probabilistic action {name!r}")

    def det_action(self, text: str) -> GroundDetAction:
        a = GroundDetAction.parse(text)
        self._check_ground(a, self.det_schema(a.name).params)
        return a

    def prob_action(self, text: str) -> GroundProbAction:
        a = GroundProbAction.parse(text)
        self._check_ground(a, self.prob_schema(a.name).params)
        return a

    def _check_ground(self, a: GroundAction, params):
        if len(a.args) != len(params):
            raise ArityMismatch(f"{a.name} expects {len(params)} arguments, got {len(a.args)}")
        for c in a.args:
            if c not in self.language.constants:
                raise UndeclaredSymbol(f"unknown constant {c!r} in {a}")

    def ground_prob_actions(self) -> list[GroundProbAction]:
        out = []
        for p in self.prob_actions:
            for args in itertools.product(self.language.constants, repeat=len(p.params)):
                out.append(GroundProbAction(p.name, args))
        return out

    def ground_det_actions(self) -> list[GroundDetAction]:
        out = []
        for d in self.det_actions:
            for args in itertools.product(self.language.constants, repeat=len(d.params)):
                out.append(GroundDetAction(d.name, args))
        return out

    def check_formula(self, f: Formula):
        """Reject formulas mentioning undeclared fluents or constants."""
        self.universe.check_symbols(f)


def binding(params: Sequence[Var], args: Sequence[str]) -> dict[Var, Const]:
    return {p: Const(c) for p, c in zip(params, args)}


def partition_guards(pram: PRAM, a: GroundProbAction) -> list[Formula]:
    """Guards of a ground probabilistic action, parameters bound to constants."""
    key = ("guards", a)
    memo = pram.memo
    if key not in memo:
        schema = pram.prob_schema(a.name)
        b = binding(schema.params, a.args)
        memo[key] = [substitute_terms(g, b) for g in schema.guards()]
    return memo[key]


def partition_dists(pram: PRAM, a: GroundProbAction) -> list[dict[GroundDetAction, float]]:
    """Per-partition distributions over ground deterministic executions."""
    key = ("dists", a)
    memo = pram.memo
    if key not in memo:
        schema = pram.prob_schema(a.name)
        b = binding(schema.params, a.args)
        dists = []
        for part in schema.partitions:
            d: dict[GroundDetAction, float] = {}
            for o in part.outcomes:
                args = tuple(b[t].name if isinstance(t, Var) else t.name for t in o.args)
                da = GroundDetAction(o.action, args)
                d[da] = d.get(da, 0.0) + o.prob
            dists.append(d)
        memo[key] = dists
    return memo[key]


def select_partition(pram: PRAM, a: GroundProbAction, s: State) -> tuple[int, dict[GroundDetAction, float]]:
    """The unique partition of ``a`` whose guard holds in ``s``, with its distribution."""
    hits = [i for i, g in enumerate(partition_guards(pram, a)) if evaluate(s, g)]
    if not hits:
        raise NoPartition(f"no partition of {a} holds in state {s}")
    if len(hits) > 1:
        raise MultiplePartitions(f"partitions {hits} of {a} all hold in state {s}")
    i = hits[0]
    return i, dict(partition_dists(pram, a)[i])


# -- reading -------------------------------------------------------------------

def load_domain(path: str | Path) -> PRAM:
    return parse_domain(Path(path).read_text(encoding="utf-8"))


def parse_domain(text: str) -> PRAM:
    if not text.strip() or all(not ln.strip() or ln.lstrip().startswith("#")
                               for ln in text.splitlines()):
        raise DomainSyntaxError("empty domain file", 1, 1)
    tree = parse_domain_tree(text)
    return _DomainReader().read(tree)


def _pos(node):
    if isinstance(node, Token):
        return node.line, node.column
    meta = getattr(node, "meta", None)
    if meta is not None and not meta.empty:
        return meta.line, meta.column
    return None, None


class _DomainReader:
    def __init__(self):
        self.fb = FormulaBuilder()

    def fail(self, cls, msg, node):
        line, col = _pos(node)
        raise cls(msg, line, col)

    def read(self, tree: Tree) -> PRAM:
        langs = [s for s in tree.children if s.data == "language"]
        if len(langs) != 1:
            self.fail(DomainSyntaxError, "expected exactly one language section",
                      langs[1] if langs else tree)
        self.read_language(langs[0])
        dets, probs, priors = [], [], []
        for sec in tree.children:
            if sec.data == "det_action":
                dets.append(sec)
            elif sec.data == "prob_action":
                probs.append(sec)
            elif sec.data == "prior":
                priors.append(sec)
        self.det_arity = {}
        for d in dets:
            name = str(d.children[0])
            if name in self.det_arity:
                self.fail(DomainSyntaxError, f"duplicate det-action {name}", d)
            self.det_arity[name] = len(self.params(d.children[1]))
        det_actions = tuple(self.read_det(d) for d in dets)
        prob_actions = tuple(self.read_prob(p) for p in probs)
        self.check_names(det_actions, prob_actions, tree)
        weighted = []
        for p in priors:
            for w in p.children:
                weighted.append((self.formula(w.children[1], None), float(w.children[0])))
        lang = Language(
            constants=self.constants, fluents=self.fluents, sorts=self.sorts,
            variables=self.variables or self.used_vars(),
            prob_action_names=tuple(p.name for p in prob_actions),
            det_action_names=tuple(d.name for d in det_actions))
        return PRAM(lang, det_actions, prob_actions, MLNPrior(tuple(weighted)))

    # language section

    def read_language(self, node):
        self.constants: tuple[str, ...] = ()
        self.sorts: tuple = ()
        self.fluents: tuple[FluentDecl, ...] = ()
        self.variables: tuple[str, ...] = ()
        self.declared_prob = self.declared_det = None
        self.seen_vars: dict[str, None] = {}
        consts, sorts, fluents = [], {}, []
        for st in node.children:
            kind = st.data
            if kind == "constants_decl":
                for tok in st.children[0].children:
                    if str(tok) in consts:
                        self.fail(DomainSyntaxError, f"duplicate constant {tok}", tok)
                    consts.append(str(tok))
            elif kind == "sort_decl":
                name, members = st.children
                sorts[str(name)] = (tuple(str(t) for t in members.children), members)
            elif kind == "fluent_decl":
                name, arity = str(st.children[0]), int(st.children[1])
                srt = None
                if len(st.children) > 2:
                    srt = tuple(str(t) for t in st.children[2].children)
                    if len(srt) != arity:
                        self.fail(ArityMismatch,
                                  f"fluent {name}/{arity} lists {len(srt)} argument sorts", st)
                if any(f.name == name for f, _ in fluents):
                    self.fail(DomainSyntaxError, f"duplicate fluent {name}", st)
                fluents.append((FluentDecl(name, arity, srt), st))
            elif kind == "variables_decl":
                self.variables = tuple(str(t) for t in st.children[0].children)
            elif kind == "prob_names":
                self.declared_prob = (tuple(str(t) for t in st.children[0].children), st)
            elif kind == "det_names":
                self.declared_det = (tuple(str(t) for t in st.children[0].children), st)
        for name, (members, where) in sorts.items():
            for m in members:
                if m not in consts:
                    self.fail(UndeclaredSymbol, f"sort {name} mentions unknown constant {m}", where)
        for f, where in fluents:
            for s in f.sorts or ():
                if s not in sorts:
                    self.fail(UndeclaredSymbol, f"fluent {f.name} uses unknown sort {s}", where)
        clash = set(consts) & ({f.name for f, _ in fluents} | set(sorts))
        if clash:
            self.fail(DomainSyntaxError, f"names used twice: {sorted(clash)}", node)
        self.constants = tuple(consts)
        self.sorts = tuple((k, v[0]) for k, v in sorts.items())
        self.fluents = tuple(f for f, _ in fluents)
        self.arity = {f.name: f.arity for f in self.fluents}

    def check_names(self, dets, probs, tree):
        names = [d.name for d in dets] + [p.name for p in probs]
        dup = {n for n in names if names.count(n) > 1}
        dup |= set(names) & (set(self.arity) | set(self.constants))
        if dup:
            self.fail(DomainSyntaxError, f"action names clash: {sorted(dup)}", tree)
        for declared, actual, what in ((self.declared_prob, probs, "prob-actions"),
                                       (self.declared_det, dets, "det-actions")):
            if declared is not None and set(declared[0]) != {a.name for a in actual}:
                self.fail(UndeclaredSymbol, f"{what} list does not match the declared actions",
                          declared[1])

    def used_vars(self):
        return tuple(self.seen_vars)

    # formulas

    def formula(self, node, allowed: set[Var] | None) -> Formula:
        f = self.fb.transform(node)
        self.check_formula(f, node, allowed)
        return f

    def check_formula(self, f: Formula, node, allowed):
        for a in atoms(f):
            self.check_atom(a, node)
        for v in sorted(all_vars(f), key=lambda v: v.name):
            self.note_var(v, node)
        if allowed is not None:
            extra = free_vars(f) - allowed
            if extra:
                self.fail(UndeclaredSymbol,
                          f"free variables {sorted(v.name for v in extra)} are not parameters", node)

    def check_atom(self, a: Atom, node):
        if a.pred not in self.arity:
            self.fail(UndeclaredSymbol, f"unknown fluent {a.pred!r}", node)
        if len(a.args) != self.arity[a.pred]:
            self.fail(ArityMismatch,
                      f"fluent {a.pred} has arity {self.arity[a.pred]}, used with {len(a.args)}", node)
        for t in a.args:
            if isinstance(t, Const) and t.name not in self.constants:
                self.fail(UndeclaredSymbol, f"unknown constant {t.name!r}", node)

    def note_var(self, v: Var, node):
        if self.variables and v.name not in self.variables:
            self.fail(UndeclaredSymbol, f"undeclared variable {v.name}", node)
        self.seen_vars.setdefault(v.name, None)

    def params(self, node) -> tuple[Var, ...]:
        if not node.children:
            return ()
        vs = tuple(Var(str(t)) for t in node.children[0].children)
        if len(set(vs)) != len(vs):
            self.fail(DomainSyntaxError, "repeated parameter", node)
        for v in vs:
            self.note_var(v, node)
        return vs

    # actions

    def read_det(self, node) -> DetActionSchema:
        name = str(node.children[0])
        params = self.params(node.children[1])
        allowed = set(params)
        pre = TRUE
        succs = []
        seen_pre = False
        for st in node.children[2:]:
            if st.data == "precond":
                if seen_pre:
                    self.fail(DomainSyntaxError, f"{name}: more than one precond", st)
                seen_pre = True
                pre = self.formula(st.children[0], allowed)
            else:
                head = self.fb.transform(st.children[0])
                self.check_atom(head, st)
                head_vars = {t for t in head.args if isinstance(t, Var)}
                for v in head_vars:
                    self.note_var(v, st)
                body = self.formula(st.children[1], allowed | head_vars)
                succs.append(SuccessorAxiom(head, body))
        return DetActionSchema(name, params, pre, tuple(succs))

    def read_prob(self, node) -> ProbActionSchema:
        name = str(node.children[0])
        params = self.params(node.children[1])
        allowed = set(params)
        parts = []
        body = node.children[2:]
        for i, st in enumerate(body):
            if st.data == "when":
                guard = self.formula(st.children[0], allowed)
                outs = st.children[1:]
            else:
                if i != len(body) - 1:
                    self.fail(DomainSyntaxError, f"{name}: 'otherwise' must be the last partition", st)
                guard, outs = None, st.children
            parts.append(Partition(guard, tuple(self.outcome(o, allowed) for o in outs)))
        return ProbActionSchema(name, params, tuple(parts))

    def outcome(self, node, allowed) -> Outcome:
        ref = self.fb.transform(node.children[0])
        prob = float(node.children[1])
        if ref.pred not in self.det_arity:
            self.fail(UndeclaredSymbol, f"unknown deterministic action {ref.pred!r}", node)
        if len(ref.args) != self.det_arity[ref.pred]:
            self.fail(ArityMismatch, f"{ref.pred} expects {self.det_arity[ref.pred]} arguments, "
                      f"got {len(ref.args)}", node)
        for t in ref.args:
            if isinstance(t, Var) and t not in allowed:
                self.fail(UndeclaredSymbol, f"{t.name} is not a parameter", node)
            if isinstance(t, Const) and t.name not in self.constants:
                self.fail(UndeclaredSymbol, f"unknown constant {t.name!r}", node)
        return Outcome(ref.pred, ref.args, prob)


# -- writing -------------------------------------------------------------------

def _fmt_num(x: float) -> str:
    return repr(float(x))


def serialize(pram: PRAM) -> str:
    """Canonical domain-file text; ``parse_domain(serialize(p)) == p``."""
    lang = pram.language
    out = ["language {"]
    out.append(f"  constants {', '.join(lang.constants)};")
    for name, members in lang.sorts:
        out.append(f"  sort {name} = {', '.join(members)};")
    for f in lang.fluents:
        tail = f" : {', '.join(f.sorts)}" if f.sorts else ""
        out.append(f"  fluent {f.name}/{f.arity}{tail};")
    if lang.variables:
        out.append(f"  variables {', '.join(lang.variables)};")
    if lang.prob_action_names:
        out.append(f"  prob-actions {', '.join(lang.prob_action_names)};")
    if lang.det_action_names:
        out.append(f"  det-actions {', '.join(lang.det_action_names)};")
    out.append("}")
    for d in pram.det_actions:
        out.append("")
        out.append(f"det-action {d.name}({', '.join(p.name for p in d.params)}) {{")
        out.append(f"  precond: {to_text(d.precondition)};")
        for s in d.successors:
            out.append(f"  succ {to_text(s.head)}: {to_text(s.formula)};")
        out.append("}")
    for p in pram.prob_actions:
        out.append("")
        out.append(f"prob-action {p.name}({', '.join(v.name for v in p.params)}) {{")
        for part in p.partitions:
            outs = ", ".join(f"{o.action}({','.join(t.name for t in o.args)}) {_fmt_num(o.prob)}"
                             for o in part.outcomes)
            head = "otherwise" if part.guard is None else f"when {to_text(part.guard)}"
            out.append(f"  {head}: {outs};")
        out.append("}")
    if pram.prior.formulas:
        out.append("")
        out.append("prior {")
        for f, w in pram.prior.formulas:
            out.append(f"  {_fmt_num(w)}: {to_text(f)};")
        out.append("}")
    return "\n".join(out) + "\n"


# -- validation ----------------------------------------------------------------

@dataclass
class Violation:
    kind: str  # overlap | non-exhaustive | unnormalized | bad-probability | free-variable
    action: str
    message: str
    witness: str | None = None

    def __str__(self):
        tail = f" (witness state: {self.witness})" if self.witness is not None else ""
        return f"[{self.kind}] {self.action}: {self.message}{tail}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    partial: bool = False
    checked_groundings: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations

    def raise_if_failed(self):
        if self.ok:
            return
        first = self.violations[0]
        cls = NormalizationError if first.kind in ("unnormalized", "bad-probability") else ValidationFailed
        raise cls(str(first))

    def as_dict(self) -> dict:
        return {"ok": self.ok, "partial": self.partial,
                "checked_groundings": self.checked_groundings,
                "violations": [{"kind": v.kind, "action": v.action, "message": v.message,
                                "witness": v.witness} for v in self.violations],
                "warnings": list(self.warnings)}

    def summary(self) -> str:
        lines = [f"{'PASS' if self.ok else 'FAIL'}: {len(self.violations)} violation(s), "
                 f"{self.checked_groundings} ground probabilistic actions checked"
                 + (" (partial: guards checked on sampled states)" if self.partial else "")]
        lines += [f"  {v}" for v in self.violations]
        lines += [f"  warning: {w}" for w in self.warnings]
        return "\n".join(lines)


def validate(pram: PRAM, enumeration_cap: int | None = None, samples: int = 4096,
             seed: int = 0) -> ValidationReport:
    """Check partitions, distributions and successor-axiom coverage.

    Guards are checked for pairwise disjointness and joint exhaustiveness on
    every grounding of the action parameters. When the state space exceeds
    ``enumeration_cap`` only ``samples`` random states are checked and the
    report is marked partial.
    """
    report = ValidationReport()
    uni = pram.universe
    cap = uni.cap if enumeration_cap is None else enumeration_cap

    for p in pram.prob_actions:
        for i, part in enumerate(p.partitions):
            total = sum(o.prob for o in part.outcomes)
            if any(not (o.prob > 0) or not math.isfinite(o.prob) for o in part.outcomes):
                report.violations.append(Violation(
                    "bad-probability", p.name, f"partition {i + 1} has a non-positive probability"))
            if abs(total - 1.0) > PROB_TOL:
                report.violations.append(Violation(
                    "unnormalized", p.name, f"partition {i + 1} sums to {total:.12g}"))

    referenced = {o.action for p in pram.prob_actions for part in p.partitions for o in part.outcomes}
    for d in pram.det_actions:
        if d.name not in referenced:
            report.warnings.append(f"det-action {d.name} is never referenced by a prob-action")
        names = {s.head.pred for s in d.successors}
        for n in names - set(uni.arity):
            report.violations.append(Violation("free-variable", d.name, f"successor for unknown fluent {n}"))

    exhaustive = uni.num_states <= cap
    if not exhaustive:
        report.partial = True
        rng = np.random.default_rng(seed)
        sample_states = [uni.random_state(rng) for _ in range(samples)]
        sample_cols = uni.sample_columns([st.bits for st in sample_states])

    reported: dict[tuple[str, str], Violation] = {}
    extra: dict[tuple[str, str], int] = {}

    def record(a: GroundProbAction, v: Violation):
        key = (a.name, v.kind)
        if key in reported:
            extra[key] = extra.get(key, 0) + 1
        else:
            reported[key] = v
            report.violations.append(v)

    for a in pram.ground_prob_actions():
        report.checked_groundings += 1
        guards = partition_guards(pram, a)
        if exhaustive:
            masks = [uni.mask(g) for g in guards]
        else:
            masks = [uni.sample_mask(g, sample_cols) for g in guards]
        count = np.sum(masks, axis=0)

        def witness(idx):
            bits = int(idx) if exhaustive else sample_states[int(idx)].bits
            return str(uni.state(bits))

        over = np.flatnonzero(count > 1)
        if len(over):
            hit = [j + 1 for j, m in enumerate(masks) if m[over[0]]]
            record(a, Violation("overlap", str(a), f"partitions {hit} overlap", witness(over[0])))
        gap = np.flatnonzero(count == 0)
        if len(gap):
            record(a, Violation("non-exhaustive", str(a), "no partition covers some state",
                                witness(gap[0])))
    for key, n in extra.items():
        reported[key].message += f" (and {n} more grounding(s))"
    return report
