"""Text syntax for formulas and domain files.

Formula grammar, loosest to tightest binding::

    forall ?v . F      exists ?v . F      (body extends as far right as possible)
    F <=> F            F => F (right associative)
    F | F              F & F              ~F
    Pred(arg, ...)     true     false     ( F )

Variables start with ``?``; everything else in argument position is a constant.
"""
from __future__ import annotations

from functools import lru_cache

from lark import Lark, Token, Transformer, v_args
from lark.exceptions import LarkError, UnexpectedCharacters, UnexpectedEOF, UnexpectedInput

from .errors import DomainSyntaxError
from .fol import (FALSE, TRUE, Atom, Const, Exists, Forall, Formula, Iff, Implies, Not, Var,
                  conj, disj)

GRAMMAR = r"""
start_formula: formula
start_atom: atom
domain: section+

?formula: iff
?iff: imp | imp "<=>" imp -> iff
?imp: disj | disj "=>" imp -> implies
?disj: conjn | disj "|" conjn -> or_
?conjn: unary | conjn "&" unary -> and_
?unary: "~" unary -> not_ | primary
?primary: atom | "true" -> true | "false" -> false | "(" formula ")" | quant
quant: QUANT VAR+ "." formula
atom: NAME ("(" [term ("," term)*] ")")?
?term: VAR | NAME

?section: language | det_action | prob_action | prior
language: "language" "{" lang_stmt* "}"
?lang_stmt: constants_decl | sort_decl | fluent_decl | variables_decl | prob_names | det_names
constants_decl: "constants" name_list ";"
sort_decl: "sort" NAME "=" name_list ";"
fluent_decl: "fluent" NAME "/" INT [":" name_list] ";"
variables_decl: "variables" var_list ";"
prob_names: "prob-actions" name_list ";"
det_names: "det-actions" name_list ";"
name_list: NAME ("," NAME)*
var_list: VAR ("," VAR)*
params: "(" [var_list] ")"

det_action: "det-action" NAME params "{" det_stmt* "}"
?det_stmt: precond | succ
precond: "precond" ":" formula ";"
succ: "succ" atom ":" formula ";"

prob_action: "prob-action" NAME params "{" partition+ "}"
partition: "when" formula ":" outcome ("," outcome)* ";" -> when
         | "otherwise" ":" outcome ("," outcome)* ";" -> otherwise
outcome: atom NUMBER

prior: "prior" "{" weighted* "}"
weighted: SIGNED_NUMBER ":" formula ";"

QUANT.2: "forall" | "exists"
VAR: /\?[A-Za-z_][A-Za-z0-9_]*/
NAME: /[A-Za-z_][A-Za-z0-9_]*/
INT: /[0-9]+/
NUMBER: /[0-9]+(\.[0-9]*)?([eE][-+]?[0-9]+)?|\.[0-9]+([eE][-+]?[0-9]+)?/
SIGNED_NUMBER: /[-+]?([0-9]+(\.[0-9]*)?|\.[0-9]+)([eE][-+]?[0-9]+)?/
COMMENT: /#[^\n]*/
%ignore COMMENT
%ignore /\s+/
"""


@lru_cache(maxsize=None)
def _parser() -> Lark:
    return Lark(GRAMMAR, parser="lalr", start=["start_formula", "start_atom", "domain"],
                propagate_positions=True, maybe_placeholders=False)


def _term(tok: Token):
    return Var(str(tok)) if tok.type == "VAR" else Const(str(tok))


@v_args(inline=True)
class FormulaBuilder(Transformer):
    def start_formula(self, f):
        return f

    def start_atom(self, a):
        return a

    def atom(self, name, *args):
        return Atom(str(name), tuple(_term(a) for a in args))

    def true(self):
        return TRUE

    def false(self):
        return FALSE

    def not_(self, f):
        return Not(f)

    def and_(self, a, b):
        return conj(a, b)

    def or_(self, a, b):
        return disj(a, b)

    def implies(self, a, b):
        return Implies(a, b)

    def iff(self, a, b):
        return Iff(a, b)

    def quant(self, kind, *rest):
        *variables, body = rest
        cls = Forall if str(kind) == "forall" else Exists
        for v in reversed(variables):
            body = cls(Var(str(v)), body)
        return body


def _raise(err: LarkError, text: str):
    if isinstance(err, UnexpectedEOF) or (isinstance(err, UnexpectedInput) and not text.strip()):
        lines = text.splitlines() or [""]
        raise DomainSyntaxError("unexpected end of input", len(lines), len(lines[-1]) + 1) from None
    if isinstance(err, UnexpectedCharacters):
        raise DomainSyntaxError(f"unexpected character {err.char!r}", err.line, err.column) from None
    if isinstance(err, UnexpectedInput):
        tok = getattr(err, "token", None)
        what = f"unexpected token {str(tok)!r}" if tok is not None else "unexpected input"
        raise DomainSyntaxError(what, err.line, err.column) from None
    raise DomainSyntaxError(str(err)) from None


def parse_formula(text: str) -> Formula:
    try:
        tree = _parser().parse(text, start="start_formula")
    except LarkError as err:
        _raise(err, text)
    return FormulaBuilder().transform(tree)


def parse_atom(text: str) -> Atom:
    """Parse ``Name(arg, ...)``; used for ground action references."""
    try:
        tree = _parser().parse(text, start="start_atom")
    except LarkError as err:
        _raise(err, text)
    return FormulaBuilder().transform(tree)


def parse_domain_tree(text: str):
    try:
        return _parser().parse(text, start="domain")
    except LarkError as err:
        _raise(err, text)
