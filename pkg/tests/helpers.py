"""Random formulas and random micro-domains for property tests."""
from __future__ import annotations

import random

DATA = __import__("pathlib").Path(__file__).resolve().parents[1] / "src" / "logiparticle" / "data"


def rand_atom(rng: random.Random, terms: list[str]) -> str:
    kind = rng.randrange(3)
    if kind == 0:
        return f"P({rng.choice(terms)})"
    if kind == 1:
        return f"Q({rng.choice(terms)})"
    return f"S({rng.choice(['A'] + [t for t in terms if t.startswith('?')])},{rng.choice(terms)})"


def rand_formula(rng: random.Random, terms: list[str], depth: int = 3, quant: bool = True) -> str:
    if depth <= 0 or rng.random() < 0.25:
        r = rng.random()
        if r < 0.05:
            return rng.choice(["true", "false"])
        return rand_atom(rng, terms)
    op = rng.choice(["not", "and", "or", "imp", "iff", "quant"] if quant else
                    ["not", "and", "or", "imp", "iff"])
    if op == "not":
        return f"~({rand_formula(rng, terms, depth - 1, quant)})"
    if op == "quant":
        v = f"?z{depth}"
        kind = rng.choice(["forall", "exists"])
        return f"({kind} {v} . {rand_formula(rng, terms + [v], depth - 1, quant)})"
    sym = {"and": "&", "or": "|", "imp": "=>", "iff": "<=>"}[op]
    return (f"({rand_formula(rng, terms, depth - 1, quant)}) {sym} "
            f"({rand_formula(rng, terms, depth - 1, quant)})")


def closed_formula(rng: random.Random, depth: int = 3) -> str:
    return rand_formula(rng, ["A", "B"], depth)


def micro_domain_text(seed: int) -> str:
    """A random, valid domain over 6 ground fluents (64 states)."""
    rng = random.Random(seed)
    x = ["?x", "A", "B"]
    lines = [
        "language {",
        "  constants A, B;",
        "  sort one = A;",
        "  sort two = A, B;",
        "  fluent P/1;",
        "  fluent Q/1;",
        "  fluent S/2 : one, two;",
        "}",
    ]
    for name in ("Da", "Db", "Dc"):
        lines.append(f"det-action {name}(?x) {{")
        if rng.random() < 0.6:
            lines.append(f"  precond: {rand_formula(rng, x, 2)};")
        heads = rng.sample(["P(?x)", "Q(?x)", "P(?y)", "Q(A)", "S(A,?x)", "S(?u,?v)"],
                           rng.randint(1, 3))
        for h in heads:
            hv = [t for t in ("?x", "?y", "?u", "?v") if t in h]
            lines.append(f"  succ {h}: {rand_formula(rng, ['A', 'B'] + hv + ['?x'], 2)};")
        lines.append("}")
    lines.append("det-action Noop() {\n  precond: true;\n}")
    for name in ("Pa", "Pb"):
        p = round(rng.uniform(0.1, 0.9), 3)
        d1, d2, d3 = rng.sample(["Da(?x)", "Db(?x)", "Dc(?x)", "Noop()"], 3)
        guard = rand_formula(rng, x, 2, quant=False)
        lines.append(f"prob-action {name}(?x) {{")
        lines.append(f"  when {guard}: {d1} {p!r}, {d2} {round(1 - p, 3)!r};")
        lines.append(f"  otherwise: {d3} 0.5, Noop() 0.5;" if d3 != "Noop()" else
                     "  otherwise: Noop() 1.0;")
        lines.append("}")
    lines.append("prior {")
    for _ in range(rng.randint(0, 3)):
        lines.append(f"  {round(rng.uniform(-2, 2), 3)!r}: {rand_formula(rng, ['A', 'B', '?x'], 2)};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def domain_atom(rng: random.Random, pram, variables=()) -> str:
    lang = pram.language
    f = rng.choice(lang.fluents)
    args = []
    for dom in lang.domains(f):
        if variables and rng.random() < 0.4:
            args.append(rng.choice(list(variables)))
        else:
            args.append(rng.choice(dom))
    return f"{f.name}({','.join(args)})"


def domain_formula(rng: random.Random, pram, depth: int = 3, variables=(), quant: bool = True) -> str:
    """A random formula over a domain's fluents; closed unless ``variables`` is given."""
    if depth <= 0 or rng.random() < 0.2:
        return domain_atom(rng, pram, variables)
    op = rng.choice(["not", "and", "or", "imp", "iff"] + (["quant"] if quant else []))
    if op == "not":
        return f"~({domain_formula(rng, pram, depth - 1, variables, quant)})"
    if op == "quant":
        v = f"?q{depth}"
        kind = rng.choice(["forall", "exists"])
        body = domain_formula(rng, pram, depth - 1, tuple(variables) + (v,), quant)
        return f"({kind} {v} . {body})"
    sym = {"and": "&", "or": "|", "imp": "=>", "iff": "<=>"}[op]
    return (f"({domain_formula(rng, pram, depth - 1, variables, quant)}) {sym} "
            f"({domain_formula(rng, pram, depth - 1, variables, quant)})")
