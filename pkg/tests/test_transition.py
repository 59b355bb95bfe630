import random

import numpy as np
import pytest

from helpers import closed_formula, micro_domain_text
from logiparticle.domain import GroundDetAction as DA, parse_domain
from logiparticle.errors import PreconditionViolated
from logiparticle.fol import TRUE, Not, atom, simplify
from logiparticle.syntax import parse_formula as P
from logiparticle.transition import (CurrentStateFormula, advance, applicable, apply, initial_particle,
                                     progress, reg_seq, regress, transition_table)

MV = DA("MvWithObj", ("B", "L1", "L2"))


def test_applicable_examples(briefcase):
    u = briefcase.universe
    pre = u.mask(P("At(B,L1) & ~At(B,L2)"))
    for s in u.states():
        assert applicable(s, MV, briefcase) == pre[s.bits]
    assert all(applicable(s, DA("MvFail", ("B", "L1", "L2")), briefcase) for s in u.states())
    s = u.state_from([atom("At", "B", "L2"), atom("At", "B", "L1")])
    assert not applicable(s, MV, briefcase)


def test_apply_move_carries_contents(briefcase):
    u = briefcase.universe
    s = u.state_from([atom("At", "B", "L1"), atom("In", "O"), atom("At", "O", "L1")])
    r = apply(s, MV, briefcase)
    assert r[atom("At", "B", "L2")] and not r[atom("At", "B", "L1")]
    assert r[atom("At", "O", "L2")] and not r[atom("At", "O", "L1")]
    assert r[atom("In", "O")]
    with pytest.raises(PreconditionViolated):
        apply(r, MV, briefcase)


def test_noop_is_identity(briefcase):
    fail = DA("PutInFail", ("O",))
    for s in briefcase.universe.states():
        assert apply(s, fail, briefcase) == s
    f = P("In(O) & At(D,L1)")
    assert regress(f, fail, briefcase) == f


def test_regress_examples(briefcase):
    assert regress(P("At(O,L2)"), MV, briefcase) == P("In(O) | At(O,L2)")
    g = P("At(O,L2) & ~In(D)")
    assert regress(Not(g), MV, briefcase) == simplify(Not(regress(g, MV, briefcase)))
    assert reg_seq(g, [], briefcase) == g
    assert reg_seq(g, [MV], briefcase) == regress(g, MV, briefcase)


def test_regress_quantified(briefcase):
    f = P("forall ?o . In(?o) => At(?o,L2)")
    g = regress(f, MV, briefcase)
    u = briefcase.universe
    ok, nxt = transition_table(briefcase, MV)
    assert (u.mask(g)[ok] == u.mask(f)[nxt[ok]]).all()


def test_table_matches_scalar_apply(briefcase):
    u = briefcase.universe
    for da in briefcase.ground_det_actions():
        ok, nxt = transition_table(briefcase, da)
        for s in list(u.states())[::17]:
            assert ok[s.bits] == applicable(s, da, briefcase)
            if ok[s.bits]:
                assert nxt[s.bits] == apply(s, da, briefcase).bits


def test_reg_seq_length_three(briefcase):
    u = briefcase.universe
    rng = random.Random(5)
    acts = briefcase.ground_det_actions()
    formulas = [P(t) for t in ["At(O,L2)", "In(D) | At(B,L1)", "forall ?o . In(?o) => At(?o,L2)",
                               "exists ?l . At(O,?l) & At(B,?l)"]]
    for _ in range(40):
        seq = [rng.choice(acts) for _ in range(3)]
        for f in formulas:
            g = u.mask(reg_seq(f, seq, briefcase))
            for s in u.states():
                cur, ok = s, True
                for da in seq:
                    if not applicable(cur, da, briefcase):
                        ok = False
                        break
                    cur = apply(cur, da, briefcase)
                if ok:
                    assert g[s.bits] == u.mask(f)[cur.bits]


def test_reg_seq_concatenation(briefcase):
    u = briefcase.universe
    acts = briefcase.ground_det_actions()
    rng = random.Random(9)
    for _ in range(30):
        p1 = [rng.choice(acts) for _ in range(2)]
        p2 = [rng.choice(acts) for _ in range(2)]
        f = P(closed_formula_briefcase(rng))
        a = u.mask(reg_seq(f, p1 + p2, briefcase))
        b = u.mask(reg_seq(reg_seq(f, p2, briefcase), p1, briefcase))
        assert (a == b).all()


def closed_formula_briefcase(rng):
    lits = ["In(O)", "In(D)", "At(O,L1)", "At(O,L2)", "At(D,L2)", "At(B,L1)", "At(B,L2)",
            "exists ?l . At(O,?l) & At(B,?l)", "forall ?o . In(?o) => At(?o,L2)"]
    parts = rng.sample(lits, 3)
    return f"({parts[0]}) | (~({parts[1]}) & ({parts[2]}))"


def test_progress_example(briefcase):
    u = briefcase.universe
    cur = CurrentStateFormula.of(P("In(O)"), u)
    new = progress(cur, MV, TRUE, briefcase)
    expect = u.mask(P("At(B,L2) & ~At(B,L1) & In(O) & At(O,L2) & (forall ?o . In(?o) => At(?o,L2))"))
    # every model satisfies the described effect
    assert new.satisfiable and (new.mask <= expect).all()
    brute = set()
    for s in cur.models():
        if applicable(s, MV, briefcase):
            brute.add(apply(s, MV, briefcase))
    assert new.models() == frozenset(brute)
    assert (u.mask(new.symbolic) == new.mask).all()


def test_progress_noop_and_contradiction(briefcase):
    u = briefcase.universe
    cur = CurrentStateFormula.of(P("In(O) | At(D,L1)"), u)
    assert progress(cur, DA("PutInFail", ("D",)), TRUE, briefcase) == cur
    dead = progress(cur, MV, P("At(B,L1)"), briefcase)
    assert not dead.satisfiable


def test_duality(briefcase):
    u = briefcase.universe
    rng = random.Random(2)
    acts = briefcase.ground_det_actions()
    for _ in range(60):
        da = rng.choice(acts)
        cur = CurrentStateFormula(u, np.array([rng.random() < 0.1 for _ in range(u.num_states)]))
        f = P(closed_formula_briefcase(rng))
        if not progress(cur, da, TRUE, briefcase).satisfiable:
            continue
        ok, _ = transition_table(briefcase, da)
        left = (progress(cur, da, TRUE, briefcase).mask <= u.mask(f)).all()
        right = ((cur.mask & ok) <= u.mask(regress(f, da, briefcase))).all()
        assert left == right


def test_advance_tracks_guards(briefcase):
    u = briefcase.universe
    o0 = P("At(B,L1) & At(O,L1)")
    p = initial_particle(briefcase, o0)
    guard = P("~In(O) & (exists ?l1 . At(O,?l1) & At(B,?l1))")
    q = advance(briefcase, p, DA("PutInSucc", ("O",)), TRUE, guard)
    assert q.actions == (DA("PutInSucc", ("O",)),) and q.guards == (guard,)
    assert (q.cur.mask <= u.mask(P("In(O)"))).all()
    assert (u.mask(q.evidence) == (u.mask(o0) & u.mask(P("~In(O)")))).all()


@pytest.mark.parametrize("seed", range(12))
def test_micro_regression_soundness(seed):
    pram = parse_domain(micro_domain_text(seed))
    u = pram.universe
    rng = random.Random(seed)
    formulas = [P(closed_formula(rng, 3)) for _ in range(8)]
    for da in pram.ground_det_actions():
        ok, nxt = transition_table(pram, da)
        for f in formulas:
            assert (u.mask(regress(f, da, pram))[ok] == u.mask(f)[nxt[ok]]).all()
