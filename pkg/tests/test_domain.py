import pytest

from helpers import DATA, micro_domain_text
from logiparticle.domain import (GroundDetAction, GroundProbAction, parse_domain, partition_dists,
                                 select_partition, serialize, validate)
from logiparticle.errors import (ArityMismatch, DomainSyntaxError, MultiplePartitions,
                                 NormalizationError, UndeclaredSymbol, ValidationFailed)
from logiparticle.fol import atom
from logiparticle.syntax import parse_formula as P

MUTANTS = sorted((DATA.parents[2] / "tests" / "data" / "mutants").glob("*.pram"))


def test_briefcase_shape(briefcase):
    lang = briefcase.language
    assert {(f.name, f.arity) for f in lang.fluents} == {("In", 1), ("At", 2)}
    names = {d.name for d in briefcase.det_actions}
    assert {"MvWithObj", "PutInSucc", "PutInFail"} <= names
    assert briefcase.universe.n == 8
    assert briefcase.universe.num_states == 256


def test_shipped_domains_validate(briefcase, depots):
    for pram in (briefcase, depots):
        report = validate(pram)
        assert report.ok, report.summary()
        assert not report.partial


def test_takeout_partitions(briefcase):
    a = GroundProbAction("TakeOut", ("O",))
    u = briefcase.universe
    s = u.state_from([atom("In", "O")])
    i, dist = select_partition(briefcase, a, s)
    assert i == 0
    assert dist == {GroundDetAction("TakeOutSucc", ("O",)): 0.9,
                    GroundDetAction("TakeOutFail", ("O",)): 0.1}
    i, dist = select_partition(briefcase, a, u.state(0))
    assert i == 1
    assert dist == {GroundDetAction("TakeOutFail", ("O",)): 1.0}


def test_select_partition_total(briefcase, depots):
    for pram in (briefcase, depots):
        u = pram.universe
        for a in pram.ground_prob_actions()[::7]:
            for s in list(u.states())[::5]:
                _, dist = select_partition(pram, a, s)
                assert sum(dist.values()) == pytest.approx(1.0, abs=1e-9)


def _with(text, old, new):
    assert old in text
    return text.replace(old, new, 1)


def test_unnormalized_distribution_is_reported():
    text = _with((DATA / "briefcase.pram").read_text(), "PutInSucc(?o) 0.9, PutInFail(?o) 0.1",
                 "PutInSucc(?o) 0.9, PutInFail(?o) 0.05")
    report = validate(parse_domain(text))
    assert [v.kind for v in report.violations] == ["unnormalized"]
    with pytest.raises(NormalizationError):
        report.raise_if_failed()


def test_overlap_has_witness():
    text = _with((DATA / "briefcase.pram").read_text(), "otherwise: TakeOutFail(?o) 1.0",
                 "when true: TakeOutFail(?o) 1.0")
    report = validate(parse_domain(text))
    (v,) = report.violations
    assert v.kind == "overlap" and "In(" in v.witness
    with pytest.raises(ValidationFailed):
        report.raise_if_failed()
    with pytest.raises(MultiplePartitions):
        pram = parse_domain(text)
        select_partition(pram, GroundProbAction("TakeOut", ("O",)),
                         pram.universe.state_from([atom("In", "O")]))


def test_partial_validation_flag(briefcase):
    report = validate(briefcase, enumeration_cap=16)
    assert report.partial and report.ok


def test_unreferenced_det_action_warns():
    text = (DATA / "briefcase.pram").read_text()
    text = _with(text, "det-actions MvWithObj,", "det-actions Idle, MvWithObj,")
    text += "\ndet-action Idle() {\n  precond: true;\n}\n"
    report = validate(parse_domain(text))
    assert report.ok
    assert any("Idle" in w for w in report.warnings)


@pytest.mark.parametrize("text, exc", [
    ("", DomainSyntaxError),
    ("# only a comment\n", DomainSyntaxError),
    ("language { constants A; fluent P/1; }\nprior { 1.0: P(B); }", UndeclaredSymbol),
    ("language { constants A; fluent P/1; }\nprior { 1.0: P(A, A); }", ArityMismatch),
    ("language { constants A; fluent P/1; }\nprior { 1.0: P(A) & ; }", DomainSyntaxError),
])
def test_parse_errors(text, exc):
    with pytest.raises(exc):
        parse_domain(text)


def test_syntax_error_has_position():
    with pytest.raises(DomainSyntaxError) as info:
        parse_domain("language {\n  constants A;\n  fluent P/1;\n}\nprior {\n  1.0 P(A);\n}\n")
    assert info.value.line == 6


@pytest.mark.parametrize("name", ["briefcase.pram", "depots.pram"])
def test_serialize_round_trip(name):
    pram = parse_domain((DATA / name).read_text())
    text = serialize(pram)
    again = parse_domain(text)
    assert again == pram
    assert serialize(again) == text


@pytest.mark.parametrize("seed", range(30))
def test_micro_domains(seed):
    pram = parse_domain(micro_domain_text(seed))
    assert validate(pram).ok
    assert parse_domain(serialize(pram)) == pram
    for a in pram.ground_prob_actions():
        for d in partition_dists(pram, a):
            assert sum(d.values()) == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("path", MUTANTS, ids=lambda p: p.stem)
def test_mutants_fail(path):
    assert len(MUTANTS) == 10
    try:
        report = validate(parse_domain(path.read_text()))
    except DomainSyntaxError:
        assert path.stem.startswith("arity")
        return
    assert not report.ok
    kind = {"overlap": "overlap", "gap": "non-exhaustive", "unnorm": "unnormalized"}
    assert report.violations[0].kind == kind[path.stem.split("_")[0]]


def test_guard_formula_parses_in_context(briefcase):
    g = briefcase.prob_schema("TakeOut").guards()
    assert g[0] == P("In(?o)")
    assert g[1] == P("~In(?o)")
