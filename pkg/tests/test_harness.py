import io
import math

import numpy as np
import pytest

from helpers import DATA, micro_domain_text
from logiparticle.domain import GroundProbAction as PA, parse_domain
from logiparticle.errors import AllParticlesDead, NoApplicableAction
from logiparticle.filtering import FilterProblem
from logiparticle.fol import TRUE
from logiparticle.harness import (COLUMNS, DEAD_ESTIMATE, ExperimentConfig, derive_seed,
                                  estimate_once, exact_posterior, format_trace, joint_posterior,
                                  kl, load_trace, random_trace, read_trace, run_experiment,
                                  smc_baseline, summarize)
from logiparticle.syntax import parse_formula as P


def test_kl_examples():
    assert kl(0.3, 0.3) == 0.0
    assert kl(0.5, 0.5) == 0.0
    assert kl(0.5, 0.9) == pytest.approx(0.5 * math.log(0.5 / 0.9) + 0.5 * math.log(0.5 / 0.1))
    assert kl(0.5, 0.9) == pytest.approx(0.5108, abs=1e-4)
    assert math.isfinite(kl(0.7, 0.0)) and kl(0.7, 0.0) > 0
    assert kl(1.0, 1.0) == 0.0
    with pytest.raises(ValueError):
        kl(1.5, 0.5)


@pytest.mark.parametrize("p, q", [(0.1, 0.2), (0.9, 0.4), (0.0, 0.3), (1.0, 0.999)])
def test_kl_positive(p, q):
    assert kl(p, q) > 0


def test_exact_examples(briefcase):
    actions, obs = load_trace(DATA / "putin.trc", briefcase)
    pr = FilterProblem(briefcase, actions, obs, P("In(O)"))
    assert exact_posterior(pr) == pytest.approx(0.9, abs=1e-12)
    assert joint_posterior(pr) == pytest.approx(0.9, abs=1e-12)
    pr = FilterProblem(briefcase, actions, obs, TRUE)
    assert exact_posterior(pr) == pytest.approx(1.0, abs=1e-12)


def test_dual_oracles_on_shipped_traces(briefcase, depots):
    for pram, trace, q in ((briefcase, "briefcase.trc", "At(O,L2)"),
                           (depots, "depots.trc", "At(C1,D2) & Lifted(C1)")):
        actions, obs = load_trace(DATA / trace, pram)
        pr = FilterProblem(pram, actions, obs, P(q))
        assert exact_posterior(pr) == pytest.approx(joint_posterior(pr), abs=1e-12)


def test_smc_unbiased_at_one_step(briefcase):
    pr = FilterProblem(briefcase, [PA("PutIn", ("O",))], [P("At(B,L1)")], P("In(O)"))
    exact = exact_posterior(pr)
    N = 100
    est = np.array([smc_baseline(pr, N, seed=s).value for s in range(200)])
    se = math.sqrt(exact * (1 - exact) / (N * 200))
    assert abs(est.mean() - exact) <= 3 * se


def test_smc_deterministic_world():
    text = ("language {\n  constants A;\n  fluent P/1;\n}\n"
            "det-action Set(?x) {\n  precond: true;\n  succ P(?x): true;\n}\n"
            "prob-action Go(?x) {\n  otherwise: Set(?x) 1.0;\n}\nprior {\n  -1.0: P(?x);\n}\n")
    pram = parse_domain(text)
    pr = FilterProblem(pram, [PA("Go", ("A",))], [], P("P(A)"))
    assert smc_baseline(pr, 1, seed=0).value == 1.0


def test_smc_all_dead_and_dead_estimate(briefcase):
    # observation contradicting the only possible outcome
    actions, obs = load_trace(DATA / "putin.trc", briefcase)
    pr = FilterProblem(briefcase, actions, [obs[0], P("In(O) & In(D)")], P("In(O)"))
    with pytest.raises(AllParticlesDead):
        smc_baseline(pr, 10, seed=0)
    assert estimate_once(pr, "smc", 10, 0) == (DEAD_ESTIMATE, 0.0, 10)


def test_trace_round_trip(briefcase):
    text = (DATA / "briefcase.trc").read_text()
    actions, obs = read_trace(text, briefcase)
    assert [str(a) for a in actions] == ["PutIn(O)", "Move(B,L1,L2)", "TakeOut(O)", "PutIn(D)"]
    assert len(obs) == 5 and obs[1:] == [TRUE] * 4
    again = read_trace(format_trace(actions, obs), briefcase)
    assert again == (actions, obs)


def test_trace_errors(briefcase):
    from logiparticle.errors import DomainSyntaxError, UndeclaredSymbol
    with pytest.raises(DomainSyntaxError):
        read_trace("bogus line\n", briefcase)
    with pytest.raises(UndeclaredSymbol):
        read_trace("act: Fly(B)\n", briefcase)


def test_random_trace_obs_rates(briefcase):
    actions, obs = random_trace(briefcase, 4, 0.0, seed=1)
    assert len(actions) == 4 and obs == [TRUE] * 5
    actions, obs = random_trace(briefcase, 4, 1.0, seed=1)
    assert all(o != TRUE for o in obs)
    # the generating run is consistent, so the evidence has positive mass
    pr = FilterProblem(briefcase, actions, obs, P("In(O)"))
    assert 0.0 <= exact_posterior(pr) <= 1.0


def test_random_trace_arguments(briefcase):
    with pytest.raises(ValueError):
        random_trace(briefcase, 0, 0.5)
    with pytest.raises(ValueError):
        random_trace(briefcase, 2, 1.5)


def test_random_trace_dead_end():
    text = ("language {\n  constants A;\n  fluent P/1;\n}\n"
            "det-action Once(?x) {\n  precond: ~P(?x);\n  succ P(?x): true;\n}\n"
            "prob-action Go(?x) {\n  otherwise: Once(?x) 1.0;\n}\nprior {\n}\n")
    pram = parse_domain(text)
    with pytest.raises(NoApplicableAction):
        random_trace(pram, 2, 0.0, seed=0, max_tries=5)


def test_random_traces_never_zero_evidence(briefcase, depots):
    for pram, q in ((briefcase, P("At(O,L2)")), (depots, P("Lifted(C1)"))):
        for seed in range(60):
            actions, obs = random_trace(pram, 3, 0.7, seed=seed)
            exact_posterior(FilterProblem(pram, actions, obs, q))


@pytest.mark.parametrize("seed", range(10))
def test_random_traces_on_micro_domains(seed):
    pram = parse_domain(micro_domain_text(seed))
    actions, obs = random_trace(pram, 3, 0.5, seed=seed)
    pr = FilterProblem(pram, actions, obs, P("P(A) | Q(B)"))
    assert exact_posterior(pr) == pytest.approx(joint_posterior(pr), abs=1e-12)


def test_config_parse():
    cfg = ExperimentConfig.parse("domain = d.pram\ntrace = t.trc\nquery = In(O)\n"
                                 "samples = 5 10\nruns = 3\nalgorithms = fofa-s, smc\nseed = 4\n")
    assert cfg.samples == (5, 10) and cfg.runs == 3 and cfg.algorithms == ("fofa-s", "smc")
    assert cfg.seed == 4 and cfg.ess_threshold is None and not cfg.timing
    for bad in ["domain = d\nquery = q\n",
                "domain = d\ntrace = t\nquery = q\nruns = 0\n",
                "domain = d\ntrace = t\nquery = q\nalgorithms = magic\n",
                "domain = d\ntrace = t\nquery = q\ncolour = red\n",
                "trace = t\nquery = q\n"]:
        with pytest.raises(ValueError):
            ExperimentConfig.parse(bad)


def test_shipped_configs_load():
    for name in ("fig7.cfg", "fig8.cfg"):
        cfg = ExperimentConfig.load(DATA / name)
        assert cfg.runs == 50 and cfg.samples == (50, 100, 500, 1000)
        assert exact_posterior(cfg.problem()) > 0


def test_derive_seed():
    a = derive_seed(1, "smc", 50, 0)
    assert a == derive_seed(1, "smc", 50, 0)
    assert len({a, derive_seed(1, "smc", 50, 1), derive_seed(1, "fofa-s", 50, 0),
                derive_seed(2, "smc", 50, 0), derive_seed(1, "smc", 100, 0)}) == 5


def test_exact_only_experiment():
    cfg = ExperimentConfig(domain=DATA / "briefcase.pram", trace=DATA / "briefcase.trc",
                           query="At(O,L2)", algorithms=("exact",))
    out = io.StringIO()
    rows = run_experiment(cfg, out)
    assert len(rows) == 1 and rows[0].kl == 0.0
    lines = out.getvalue().splitlines()
    assert lines[0] == ",".join(COLUMNS) and len(lines) == 2


def test_small_experiment_rows():
    cfg = ExperimentConfig(domain=DATA / "briefcase.pram", trace=DATA / "briefcase.trc",
                           query="At(O,L2)", samples=(20, 40), runs=4,
                           algorithms=("fofa-s", "fofa-sr", "fofa-sr-nostate", "smc"), seed=3)
    out = io.StringIO()
    rows = run_experiment(cfg, out)
    assert len(rows) == 4 * 2 * (4 + 2)
    assert all(r.kl >= 0 for r in rows)
    means = summarize(rows)
    assert set(means) == {(a, n) for a in cfg.algorithms for n in (20, 40)}
    mean_rows = {(r.algorithm, r.N): r.kl for r in rows if r.run == "mean"}
    for key, v in means.items():
        assert mean_rows[key] == pytest.approx(v)
    assert all(r.wall_ms == 0.0 for r in rows)
