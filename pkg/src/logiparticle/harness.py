"""Exact oracles, the ground SMC baseline, traces and the KL experiment protocol."""
from __future__ import annotations

import configparser
import csv
import itertools
import math
import time
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np

from .domain import (PRAM, GroundDetAction, GroundProbAction, load_domain, partition_dists,
                     partition_guards, select_partition)
from .errors import AllParticlesDead, DomainSyntaxError, NoApplicableAction, ZeroEvidence
from .filtering import SAMPLERS, FilterProblem, fofa
from .fol import TRUE, Const, Formula, Not, conj, free_vars, ground, substitute_terms
from .prior import state_distribution
from .syntax import parse_formula
from .transition import FOParticle, applicable, apply, transition_table
from .universe import State, evaluate

KL_EPS = 1e-12
ALGORITHMS = ("fofa-s", "fofa-sr", "fofa-sr-nostate", "smc", "exact")
COLUMNS = ["algorithm", "N", "run", "seed", "estimate", "exact", "kl", "ess_min", "killed",
           "wall_ms"]
DEAD_ESTIMATE = 0.5


def kl(p: float, q: float, eps: float = KL_EPS) -> float:
    """KL divergence between Bernoulli(p) and Bernoulli(q), q clamped to [eps, 1-eps]."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if p == q:
        return 0.0
    q = min(max(q, eps), 1.0 - eps)
    out = 0.0
    if p > 0:
        out += p * math.log(p / q)
    if p < 1:
        out += (1 - p) * math.log((1 - p) / (1 - q))
    return max(out, 0.0)


# -- exact oracles ------------------------------------------------------------------

def _partition_index(pram: PRAM, a: GroundProbAction) -> np.ndarray:
    """Index of the partition each state falls in (-1 if none)."""
    key = ("pindex", a)
    if key not in pram.memo:
        u = pram.universe
        idx = np.full(u.num_states, -1, dtype=np.int64)
        for i, g in enumerate(partition_guards(pram, a)):
            m = u.mask(g)
            idx[m & (idx < 0)] = i
        pram.memo[key] = idx
    return pram.memo[key]


def _executions(pram: PRAM, a: GroundProbAction) -> list[GroundDetAction]:
    seen: dict[GroundDetAction, None] = {}
    for dist in partition_dists(pram, a):
        for da, p in dist.items():
            if p > 0:
                seen.setdefault(da, None)
    return list(seen)


def _pa_vector(pram: PRAM, a: GroundProbAction, da: GroundDetAction) -> np.ndarray:
    """PA(da | a, s) for every state s."""
    key = ("pa", a, da)
    if key not in pram.memo:
        part = _partition_index(pram, a)
        table = np.array([d.get(da, 0.0) for d in partition_dists(pram, a)] + [0.0])
        pram.memo[key] = table[part]
    return pram.memo[key]


def execution_posteriors(problem: FilterProblem):
    """Yield ``(execution sequence, P(query | seq, obs) or None, unnormalized mass)``."""
    pram = problem.pram
    u = pram.universe
    u.check_cap()
    obs = [u.mask(o) for o in problem.observations]
    qmask = u.mask(problem.query)
    w0 = state_distribution(pram) * obs[0]
    s0 = np.arange(u.num_states, dtype=np.int64)
    for seq in itertools.product(*(_executions(pram, a) for a in problem.actions)):
        w = w0.copy()
        s = s0
        for t, (a, da) in enumerate(zip(problem.actions, seq), start=1):
            ok, nxt = transition_table(pram, da)
            w *= _pa_vector(pram, a, da)[s] * ok[s]
            s = nxt[s]
            w *= obs[t][s]
        mass = float(w.sum())
        yield seq, (float(w[qmask[s]].sum()) / mass if mass > 0 else None), mass


def exact_posterior(problem: FilterProblem) -> float:
    """Sum over every execution sequence of P(query | seq, obs) * P(seq | actions, obs)."""
    rows = list(execution_posteriors(problem))
    total = sum(m for _, _, m in rows)
    if total <= 0:
        raise ZeroEvidence("no execution sequence is consistent with the observations")
    return float(min(1.0, max(0.0, sum(p * (m / total) for _, p, m in rows if m > 0))))


def scalar_prior(pram: PRAM) -> dict[int, float]:
    """Normalized prior over states, by direct evaluation of every grounding."""
    if "p0_scalar" not in pram.memo:
        u = pram.universe
        u.check_cap()
        consts = u.constants
        grounded = []
        for f, w in pram.prior.formulas:
            fv = sorted(free_vars(f), key=lambda v: v.name)
            for combo in itertools.product(consts, repeat=len(fv)):
                g = ground(substitute_terms(f, {v: Const(c) for v, c in zip(fv, combo)}), consts)
                grounded.append((g, w))
        logw = {}
        for s in u.states():
            logw[s.bits] = sum(w for g, w in grounded if evaluate(s, g))
        top = max(logw.values())
        z = sum(math.exp(v - top) for v in logw.values())
        pram.memo["p0_scalar"] = {b: math.exp(v - top) / z for b, v in logw.items()}
    return pram.memo["p0_scalar"]


def scalar_step(pram: PRAM, bits: int, da: GroundDetAction) -> int | None:
    """Successor state bits by direct evaluation, or None if ``da`` is not applicable."""
    cache = pram.memo.setdefault("scalar_step", {})
    key = (bits, da)
    if key not in cache:
        s = State(pram.universe, bits)
        cache[key] = apply(s, da, pram).bits if applicable(s, da, pram) else None
    return cache[key]


def joint_posterior(problem: FilterProblem) -> float:
    """Sum over initial state and execution jointly, one state at a time."""
    pram = problem.pram
    u = pram.universe
    p0 = scalar_prior(pram)
    acts, obs, q = problem.actions, problem.observations, problem.query

    @lru_cache(maxsize=None)
    def holds(bits: int, t: int) -> bool:
        return evaluate(State(u, bits), obs[t])

    def rec(bits: int, t: int) -> tuple[float, float]:
        if t == len(acts):
            return 1.0, (1.0 if evaluate(State(u, bits), q) else 0.0)
        _, dist = select_partition(pram, acts[t], State(u, bits))
        tot = hit = 0.0
        for da, p in dist.items():
            nb = scalar_step(pram, bits, da)
            if nb is None or p == 0 or not holds(nb, t + 1):
                continue
            m, h = rec(nb, t + 1)
            tot += p * m
            hit += p * h
        return tot, hit

    num = den = 0.0
    for bits, p in p0.items():
        if p == 0 or not holds(bits, 0):
            continue
        m, h = rec(bits, 0)
        den += p * m
        num += p * h
    if den <= 0:
        raise ZeroEvidence("no execution sequence is consistent with the observations")
    return num / den


def particle_oracle(pram: PRAM, particle: FOParticle, observations: Sequence[Formula],
                    query: Formula) -> float:
    """Query frequency over prior-weighted initial states that survive the particle.

    A run survives when every recorded guard holds before its action, every
    action is applicable and every observation holds.
    """
    u = pram.universe
    p0 = scalar_prior(pram)
    guards = particle.guards or (TRUE,) * len(particle.actions)
    num = den = 0.0
    for bits, p in p0.items():
        s = State(u, bits)
        if not evaluate(s, observations[0]):
            continue
        ok = True
        for t, (da, g) in enumerate(zip(particle.actions, guards), start=1):
            nb = scalar_step(pram, s.bits, da) if evaluate(s, g) else None
            if nb is None:
                ok = False
                break
            s = State(u, nb)
            if t < len(observations) and not evaluate(s, observations[t]):
                ok = False
                break
        if ok:
            den += p
            if evaluate(s, query):
                num += p
    if den <= 0:
        raise ZeroEvidence("no initial state survives the particle")
    return num / den


# -- ground SMC baseline ---------------------------------------------------------------

@dataclass
class SMCResult:
    value: float
    ess_history: list[float]
    killed: int


def smc_baseline(problem: FilterProblem, N: int, seed: int = 0) -> SMCResult:
    """Bootstrap particle filter over ground states."""
    if N < 1:
        raise ValueError("N must be at least 1")
    pram = problem.pram
    u = pram.universe
    u.check_cap()
    rng = np.random.default_rng(seed)
    init = state_distribution(pram) * u.mask(problem.observations[0])
    if init.sum() <= 0:
        raise ZeroEvidence("initial observation has zero prior probability")
    cum = np.cumsum(init / init.sum())
    cum[-1] = 1.0
    s = np.searchsorted(cum, rng.random(N), side="right")
    w = np.full(N, 1.0 / N)
    history = []
    for t, a in enumerate(problem.actions, start=1):
        part = _partition_index(pram, a)[s]
        dists = partition_dists(pram, a)
        u_draw = rng.random(N)
        nxt = np.empty_like(s)
        ok = np.zeros(N, dtype=bool)
        for i, dist in enumerate(dists):
            sel = np.flatnonzero(part == i)
            if not len(sel):
                continue
            das = list(dist)
            c = np.cumsum([dist[d] for d in das])
            c /= c[-1]
            pick = np.minimum(np.searchsorted(c, u_draw[sel], side="right"), len(das) - 1)
            for j, da in enumerate(das):
                hit = sel[pick == j]
                good, table = transition_table(pram, da)
                ok[hit] = good[s[hit]]
                nxt[hit] = table[s[hit]]
        s = np.where(ok, nxt, s)
        w = w * ok * u.mask(problem.observations[t])[s]
        total = w.sum()
        if not total > 0:
            raise AllParticlesDead(f"all SMC particles inconsistent at step {t}")
        w = w / total
        history.append(float(1.0 / np.sum(w ** 2)))
        if t < problem.horizon:
            c = np.cumsum(w)
            c[-1] = 1.0
            idx = np.searchsorted(c, rng.random(N), side="right")
            s = s[idx]
            w = np.full(N, 1.0 / N)
    q = u.mask(problem.query)[s]
    return SMCResult(float(np.sum(w * q) / np.sum(w)), history, int(np.sum(w == 0)))


# -- traces ------------------------------------------------------------------------------

def read_trace(text: str, pram: PRAM) -> tuple[list[GroundProbAction], list[Formula]]:
    """Parse ``obs: <formula>`` / ``act: Name(args)`` lines."""
    actions: list[GroundProbAction] = []
    slots: list[list[Formula]] = [[]]
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        kind, sep, rest = line.partition(":")
        kind = kind.strip()
        if not sep or kind not in ("obs", "act"):
            raise DomainSyntaxError("expected 'obs: <formula>' or 'act: <action>'", lineno, 1)
        try:
            if kind == "act":
                actions.append(pram.prob_action(rest.strip()))
                slots.append([])
            else:
                f = parse_formula(rest.strip())
                pram.check_formula(f)
                slots[-1].append(f)
        except DomainSyntaxError as err:
            raise type(err)(f"trace line {lineno}: {err}") from None
    return actions, [conj(*s) if s else TRUE for s in slots]


def load_trace(path, pram: PRAM):
    return read_trace(Path(path).read_text(encoding="utf-8"), pram)


def format_trace(actions: Sequence[GroundProbAction], observations: Sequence[Formula]) -> str:
    lines = []
    obs = list(observations) + [TRUE] * (len(actions) + 1 - len(observations))
    if obs[0] != TRUE:
        lines.append(f"obs: {obs[0]}")
    for a, o in zip(actions, obs[1:]):
        lines.append(f"act: {a}")
        if o != TRUE:
            lines.append(f"obs: {o}")
    return "\n".join(lines) + "\n"


def random_trace(pram: PRAM, T: int, obs_rate: float, seed: int = 0, max_tries: int = 100
                 ) -> tuple[list[GroundProbAction], list[Formula]]:
    """Simulate a ground-truth run and record its actions and some true literals."""
    if T < 1:
        raise ValueError("T must be at least 1")
    if not 0.0 <= obs_rate <= 1.0:
        raise ValueError("obs_rate must lie in [0, 1]")
    u = pram.universe
    p0 = state_distribution(pram)
    ground_actions = pram.ground_prob_actions()
    for attempt in range(max_tries):
        rng = np.random.default_rng([seed, attempt])
        s = State(u, int(rng.choice(u.num_states, p=p0)))
        actions, obs = [], [_observe(s, obs_rate, rng)]
        for _ in range(T):
            options = []
            for a in ground_actions:
                _, dist = select_partition(pram, a, s)
                runnable = {da: p for da, p in dist.items() if p > 0 and applicable(s, da, pram)}
                if runnable:
                    options.append((a, runnable))
            if not options:
                break
            a, runnable = options[int(rng.integers(len(options)))]
            das = list(runnable)
            p = np.array([runnable[d] for d in das])
            da = das[int(rng.choice(len(das), p=p / p.sum()))]
            s = apply(s, da, pram)
            actions.append(a)
            obs.append(_observe(s, obs_rate, rng))
        if len(actions) == T:
            return actions, obs
    raise NoApplicableAction(f"no trajectory of length {T} found in {max_tries} attempts")


def _observe(s: State, rate: float, rng: np.random.Generator) -> Formula:
    if rate <= 0 or rng.random() >= rate:
        return TRUE
    atoms = s.universe.atoms
    a = atoms[int(rng.integers(len(atoms)))]
    return a if s[a] else Not(a)


# -- experiments ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    domain: Path
    query: str
    trace: Path | None = None
    random_trace: tuple[int, float, int] | None = None
    samples: tuple[int, ...] = (50, 100, 500, 1000)
    runs: int = 50
    algorithms: tuple[str, ...] = ("fofa-s", "fofa-sr", "smc")
    seed: int = 0
    ess_threshold: float | None = None  # fraction of N
    timing: bool = False

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        if not self.samples or any(n < 1 for n in self.samples):
            raise ValueError("sample counts must be positive")
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad:
            raise ValueError(f"unknown algorithm(s): {', '.join(bad)}")
        if (self.trace is None) == (self.random_trace is None):
            raise ValueError("give exactly one of trace and random_trace")

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        return cls.parse(path.read_text(encoding="utf-8"), base=path.parent)

    @classmethod
    def parse(cls, text: str, base: Path = Path(".")) -> "ExperimentConfig":
        cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        cp.read_string("[experiment]\n" + text)
        sec = cp["experiment"]
        known = {"domain", "trace", "random_trace", "query", "samples", "runs", "algorithms",
                 "seed", "ess_threshold", "timing"}
        extra = set(sec) - known
        if extra:
            raise ValueError(f"unknown config key(s): {', '.join(sorted(extra))}")
        for key in ("domain", "query"):
            if key not in sec:
                raise ValueError(f"missing config key {key!r}")

        def ints(v):
            return tuple(int(x) for x in v.replace(",", " ").split())

        kwargs = dict(domain=base / sec["domain"], query=sec["query"])
        if "trace" in sec:
            kwargs["trace"] = base / sec["trace"]
        if "random_trace" in sec:
            parts = sec["random_trace"].replace(",", " ").split()
            kwargs["random_trace"] = (int(parts[0]), float(parts[1]), int(parts[2]))
        if "samples" in sec:
            kwargs["samples"] = ints(sec["samples"])
        if "runs" in sec:
            kwargs["runs"] = int(sec["runs"])
        if "algorithms" in sec:
            kwargs["algorithms"] = tuple(sec["algorithms"].replace(",", " ").split())
        if "seed" in sec:
            kwargs["seed"] = int(sec["seed"])
        if "ess_threshold" in sec:
            kwargs["ess_threshold"] = float(sec["ess_threshold"])
        if "timing" in sec:
            kwargs["timing"] = sec.getboolean("timing")
        return cls(**kwargs)

    def problem(self, pram: PRAM | None = None) -> FilterProblem:
        pram = pram or load_domain(self.domain)
        if self.trace is not None:
            actions, obs = load_trace(self.trace, pram)
        else:
            T, rate, s = self.random_trace
            actions, obs = random_trace(pram, T, rate, s)
        query = parse_formula(self.query)
        pram.check_formula(query)
        return FilterProblem(pram, actions, obs, query)


def derive_seed(root: int, algorithm: str, n: int, run: int) -> int:
    alg = ALGORITHMS.index(algorithm)
    return int(np.random.SeedSequence([root, alg, n, run]).generate_state(1, np.uint32)[0])


@dataclass
class ResultRow:
    algorithm: str
    N: int
    run: int | str
    seed: int | str
    estimate: float
    exact: float
    kl: float
    ess_min: float | str = ""
    killed: int | str = ""
    wall_ms: float = 0.0

    def as_list(self) -> list:
        return [self.algorithm, self.N, self.run, self.seed, _num(self.estimate), _num(self.exact),
                _num(self.kl), _num(self.ess_min), self.killed, _num(self.wall_ms)]


def _num(v):
    if isinstance(v, float):
        return repr(v)
    return v


def estimate_once(problem: FilterProblem, algorithm: str, N: int, seed: int,
                  ess_threshold: float | None = None) -> tuple[float, float, int]:
    """``(estimate, minimum ESS, killed)``; a run where every particle dies scores 0.5."""
    try:
        if algorithm == "smc":
            r = smc_baseline(problem, N, seed)
            return r.value, min(r.ess_history, default=float(N)), r.killed
        kwargs = {}
        if algorithm == "fofa-sr" and ess_threshold is not None:
            kwargs["ess_threshold"] = ess_threshold * N
        est = fofa(SAMPLERS[algorithm], problem, N, seed=seed, **kwargs)
        return est.value, est.ess_min, est.killed
    except AllParticlesDead:
        return DEAD_ESTIMATE, 0.0, N


def run_experiment(config: ExperimentConfig, out: TextIO | None = None, progress: TextIO | None = None
                   ) -> list[ResultRow]:
    """Run every algorithm x sample count x run; rows are written to ``out`` as CSV."""
    problem = config.problem()
    exact = exact_posterior(problem)
    writer = csv.writer(out, lineterminator="\n") if out is not None else None
    if writer:
        writer.writerow(COLUMNS)
        out.flush()
    rows: list[ResultRow] = []

    def emit(row: ResultRow):
        rows.append(row)
        if writer:
            writer.writerow(row.as_list())
            out.flush()

    for alg in config.algorithms:
        if alg == "exact":
            emit(ResultRow("exact", 0, 0, "", exact, exact, 0.0, "", 0, 0.0))
            continue
        for n in config.samples:
            batch = []
            for run in range(config.runs):
                seed = derive_seed(config.seed, alg, n, run)
                t0 = time.perf_counter()
                est, ess_min, killed = estimate_once(problem, alg, n, seed, config.ess_threshold)
                ms = (time.perf_counter() - t0) * 1000 if config.timing else 0.0
                row = ResultRow(alg, n, run, seed, est, exact, kl(exact, est), ess_min, killed, ms)
                batch.append(row)
                emit(row)
            for label, fn in (("mean", np.mean), ("stderr", _stderr)):
                emit(ResultRow(alg, n, label, "", float(fn([r.estimate for r in batch])), exact,
                               float(fn([r.kl for r in batch])), "", "", 0.0))
            if progress is not None:
                mean_kl = float(np.mean([r.kl for r in batch]))
                print(f"{alg} N={n}: mean KL {mean_kl:.3g}", file=progress, flush=True)
    return rows


def _stderr(values) -> float:
    v = np.asarray(values, dtype=float)
    return float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0


def summarize(rows: Iterable[ResultRow]) -> dict[tuple[str, int], float]:
    """Mean KL per (algorithm, N) from per-run rows."""
    acc: dict[tuple[str, int], list[float]] = {}
    for r in rows:
        if isinstance(r.run, int) and r.algorithm != "exact":
            acc.setdefault((r.algorithm, r.N), []).append(r.kl)
    return {k: float(np.mean(v)) for k, v in acc.items()}
