"""Command-line front end.

Exit codes: 0 on success, 1 for a broken domain or failed validation, 2 for
runtime errors (inference failures, missing files, bad configuration).
"""
from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .domain import load_domain, validate
from .errors import DomainError, InferenceError, LogiParticleError
from .filtering import SAMPLERS, FilterProblem, fofa
from .harness import (ALGORITHMS, ExperimentConfig, exact_posterior, kl, load_trace,
                      run_experiment, smc_baseline)
from .prior import query_network
from .syntax import parse_formula
from .transition import reg_seq
from .fol import TRUE


def _formula(pram, text):
    f = parse_formula(text)
    pram.check_formula(f)
    return f


def cmd_validate(args) -> int:
    pram = load_domain(args.domain)
    report = validate(pram, enumeration_cap=args.cap)
    if args.json:
        print(json.dumps(report.as_dict(), indent=2, sort_keys=True))
    else:
        print(report.summary())
    return 0 if report.ok else 1


def cmd_filter(args) -> int:
    pram = load_domain(args.domain)
    actions, obs = load_trace(args.trace, pram)
    problem = FilterProblem(pram, actions, obs, _formula(pram, args.query))
    out = {"algorithm": args.algo, "query": str(problem.query), "T": problem.horizon}
    if args.algo == "exact":
        out["estimate"] = exact_posterior(problem)
    elif args.algo == "smc":
        r = smc_baseline(problem, args.n, args.seed)
        out.update(estimate=r.value, N=args.n, seed=args.seed,
                   ess_min=min(r.ess_history, default=float(args.n)), killed=r.killed)
    else:
        kwargs = {}
        if args.algo == "fofa-sr" and args.ess_threshold is not None:
            kwargs["ess_threshold"] = args.ess_threshold * args.n
        est = fofa(SAMPLERS[args.algo], problem, args.n, seed=args.seed, **kwargs)
        out.update(estimate=est.value, N=args.n, seed=args.seed, ess_min=est.ess_min,
                   killed=est.killed,
                   distinct_particles=len({p.actions for p in est.particles}))
    if args.with_exact and args.algo != "exact":
        exact = exact_posterior(problem)
        out.update(exact=exact, kl=kl(exact, out["estimate"]))
    if args.json:
        print(json.dumps(out, sort_keys=True))
    else:
        print(f"estimate: {out['estimate']!r}")
        for key in ("exact", "kl", "N", "seed", "ess_min", "killed", "distinct_particles"):
            if key in out:
                print(f"{key}: {out[key]!r}")
    return 0


def cmd_experiment(args) -> int:
    config = ExperimentConfig.load(args.config)
    if args.timing:
        config.timing = True
    if args.out == "-":
        run_experiment(config, sys.stdout, progress=sys.stderr)
    else:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            run_experiment(config, fh, progress=sys.stderr)
        print(f"wrote {args.out}", file=sys.stderr)
    return 0


def cmd_inspect(args) -> int:
    pram = load_domain(args.domain)
    if args.regress is not None:
        f = _formula(pram, args.regress[0])
        actions = [pram.det_action(a) for a in args.regress[1:]]
        print(reg_seq(f, actions, pram))
        return 0
    f = _formula(pram, args.network)
    net, qf, _ = query_network(pram, f, TRUE)
    print(net.with_factors(qf).summary())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="logiparticle", description="First-order logical particle filtering over PRAMs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a domain file")
    p.add_argument("domain")
    p.add_argument("--cap", type=int, default=None, help="state enumeration cap")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("filter", help="estimate the posterior of a query")
    p.add_argument("domain")
    p.add_argument("trace")
    p.add_argument("query")
    p.add_argument("--algo", choices=[a for a in ALGORITHMS], default="fofa-s")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ess-threshold", type=float, default=None,
                   help="resampling threshold as a fraction of N (fofa-sr)")
    p.add_argument("--with-exact", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("experiment", help="run an expected-KL sweep")
    p.add_argument("config")
    p.add_argument("--out", default="-", help="CSV path, or - for standard output")
    p.add_argument("--timing", action="store_true", help="record wall time per run")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("inspect", help="show regressed formulas or ground networks")
    p.add_argument("domain")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--regress", nargs="+", metavar=("QUERY", "ACTION"))
    g.add_argument("--network", metavar="FORMULA")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DomainError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (InferenceError, LogiParticleError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
