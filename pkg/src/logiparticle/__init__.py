"""First-order logical particle filtering over probabilistic relational action models."""

__version__ = "0.1.0"

from .domain import PRAM, GroundDetAction, GroundProbAction, load_domain, parse_domain, validate
from .filtering import FilterProblem, PosteriorEstimate, fofa, pfof, s_actions, sr_actions
from .fol import Formula
from .harness import exact_posterior, joint_posterior, kl, smc_baseline
from .prior import brute_force_prior, prior_fof
from .syntax import parse_formula
from .transition import apply, progress, reg_seq, regress

__all__ = [
    "PRAM", "GroundDetAction", "GroundProbAction", "load_domain", "parse_domain", "validate",
    "FilterProblem", "PosteriorEstimate", "fofa", "pfof", "s_actions", "sr_actions", "Formula",
    "exact_posterior", "joint_posterior", "kl", "smc_baseline", "brute_force_prior", "prior_fof",
    "parse_formula", "apply", "progress", "reg_seq", "regress",
]
