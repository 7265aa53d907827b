"""EM and EDML parameter learning for binary Bayesian networks."""

from .infer import (
    FamilyMarginals,
    ZeroProbabilityError,
    family_marginals,
    log_likelihood,
    log_posterior,
    prob_evidence,
)
from .learn import LearnConfig, Trace, edml_bayes_factors, edml_iteration, em_iteration, run
from .model import (
    MISSING,
    BetaPriors,
    Dataset,
    ModelError,
    Network,
    distinct_examples,
    parse_dataset,
    parse_network,
    serialize_dataset,
    serialize_network,
    simulate_dataset,
)
from .softest import SoftObservations, solve_mode

__version__ = "0.1.0"

__all__ = [
    "MISSING",
    "BetaPriors",
    "Dataset",
    "FamilyMarginals",
    "LearnConfig",
    "ModelError",
    "Network",
    "SoftObservations",
    "Trace",
    "ZeroProbabilityError",
    "distinct_examples",
    "edml_bayes_factors",
    "edml_iteration",
    "em_iteration",
    "family_marginals",
    "log_likelihood",
    "log_posterior",
    "parse_dataset",
    "parse_network",
    "prob_evidence",
    "run",
    "serialize_dataset",
    "serialize_network",
    "simulate_dataset",
    "solve_mode",
]
