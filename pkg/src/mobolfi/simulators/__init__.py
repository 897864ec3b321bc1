"""Benchmark simulators, their discrepancies, and exact-likelihood oracles."""

from mobolfi.simulators.mlba import (
    LOG_FLOOR,
    MLBAConfig,
    MLBAData,
    load_reference_attributes,
    make_reference_attributes,
    mlba_choice_probability,
    mlba_discrepancies,
    mlba_drift_means,
    mlba_drift_means_all,
    mlba_loglik_batch,
    mlba_loglik_closed_form,
    mlba_prior_bounds,
    mlba_reference_theta,
    mlba_replicated_discrepancies,
    read_attributes_csv,
    simulate_mlba,
    write_attributes_csv,
)
from mobolfi.simulators.mnl import (
    mnl_fit_mle,
    mnl_loglik,
    mnl_score,
    mnl_score_summary,
)
from mobolfi.simulators.toy import (
    IsotropicGaussian,
    ToyConfig,
    ToyData,
    ToyPosterior,
    simulate_toy,
    toy_discrepancies,
    toy_loglik_exact,
    toy_reference_theta,
    toy_true_posterior,
)

__all__ = [
    "LOG_FLOOR",
    "IsotropicGaussian",
    "MLBAConfig",
    "MLBAData",
    "ToyConfig",
    "ToyData",
    "ToyPosterior",
    "load_reference_attributes",
    "make_reference_attributes",
    "mlba_choice_probability",
    "mlba_discrepancies",
    "mlba_drift_means",
    "mlba_drift_means_all",
    "mlba_loglik_batch",
    "mlba_loglik_closed_form",
    "mlba_prior_bounds",
    "mlba_reference_theta",
    "mlba_replicated_discrepancies",
    "mnl_fit_mle",
    "mnl_loglik",
    "mnl_score",
    "mnl_score_summary",
    "read_attributes_csv",
    "simulate_mlba",
    "simulate_toy",
    "toy_discrepancies",
    "toy_loglik_exact",
    "toy_reference_theta",
    "toy_true_posterior",
    "write_attributes_csv",
]
