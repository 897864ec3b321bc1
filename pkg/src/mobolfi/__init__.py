"""Likelihood-free inference with GP discrepancy surrogates.

Builds Gaussian-process surrogates of simulation discrepancies, acquires new
simulations with lower-confidence-bound or noisy expected-hypervolume rules,
turns the fitted surrogates into approximate likelihoods, and samples the
resulting posteriors with random-walk or differential-evolution MCMC.
"""

from mobolfi.exceptions import ContractError, EngineError, FitError, SimulatorError

__version__ = "0.1.0"

__all__ = [
    "ContractError",
    "EngineError",
    "FitError",
    "SimulatorError",
    "__version__",
]
