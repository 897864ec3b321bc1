"""Approximate log-likelihoods built from a fitted discrepancy surrogate.

The surrogate models expected discrepancies between simulated and observed
data.  A simulation is "close enough" when its discrepancy vector falls
below a tolerance, and the probability of that event under the surrogate's
Gaussian predictive distribution (inflated by the simulation-noise
covariance) is the approximate likelihood.  With one discrepancy this is a
univariate normal tail probability; with two it is a bivariate one, and the
joint event factorizes exactly into a marginal times a conditional, which
is how the per-source and conditional modes are defined.

Also houses the supporting estimators: tolerance selection by empirical
quantile, simulation-noise covariance estimation by repeated simulation at
the best-matching training point, and median-absolute-deviation scaling of
raw discrepancy columns.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_ndtr

from .bvn import log_bvn_cdf
from .exceptions import ContractError, SimulatorError
from .gp import FittedSurrogate, GPTrainingSet, NoiseModel

# Margins passed to the bivariate CDF are clipped here.  log_bvn_cdf is
# accurate over this envelope, and beyond it the event probabilities are
# below exp(-680), far outside anything a sampler can distinguish.  The
# univariate path does not clip: scipy's log_ndtr switches to the Mills
# asymptote internally and stays exact at any argument.
_MARGIN_CLIP = 37.0

MODES = ("joint", "source1", "source2", "cond_2_given_1", "cond_1_given_2")


@dataclass(frozen=True)
class ToleranceVector:
    """Per-discrepancy tolerance thresholds and the quantile levels behind them.

    Parameters
    ----------
    values : ndarray, shape (K,)
        Tolerance for each discrepancy component, in the same units as the
        surrogate's training outputs.  Typically positive for raw
        discrepancies; may be negative when discrepancies are modeled on
        the log scale.
    q : ndarray, shape (K,)
        Quantile level each tolerance was derived from.
    """

    values: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        qq = np.asarray(self.q, dtype=float).reshape(-1)
        if v.size not in (1, 2):
            raise ContractError(f"expected 1 or 2 tolerances, got {v.size}")
        if qq.size != v.size:
            raise ContractError("tolerance values and quantile levels disagree in length")
        if not np.all(np.isfinite(v)):
            raise ContractError("tolerances must be finite")
        if np.any(qq <= 0.0) or np.any(qq >= 1.0):
            raise ContractError("quantile levels must lie strictly inside (0, 1)")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "q", qq)
        v.setflags(write=False)
        qq.setflags(write=False)

    @property
    def K(self):
        return self.values.size

    def as_dict(self):
        return {"values": self.values.tolist(), "q": self.q.tolist()}


def select_tolerance(training, q=0.05):
    """Empirical per-column quantile of the training discrepancies.

    Uses linear interpolation between order statistics (numpy's default
    quantile method), so for a column (1,2,3,4,5) and q=0.5 the result is
    exactly 3.

    Parameters
    ----------
    training : GPTrainingSet
    q : float or sequence of float
        Quantile level, either shared across columns or one per column.

    Returns
    -------
    ToleranceVector
    """
    if not isinstance(training, GPTrainingSet):
        raise ContractError("select_tolerance expects a GPTrainingSet")
    if training.n < 2:
        raise ContractError("tolerance selection needs at least 2 training rows")
    qq = np.asarray(q, dtype=float).reshape(-1)
    if qq.size == 1:
        qq = np.full(training.K, qq[0])
    if qq.size != training.K:
        raise ContractError(
            f"got {qq.size} quantile levels for {training.K} discrepancy columns"
        )
    if np.any(qq <= 0.0) or np.any(qq >= 1.0):
        raise ContractError("quantile levels must lie strictly inside (0, 1)")
    t = np.array(
        [np.quantile(training.outputs[:, k], qq[k]) for k in range(training.K)]
    )
    return ToleranceVector(t, qq)


@dataclass(frozen=True)
class DiscrepancyScaling:
    """Diagonal median-absolute-deviation scaling of discrepancy columns.

    ``apply`` divides each column by its MAD; ``combine`` additionally sums
    the scaled columns into the single scalar used by the one-objective
    variant of the method.
    """

    mad: np.ndarray
    n_samples: int = field(default=0)

    def __post_init__(self):
        m = np.asarray(self.mad, dtype=float).reshape(-1)
        if m.size == 0:
            raise ContractError("scaling needs at least one column")
        if not np.all(np.isfinite(m)) or np.any(m <= 0.0):
            raise ContractError("MAD values must be finite and positive")
        object.__setattr__(self, "mad", m)
        m.setflags(write=False)

    @property
    def V(self):
        """The diagonal scaling matrix itself."""
        return np.diag(self.mad)

    def apply(self, delta):
        """Scale discrepancy rows: delta / MAD, columnwise."""
        delta = np.asarray(delta, dtype=float)
        if delta.shape[-1] != self.mad.size:
            raise ContractError(
                f"discrepancy has {delta.shape[-1]} columns, scaling has {self.mad.size}"
            )
        return delta / self.mad

    def combine(self, delta):
        """Sum of MAD-scaled columns: the combined scalar discrepancy."""
        return self.apply(delta).sum(axis=-1)

    def as_dict(self):
        return {"mad": self.mad.tolist(), "n_samples": int(self.n_samples)}


def mad_scaling(prior_sampler, discrepancy_fn, n=100, seed=0):
    """Estimate MAD scaling factors from prior-predictive simulations.

    Draws ``n`` parameters from the prior, simulates each once, and takes
    the median absolute deviation of every discrepancy column.  Draw j uses
    its own generator seeded by (seed, j), so results do not depend on how
    callers batch the work.

    Parameters
    ----------
    prior_sampler : callable(rng) -> (p,) ndarray
    discrepancy_fn : callable(theta, rng) -> (K,) ndarray
    n : int
        Number of prior simulations, at least 10.
    seed : int

    Raises
    ------
    ContractError
        If any column has zero MAD (a constant column cannot be scaled).
    """
    if n < 10:
        raise ContractError(f"MAD scaling needs n >= 10 prior draws, got {n}")
    rows = []
    for j in range(n):
        rng = np.random.default_rng((seed, j))
        theta = np.asarray(prior_sampler(rng), dtype=float)
        d = np.asarray(discrepancy_fn(theta, rng), dtype=float).reshape(-1)
        rows.append(d)
    D = np.asarray(rows)
    med = np.median(D, axis=0)
    mad = np.median(np.abs(D - med), axis=0)
    for k in range(mad.size):
        if mad[k] <= 0.0:
            raise ContractError(
                f"discrepancy column {k + 1} has zero median absolute deviation "
                f"over {n} prior simulations; cannot scale a constant column"
            )
    return DiscrepancyScaling(mad, n_samples=n)


def estimate_noise_cov(simulate, surrogate, n_sigma=100, seed=0):
    """Estimate the simulation-noise covariance by repeated simulation.

    Picks the training point whose observed discrepancy best matches the
    surrogate's prediction there, in the Mahalanobis metric of the
    predictive covariance (latent covariance plus the surrogate's own noise
    term, so the metric is well conditioned at interpolated points).  Runs
    ``n_sigma`` fresh simulations at that parameter value and returns the
    sample covariance of the discrepancies, regularized by 1e-8 on the
    diagonal.

    Parameters
    ----------
    simulate : callable(theta, rng) -> (K,) ndarray
    surrogate : FittedSurrogate
    n_sigma : int
        Number of repeated simulations, at least 2.
    seed : int
        Repetition j uses generator seed (seed, j).

    Returns
    -------
    NoiseModel
    """
    if not isinstance(surrogate, FittedSurrogate):
        raise ContractError("estimate_noise_cov expects a FittedSurrogate")
    if n_sigma < 2:
        raise ContractError(f"noise estimation needs n_sigma >= 2, got {n_sigma}")
    training = surrogate.training
    mean, cov = surrogate.predict(training.inputs)
    resid = training.outputs - mean
    K = training.K
    total = cov + surrogate.noise.cov
    scores = np.empty(training.n)
    for i in range(training.n):
        scores[i] = resid[i] @ np.linalg.solve(total[i], resid[i])
    theta_sel = training.inputs[np.argmin(scores)]

    draws = np.empty((n_sigma, K))
    for j in range(n_sigma):
        rng = np.random.default_rng((seed, j))
        try:
            d = np.asarray(simulate(theta_sel, rng), dtype=float).reshape(-1)
        except Exception as exc:
            raise SimulatorError(
                f"noise-covariance simulation {j} (seed ({seed}, {j})) failed: {exc}"
            ) from exc
        if d.size != K or not np.all(np.isfinite(d)):
            raise SimulatorError(
                f"noise-covariance simulation {j} returned an invalid "
                f"discrepancy vector: {d!r}"
            )
        draws[j] = d

    if K == 1:
        return NoiseModel.univariate(float(np.var(draws[:, 0], ddof=1)) + 1e-8)
    C = np.cov(draws.T, ddof=1) + 1e-8 * np.eye(K)
    C = 0.5 * (C + C.T)
    return NoiseModel.bivariate(C)


def _moments(mean, total_cov, tol):
    """Standardized tolerance margins and (for K=2) the correlation.

    Returns z of shape (m, K) where z_k = (t_k - mean_k) / sd_k with sd
    from the total (predictive + simulation-noise) covariance, and rho of
    shape (m,) or None for K=1.  K=2 margins are clipped to the envelope
    where the bivariate log-CDF is accurate.
    """
    var = np.stack([total_cov[:, k, k] for k in range(mean.shape[1])], axis=1)
    if np.any(var <= 0.0):
        raise ContractError("total covariance has a non-positive diagonal entry")
    z = (tol[None, :] - mean) / np.sqrt(var)
    if mean.shape[1] == 1:
        return z, None
    z = np.clip(z, -_MARGIN_CLIP, _MARGIN_CLIP)
    rho = total_cov[:, 0, 1] / np.sqrt(var[:, 0] * var[:, 1])
    rho = np.clip(rho, -(1.0 - 1e-15), 1.0 - 1e-15)
    return z, rho


def log_tail_joint(mean, total_cov, tol):
    """Log probability that every discrepancy falls below its tolerance."""
    z, rho = _moments(mean, total_cov, tol)
    if rho is None:
        return log_ndtr(z[:, 0])
    return log_bvn_cdf(z[:, 0], z[:, 1], rho)


def log_tail_marginal(mean, total_cov, tol, source):
    """Log probability that one discrepancy falls below its tolerance."""
    if source not in (1, 2):
        raise ContractError(f"source must be 1 or 2, got {source!r}")
    z, rho = _moments(mean, total_cov, tol)
    if rho is None and source == 2:
        raise ContractError("a one-output surrogate has no second source")
    return log_ndtr(z[:, source - 1])


def log_tail_conditional(mean, total_cov, tol, direction):
    """Log conditional tail probability of one source given the other.

    Computed as the literal difference between the joint and the
    conditioning marginal (the exact decomposition of the joint event), so
    the chain-rule identity joint = marginal + conditional holds to
    floating-point.
    """
    if direction not in ("2_given_1", "1_given_2"):
        raise ContractError(f"unknown conditioning direction {direction!r}")
    z, rho = _moments(mean, total_cov, tol)
    if rho is None:
        raise ContractError("conditional modes require a two-output surrogate")
    joint = log_bvn_cdf(z[:, 0], z[:, 1], rho)
    cond_on = 0 if direction == "2_given_1" else 1
    return joint - log_ndtr(z[:, cond_on])


class ApproxLikelihood:
    """Evaluable approximate log-likelihood in a fixed mode.

    Immutable once built; evaluation has no side effects, so one instance
    can be shared across parallel sampler chains.

    Parameters
    ----------
    surrogate : FittedSurrogate
    tolerance : ToleranceVector
        Must match the surrogate's number of outputs.
    noise : NoiseModel
        Simulation-noise covariance added to the predictive covariance.
    mode : str
        One of ``joint``, ``source1``, ``source2``, ``cond_2_given_1``,
        ``cond_1_given_2``.  One-output surrogates support only ``joint``.
    """

    def __init__(self, surrogate, tolerance, noise, mode="joint"):
        if not isinstance(surrogate, FittedSurrogate):
            raise ContractError("ApproxLikelihood expects a FittedSurrogate")
        if not isinstance(tolerance, ToleranceVector):
            raise ContractError("tolerance must be a ToleranceVector")
        if not isinstance(noise, NoiseModel):
            raise ContractError("noise must be a NoiseModel")
        K = surrogate.training.K
        if tolerance.K != K:
            raise ContractError(
                f"tolerance has {tolerance.K} components for a {K}-output surrogate"
            )
        if noise.K != K:
            raise ContractError(
                f"noise model has {noise.K} components for a {K}-output surrogate"
            )
        if mode not in MODES:
            raise ContractError(f"unknown mode {mode!r}; expected one of {MODES}")
        if K == 1 and mode != "joint":
            raise ContractError(
                f"mode {mode!r} requires a two-output surrogate"
            )
        self.surrogate = surrogate
        self.tolerance = tolerance
        self.noise = noise
        self.mode = mode

    @property
    def K(self):
        return self.surrogate.training.K

    def log_likelihood(self, theta):
        """Approximate log-likelihood at one point (p,) or a batch (m, p)."""
        theta = np.asarray(theta, dtype=float)
        single = theta.ndim == 1
        Q = np.atleast_2d(theta)
        mean, cov = self.surrogate.predict(Q)
        total = cov + self.noise.cov[None, :, :]
        t = self.tolerance.values
        if self.mode == "joint":
            out = log_tail_joint(mean, total, t)
        elif self.mode == "source1":
            out = log_tail_marginal(mean, total, t, 1)
        elif self.mode == "source2":
            out = log_tail_marginal(mean, total, t, 2)
        elif self.mode == "cond_2_given_1":
            out = log_tail_conditional(mean, total, t, "2_given_1")
        else:
            out = log_tail_conditional(mean, total, t, "1_given_2")
        return float(out[0]) if single else out

    __call__ = log_likelihood

    def as_dict(self):
        return {
            "mode": self.mode,
            "tolerance": self.tolerance.as_dict(),
            "noise": self.noise.as_dict(),
        }
