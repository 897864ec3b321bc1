"""Gradient-free MCMC: random-walk Metropolis and differential-evolution MCMC.

Both samplers target a boxed log-posterior and are deterministic given a
seed.  The differential-evolution sampler updates all chains in lockstep
generations: every proposal in a generation is built from the previous
generation's states, so the log-posterior can be evaluated for the whole
ensemble in one batched call, which is where essentially all the time goes
when the target wraps a surrogate.

Neither sampler uses gradients.  The surrogate log-likelihoods do not
expose derivatives, and for the dimensionalities handled here (p <= 10)
random-walk and differential-evolution moves mix adequately.
"""
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ContractError


class LogPosterior:
    """Boxed log-posterior: log prior plus log likelihood inside a box.

    Parameters
    ----------
    log_prior : callable
        Maps a batch (m, p) to log prior densities (m,).
    log_lik : callable
        Maps a batch (m, p) to log likelihoods (m,).  An ApproxLikelihood
        instance works directly.
    bounds : array-like, shape (p, 2)
        Support box; entries may be infinite.  Outside the box the
        log-posterior is -inf, inside it must be finite.
    """

    def __init__(self, log_prior, log_lik, bounds):
        b = np.asarray(bounds, dtype=float)
        if b.ndim != 2 or b.shape[1] != 2:
            raise ContractError(f"bounds must have shape (p, 2), got {b.shape}")
        if np.any(np.isnan(b)) or np.any(b[:, 0] >= b[:, 1]):
            raise ContractError("each bounds row needs lower < upper")
        self.log_prior = log_prior
        self.log_lik = log_lik
        self.bounds = b
        self.p = b.shape[0]

    def inside(self, thetas):
        T = np.atleast_2d(np.asarray(thetas, dtype=float))
        return np.all((T >= self.bounds[:, 0]) & (T <= self.bounds[:, 1]), axis=1)

    def batch(self, thetas):
        """Log-posterior values for a batch (m, p) of parameter points."""
        T = np.atleast_2d(np.asarray(thetas, dtype=float))
        if T.shape[1] != self.p:
            raise ContractError(f"expected {self.p}-dimensional points, got {T.shape[1]}")
        out = np.full(T.shape[0], -np.inf)
        ok = self.inside(T)
        if np.any(ok):
            vals = np.asarray(self.log_prior(T[ok]), dtype=float) + np.asarray(
                self.log_lik(T[ok]), dtype=float
            )
            if np.any(np.isnan(vals)):
                raise ContractError("log-posterior returned NaN inside the bounds")
            out[ok] = vals
        return out

    def __call__(self, theta):
        return float(self.batch(np.atleast_2d(theta))[0])


@dataclass
class ChainEnsemble:
    """Final state of a multi-chain run."""

    n_chains: int
    states: np.ndarray
    log_post: np.ndarray
    generation: int
    seed: int


@dataclass
class SampleResult:
    """Draws plus the bookkeeping a run manifest wants."""

    samples: np.ndarray
    log_post: np.ndarray
    acceptance_rate: float
    settings: dict = field(default_factory=dict)
    ensemble: ChainEnsemble = None

    def to_csv(self, path):
        p = self.samples.shape[1]
        header = ",".join([f"theta_{j + 1}" for j in range(p)] + ["log_post"])
        body = np.column_stack([self.samples, self.log_post])
        np.savetxt(path, body, delimiter=",", header=header, comments="", fmt="%.17g")


def read_samples_csv(path):
    """Read a samples CSV back into (samples, log_post)."""
    body = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return body[:, :-1], body[:, -1]


def rwm_sample(lp, init, steps, scale, seed=0):
    """Random-walk Metropolis with a Gaussian proposal.

    Per step the generator draws the proposal increments first, then the
    acceptance uniform; the chain is therefore bitwise reproducible for a
    given seed.

    Parameters
    ----------
    lp : LogPosterior
    init : (p,) array inside the bounds
    steps : int
        Number of recorded states (the initial point is not recorded).
    scale : float or (p,) array
        Proposal standard deviation per coordinate.
    seed : int

    Returns
    -------
    SampleResult
    """
    theta = np.asarray(init, dtype=float).reshape(-1)
    if theta.size != lp.p:
        raise ContractError(f"init has dimension {theta.size}, expected {lp.p}")
    if steps < 1:
        raise ContractError("steps must be positive")
    sc = np.broadcast_to(np.asarray(scale, dtype=float), (lp.p,)).copy()
    if np.any(sc < 0.0) or not np.all(np.isfinite(sc)):
        raise ContractError("proposal scale must be finite and non-negative")
    current = lp(theta)
    if not np.isfinite(current):
        raise ContractError("rwm initial point lies outside the posterior support")

    rng = np.random.default_rng(seed)
    out = np.empty((steps, lp.p))
    out_lp = np.empty(steps)
    accepted = 0
    for s in range(steps):
        prop = theta + sc * rng.standard_normal(lp.p)
        lp_prop = lp(prop)
        if np.log(rng.uniform()) < lp_prop - current:
            theta, current = prop, lp_prop
            accepted += 1
        out[s] = theta
        out_lp[s] = current
    return SampleResult(
        samples=out,
        log_post=out_lp,
        acceptance_rate=accepted / steps,
        settings={"sampler": "rwm", "steps": steps, "scale": sc.tolist(),
                  "seed": seed},
    )


def _distinct_pairs(rng, n_chains):
    """Indices (j, k) per chain with j != k and neither equal to the chain."""
    idx = np.arange(n_chains)
    J = rng.integers(0, n_chains, size=n_chains)
    K = rng.integers(0, n_chains, size=n_chains)
    bad = (J == idx) | (K == idx) | (J == K)
    while np.any(bad):
        m = int(bad.sum())
        J[bad] = rng.integers(0, n_chains, size=m)
        K[bad] = rng.integers(0, n_chains, size=m)
        bad = (J == idx) | (K == idx) | (J == K)
    return J, K


def demc_sample(lp, init, steps=16000, burn_in=13000, gamma="auto",
                migration_rate=0.5, jitter=1e-4, seed=0):
    """Differential-evolution MCMC with a migration move.

    Per generation, chain i proposes
    ``theta_i + gamma * (theta_j - theta_k) + eps`` with distinct random
    j, k != i taken from the previous generation's states and eps uniform
    on [-jitter, jitter]^p, accepted chain-wise by Metropolis.  Then, with
    probability ``migration_rate``, a random subset of chains (size uniform
    on {2, ..., n_chains}) performs a one-position cyclic shift of its
    states.  Because all chains share one target, the Metropolis ratio of
    that permutation is exactly one, so the shift always goes through and
    costs no model evaluations.  (A per-chain accept of the copied state,
    with rejections leaving duplicated states, would not preserve the
    target: it acts as a selection step and measurably deflates the
    sampled covariance.)

    Within a generation the generator is consumed in a fixed order
    (difference indices, jitter, acceptance uniforms, migration coin, then
    migration subset and uniforms), making runs bitwise reproducible.

    Parameters
    ----------
    lp : LogPosterior
    init : (n_chains, p) array
        Initial chain states, typically independent prior draws.
    steps : int
        Total generations; the pooled output holds the last
        ``steps - burn_in`` generations of every chain, generation-major.
    burn_in : int
    gamma : float or "auto"
        Difference-vector weight; "auto" gives 2.38 / sqrt(2 p).
    migration_rate : float in [0, 1]
    jitter : float >= 0
    seed : int

    Returns
    -------
    SampleResult
        With ``ensemble`` set to the final chain states.
    """
    states = np.array(init, dtype=float)
    if states.ndim != 2:
        raise ContractError("init must be an (n_chains, p) matrix")
    n_chains, p = states.shape
    if n_chains < 4:
        raise ContractError(f"differential-evolution MCMC needs >= 4 chains, got {n_chains}")
    if p != lp.p:
        raise ContractError(f"init has dimension {p}, log-posterior expects {lp.p}")
    if not (0 <= burn_in < steps):
        raise ContractError(f"need 0 <= burn_in < steps, got {burn_in} and {steps}")
    if not 0.0 <= migration_rate <= 1.0:
        raise ContractError("migration_rate must lie in [0, 1]")
    if jitter < 0.0:
        raise ContractError("jitter must be non-negative")
    g = 2.38 / np.sqrt(2.0 * p) if gamma == "auto" else float(gamma)

    log_post = lp.batch(states)
    if not np.all(np.isfinite(log_post)):
        raise ContractError("demc initial states must lie inside the posterior support")

    rng = np.random.default_rng(seed)
    keep = steps - burn_in
    out = np.empty((keep * n_chains, p))
    out_lp = np.empty(keep * n_chains)
    accepted = 0
    migrations_tried = 0
    migrations_accepted = 0

    for gen in range(steps):
        J, K = _distinct_pairs(rng, n_chains)
        eps = rng.uniform(-jitter, jitter, size=(n_chains, p)) if jitter > 0.0 \
            else np.zeros((n_chains, p))
        props = states + g * (states[J] - states[K]) + eps
        lp_props = lp.batch(props)
        accept = np.log(rng.uniform(size=n_chains)) < lp_props - log_post
        states[accept] = props[accept]
        log_post[accept] = lp_props[accept]
        accepted += int(accept.sum())

        if rng.uniform() < migration_rate:
            size = int(rng.integers(2, n_chains + 1))
            subset = rng.choice(n_chains, size=size, replace=False)
            donors = np.roll(subset, 1)
            # every chain targets the same posterior, so the Metropolis
            # ratio of this state permutation telescopes to exactly one
            # (each pairwise swap contributes pi(a)pi(b)/pi(b)pi(a)); the
            # shift is therefore always accepted, and costs no evaluations
            states[subset] = states[donors]
            log_post[subset] = log_post[donors]
            migrations_tried += 1
            migrations_accepted += 1

        if gen >= burn_in:
            sl = slice((gen - burn_in) * n_chains, (gen - burn_in + 1) * n_chains)
            out[sl] = states
            out_lp[sl] = log_post

    return SampleResult(
        samples=out,
        log_post=out_lp,
        acceptance_rate=accepted / (steps * n_chains),
        settings={
            "sampler": "demc", "n_chains": n_chains, "steps": steps,
            "burn_in": burn_in, "gamma": g, "migration_rate": migration_rate,
            "jitter": jitter, "seed": seed,
            "migration_acceptance_rate": (
                migrations_accepted / migrations_tried if migrations_tried else 0.0
            ),
        },
        ensemble=ChainEnsemble(
            n_chains=n_chains, states=states, log_post=log_post,
            generation=steps, seed=seed,
        ),
    )
