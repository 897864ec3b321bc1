"""Gaussian-mean benchmark with two data sources sharing one parameter.

The model observes two independent views of the same mean vector: a batch of
iid Gaussian draws, and a drifting random walk recorded on an evenly spaced
time grid (so the walk's increments are iid Gaussians whose mean is the
parameter times the grid step). Because both views are conjugate under a
Gaussian prior, the exact per-source and joint posteriors are available in
closed form and serve as ground truth for the approximate-inference stack.

Three variants control how the parameter vector maps to the two sources:

``shared``
    one vector drives both sources (the well-specified case).
``misspecified``
    the two sources are generated from two different vectors, stacked as
    ``theta = [theta_gaussian, theta_path]``; fitting the shared model to
    such data makes the sources disagree on purpose.
``noshare``
    a ``dim``-vector where the first ``dim - 2`` coordinates drive both
    sources, coordinate ``dim - 1`` belongs to the Gaussian view only and
    coordinate ``dim`` to the walk only (data dimension ``dim - 1``).
"""

import os
from dataclasses import dataclass, field

import numpy as np

from mobolfi.exceptions import ContractError

VARIANTS = ("shared", "misspecified", "noshare")


@dataclass(frozen=True)
class ToyConfig:
    """Dimensions and noise scale of the two-source Gaussian benchmark.

    Parameters
    ----------
    dim : int
        Parameter dimension. Data dimension equals ``dim`` for the shared
        and misspecified variants and ``dim - 1`` for ``noshare``.
    n_gaussian : int
        Number of iid Gaussian observations (first source).
    n_path : int
        Number of random-walk observations (second source), including the
        fixed zero starting point.
    sigma : float
        Diffusion scale of the walk.
    horizon : float
        Total time span of the walk; the grid step is
        ``horizon / (n_path - 1)``.
    variant : str
        One of ``shared``, ``misspecified``, ``noshare``.
    """

    dim: int = 10
    n_gaussian: int = 20
    n_path: int = 50
    sigma: float = 0.5
    horizon: float = 3.0
    variant: str = "shared"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ContractError(f"unknown variant {self.variant!r}")
        if self.dim < 1:
            raise ContractError("dim must be at least 1")
        if self.variant == "noshare" and self.dim < 3:
            raise ContractError(
                "noshare needs dim >= 3 (a shared block plus one private "
                "coordinate per source)"
            )
        if self.n_gaussian < 2 or self.n_path < 2:
            raise ContractError("need at least two observations per source")
        if not (np.isfinite(self.sigma) and self.sigma > 0.0):
            raise ContractError("sigma must be positive")
        if not (np.isfinite(self.horizon) and self.horizon > 0.0):
            raise ContractError("horizon must be positive")

    @property
    def step(self):
        """Time-grid spacing of the walk."""
        return self.horizon / (self.n_path - 1)

    @property
    def data_dim(self):
        return self.dim - 1 if self.variant == "noshare" else self.dim

    @property
    def theta_dim(self):
        """Length of the parameter vector the simulator expects."""
        return 2 * self.dim if self.variant == "misspecified" else self.dim


@dataclass(frozen=True)
class ToyData:
    """One dataset of the benchmark: Gaussian draws plus a walk.

    ``gaussian`` has one observation per row; ``path`` holds the walk on the
    time grid, and its first row is always the zero vector.
    """

    gaussian: np.ndarray
    path: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gaussian, dtype=float)
        w = np.asarray(self.path, dtype=float)
        if g.ndim != 2 or w.ndim != 2:
            raise ContractError("gaussian and path must be 2-d arrays")
        if w.shape[0] < 1:
            raise ContractError("path needs at least its starting row")
        if g.shape[0] > 0 and g.shape[1] != w.shape[1]:
            raise ContractError(
                f"dimension mismatch: gaussian has {g.shape[1]} columns, "
                f"path has {w.shape[1]}"
            )
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(w))):
            raise ContractError("data must be finite")
        if np.any(w[0] != 0.0):
            raise ContractError("path must start at the zero vector")
        object.__setattr__(self, "gaussian", g)
        object.__setattr__(self, "path", w)
        g.setflags(write=False)
        w.setflags(write=False)

    @property
    def increments(self):
        """Differences of consecutive walk rows, shape (n_path - 1, d)."""
        return np.diff(self.path, axis=0)

    def to_csv(self, out_dir):
        """Write ``X.csv`` (Gaussian draws) and ``W.csv`` (walk) under out_dir."""
        os.makedirs(out_dir, exist_ok=True)
        d = self.path.shape[1]
        np.savetxt(
            os.path.join(out_dir, "X.csv"),
            self.gaussian,
            fmt="%.17g",
            delimiter=",",
            comments="",
            header=",".join(f"x_{j + 1}" for j in range(d)),
        )
        np.savetxt(
            os.path.join(out_dir, "W.csv"),
            self.path,
            fmt="%.17g",
            delimiter=",",
            comments="",
            header=",".join(f"w_{j + 1}" for j in range(d)),
        )

    @classmethod
    def from_csv(cls, out_dir):
        g = np.loadtxt(
            os.path.join(out_dir, "X.csv"), delimiter=",", skiprows=1, ndmin=2
        )
        w = np.loadtxt(
            os.path.join(out_dir, "W.csv"), delimiter=",", skiprows=1, ndmin=2
        )
        return cls(g, w)


def toy_reference_theta(dim=10):
    """The alternating (-0.7, 0.7, ...) vector used for reference datasets."""
    theta = np.full(dim, -0.7)
    theta[1::2] = 0.7
    return theta


def _theta_sources(theta, cfg):
    """Split a parameter vector into per-source mean vectors.

    Returns ``(theta_gaussian, theta_path)``, each of length
    ``cfg.data_dim``, according to the variant's sharing pattern.
    """
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.size != cfg.theta_dim:
        raise ContractError(
            f"variant {cfg.variant!r} expects a parameter vector of length "
            f"{cfg.theta_dim}, got {theta.size}"
        )
    if not np.all(np.isfinite(theta)):
        raise ContractError("parameter vector must be finite")
    if cfg.variant == "shared":
        return theta, theta
    if cfg.variant == "misspecified":
        return theta[: cfg.dim], theta[cfg.dim :]
    # noshare: the last two coordinates are source-private.
    shared = theta[: cfg.dim - 2]
    tg = np.concatenate([shared, theta[cfg.dim - 2 : cfg.dim - 1]])
    tw = np.concatenate([shared, theta[cfg.dim - 1 :]])
    return tg, tw


def simulate_toy(theta, cfg, seed):
    """Draw one dataset of the two-source benchmark.

    The Gaussian block is consumed from the generator first (``n_gaussian``
    rows), then the walk increments; the walk itself is the cumulative sum
    of increments ``N(theta_path * step, sigma^2 * step * I)`` prepended
    with the zero starting row. Deterministic given ``(theta, cfg, seed)``.
    """
    tg, tw = _theta_sources(theta, cfg)
    rng = np.random.default_rng(seed)
    d = cfg.data_dim
    gaussian = tg + rng.standard_normal((cfg.n_gaussian, d))
    incr = tw * cfg.step + cfg.sigma * np.sqrt(cfg.step) * rng.standard_normal(
        (cfg.n_path - 1, d)
    )
    path = np.vstack([np.zeros((1, d)), np.cumsum(incr, axis=0)])
    return ToyData(gaussian, path)


def toy_discrepancies(sim, obs):
    """Euclidean distances between the two datasets' summary statistics.

    The first component compares the Gaussian sample means, the second the
    mean walk increments. Returns a pair of floats.
    """
    if sim.gaussian.shape != obs.gaussian.shape or sim.path.shape != obs.path.shape:
        raise ContractError("simulated and observed datasets have different shapes")
    d1 = float(np.linalg.norm(sim.gaussian.mean(axis=0) - obs.gaussian.mean(axis=0)))
    d2 = float(np.linalg.norm(sim.increments.mean(axis=0) - obs.increments.mean(axis=0)))
    return d1, d2


def toy_loglik_exact(thetas, obs, cfg):
    """Exact log-likelihood of both sources, vectorized over parameter rows.

    Accepts a single vector or an (m, theta_dim) batch and returns a float
    or an (m,) array. Sufficient statistics are precomputed, so the per-row
    cost does not grow with the dataset.
    """
    thetas = np.asarray(thetas, dtype=float)
    single = thetas.ndim == 1
    T = np.atleast_2d(thetas)
    if T.shape[1] != cfg.theta_dim:
        raise ContractError(
            f"parameter rows must have length {cfg.theta_dim}, got {T.shape[1]}"
        )
    n, d = obs.gaussian.shape
    incr = obs.increments
    m_inc = incr.shape[0]
    delta = cfg.step
    var_inc = cfg.sigma ** 2 * delta

    gbar = obs.gaussian.mean(axis=0)
    ss_g = float(np.sum((obs.gaussian - gbar) ** 2))
    ibar = incr.mean(axis=0)
    ss_i = float(np.sum((incr - ibar) ** 2))

    out = np.empty(T.shape[0])
    const_g = -0.5 * n * d * np.log(2.0 * np.pi)
    const_i = -0.5 * m_inc * d * np.log(2.0 * np.pi * var_inc)
    for i, row in enumerate(T):
        tg, tw = _theta_sources(row, cfg)
        quad_g = ss_g + n * float(np.sum((gbar - tg) ** 2))
        quad_i = ss_i + m_inc * float(np.sum((ibar - tw * delta) ** 2))
        out[i] = const_g - 0.5 * quad_g + const_i - 0.5 * quad_i / var_inc
    return float(out[0]) if single else out


@dataclass(frozen=True)
class IsotropicGaussian:
    """Mean vector plus a single shared per-coordinate variance."""

    mean: np.ndarray
    var: float

    def __post_init__(self):
        m = np.asarray(self.mean, dtype=float).reshape(-1)
        object.__setattr__(self, "mean", m)
        m.setflags(write=False)
        if not (np.isfinite(self.var) and self.var > 0.0):
            raise ContractError("variance must be positive")

    @property
    def precision(self):
        return 1.0 / self.var


@dataclass(frozen=True)
class ToyPosterior:
    """Conjugate posteriors given each source alone and both together."""

    source1: IsotropicGaussian = field()
    source2: IsotropicGaussian = field()
    joint: IsotropicGaussian = field()


def toy_true_posterior(obs, cfg, prior_var=1.0):
    """Exact Gaussian posteriors under the shared variant.

    With a ``N(0, prior_var * I)`` prior, each source contributes an
    isotropic precision and a natural parameter: the Gaussian view adds
    ``n_obs`` precision at its sample mean, the walk adds
    ``(rows - 1) * step / sigma^2`` precision centered on the endpoint
    drift estimate. Empty sources contribute nothing, so passing a dataset
    with no Gaussian rows and a single path row returns the prior.
    """
    if cfg.variant != "shared":
        raise ContractError("the conjugate posterior applies to the shared variant")
    if not (np.isfinite(prior_var) and prior_var > 0.0):
        raise ContractError("prior variance must be positive")
    d = obs.path.shape[1]
    n = obs.gaussian.shape[0]
    m_inc = obs.path.shape[0] - 1
    delta = cfg.step

    prec0 = 1.0 / prior_var
    nat_g = n * obs.gaussian.mean(axis=0) if n > 0 else np.zeros(d)
    prec_g = float(n)
    # Summed increments telescope to the final path row.
    nat_w = obs.path[-1] / cfg.sigma ** 2 if m_inc > 0 else np.zeros(d)
    prec_w = m_inc * delta / cfg.sigma ** 2

    def _post(nat, prec):
        total = prec0 + prec
        return IsotropicGaussian(nat / total, 1.0 / total)

    return ToyPosterior(
        source1=_post(nat_g, prec_g),
        source2=_post(nat_w, prec_w),
        joint=_post(nat_g + nat_w, prec_g + prec_w),
    )
