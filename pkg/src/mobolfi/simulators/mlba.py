"""Accumulator-race choice model with response times.

Each observation presents up to three alternatives described by three
attributes. Every alternative gets a drift rate built from attention-weighted
pairwise attribute comparisons, a uniform starting point, and a normal drift
draw truncated to be positive; the alternative whose accumulator reaches the
threshold first is chosen and the crossing time (plus a non-decision offset)
is the response time. The density of that race is available in closed form,
which makes the model a good stress test for likelihood-free methods: the
simulator is cheap and noisy while the exact posterior stays computable.

Parameter layout (6 free components), with the remaining quantities fixed in
the configuration::

    theta = (decay_pos, weight_1, weight_2, offset_2, offset_3,
             log(threshold - start_range))

``decay_pos`` damps attention weights on favorable comparisons, the fixed
``decay_negative`` damps unfavorable ones; ``weight_3`` and the first
alternative's offset are fixed for identifiability.
"""

import importlib.resources
import os
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import ndtr

from mobolfi.exceptions import ContractError, SimulatorError

_SQRT2PI = np.sqrt(2.0 * np.pi)
_N_ATTRIBUTES = 3
# Rejection rounds allowed when drawing positive drifts. Drift means are
# clamped nonnegative, so each round accepts at least half the remainder
# in expectation and the cap is effectively unreachable.
_MAX_REJECTION_ROUNDS = 1_000_000

_DATA_PACKAGE = "mobolfi.simulators"
_ATTRIBUTES_FILE = "data/mlba_attributes.csv"


def _npdf(z):
    return np.exp(-0.5 * z * z) / _SQRT2PI


@dataclass(frozen=True)
class MLBAConfig:
    """Attribute matrix plus the fixed constants of the race model.

    Parameters
    ----------
    attributes : ndarray
        Shape (n_obs, 3 * n_alternatives), alternative-major: columns
        ``[a1_x1, a1_x2, a1_x3, a2_x1, ...]``. Between one and three
        alternatives are supported.
    start_range : float
        Upper end of the uniform starting-point interval.
    drift_sd : float
        Standard deviation of the (truncated) drift draw.
    nondecision : float
        Additive response-time offset outside the race.
    intercept : float
        Baseline drift before comparisons and offsets.
    decay_negative : float
        Attention decay applied to unfavorable pairwise comparisons.
    weight_third : float
        Fixed attribute weight for the third attribute column.
    offset_first : float
        Fixed drift offset of the first alternative.
    """

    attributes: np.ndarray
    start_range: float = 1.0
    drift_sd: float = 1.0
    nondecision: float = 0.0
    intercept: float = 2.0
    decay_negative: float = 0.8
    weight_third: float = -6.0
    offset_first: float = 0.0

    def __post_init__(self):
        x = np.asarray(self.attributes, dtype=float)
        if x.ndim != 2 or x.shape[0] < 1:
            raise ContractError("attributes must be a nonempty 2-d array")
        if x.shape[1] % _N_ATTRIBUTES != 0:
            raise ContractError(
                f"attribute columns must come in groups of {_N_ATTRIBUTES}"
            )
        m = x.shape[1] // _N_ATTRIBUTES
        if not 1 <= m <= 3:
            raise ContractError("between one and three alternatives are supported")
        if not np.all(np.isfinite(x)):
            raise ContractError("attributes must be finite")
        if not (np.isfinite(self.start_range) and self.start_range > 0.0):
            raise ContractError("start_range must be positive")
        if not (np.isfinite(self.drift_sd) and self.drift_sd > 0.0):
            raise ContractError("drift_sd must be positive")
        object.__setattr__(self, "attributes", x)
        x.setflags(write=False)

    @property
    def n_obs(self):
        return self.attributes.shape[0]

    @property
    def n_alternatives(self):
        return self.attributes.shape[1] // _N_ATTRIBUTES

    def threshold(self, theta):
        """Accumulator threshold implied by the last parameter component."""
        theta = np.asarray(theta, dtype=float).reshape(-1)
        return self.start_range + np.exp(theta[-1])


def _unpack(theta, cfg):
    """Split theta into (decay_pos, weights, offsets, threshold)."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.size != 6:
        raise ContractError(f"theta must have 6 components, got {theta.size}")
    if not np.all(np.isfinite(theta)):
        raise ContractError("theta must be finite")
    decay_pos = theta[0]
    weights = np.array([theta[1], theta[2], cfg.weight_third])
    offsets = np.array([cfg.offset_first, theta[3], theta[4]])[: cfg.n_alternatives]
    threshold = cfg.start_range + np.exp(theta[5])
    return decay_pos, weights, offsets, threshold


def mlba_drift_means_all(theta, cfg):
    """Drift means for every observation, shape (n_obs, n_alternatives).

    For alternative a, the drift is the intercept plus its offset plus the
    attention-weighted sum of signed attribute comparisons against every
    other alternative, clamped at zero. A comparison ``w_k * (x_ak - x_bk)``
    is damped by ``exp(-decay_pos * |.|)`` when favorable (nonnegative) and
    by ``exp(-decay_negative * |.|)`` when unfavorable.
    """
    decay_pos, weights, offsets, _ = _unpack(theta, cfg)
    m = cfg.n_alternatives
    x = cfg.attributes.reshape(cfg.n_obs, m, _N_ATTRIBUTES)
    # diff[j, a, b, k] = x_ak - x_bk for observation j; the a == b diagonal
    # contributes exactly zero and needs no masking.
    diff = x[:, :, None, :] - x[:, None, :, :]
    signed = weights * diff
    damp = np.where(signed >= 0.0, decay_pos, cfg.decay_negative)
    contrib = np.exp(-damp * np.abs(signed)) * signed
    return np.maximum(cfg.intercept + offsets + contrib.sum(axis=(2, 3)), 0.0)


def mlba_drift_means(theta, cfg, obs_index):
    """Drift-mean vector of a single observation."""
    if not 0 <= obs_index < cfg.n_obs:
        raise ContractError(f"obs_index {obs_index} outside 0..{cfg.n_obs - 1}")
    return mlba_drift_means_all(theta, cfg)[obs_index]


@dataclass(frozen=True)
class MLBAData:
    """Response times and one-hot choices, one row per observation."""

    rt: np.ndarray
    ch: np.ndarray

    def __post_init__(self):
        rt = np.asarray(self.rt, dtype=float).reshape(-1)
        ch = np.asarray(self.ch, dtype=float)
        if ch.ndim != 2 or ch.shape[0] != rt.size:
            raise ContractError("ch must be 2-d with one row per response time")
        if not (np.all(np.isfinite(rt)) and np.all(np.isfinite(ch))):
            raise ContractError("data must be finite")
        if not np.all(np.isin(ch, (0.0, 1.0))):
            raise ContractError("choices must be one-hot")
        if not np.all(ch.sum(axis=1) == 1.0):
            raise ContractError("each choice row must select exactly one alternative")
        object.__setattr__(self, "rt", rt)
        object.__setattr__(self, "ch", ch)
        rt.setflags(write=False)
        ch.setflags(write=False)

    @property
    def n_obs(self):
        return self.rt.size

    @property
    def chosen(self):
        """Index of the chosen alternative per row."""
        return np.argmax(self.ch, axis=1)

    def to_csv(self, out_dir):
        """Write ``rt_ch.csv`` with columns rt, ch1, ch2, ... under out_dir."""
        os.makedirs(out_dir, exist_ok=True)
        m = self.ch.shape[1]
        np.savetxt(
            os.path.join(out_dir, "rt_ch.csv"),
            np.column_stack([self.rt, self.ch]),
            fmt="%.17g",
            delimiter=",",
            comments="",
            header="rt," + ",".join(f"ch{a + 1}" for a in range(m)),
        )

    @classmethod
    def from_csv(cls, out_dir):
        raw = np.loadtxt(
            os.path.join(out_dir, "rt_ch.csv"), delimiter=",", skiprows=1, ndmin=2
        )
        return cls(raw[:, 0], raw[:, 1:])


def simulate_mlba(theta, cfg, seed):
    """Run the race once per attribute row.

    The generator is consumed in a fixed order: one uniform block for the
    starting points, then whole-array normal rounds for the drifts, keeping
    rejected entries pending until every drift is positive. Deterministic
    given ``(theta, cfg, seed)``.
    """
    d = mlba_drift_means_all(theta, cfg)
    _, _, _, threshold = _unpack(theta, cfg)
    n, m = d.shape
    rng = np.random.default_rng(seed)
    starts = rng.uniform(0.0, cfg.start_range, size=(n, m))

    drifts = np.empty((n, m))
    pending = np.ones((n, m), dtype=bool)
    for _ in range(_MAX_REJECTION_ROUNDS):
        draw = rng.normal(d, cfg.drift_sd)
        take = pending & (draw > 0.0)
        drifts[take] = draw[take]
        pending &= ~take
        if not pending.any():
            break
    else:
        raise SimulatorError(
            "positive-drift rejection sampling did not terminate"
        )

    times = (threshold - starts) / drifts
    winner = np.argmin(times, axis=1)
    rows = np.arange(n)
    rt = times[rows, winner] + cfg.nondecision
    ch = np.zeros((n, m))
    ch[rows, winner] = 1.0
    return MLBAData(rt, ch)


def _race_terms(theta, data, cfg):
    """Per-row densities and survival terms of the race.

    Returns ``(log_f, survival)`` where ``log_f[j]`` is the log density of
    the chosen accumulator finishing at the observed time and
    ``survival[j, b]`` is the probability that accumulator b has not
    finished by then (both under positive-drift truncation).
    """
    if data.n_obs != cfg.n_obs:
        raise ContractError(
            f"data has {data.n_obs} rows but the configuration has {cfg.n_obs}"
        )
    t = data.rt - cfg.nondecision
    bad = np.nonzero(t <= 0.0)[0]
    if bad.size:
        raise ContractError(
            f"row {bad[0]}: response time must exceed the non-decision offset"
        )
    d = mlba_drift_means_all(theta, cfg)
    _, _, _, chi = _unpack(theta, cfg)
    a_range = cfg.start_range
    s = cfg.drift_sd

    ts = t[:, None] * s
    z_far = (chi - a_range - t[:, None] * d) / ts
    z_near = (chi - t[:, None] * d) / ts
    phi_far, phi_near = ndtr(z_far), ndtr(z_near)
    pdf_far, pdf_near = _npdf(z_far), _npdf(z_near)
    trunc = ndtr(d / s)

    dens = (-d * phi_far + s * pdf_far + d * phi_near - s * pdf_near) / (
        a_range * trunc
    )
    cdf = (
        1.0
        + (chi - a_range - t[:, None] * d) / a_range * phi_far
        - (chi - t[:, None] * d) / a_range * phi_near
        + ts / a_range * (pdf_far - pdf_near)
    ) / trunc
    # Floor against cancellation; the exact values are nonnegative.
    dens = np.maximum(dens, 1e-300)
    survival = np.maximum(1.0 - cdf, 1e-300)

    rows = np.arange(data.n_obs)
    log_f = np.log(dens[rows, data.chosen])
    return log_f, survival


def mlba_loglik_closed_form(theta, data, cfg):
    """Exact log-likelihood of (response time, choice) rows.

    Sums, over observations, the log joint density of the chosen
    accumulator finishing at the observed time while every other
    accumulator is still running.
    """
    log_f, survival = _race_terms(theta, data, cfg)
    log_surv = np.log(survival)
    rows = np.arange(data.n_obs)
    log_surv[rows, data.chosen] = 0.0
    total = log_f + log_surv.sum(axis=1)
    bad = np.nonzero(~np.isfinite(total))[0]
    if bad.size:
        raise ContractError(f"row {bad[0]}: non-finite log-likelihood term")
    return float(total.sum())


def mlba_loglik_batch(thetas, data, cfg):
    """Closed-form log-likelihood for each parameter row, shape (m,)."""
    T = np.atleast_2d(np.asarray(thetas, dtype=float))
    return np.array([mlba_loglik_closed_form(row, data, cfg) for row in T])


def mlba_choice_probability(theta, cfg, obs_index):
    """Closed-form choice probabilities of one observation, by quadrature.

    Integrates the joint race density over time for each alternative. The
    integration grid is split at the bulk of each accumulator's finishing
    times so the adaptive rule sees every peak.
    """
    d = mlba_drift_means(theta, cfg, obs_index)
    _, _, _, chi = _unpack(theta, cfg)
    a_range, s = cfg.start_range, cfg.drift_sd
    m = d.size

    def joint_density(t, target):
        z_far = (chi - a_range - t * d) / (t * s)
        z_near = (chi - t * d) / (t * s)
        phi_far, phi_near = ndtr(z_far), ndtr(z_near)
        pdf_far, pdf_near = _npdf(z_far), _npdf(z_near)
        trunc = ndtr(d / s)
        dens = (-d * phi_far + s * pdf_far + d * phi_near - s * pdf_near) / (
            a_range * trunc
        )
        cdf = (
            1.0
            + (chi - a_range - t * d) / a_range * phi_far
            - (chi - t * d) / a_range * phi_near
            + t * s / a_range * (pdf_far - pdf_near)
        ) / trunc
        surv = np.clip(1.0 - cdf, 0.0, 1.0)
        value = max(dens[target], 0.0)
        for b in range(m):
            if b != target:
                value *= surv[b]
        return value

    # Typical finishing times per accumulator; slow drifts get a wide span.
    scales = (chi - 0.5 * a_range) / np.maximum(d, 0.1)
    cuts = np.unique(
        np.concatenate([[0.0], np.sort(scales) * 0.2, np.sort(scales) * 3.0])
    )
    probs = np.empty(m)
    for a in range(m):
        total = 0.0
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            total += quad(joint_density, lo, hi, args=(a,), limit=200)[0]
        total += quad(joint_density, cuts[-1], np.inf, args=(a,), limit=200)[0]
        probs[a] = total
    return probs


def mlba_discrepancies(sim, obs):
    """Distances between two datasets: sorted log response times, choices.

    The first component is the L1 distance of the sorted log response
    times. The second compares choices row by row: the mean absolute
    one-hot difference vector's L1 norm divided by the number of
    alternatives, which for one-hot rows is 2/(3n) times the number of
    rows whose choices disagree.
    """
    if sim.rt.size != obs.rt.size or sim.ch.shape != obs.ch.shape:
        raise ContractError("simulated and observed datasets have different shapes")
    if sim.ch.shape[1] != 3:
        raise ContractError("choice discrepancy is defined for three alternatives")
    if np.any(sim.rt <= 0.0) or np.any(obs.rt <= 0.0):
        raise ContractError("response times must be positive to take logs")
    d1 = float(np.abs(np.sort(np.log(sim.rt)) - np.sort(np.log(obs.rt))).sum())
    d2 = float(np.abs(obs.ch - sim.ch).mean(axis=0).sum() / 3.0)
    return d1, d2


# Log-discrepancy floor keeping surrogate targets finite when a replicate
# reproduces the observed data exactly.
LOG_FLOOR = np.log(1e-12)


def mlba_replicated_discrepancies(theta, obs, cfg, n_replicates=50, seed=0):
    """Log-averaged discrepancies over fresh simulator replicates.

    The first component averages the sorted-log-response-time L1 distance
    over ``n_replicates`` simulations (divided by 3 per replicate count
    convention), the second averages the squared choice-count differences
    scaled by ``9 * S * n^2``; both are floored before the log. Replicate
    ``s`` uses the seed pair ``(seed, s)``.
    """
    if n_replicates < 1:
        raise ContractError("need at least one replicate")
    if obs.n_obs != cfg.n_obs:
        raise ContractError("observed data and configuration disagree on rows")
    n = obs.n_obs
    obs_sorted = np.sort(np.log(obs.rt))
    obs_counts = obs.ch.sum(axis=0)
    sum_rt = 0.0
    sum_ch = 0.0
    for s in range(n_replicates):
        rep = simulate_mlba(theta, cfg, seed=(seed, s))
        sum_rt += np.abs(np.sort(np.log(rep.rt)) - obs_sorted).sum()
        diff = rep.ch.sum(axis=0) - obs_counts
        sum_ch += float(diff @ diff)
    d1 = np.log(max(sum_rt / (3.0 * n_replicates), 1e-12))
    d2 = np.log(max(sum_ch / (9.0 * n_replicates * n * n), 1e-12))
    return float(d1), float(d2)


def mlba_reference_theta():
    """Generating parameter vector of the reference synthetic dataset."""
    return np.array([0.1, -5.0, -6.0, 3.0, 1.5, np.log(99.0)])


def mlba_prior_bounds():
    """Uniform prior box: unit interval for the decay, width-8 intervals
    centered on the reference values elsewhere."""
    center = mlba_reference_theta()
    lo = center - 4.0
    hi = center + 4.0
    lo[0], hi[0] = 0.0, 1.0
    return np.column_stack([lo, hi])


def make_reference_attributes(n_obs=320, seed=7):
    """Regenerate the committed attribute matrix (iid uniform on [0, 1])."""
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, 1.0, size=(n_obs, 9))


def attribute_header(n_alternatives=3):
    return ",".join(
        f"a{a + 1}_x{k + 1}"
        for a in range(n_alternatives)
        for k in range(_N_ATTRIBUTES)
    )


def write_attributes_csv(attributes, path):
    attributes = np.asarray(attributes, dtype=float)
    m = attributes.shape[1] // _N_ATTRIBUTES
    np.savetxt(
        path,
        attributes,
        fmt="%.17g",
        delimiter=",",
        comments="",
        header=attribute_header(m),
    )


def read_attributes_csv(path):
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def load_reference_attributes():
    """The committed 320 x 9 synthetic attribute matrix."""
    ref = importlib.resources.files(_DATA_PACKAGE).joinpath(_ATTRIBUTES_FILE)
    with importlib.resources.as_file(ref) as path:
        return read_attributes_csv(path)
