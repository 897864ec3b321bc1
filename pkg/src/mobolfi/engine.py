"""End-to-end likelihood-free inference runs.

This module glues the library together: it draws and calibrates an initial
design (median-absolute-deviation scaling, optional rejection filters),
fits the discrepancy surrogate, runs the sequential acquisition loop
(lower confidence bound for the single-objective route, expected
hypervolume improvement for the two-objective route), selects the
acceptance tolerance, fixes the simulation-noise covariance, and
materializes approximate likelihoods for every supported mode.  A
completed run is an on-disk artifact (``run.json`` manifest plus CSV
tables) that can be reloaded later for additional posterior sampling.

Seed discipline: every stochastic phase derives its own seed from the
master seed in the run configuration —

=====================  =============================================
phase                  seed
=====================  =============================================
initial design         master + 1, candidate ``j`` uses ``(master+1, j)``
calibration pilot      master + 2, draw ``j`` uses ``(master+2, j)``
first surrogate fit    master + 3
acquisition ``i``      master + 1000 + i (optimizer consumes
                       ``(seed, 0..2)``; the follow-up simulation uses
                       the reserved stream ``(seed, 9)``)
surrogate refit ``i``  master + 2000 + i
noise replicates       master + 5000, replicate ``j`` uses ``(m+5000, j)``
posterior sampling     master + 9000 + mode index (+100 for the weak
                       prior); chain initialization uses ``(seed, 0)``
=====================  =============================================

Per-simulation generators are seeded by ``(phase seed, draw index)`` so
results never depend on how the work is batched.

The simulation budget is tracked per phase (initial design including
rejected candidates, calibration pilot, acquisitions, noise replicates);
with the rejection filters disabled the totals satisfy
``total == n_init + n_pilot + n_acquisitions + n_sigma`` exactly, and the
default toy configuration needs no pilot and no noise replicates, so a
run with 100 initial points and 150 acquisitions costs exactly 250
simulations.
"""
from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import qmc

from .acquisition import (
    ObjectiveSign,
    default_reference_point,
    hypervolume_2d,
    optimize_acquisition,
    pareto_filter,
)
from .exceptions import ContractError, EngineError, FitError, SimulatorError
from .gp import FittedSurrogate, GPTrainingSet, KernelSpec, NoiseModel, fit
from .likelihoods import (
    ApproxLikelihood,
    DiscrepancyScaling,
    ToleranceVector,
    estimate_noise_cov,
    select_tolerance,
)
from .samplers import LogPosterior, demc_sample, rwm_sample
from .simulators import (
    MLBAConfig,
    MLBAData,
    ToyConfig,
    ToyData,
    load_reference_attributes,
    mlba_discrepancies,
    mlba_prior_bounds,
    mnl_fit_mle,
    mnl_score,
    simulate_mlba,
    simulate_toy,
    toy_discrepancies,
)

MODE_ORDER = ("joint", "source1", "source2", "cond_2_given_1", "cond_1_given_2")
PROBLEMS = ("toy", "mlba")
RUN_MODES = ("bolfi", "mobolfi", "mobolfi_aux")
_TOY_VARIANTS = ("shared", "misspecified", "noshare")
_MLBA_VARIANTS = ("standard",)

#: Half-width of the toy acquisition box.  The toy prior is a standard
#: normal per coordinate, so +-4 contains virtually all prior mass while
#: keeping the surrogate's training region compact.
TOY_ACQ_HALF_WIDTH = 4.0

#: Standard deviation of the weak toy prior (the standard prior is N(0,1)
#: per coordinate; the weak variant widens it so the data dominate).
WEAK_PRIOR_SD = 10.0

_SCHEMA = "mobolfi-run/1"
_MANIFEST_FILE = "run.json"
_TRAINING_FILE = "training.csv"
_ACQUISITIONS_FILE = "acquisitions.csv"


def _auto(value, fallback):
    return fallback if value in ("auto", None) else value


@dataclass(frozen=True)
class RunConfig:
    """Complete, hashable description of one inference run.

    Fields left at ``"auto"`` (or ``None`` where noted) resolve to
    problem-appropriate defaults at construction, so two configurations
    compare equal exactly when they resolve to the same run.

    Parameters
    ----------
    problem : str
        ``toy`` (two-source Gaussian benchmark) or ``mlba`` (choice /
        response-time race model).
    mode : str
        ``bolfi`` (single combined discrepancy, lower-confidence-bound
        acquisitions), ``mobolfi`` (one discrepancy per data source,
        hypervolume-improvement acquisitions), or ``mobolfi_aux``
        (``mlba`` only: the choice discrepancy is replaced by the norm of
        the scaled auxiliary-model score).
    variant : str
        Toy model variant (``shared``, ``misspecified``, ``noshare``);
        must be ``standard`` for ``mlba``.  ``auto`` picks ``shared`` /
        ``standard``.
    n_init : int
        Accepted initial-design size (>= 2).
    n_acquisitions : int
        Sequential acquisitions after the initial design (>= 0).
    q_tolerance : float or sequence
        Quantile level(s) for tolerance selection, one per surrogate
        output (``bolfi`` has one output; a single level broadcasts).
    scaling : str or sequence
        ``auto_mad`` estimates per-column median absolute deviations from
        the calibration batch; an explicit pair of positive floats skips
        estimation.
    n_pilot : int or None
        Size of the unfiltered calibration pilot (defaults to ``n_init``).
        The pilot only runs when a rejection filter is active; otherwise
        the initial design itself is the calibration batch.
    filter_quantile : float or None
        Per-column quantile of the calibration batch above which initial
        candidates are rejected.  ``auto``: off for ``toy``, 0.99 for
        ``mlba``.
    rt_variance_ratio : float or None
        ``mlba`` only: reject initial candidates whose simulated
        response-time variance falls below this fraction of the observed
        variance.  ``auto``: 0.7 for ``mlba``, off for ``toy``.
    n_sigma : int
        Noise-covariance replicates for the two-output routes (0 keeps
        the surrogate's fitted noise covariance).  ``auto``: 0 for
        ``toy`` — which keeps the 100+150 budget at exactly 250
        simulations — and 100 for ``mlba``.
    acq_restarts, acq_candidates : int
        Multi-start budget of the acquisition optimizer.
    mc_samples : int
        Monte Carlo draws for hypervolume-improvement estimation.
    eps_eta : float
        Confidence parameter of the lower-confidence-bound exploration
        weight.
    eta_variant : str
        ``standard``, ``reduced``, or ``auto`` (reduced weight above 3
        parameter dimensions).
    gp_restarts, gp_refit_restarts : int
        Multi-start budget for the first surrogate fit and the warm
        refits inside the acquisition loop.
    sampler : str
        ``demc`` (differential-evolution ensemble, default) or ``rwm``.
    sampler_chains, sampler_steps, sampler_burn_in, sampler_scale :
        Posterior-sampling defaults; ``sampler_scale`` is the
        random-walk proposal standard deviation.
    seed : int
        Master seed; all phase seeds derive from it (module docstring).
    toy_dim : int
        Toy parameter-block dimension (data dimension follows the
        variant).  Ignored for ``mlba``.
    """

    problem: str
    mode: str
    n_init: int
    n_acquisitions: int
    variant: str = "auto"
    q_tolerance: object = "auto"
    scaling: object = "auto_mad"
    n_pilot: object = None
    filter_quantile: object = "auto"
    rt_variance_ratio: object = "auto"
    n_sigma: object = "auto"
    acq_restarts: int = 10
    acq_candidates: int = 100
    mc_samples: int = 128
    eps_eta: float = 0.1
    eta_variant: str = "auto"
    gp_restarts: int = 8
    gp_refit_restarts: int = 2
    sampler: str = "demc"
    sampler_chains: int = 9
    sampler_steps: int = 16000
    sampler_burn_in: int = 13000
    sampler_scale: float = 0.25
    seed: int = 0
    toy_dim: int = 2

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        if self.problem not in PROBLEMS:
            raise ContractError(f"unknown problem {self.problem!r}; expected one of {PROBLEMS}")
        if self.mode not in RUN_MODES:
            raise ContractError(f"unknown mode {self.mode!r}; expected one of {RUN_MODES}")
        if self.mode == "mobolfi_aux" and self.problem != "mlba":
            raise ContractError("mode 'mobolfi_aux' requires problem 'mlba'")

        allowed = _TOY_VARIANTS if self.problem == "toy" else _MLBA_VARIANTS
        variant = _auto(self.variant, allowed[0])
        if variant not in allowed:
            raise ContractError(
                f"variant {variant!r} is not valid for problem {self.problem!r}; "
                f"expected one of {allowed}"
            )
        set_("variant", variant)

        n_init = int(self.n_init)
        if n_init < 2:
            raise ContractError(f"n_init must be >= 2, got {n_init}")
        set_("n_init", n_init)
        n_acq = int(self.n_acquisitions)
        if n_acq < 0:
            raise ContractError(f"n_acquisitions must be >= 0, got {n_acq}")
        set_("n_acquisitions", n_acq)

        k_out = 1 if self.mode == "bolfi" else 2
        q = self.q_tolerance
        if isinstance(q, str):
            if q != "auto":
                raise ContractError(f"unknown q_tolerance {q!r}")
            q = (0.05,)
        elif q is None:
            q = (0.05,)
        q = tuple(float(v) for v in np.asarray(q, dtype=float).reshape(-1))
        if len(q) == 1:
            q = q * k_out
        if len(q) != k_out:
            raise ContractError(
                f"q_tolerance has {len(q)} entries but mode {self.mode!r} "
                f"trains a {k_out}-output surrogate"
            )
        if any(not (0.0 < v < 1.0) for v in q):
            raise ContractError("q_tolerance entries must lie strictly inside (0, 1)")
        set_("q_tolerance", q)

        if isinstance(self.scaling, str):
            if self.scaling != "auto_mad":
                raise ContractError(
                    f"unknown scaling {self.scaling!r}; expected 'auto_mad' or two "
                    "positive values"
                )
        else:
            mad = tuple(float(v) for v in np.asarray(self.scaling, dtype=float).reshape(-1))
            if len(mad) != 2:
                raise ContractError(
                    f"explicit scaling needs one value per raw discrepancy column (2), "
                    f"got {len(mad)}"
                )
            if any(not np.isfinite(v) or v <= 0.0 for v in mad):
                raise ContractError("explicit scaling values must be positive and finite")
            set_("scaling", mad)

        n_pilot = n_init if self.n_pilot in ("auto", None) else int(self.n_pilot)
        if n_pilot < 2:
            raise ContractError(f"n_pilot must be >= 2, got {n_pilot}")
        set_("n_pilot", n_pilot)

        fq = _auto(self.filter_quantile, 0.99 if self.problem == "mlba" else None)
        if fq is not None:
            fq = float(fq)
            if not (0.0 < fq < 1.0):
                raise ContractError("filter_quantile must lie strictly inside (0, 1)")
        set_("filter_quantile", fq)

        rt = _auto(self.rt_variance_ratio, 0.7 if self.problem == "mlba" else None)
        if rt is not None:
            if self.problem != "mlba":
                raise ContractError("rt_variance_ratio applies to the mlba problem only")
            rt = float(rt)
            if not (np.isfinite(rt) and rt > 0.0):
                raise ContractError("rt_variance_ratio must be positive and finite")
        set_("rt_variance_ratio", rt)

        if self.n_sigma in ("auto", None):
            n_sigma = 100 if (k_out == 2 and self.problem == "mlba") else 0
        else:
            n_sigma = int(self.n_sigma)
        if n_sigma < 0 or n_sigma == 1:
            raise ContractError(f"n_sigma must be 0 or >= 2, got {n_sigma}")
        if k_out == 1 and n_sigma != 0:
            raise ContractError("n_sigma applies to the two-output modes only")
        set_("n_sigma", n_sigma)

        for name, lo in (("acq_restarts", 1), ("acq_candidates", 1), ("mc_samples", 16),
                         ("gp_restarts", 1), ("gp_refit_restarts", 1),
                         ("sampler_chains", 1), ("sampler_steps", 1), ("toy_dim", 1)):
            v = int(getattr(self, name))
            if v < lo:
                raise ContractError(f"{name} must be >= {lo}, got {v}")
            set_(name, v)
        burn = int(self.sampler_burn_in)
        if not (0 <= burn < self.sampler_steps):
            raise ContractError(
                f"need 0 <= sampler_burn_in < sampler_steps, got {burn} and {self.sampler_steps}"
            )
        set_("sampler_burn_in", burn)
        if self.eta_variant not in ("auto", "standard", "reduced"):
            raise ContractError(f"unknown eta_variant {self.eta_variant!r}")
        if self.sampler not in ("demc", "rwm"):
            raise ContractError(f"unknown sampler {self.sampler!r}; expected 'demc' or 'rwm'")
        if self.sampler == "demc" and self.sampler_chains < 4:
            raise ContractError("the demc sampler needs at least 4 chains")
        eps = float(self.eps_eta)
        if not (0.0 < eps < 1.0):
            raise ContractError("eps_eta must lie strictly inside (0, 1)")
        set_("eps_eta", eps)
        sc = float(self.sampler_scale)
        if not (np.isfinite(sc) and sc > 0.0):
            raise ContractError("sampler_scale must be positive and finite")
        set_("sampler_scale", sc)
        set_("seed", int(self.seed))

    @property
    def n_outputs(self):
        """Surrogate output columns: 1 for bolfi, 2 otherwise."""
        return 1 if self.mode == "bolfi" else 2

    def as_dict(self):
        """JSON-ready field dict; ``RunConfig(**d)`` round-trips exactly."""
        return {
            "problem": self.problem,
            "mode": self.mode,
            "variant": self.variant,
            "n_init": self.n_init,
            "n_acquisitions": self.n_acquisitions,
            "q_tolerance": list(self.q_tolerance),
            "scaling": self.scaling if isinstance(self.scaling, str) else list(self.scaling),
            "n_pilot": self.n_pilot,
            "filter_quantile": self.filter_quantile,
            "rt_variance_ratio": self.rt_variance_ratio,
            "n_sigma": self.n_sigma,
            "acq_restarts": self.acq_restarts,
            "acq_candidates": self.acq_candidates,
            "mc_samples": self.mc_samples,
            "eps_eta": self.eps_eta,
            "eta_variant": self.eta_variant,
            "gp_restarts": self.gp_restarts,
            "gp_refit_restarts": self.gp_refit_restarts,
            "sampler": self.sampler,
            "sampler_chains": self.sampler_chains,
            "sampler_steps": self.sampler_steps,
            "sampler_burn_in": self.sampler_burn_in,
            "sampler_scale": self.sampler_scale,
            "seed": self.seed,
            "toy_dim": self.toy_dim,
        }

    @property
    def config_hash(self):
        """12-hex-digit digest of the resolved configuration."""
        canon = json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:12]


def run_dir_name(cfg):
    """Directory name a run with this configuration writes to."""
    return f"run_{cfg.config_hash}"


# -- problem bindings ------------------------------------------------------


def _sha256_arrays(*arrays):
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(np.asarray(a, dtype=float)).tobytes())
    return h.hexdigest()


class _SobolStream:
    """Random-access view of a scrambled low-discrepancy sequence.

    Points are generated in power-of-two blocks (doubling), which keeps
    every draw balanced, and cached so ``point(j)`` is pure lookup.
    """

    def __init__(self, bounds, seed):
        self._lo = bounds[:, 0]
        self._span = bounds[:, 1] - bounds[:, 0]
        self._engine = qmc.Sobol(d=bounds.shape[0], scramble=True, seed=seed)
        self._buf = np.empty((0, bounds.shape[0]))

    def point(self, j):
        while j >= self._buf.shape[0]:
            block = self._engine.random(max(64, self._buf.shape[0]))
            self._buf = np.vstack([self._buf, block])
        return self._lo + self._span * self._buf[j]


class _SimParts:
    """One simulation reduced to what the engine needs downstream."""

    __slots__ = ("first", "second", "rt_variance")

    def __init__(self, first, second, rt_variance=None):
        self.first = first          # source-1 discrepancy (scalar)
        self.second = second        # source-2 discrepancy or score vector
        self.rt_variance = rt_variance


class _ToyProblem:
    """Two-source Gaussian benchmark bound to one run configuration."""

    name = "toy"

    def __init__(self, cfg, obs=None):
        self.model = ToyConfig(dim=cfg.toy_dim, variant=cfg.variant)
        self.p = self.model.theta_dim
        self.acq_bounds = np.tile([-TOY_ACQ_HALF_WIDTH, TOY_ACQ_HALF_WIDTH], (self.p, 1))
        self.sampler_bounds = np.tile([-np.inf, np.inf], (self.p, 1))
        self.obs = obs
        self.needs_score_calibration = False
        self.obs_rt_variance = None
        if obs is not None:
            if not isinstance(obs, ToyData):
                raise ContractError("the toy problem expects a ToyData observation")
            if obs.gaussian.shape[1] != self.model.data_dim:
                raise ContractError(
                    f"observed data dimension {obs.gaussian.shape[1]} does not match "
                    f"the model's data dimension {self.model.data_dim}"
                )
            # The model simulates datasets shaped like the observed one.
            self.model = ToyConfig(
                dim=cfg.toy_dim, n_gaussian=obs.gaussian.shape[0],
                n_path=obs.path.shape[0], variant=cfg.variant,
            )
            self.obs_sha256 = _sha256_arrays(obs.gaussian, obs.path)

    def prior_draw(self, rng):
        return rng.standard_normal(self.p)

    def log_prior(self, kind):
        sd = 1.0 if kind == "standard" else WEAK_PRIOR_SD
        const = -0.5 * self.p * np.log(2.0 * np.pi * sd * sd)
        return lambda T: const - 0.5 * np.sum(np.atleast_2d(T) ** 2, axis=1) / (sd * sd)

    def make_init_candidate(self, seed):
        return lambda j, rng: self.prior_draw(rng)

    def simulate_parts(self, theta, rng):
        sim = simulate_toy(theta, self.model, rng)
        d = toy_discrepancies(sim, self.obs)
        return _SimParts(float(d[0]), float(d[1]))

    def raw_from_parts(self, parts):
        return np.array([parts.first, parts.second])

    def aux_info(self):
        return None


class _MlbaProblem:
    """Choice / response-time race model bound to one run configuration."""

    name = "mlba"

    def __init__(self, cfg, obs=None, attributes=None):
        bounds = mlba_prior_bounds()
        self.p = bounds.shape[0]
        self.acq_bounds = bounds
        self.sampler_bounds = bounds
        self._lo = bounds[:, 0]
        self._span = bounds[:, 1] - bounds[:, 0]
        self.obs = obs
        self.needs_score_calibration = cfg.mode == "mobolfi_aux"
        self.score_mad = None
        self.xi_hat = None
        self.obs_rt_variance = None
        if obs is None:
            return
        if not isinstance(obs, MLBAData):
            raise ContractError("the mlba problem expects an MLBAData observation")
        attributes = load_reference_attributes() if attributes is None else np.asarray(
            attributes, dtype=float
        )
        self.model = MLBAConfig(attributes)
        if self.model.n_alternatives != 3:
            raise ContractError("engine runs need the three-alternative mlba setup")
        if obs.rt.shape[0] != self.model.n_obs:
            raise ContractError(
                f"observed data has {obs.rt.shape[0]} rows but the attribute matrix "
                f"has {self.model.n_obs}"
            )
        self.attributes = self.model.attributes
        self.obs_sha256 = _sha256_arrays(obs.rt, obs.ch)
        self.attributes_sha256 = _sha256_arrays(self.attributes)
        self.obs_rt_variance = float(np.var(obs.rt))
        if self.needs_score_calibration:
            try:
                self.xi_hat = mnl_fit_mle(obs.ch, self.attributes)
            except SimulatorError as exc:
                raise EngineError(
                    f"auxiliary-model fit on the observed choices failed: {exc}"
                ) from exc

    def prior_draw(self, rng):
        return self._lo + self._span * rng.uniform(size=self.p)

    def log_prior(self, kind):
        # The box prior is flat on its support; the support itself is the
        # sampler's bounds, so both prior kinds share one density.  The
        # weak variant exists for API symmetry with the toy problem.
        const = -float(np.sum(np.log(self._span)))
        return lambda T: np.full(np.atleast_2d(T).shape[0], const)

    def make_init_candidate(self, seed):
        stream = _SobolStream(self.acq_bounds, seed)
        return lambda j, rng: stream.point(j)

    def simulate_parts(self, theta, rng):
        sim = simulate_mlba(theta, self.model, rng)
        d = mlba_discrepancies(sim, self.obs)
        var_rt = float(np.var(sim.rt))
        if self.needs_score_calibration:
            score = mnl_score(self.xi_hat, sim.ch, self.attributes)
            return _SimParts(float(d[0]), score, var_rt)
        return _SimParts(float(d[0]), float(d[1]), var_rt)

    def calibrate_scores(self, score_rows):
        S = np.asarray(score_rows, dtype=float)
        med = np.median(S, axis=0)
        mad = np.median(np.abs(S - med), axis=0)
        if np.any(mad <= 0.0):
            raise ContractError(
                "an auxiliary-score component has zero median absolute deviation "
                "over the calibration batch; cannot scale a constant column"
            )
        self.score_mad = mad

    def raw_from_parts(self, parts):
        if self.needs_score_calibration:
            if self.score_mad is None:
                raise ContractError("auxiliary-score scaling has not been calibrated")
            return np.array([parts.first, float(np.linalg.norm(parts.second / self.score_mad))])
        return np.array([parts.first, parts.second])

    def aux_info(self):
        if not self.needs_score_calibration:
            return None
        return {
            "xi_hat": self.xi_hat.tolist(),
            "score_mad": self.score_mad.tolist() if self.score_mad is not None else None,
        }


def _bind(cfg, obs=None, attributes=None):
    if cfg.problem == "toy":
        if attributes is not None:
            raise ContractError("attribute matrices apply to the mlba problem only")
        return _ToyProblem(cfg, obs)
    return _MlbaProblem(cfg, obs, attributes)


# -- the run itself --------------------------------------------------------


def _outputs_from_raw(raw, scaling, n_outputs):
    """Map raw discrepancy rows to surrogate training outputs."""
    raw = np.atleast_2d(raw)
    scaled = scaling.apply(raw)
    if n_outputs == 1:
        return scaled.sum(axis=1, keepdims=True)
    return scaled


@dataclass
class RunResult:
    """Everything a completed run produced, ready for posterior sampling."""

    config: RunConfig
    training: GPTrainingSet
    surrogate: FittedSurrogate
    scaling: DiscrepancyScaling
    tolerance: ToleranceVector
    noise: NoiseModel
    likelihoods: dict
    manifest: dict = field(repr=False)

    @property
    def modes(self):
        return tuple(self.likelihoods)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    return x


def _write_artifacts(target, manifest, training, acq_rows):
    target = Path(target)
    target.mkdir(parents=True, exist_ok=True)
    (target / _MANIFEST_FILE).write_text(
        json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n"
    )
    if training is not None:
        training.to_csv(target / _TRAINING_FILE)
        p, k = training.p, training.K
        header = ",".join(
            ["iteration"]
            + [f"theta_{j + 1}" for j in range(p)]
            + ["raw_1", "raw_2"]
            + [f"out_{j + 1}" for j in range(k)]
            + ["acq_value"]
        )
        body = np.array(
            [
                [r["iteration"]] + list(r["theta"]) + list(r["raw"])
                + list(r["output"]) + [r["value"]]
                for r in acq_rows
            ]
        ).reshape(len(acq_rows), 1 + p + 2 + k + 1)
        np.savetxt(
            target / _ACQUISITIONS_FILE, body, delimiter=",", header=header,
            comments="", fmt="%.17g",
        )
    return target


def run(cfg, obs, attributes=None, base_dir=None, force=False, progress=None):
    """Execute one full inference run.

    Parameters
    ----------
    cfg : RunConfig
    obs : ToyData or MLBAData
        The observed dataset the discrepancies compare against.
    attributes : ndarray, optional
        ``mlba`` only: the attribute matrix (defaults to the packaged
        reference matrix).
    base_dir : path-like, optional
        When given, artifacts are written to ``base_dir/run_<hash>``
        (the manifest is flushed there even when the run aborts).
    force : bool
        Overwrite an existing run directory instead of refusing.
    progress : callable, optional
        Called with one human-readable line per phase/iteration.

    Returns
    -------
    RunResult

    Raises
    ------
    ContractError
        For invalid inputs detected before any simulation.
    EngineError
        When a phase fails mid-run; the partial manifest is attached to
        the exception (and flushed to disk when ``base_dir`` is given).
    """
    if not isinstance(cfg, RunConfig):
        raise ContractError("run expects a RunConfig")
    if obs is None:
        raise ContractError("run needs an observed dataset")
    say = progress if callable(progress) else (lambda _line: None)

    target = None
    if base_dir is not None:
        target = Path(base_dir) / run_dir_name(cfg)
        if target.exists() and not force:
            raise EngineError(
                f"run directory {target} already exists (same configuration hash); "
                "pass force=True to overwrite"
            )

    prob = _bind(cfg, obs, attributes)
    master = cfg.seed
    k_out = cfg.n_outputs
    t0 = time.perf_counter()

    manifest = {
        "schema": _SCHEMA,
        "status": "running",
        "config": cfg.as_dict(),
        "config_hash": cfg.config_hash,
        "observed_sha256": prob.obs_sha256,
        "seeds": {
            "init": master + 1,
            "pilot": master + 2,
            "gp_fit": master + 3,
            "acquisition_base": master + 1000,
            "acquisition_sim_stream": 9,
            "gp_refit_base": master + 2000,
            "noise": master + 5000,
            "sampler_base": master + 9000,
            "sampler_weak_prior_offset": 100,
        },
    }
    if prob.name == "mlba":
        manifest["attributes_sha256"] = prob.attributes_sha256
    counts = {"init": 0, "pilot": 0, "acquisition": 0, "noise": 0}
    acq_rows = []
    training = None

    def finish(status):
        manifest["status"] = status
        manifest["simulation_counts"] = dict(counts, total=sum(counts.values()))
        manifest["acquisitions"] = acq_rows
        manifest["wall_clock_seconds"] = time.perf_counter() - t0

    try:
        filters_on = cfg.filter_quantile is not None or cfg.rt_variance_ratio is not None

        # Calibration batch: an unfiltered pilot when any rejection filter
        # is active (the thresholds must come from unfiltered draws),
        # otherwise the initial design itself.  The pilot draws i.i.d.
        # prior samples — the natural estimator for quantiles and median
        # absolute deviations — even when the initial design is
        # space-filling.
        init_candidate = prob.make_init_candidate(master + 1)
        if filters_on:
            calib_parts = []
            for j in range(cfg.n_pilot):
                rng = np.random.default_rng((master + 2, j))
                theta = prob.prior_draw(rng)
                calib_parts.append(prob.simulate_parts(theta, rng))
                counts["pilot"] += 1
            say(f"calibration pilot: {cfg.n_pilot} simulations")
            init_thetas, init_parts = [], []
        else:
            init_thetas, init_parts = [], []
            for j in range(cfg.n_init):
                rng = np.random.default_rng((master + 1, j))
                theta = init_candidate(j, rng)
                init_thetas.append(theta)
                init_parts.append(prob.simulate_parts(theta, rng))
                counts["init"] += 1
            calib_parts = init_parts
            say(f"initial design: {cfg.n_init} simulations (doubling as calibration batch)")

        if prob.needs_score_calibration:
            prob.calibrate_scores([p.second for p in calib_parts])
        calib_raws = np.array([prob.raw_from_parts(p) for p in calib_parts])

        if cfg.scaling == "auto_mad":
            med = np.median(calib_raws, axis=0)
            mad = np.median(np.abs(calib_raws - med), axis=0)
            if np.any(mad <= 0.0):
                raise ContractError(
                    "a discrepancy column has zero median absolute deviation over "
                    "the calibration batch; cannot scale a constant column"
                )
            scaling = DiscrepancyScaling(mad, n_samples=calib_raws.shape[0])
        else:
            scaling = DiscrepancyScaling(np.asarray(cfg.scaling), n_samples=0)
        manifest["scaling"] = scaling.as_dict()
        aux = prob.aux_info()
        if aux is not None:
            manifest["auxiliary"] = aux

        thresholds = None
        rt_floor = None
        if cfg.filter_quantile is not None:
            calib_outs = _outputs_from_raw(calib_raws, scaling, k_out)
            thresholds = np.quantile(calib_outs, cfg.filter_quantile, axis=0)
        if cfg.rt_variance_ratio is not None:
            rt_floor = cfg.rt_variance_ratio * prob.obs_rt_variance
        manifest["filters"] = {
            "quantile": cfg.filter_quantile,
            "thresholds": None if thresholds is None else thresholds.tolist(),
            "rt_variance_ratio": cfg.rt_variance_ratio,
            "rt_variance_floor": rt_floor,
        }

        if filters_on:
            cap = 100 * cfg.n_init
            rt_variances = []
            j = 0
            while len(init_thetas) < cfg.n_init:
                if j >= cap:
                    raise ContractError(
                        f"initial design accepted {len(init_thetas)} of {cfg.n_init} "
                        f"candidates after {cap} attempts (acceptance below 1%); "
                        "review the prior bounds and the rejection filters"
                    )
                rng = np.random.default_rng((master + 1, j))
                theta = init_candidate(j, rng)
                parts = prob.simulate_parts(theta, rng)
                counts["init"] += 1
                j += 1
                out = _outputs_from_raw(prob.raw_from_parts(parts), scaling, k_out)[0]
                if thresholds is not None and np.any(out > thresholds):
                    continue
                if rt_floor is not None and parts.rt_variance < rt_floor:
                    continue
                init_thetas.append(theta)
                init_parts.append(parts)
                rt_variances.append(parts.rt_variance)
            manifest["init"] = {
                "n_accepted": len(init_thetas),
                "n_attempted": j,
            }
            if rt_floor is not None:
                manifest["init"]["rt_variances"] = rt_variances
            say(
                f"initial design: accepted {len(init_thetas)} of {j} filtered candidates"
            )
        else:
            manifest["init"] = {"n_accepted": cfg.n_init, "n_attempted": cfg.n_init}

        init_raws = np.array([prob.raw_from_parts(p) for p in init_parts])
        training = GPTrainingSet(
            np.array(init_thetas), _outputs_from_raw(init_raws, scaling, k_out)
        )
        surrogate = fit(training, n_restarts=cfg.gp_restarts, seed=master + 3)
        say(
            "surrogate fitted on the initial design "
            f"(log evidence {surrogate.hyperparameters_dict()['log_marginal_likelihood']:.3f})"
        )

        variant = None if cfg.eta_variant == "auto" else cfg.eta_variant
        for i in range(cfg.n_acquisitions):
            aseed = master + 1000 + i
            if k_out == 1:
                theta_next, value = optimize_acquisition(
                    surrogate, prob.acq_bounds, restarts=cfg.acq_restarts,
                    candidates_per_restart=cfg.acq_candidates, mode="lcb",
                    seed=aseed, eps_eta=cfg.eps_eta, variant=variant,
                    full_output=True,
                )
            else:
                ref = default_reference_point(ObjectiveSign.to_objective(training.outputs))
                theta_next, value = optimize_acquisition(
                    surrogate, prob.acq_bounds, restarts=cfg.acq_restarts,
                    candidates_per_restart=cfg.acq_candidates, mode="nehvi",
                    seed=aseed, ref=ref, mc_samples=cfg.mc_samples,
                    full_output=True,
                )
            rng = np.random.default_rng((aseed, 9))
            parts = prob.simulate_parts(theta_next, rng)
            counts["acquisition"] += 1
            raw = prob.raw_from_parts(parts)
            out = _outputs_from_raw(raw, scaling, k_out)[0]
            training = GPTrainingSet(
                np.vstack([training.inputs, theta_next[None, :]]),
                np.vstack([training.outputs, out[None, :]]),
            )
            surrogate = fit(
                training, init=surrogate.kernels, noise_init=surrogate.noise,
                n_restarts=cfg.gp_refit_restarts, seed=master + 2000 + i,
            )
            acq_rows.append({
                "iteration": i,
                "theta": theta_next.tolist(),
                "raw": raw.tolist(),
                "output": out.tolist(),
                "value": float(value),
                "seed": aseed,
            })
            best = training.outputs.min(axis=0)
            if k_out == 2:
                objective = ObjectiveSign.to_objective(training.outputs)
                front = pareto_filter(objective)
                hv = hypervolume_2d(front, default_reference_point(objective))
                say(
                    f"acquisition {i + 1}/{cfg.n_acquisitions}: value {value:.6g}, "
                    f"best outputs {best.tolist()}, hypervolume {hv:.6g}"
                )
            else:
                say(
                    f"acquisition {i + 1}/{cfg.n_acquisitions}: value {value:.6g}, "
                    f"best output {best[0]:.6g}"
                )

        tolerance = select_tolerance(training, q=np.asarray(cfg.q_tolerance))
        if cfg.n_sigma == 0:
            noise = surrogate.noise
            noise_source = "surrogate_fit"
        else:
            def scaled_sim(theta, rng):
                return _outputs_from_raw(
                    prob.raw_from_parts(prob.simulate_parts(theta, rng)), scaling, k_out
                )[0]

            noise = estimate_noise_cov(
                scaled_sim, surrogate, n_sigma=cfg.n_sigma, seed=master + 5000
            )
            counts["noise"] = cfg.n_sigma
            noise_source = "replicate_estimate"
        say(f"tolerance {tolerance.values.tolist()} at quantile {tolerance.q.tolist()}")

        modes = ("joint",) if k_out == 1 else MODE_ORDER
        likelihoods = {
            m: ApproxLikelihood(surrogate, tolerance, noise, m) for m in modes
        }

        manifest["final_hyperparameters"] = surrogate.hyperparameters_dict()
        manifest["tolerance"] = tolerance.as_dict()
        manifest["noise"] = noise.as_dict()
        manifest["noise_source"] = noise_source
        finish("complete")
    except (SimulatorError, FitError, ContractError) as exc:
        finish(f"aborted: {exc}")
        if target is not None:
            _write_artifacts(target, manifest, training, acq_rows)
        raise EngineError(str(exc), manifest=manifest) from exc

    result = RunResult(
        config=cfg, training=training, surrogate=surrogate, scaling=scaling,
        tolerance=tolerance, noise=noise, likelihoods=likelihoods,
        manifest=manifest,
    )
    if target is not None:
        _write_artifacts(target, manifest, training, acq_rows)
        say(f"run artifacts written to {target}")
    return result


def calibration_scaling(cfg, obs, attributes=None):
    """Discrepancy scaling a run with this configuration would use.

    Replays the run's calibration batch — the unfiltered pilot at seeds
    ``(seed+2, j)`` when a rejection filter is active, otherwise the
    initial design itself at seeds ``(seed+1, j)`` — and returns
    ``(scaling, aux_info)`` where ``aux_info`` carries the fitted
    auxiliary-model coefficients and score scales (``None`` unless the
    run uses the auxiliary-score route).  Costs the same simulations the
    run's calibration phase would; nothing is fitted.
    """
    prob = _bind(cfg, obs, attributes)
    master = cfg.seed
    filters_on = cfg.filter_quantile is not None or cfg.rt_variance_ratio is not None
    parts = []
    if filters_on:
        for j in range(cfg.n_pilot):
            rng = np.random.default_rng((master + 2, j))
            theta = prob.prior_draw(rng)
            parts.append(prob.simulate_parts(theta, rng))
    else:
        candidate = prob.make_init_candidate(master + 1)
        for j in range(cfg.n_init):
            rng = np.random.default_rng((master + 1, j))
            theta = candidate(j, rng)
            parts.append(prob.simulate_parts(theta, rng))
    if prob.needs_score_calibration:
        prob.calibrate_scores([p.second for p in parts])
    raws = np.array([prob.raw_from_parts(p) for p in parts])
    if cfg.scaling == "auto_mad":
        med = np.median(raws, axis=0)
        mad = np.median(np.abs(raws - med), axis=0)
        if np.any(mad <= 0.0):
            raise ContractError(
                "a discrepancy column has zero median absolute deviation over "
                "the calibration batch; cannot scale a constant column"
            )
        scaling = DiscrepancyScaling(mad, n_samples=raws.shape[0])
    else:
        scaling = DiscrepancyScaling(np.asarray(cfg.scaling, dtype=float), n_samples=0)
    return scaling, prob.aux_info()


# -- artifact round trip ---------------------------------------------------


def write_run(result, base_dir, force=False):
    """Write ``run.json``, ``training.csv`` and ``acquisitions.csv``.

    The directory is ``base_dir/run_<config hash>``; an existing directory
    is refused unless ``force`` is set.  Returns the directory path.
    """
    target = Path(base_dir) / run_dir_name(result.config)
    if target.exists() and not force:
        raise EngineError(
            f"run directory {target} already exists (same configuration hash); "
            "pass force=True to overwrite"
        )
    return _write_artifacts(
        target, result.manifest, result.training,
        result.manifest.get("acquisitions", []),
    )


def _noise_from_dict(d):
    if "sigma2" in d:
        return NoiseModel.univariate(d["sigma2"])
    return NoiseModel.bivariate(np.asarray(d["Sigma"], dtype=float))


def load_run(run_dir):
    """Reload a completed run for additional posterior sampling.

    The surrogate is rebuilt from the stored hyperparameters and training
    table, so its predictions — and therefore the approximate
    likelihoods — match the original run bitwise.
    """
    run_dir = Path(run_dir)
    manifest_path = run_dir / _MANIFEST_FILE
    if not manifest_path.exists():
        raise EngineError(f"{run_dir} does not contain a run manifest ({_MANIFEST_FILE})")
    manifest = json.loads(manifest_path.read_text())
    status = manifest.get("status")
    if status != "complete":
        raise EngineError(
            f"run at {run_dir} is not complete (status: {status!r})", manifest=manifest
        )
    cfg = RunConfig(**manifest["config"])
    training = GPTrainingSet.from_csv(run_dir / _TRAINING_FILE)
    hp = manifest["final_hyperparameters"]
    kernels = tuple(
        KernelSpec(d["lengthscales"], d["signal_variance"], d["mean_constant"])
        for d in hp["kernels"]
    )
    surrogate = FittedSurrogate.from_params(
        training, kernels, _noise_from_dict(hp["noise"]), jitter_scale=hp["jitter"]
    )
    scaling = DiscrepancyScaling(
        manifest["scaling"]["mad"], n_samples=manifest["scaling"]["n_samples"]
    )
    tolerance = ToleranceVector(manifest["tolerance"]["values"], manifest["tolerance"]["q"])
    noise = _noise_from_dict(manifest["noise"])
    modes = ("joint",) if cfg.n_outputs == 1 else MODE_ORDER
    likelihoods = {m: ApproxLikelihood(surrogate, tolerance, noise, m) for m in modes}
    return RunResult(
        config=cfg, training=training, surrogate=surrogate, scaling=scaling,
        tolerance=tolerance, noise=noise, likelihoods=likelihoods, manifest=manifest,
    )


# -- posterior sampling ----------------------------------------------------


def posterior_sample(result, mode="joint", prior="standard", *, sampler=None,
                     chains=None, steps=None, burn_in=None, scale=None):
    """Sample the approximate posterior of a completed run.

    Parameters
    ----------
    result : RunResult
        A fresh or reloaded run.
    mode : str
        One of the run's available likelihood modes (a single-output run
        provides ``joint`` only).
    prior : str
        ``standard`` or ``weak``.  The weak prior widens the toy prior to
        a zero-mean normal with standard deviation 10 so the data
        dominate; the mlba box prior is already flat on its support, so
        both kinds coincide there.
    sampler, chains, steps, burn_in, scale :
        Overrides for the run configuration's sampler settings.

    Returns
    -------
    SampleResult
        With ``settings`` extended by the mode, prior, and derived seed.
    """
    if not isinstance(result, RunResult):
        raise ContractError("posterior_sample expects a RunResult")
    if mode not in result.likelihoods:
        raise EngineError(
            f"mode {mode!r} is not available for this run "
            f"(available: {', '.join(result.likelihoods)})"
        )
    if prior not in ("standard", "weak"):
        raise ContractError(f"unknown prior {prior!r}; expected 'standard' or 'weak'")
    cfg = result.config
    prob = _bind(cfg)
    lp = LogPosterior(prob.log_prior(prior), result.likelihoods[mode], prob.sampler_bounds)

    algo = cfg.sampler if sampler is None else sampler
    n_steps = cfg.sampler_steps if steps is None else int(steps)
    n_burn = cfg.sampler_burn_in if burn_in is None else int(burn_in)
    seed = cfg.seed + 9000 + MODE_ORDER.index(mode) + (100 if prior == "weak" else 0)
    rng = np.random.default_rng((seed, 0))
    if algo == "demc":
        n_chains = cfg.sampler_chains if chains is None else int(chains)
        init = np.array([prob.prior_draw(rng) for _ in range(n_chains)])
        out = demc_sample(lp, init, steps=n_steps, burn_in=n_burn, seed=seed)
    elif algo == "rwm":
        init = prob.prior_draw(rng)
        out = rwm_sample(
            lp, init, steps=n_steps,
            scale=cfg.sampler_scale if scale is None else float(scale), seed=seed,
        )
    else:
        raise ContractError(f"unknown sampler {algo!r}; expected 'demc' or 'rwm'")
    out.settings.update({"mode": mode, "prior": prior, "derived_seed": seed})
    return out
