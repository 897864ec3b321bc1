"""Gaussian-process regression over expected simulation discrepancies.

Two configurations share one code path.  The scalar route fits a single
Matern-5/2 GP with constant mean to noisy discrepancy observations.  The
two-source route fits an independent kernel per discrepancy component but a
shared 2x2 observation-noise covariance, so observations of the two
components at the same parameter point are correlated while the latent
component processes stay a priori independent.

Joint vectors over n observations and K components interleave
observation-major: entry i*K + k is component k of observation i.  In that
layout the kernel part of the joint gram is diagonal in the component index
(slices [k::K, k::K]) and the noise contributes one KxK block per
observation, which keeps the algebra below readable and the factorization a
single Cholesky of an (nK, nK) matrix.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize
from scipy.spatial.distance import cdist
from scipy.stats import qmc

from .exceptions import ContractError, FitError

_SQRT5 = np.sqrt(5.0)
_LOG_2PI = np.log(2.0 * np.pi)
_BIG = 1e12  # objective value signalling a failed evaluation to the optimizer

# Hyperparameter search box, relative to the data scales (input ranges for
# lengthscales, output variance for the two variance parameters).
_LS_LO, _LS_HI = 1e-3, 1e3
_VAR_LO, _VAR_HI = 1e-6, 1e3
_JITTER_DEFAULT = 1e-8
_JITTER_MAX = 1e-2


@dataclass(frozen=True)
class KernelSpec:
    """Matern-5/2 kernel with per-dimension lengthscales plus constant mean.

    Parameters
    ----------
    lengthscales : array_like, shape (p,)
        Positive scale per input dimension (automatic relevance
        determination).
    signal_variance : float
        Positive prior variance of the latent function.
    mean_constant : float
        Constant prior mean.
    """

    lengthscales: np.ndarray
    signal_variance: float
    mean_constant: float

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float)).copy()
        if ls.ndim != 1 or ls.size == 0 or not np.all(np.isfinite(ls)) or np.any(ls <= 0):
            raise ContractError("lengthscales must be a 1-d array of positive finite reals")
        sv = float(self.signal_variance)
        if not np.isfinite(sv) or sv <= 0:
            raise ContractError("signal_variance must be a positive finite real")
        mc = float(self.mean_constant)
        if not np.isfinite(mc):
            raise ContractError("mean_constant must be finite")
        ls.setflags(write=False)
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "signal_variance", sv)
        object.__setattr__(self, "mean_constant", mc)

    @property
    def p(self):
        return self.lengthscales.size

    def as_dict(self):
        return {
            "lengthscales": self.lengthscales.tolist(),
            "signal_variance": self.signal_variance,
            "mean_constant": self.mean_constant,
        }


class GPTrainingSet:
    """Immutable (inputs, outputs) pair for GP fitting.

    inputs is (n, p); outputs is (n, K) with K in {1, 2}.  One observation
    (n = 1) is enough to evaluate a marginal likelihood; fitting
    hyperparameters requires n >= 2 and is checked by `fit`.  Duplicate
    input rows are permitted (the diagonal jitter keeps the gram
    factorizable).
    """

    def __init__(self, inputs, outputs):
        X = np.atleast_2d(np.asarray(inputs, dtype=float)).copy()
        Z = np.atleast_2d(np.asarray(outputs, dtype=float)).copy()
        if X.ndim != 2 or Z.ndim != 2:
            raise ContractError("inputs and outputs must be 2-d arrays")
        if X.shape[0] != Z.shape[0]:
            raise ContractError(
                f"inputs have {X.shape[0]} rows but outputs have {Z.shape[0]}"
            )
        if X.shape[0] < 1:
            raise ContractError("at least one observation is required")
        if Z.shape[1] not in (1, 2):
            raise ContractError("outputs must have 1 or 2 columns")
        if not np.all(np.isfinite(X)):
            raise ContractError("inputs contain non-finite values")
        if not np.all(np.isfinite(Z)):
            raise ContractError("outputs contain non-finite values")
        X.setflags(write=False)
        Z.setflags(write=False)
        self.inputs = X
        self.outputs = Z

    @property
    def n(self):
        return self.inputs.shape[0]

    @property
    def p(self):
        return self.inputs.shape[1]

    @property
    def K(self):
        return self.outputs.shape[1]

    def to_csv(self, path):
        """Write as CSV with columns theta_1..theta_p, delta_1..delta_K.

        %.17g formatting round-trips float64 exactly.
        """
        header = [f"theta_{d + 1}" for d in range(self.p)]
        header += [f"delta_{k + 1}" for k in range(self.K)]
        with open(path, "w") as f:
            f.write(",".join(header) + "\n")
            for i in range(self.n):
                row = np.concatenate([self.inputs[i], self.outputs[i]])
                f.write(",".join("%.17g" % v for v in row) + "\n")

    @classmethod
    def from_csv(cls, path):
        with open(path) as f:
            header = f.readline().strip().split(",")
            body = np.loadtxt(f, delimiter=",", ndmin=2)
        p = sum(1 for h in header if h.startswith("theta_"))
        k = sum(1 for h in header if h.startswith("delta_"))
        if p + k != len(header) or p < 1 or k < 1:
            raise ContractError(f"unrecognized training-set header: {header}")
        if body.shape[1] != p + k:
            raise ContractError("training-set rows do not match the header")
        return cls(body[:, :p], body[:, p:])


class NoiseModel:
    """Observation-noise covariance: a scalar variance or a 2x2 SPD matrix."""

    def __init__(self, cov):
        C = np.atleast_2d(np.asarray(cov, dtype=float)).copy()
        if C.shape not in ((1, 1), (2, 2)):
            raise ContractError("noise covariance must be 1x1 or 2x2")
        if not np.all(np.isfinite(C)):
            raise ContractError("noise covariance contains non-finite values")
        if not np.array_equal(C, C.T):
            raise ContractError("noise covariance must be exactly symmetric")
        try:
            np.linalg.cholesky(C)
        except np.linalg.LinAlgError:
            raise ContractError("noise covariance is not positive definite") from None
        C.setflags(write=False)
        self.cov = C

    @classmethod
    def univariate(cls, sigma2):
        return cls([[float(sigma2)]])

    @classmethod
    def bivariate(cls, Sigma):
        Sigma = np.asarray(Sigma, dtype=float)
        if Sigma.shape != (2, 2):
            raise ContractError("bivariate noise requires a 2x2 matrix")
        return cls(Sigma)

    @property
    def K(self):
        return self.cov.shape[0]

    @property
    def sigma2(self):
        if self.K != 1:
            raise ContractError("sigma2 is only defined for univariate noise")
        return float(self.cov[0, 0])

    @property
    def Sigma(self):
        if self.K != 2:
            raise ContractError("Sigma is only defined for bivariate noise")
        return self.cov

    def as_dict(self):
        if self.K == 1:
            return {"sigma2": self.sigma2}
        return {"Sigma": self.cov.tolist()}


def _matern52(r2):
    """Matern-5/2 correlation from squared scaled distance (unit variance)."""
    r = np.sqrt(np.maximum(r2, 0.0))
    s5r = _SQRT5 * r
    return (1.0 + s5r + (5.0 / 3.0) * r2) * np.exp(-s5r)


def _gram(A, B, spec):
    """Kernel matrix C(A, B) under `spec`, shape (len(A), len(B))."""
    As = A / spec.lengthscales
    Bs = B / spec.lengthscales
    return spec.signal_variance * _matern52(cdist(As, Bs, "sqeuclidean"))


def kernel_eval(a, b, spec):
    """Matern-5/2 ARD covariance between two points."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.shape != b.shape or a.ndim != 1 or a.size != spec.p:
        raise ContractError(
            f"point dimensions {a.shape}/{b.shape} do not match {spec.p} lengthscales"
        )
    d = (a - b) / spec.lengthscales
    return float(spec.signal_variance * _matern52(np.dot(d, d)))


def _jitter_levels(base):
    """Escalation schedule for the relative diagonal jitter."""
    yield base
    level = base if base > 0 else _JITTER_DEFAULT
    while level < _JITTER_MAX:
        level = min(level * 10.0, _JITTER_MAX)
        yield level


class FittedSurrogate:
    """GP posterior over the latent expected discrepancies.

    Immutable after construction; holds the Cholesky factorization of the
    joint observation covariance, so predictions are read-only and safe to
    share across threads.
    """

    def __init__(self, training, kernels, noise, jitter_scale=_JITTER_DEFAULT,
                 diagnostics=None):
        if isinstance(kernels, KernelSpec):
            kernels = (kernels,)
        kernels = tuple(kernels)
        if len(kernels) != training.K:
            raise ContractError(
                f"{len(kernels)} kernels for {training.K} output components"
            )
        for spec in kernels:
            if spec.p != training.p:
                raise ContractError("kernel lengthscale count does not match inputs")
        if noise.K != training.K:
            raise ContractError("noise dimension does not match output components")

        self.training = training
        self.kernels = kernels
        self.noise = noise
        self.jitter_scale = float(jitter_scale)
        self.diagnostics = dict(diagnostics) if diagnostics else {}

        n, K = training.n, training.K
        X = training.inputs
        A = np.zeros((n * K, n * K))
        for k in range(K):
            A[k::K, k::K] = _gram(X, X, kernels[k])
        base_idx = np.arange(n) * K
        for a in range(K):
            for b in range(K):
                A[base_idx + a, base_idx + b] += noise.cov[a, b]

        sv = np.array([s.signal_variance for s in kernels])
        diag_idx = np.arange(n * K)
        last_err = None
        for level in _jitter_levels(self.jitter_scale):
            A_try = A.copy()
            A_try[diag_idx, diag_idx] += np.tile(level * sv, n)
            try:
                cfac = cho_factor(A_try, lower=True)
                break
            except np.linalg.LinAlgError as err:
                last_err = err
        else:
            raise FitError(
                "gram factorization failed at every jitter level up to "
                f"{_JITTER_MAX:g} (condition number {np.linalg.cond(A):.3e})"
            ) from last_err

        self.jitter_used = level
        self._A = A_try
        self._cfac = cfac
        mc = np.array([s.mean_constant for s in kernels])
        self._mean_vec = np.tile(mc, n)
        resid = training.outputs.ravel() - self._mean_vec
        self._alpha = cho_solve(cfac, resid)
        logdet = 2.0 * np.sum(np.log(np.diag(cfac[0])))
        self._lml = float(
            -0.5 * resid @ self._alpha - 0.5 * logdet - 0.5 * n * K * _LOG_2PI
        )
        self._box_lo = X.min(axis=0)
        self._box_hi = X.max(axis=0)

    @classmethod
    def from_params(cls, training, kernels, noise, jitter_scale=_JITTER_DEFAULT,
                    diagnostics=None):
        return cls(training, kernels, noise, jitter_scale, diagnostics)

    # -- queries ---------------------------------------------------------

    def _query(self, Q):
        Q = np.asarray(Q, dtype=float)
        single = Q.ndim == 1
        Q = np.atleast_2d(Q)
        if Q.shape[1] != self.training.p:
            raise ContractError(
                f"query dimension {Q.shape[1]} does not match training dimension "
                f"{self.training.p}"
            )
        return Q, single

    def _cross_block(self, Q):
        """W with W[i*K+k, q*K+k] = C_k(x_i, q_q), shape (nK, mK)."""
        n, K = self.training.n, self.training.K
        m = Q.shape[0]
        W = np.zeros((n * K, m * K))
        for k in range(K):
            W[k::K, k::K] = _gram(self.training.inputs, Q, self.kernels[k])
        return W

    def predict(self, Q):
        """Posterior mean (m, K) and per-point covariance (m, K, K) at Q.

        Latent-function posterior: observation noise is not added.  A 1-d
        query returns shapes (K,) and (K, K).
        """
        Q, single = self._query(Q)
        K = self.training.K
        m = Q.shape[0]
        mean = np.empty((m, K))
        cov = np.empty((m, K, K))
        # chunk so the (nK, mK) solve never balloons on big query grids
        step = 2048
        for lo in range(0, m, step):
            sl = slice(lo, min(lo + step, m))
            W = self._cross_block(Q[sl])
            B = cho_solve(self._cfac, W)
            for k in range(K):
                mean[sl, k] = (
                    self.kernels[k].mean_constant + W[k::K, k::K].T @ self._alpha[k::K]
                )
                for l in range(K):
                    quad = np.einsum("ij,ij->j", W[:, k::K], B[:, l::K])
                    prior = self.kernels[k].signal_variance if k == l else 0.0
                    cov[sl, k, l] = prior - quad
        cov = 0.5 * (cov + np.swapaxes(cov, 1, 2))
        dd = np.arange(K)
        cov[:, dd, dd] = np.maximum(cov[:, dd, dd], 0.0)
        if single:
            return mean[0], cov[0]
        return mean, cov

    def posterior_joint(self, Q):
        """Posterior mean (m, K) and full joint covariance (mK, mK) at Q.

        The covariance couples all query points and components
        (observation-major interleaving), as needed for joint posterior
        draws of the latent surface.
        """
        Q, _ = self._query(Q)
        K = self.training.K
        m = Q.shape[0]
        W = self._cross_block(Q)
        B = cho_solve(self._cfac, W)
        prior = np.zeros((m * K, m * K))
        for k in range(K):
            prior[k::K, k::K] = _gram(Q, Q, self.kernels[k])
        cov = prior - W.T @ B
        cov = 0.5 * (cov + cov.T)
        mean = np.empty((m, K))
        for k in range(K):
            mean[:, k] = (
                self.kernels[k].mean_constant + W[k::K, k::K].T @ self._alpha[k::K]
            )
        return mean, cov

    def posterior_cross(self, Qa, Qb):
        """Posterior cross-covariance (maK, mbK) between latent values."""
        Qa, _ = self._query(Qa)
        Qb, _ = self._query(Qb)
        K = self.training.K
        Wa = self._cross_block(Qa)
        Wb = self._cross_block(Qb)
        prior = np.zeros((Qa.shape[0] * K, Qb.shape[0] * K))
        for k in range(K):
            prior[k::K, k::K] = _gram(Qa, Qb, self.kernels[k])
        return prior - Wa.T @ cho_solve(self._cfac, Wb)

    def log_marginal_likelihood(self):
        """Gaussian log marginal density of the training outputs."""
        return self._lml

    def gram(self):
        """The factorized joint observation covariance (including jitter)."""
        return self._A.copy()

    def cholesky_factor(self):
        """Lower-triangular L with L L^T equal to gram()."""
        return np.tril(self._cfac[0])

    def extrapolation_mask(self, Q):
        """True for query rows outside the training bounding box."""
        Q, single = self._query(Q)
        mask = np.any((Q < self._box_lo) | (Q > self._box_hi), axis=1)
        return bool(mask[0]) if single else mask

    def hyperparameters_dict(self):
        return {
            "kernels": [s.as_dict() for s in self.kernels],
            "noise": self.noise.as_dict(),
            "jitter": self.jitter_used,
            "log_marginal_likelihood": self._lml,
        }


# -- hyperparameter fitting ---------------------------------------------


class _UniNegLml:
    """Negative log marginal likelihood for one output component.

    Parameter vector: [log lengthscales (p), log signal variance,
    log noise variance, mean constant].
    """

    def __init__(self, X, z, jitter_scale=_JITTER_DEFAULT):
        self.X = X
        self.z = z
        self.n = z.size
        self.p = X.shape[1]
        self.jitter_scale = jitter_scale

    def unpack(self, x):
        p = self.p
        return np.exp(x[:p]), np.exp(x[p]), np.exp(x[p + 1]), x[p + 2]

    def __call__(self, x):
        ls, sv, s2, mc = self.unpack(x)
        Xs = self.X / ls
        Kmat = sv * _matern52(cdist(Xs, Xs, "sqeuclidean"))
        idx = np.arange(self.n)
        Kmat[idx, idx] += s2 + self.jitter_scale * sv
        try:
            L = np.linalg.cholesky(Kmat)
        except np.linalg.LinAlgError:
            return _BIG
        resid = self.z - mc
        alpha = cho_solve((L, True), resid)
        lml = (
            -0.5 * resid @ alpha
            - np.sum(np.log(np.diag(L)))
            - 0.5 * self.n * _LOG_2PI
        )
        return -lml if np.isfinite(lml) else _BIG


class _SigmaNegLml:
    """Joint negative LML over the 2x2 noise covariance, kernels fixed.

    The noise is parameterized by its Cholesky factor
    L = [[e^a, 0], [c, e^b]] (log-diagonal), so every iterate is positive
    definite by construction.  The kernel part of the joint gram (plus the
    kernel-dependent jitter) is precomputed once.
    """

    def __init__(self, base, n):
        self.base = base  # (2n, 2n) kernel gram + jitter diagonal
        self.n = n

    @staticmethod
    def sigma_from(x):
        L = np.array([[np.exp(x[0]), 0.0], [x[2], np.exp(x[1])]])
        return L @ L.T

    def neg_lml_resid(self, x, resid):
        Sigma = self.sigma_from(x)
        A = self.base.copy()
        idx = np.arange(self.n) * 2
        for a in range(2):
            for b in range(2):
                A[idx + a, idx + b] += Sigma[a, b]
        try:
            L = np.linalg.cholesky(A)
        except np.linalg.LinAlgError:
            return _BIG
        alpha = cho_solve((L, True), resid)
        lml = (
            -0.5 * resid @ alpha
            - np.sum(np.log(np.diag(L)))
            - 0.5 * 2 * self.n * _LOG_2PI
        )
        return -lml if np.isfinite(lml) else _BIG


def _nm(obj, x0, bounds, maxfev):
    return minimize(
        obj,
        x0,
        method="Nelder-Mead",
        bounds=bounds,
        options={"maxfev": maxfev, "adaptive": True, "xatol": 1e-4, "fatol": 1e-7},
    )


def _fit_component(ts_inputs, z, init_spec, init_sigma2, n_restarts, rng, maxfev,
                   jitter_scale=_JITTER_DEFAULT):
    """Multi-start Nelder-Mead fit of one output component.

    Returns (KernelSpec, sigma2, best lml, seed records, failed-start count).
    """
    X = ts_inputs
    n, p = X.shape
    ranges = X.max(axis=0) - X.min(axis=0)
    ranges = np.where(ranges > 0, ranges, 1.0)
    vb = z.var()
    if not vb > 0:
        vb = 1.0

    log_lb = np.log(np.concatenate([_LS_LO * ranges, [_VAR_LO * vb, _VAR_LO * vb]]))
    log_ub = np.log(np.concatenate([_LS_HI * ranges, [_VAR_HI * vb, _VAR_HI * vb]]))
    bounds = [(log_lb[i], log_ub[i]) for i in range(p + 2)] + [(-np.inf, np.inf)]
    mean0 = z.mean()

    def pack(ls, sv, s2, mc):
        x = np.concatenate([np.log(ls), [np.log(sv), np.log(s2), 0.0]])
        x[:p + 2] = np.clip(x[:p + 2], log_lb, log_ub)
        x[p + 2] = mc
        return x

    starts = []
    if init_spec is not None:
        s2_init = init_sigma2 if init_sigma2 is not None else 0.1 * vb
        starts.append(pack(init_spec.lengthscales, init_spec.signal_variance,
                           s2_init, init_spec.mean_constant))
    starts.append(pack(ranges, vb, 0.1 * vb, mean0))
    n_lhs = max(0, n_restarts - len(starts))
    if n_lhs:
        sampler = qmc.LatinHypercube(d=p + 2, seed=rng)
        logs = qmc.scale(sampler.random(n_lhs), log_lb, log_ub)
        starts += [np.concatenate([row, [mean0]]) for row in logs]

    obj = _UniNegLml(X, z, jitter_scale)
    records = []
    best_x, best_f = None, np.inf
    failed = 0
    for x0 in starts:
        f0 = obj(x0)
        ls0, sv0, s20, mc0 = obj.unpack(x0)
        records.append((KernelSpec(ls0, sv0, mc0), s20))
        if f0 >= _BIG:
            failed += 1
            continue
        if f0 < best_f:
            best_x, best_f = x0, f0
        res = _nm(obj, x0, bounds, maxfev)
        if res.fun < best_f:
            best_x, best_f = res.x, res.fun
    if best_x is None:
        raise FitError(
            f"marginal likelihood non-finite at all {len(starts)} start seeds "
            f"(n={n}, p={p}); data may be degenerate"
        )
    ls, sv, s2, mc = obj.unpack(best_x)
    return KernelSpec(ls, sv, mc), float(s2), -best_f, records, failed


def fit(training, init=None, noise_init=None, *, n_restarts=8, seed=0, maxfev=None):
    """Fit kernel and noise hyperparameters by multi-start Nelder-Mead.

    Parameters
    ----------
    training : GPTrainingSet
        Needs n >= 2.
    init : KernelSpec or sequence of KernelSpec, optional
        Warm-start kernel(s); used as an extra start seed, and (for the
        two-component case, together with noise_init) as a fallback
        candidate so a warm refit never returns a worse marginal
        likelihood than its initializer.
    noise_init : NoiseModel, optional
        Warm-start noise.
    n_restarts : int
        Start seeds per component (warm seed and one data-scale default
        included; the rest from a log-space Latin hypercube).
    seed : int
        Seeds the Latin-hypercube draws; fits are deterministic given it.
    maxfev : int, optional
        Function-evaluation cap per Nelder-Mead run.  Defaults to 400 for
        cold fits and 120 when `init` is given (cheap warm refits).

    For two components the fit is staged: each component is fitted
    univariately first, then the 2x2 noise covariance is optimized on the
    joint marginal likelihood with both kernels held fixed (log-Cholesky
    parameterization).  At a diagonal noise seed the joint marginal
    likelihood equals the sum of the component values, so the noise stage
    starts exactly where the component stage ended.
    """
    if training.n < 2:
        raise ContractError("fitting requires at least two observations")
    K = training.K
    warm = init is not None
    if maxfev is None:
        maxfev = 120 if warm else 400

    if isinstance(init, KernelSpec):
        init = (init,)
    if init is not None and len(init) != K:
        raise ContractError(f"init must provide {K} kernel spec(s)")
    if noise_init is not None and noise_init.K != K:
        raise ContractError("noise_init dimension does not match outputs")

    if K == 1:
        sigma2_init = noise_init.sigma2 if noise_init is not None else None
        spec, s2, lml, records, failed = _fit_component(
            training.inputs, training.outputs[:, 0],
            init[0] if init else None, sigma2_init,
            n_restarts, np.random.default_rng((seed, 0)), maxfev,
        )
        diagnostics = {
            "start_seeds": [("joint", (r_spec,), NoiseModel.univariate(r_s2))
                            for r_spec, r_s2 in records],
            "n_failed_starts": failed,
        }
        return FittedSurrogate(training, (spec,), NoiseModel.univariate(s2),
                               diagnostics=diagnostics)

    # -- two components: stage A, independent univariate fits ------------
    specs, s2s, lmls = [], [], []
    seed_records = []
    failed_total = 0
    for k in range(2):
        init_k = init[k] if init else None
        s2_init_k = float(noise_init.Sigma[k, k]) if noise_init is not None else None
        spec_k, s2_k, lml_k, records_k, failed_k = _fit_component(
            training.inputs, training.outputs[:, k], init_k, s2_init_k,
            n_restarts, np.random.default_rng((seed, k)), maxfev,
        )
        specs.append(spec_k)
        s2s.append(s2_k)
        lmls.append(lml_k)
        failed_total += failed_k
        seed_records += [(f"component{k}", (r_spec,), NoiseModel.univariate(r_s2))
                         for r_spec, r_s2 in records_k]

    # -- stage B: joint noise covariance with kernels fixed ---------------
    n = training.n
    X = training.inputs
    base = np.zeros((2 * n, 2 * n))
    for k in range(2):
        base[k::2, k::2] = _gram(X, X, specs[k])
    diag_idx = np.arange(2 * n)
    jit = np.array([_JITTER_DEFAULT * s.signal_variance for s in specs])
    base[diag_idx, diag_idx] += np.tile(jit, n)
    mc = np.array([s.mean_constant for s in specs])
    resid = training.outputs.ravel() - np.tile(mc, n)

    sobj = _SigmaNegLml(base, n)
    vb = np.array([max(training.outputs[:, k].var(), 1e-12) for k in range(2)])
    b_lo = 0.5 * np.log(_VAR_LO * vb)
    b_hi = 0.5 * np.log(_VAR_HI * vb)
    cmax = np.sqrt(_VAR_HI * vb.max())
    sigma_bounds = [(b_lo[0], b_hi[0]), (b_lo[1], b_hi[1]), (-cmax, cmax)]

    sigma_starts = [np.array([0.5 * np.log(s2s[0]), 0.5 * np.log(s2s[1]), 0.0])]
    if noise_init is not None:
        Ln = np.linalg.cholesky(noise_init.Sigma)
        sigma_starts.append(np.array([np.log(Ln[0, 0]), np.log(Ln[1, 1]), Ln[1, 0]]))
    n_sigma = 2 if warm else max(2, n_restarts // 2)
    n_lhs = max(0, n_sigma - len(sigma_starts))
    if n_lhs:
        rng_b = np.random.default_rng((seed, 2))
        sampler = qmc.LatinHypercube(d=3, seed=rng_b)
        u = sampler.random(n_lhs)
        for row in u:
            a = 0.5 * np.log(s2s[0]) + (row[0] - 0.5) * np.log(10.0)
            b = 0.5 * np.log(s2s[1]) + (row[1] - 0.5) * np.log(10.0)
            c = (2.0 * row[2] - 1.0) * 2.0 * np.sqrt(s2s[1])
            sigma_starts.append(np.array([a, b, c]))

    maxfev_b = 80 if warm else 200
    best_y, best_fy = None, np.inf
    sigma_neg = lambda y: sobj.neg_lml_resid(y, resid)
    for y0 in sigma_starts:
        y0 = np.clip(y0, [b[0] for b in sigma_bounds], [b[1] for b in sigma_bounds])
        f0 = sigma_neg(y0)
        seed_records.append(
            ("joint", tuple(specs), NoiseModel.bivariate(sobj.sigma_from(y0)))
        )
        if f0 >= _BIG:
            failed_total += 1
            continue
        if f0 < best_fy:
            best_y, best_fy = y0, f0
        res = _nm(sigma_neg, y0, sigma_bounds, maxfev_b)
        if res.fun < best_fy:
            best_y, best_fy = res.x, res.fun
    if best_y is None:
        raise FitError("joint marginal likelihood non-finite at every noise seed")

    diagnostics = {
        "start_seeds": seed_records,
        "stage_a_lml_sum": float(lmls[0] + lmls[1]),
        "n_failed_starts": failed_total,
    }
    fitted = FittedSurrogate(
        training, tuple(specs), NoiseModel.bivariate(sobj.sigma_from(best_y)),
        diagnostics=diagnostics,
    )
    # A warm refit must never come back worse than its initializer.
    if warm and noise_init is not None:
        prev = FittedSurrogate(training, tuple(init), noise_init,
                               diagnostics=diagnostics)
        if prev.log_marginal_likelihood() > fitted.log_marginal_likelihood():
            return prev
    return fitted
