"""Acquisition machinery for the surrogate-optimization loop.

Scalar route: lower confidence bound on the predicted expected discrepancy.
Two-source route: noisy expected hypervolume improvement (NEHVI) over the
negated discrepancies, with Pareto filtering and exact 2-d hypervolume.

Sign convention: discrepancies are minimized, but Pareto dominance and
hypervolume are written for maximization, so discrepancy vectors are negated
exactly once on entry into objective space.  `ObjectiveSign` is the one
place that negation lives; everything in objective space (fronts, reference
points, hypervolumes, NEHVI) is maximization-sense.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular

from .exceptions import ContractError

_REF_MARGIN = 0.1  # reference point sits this far below the observed minima


class ObjectiveSign:
    """Single boundary between discrepancy space and objective space.

    Discrepancies (smaller is better) become objectives (larger is better)
    by negation.  Using these helpers instead of bare minus signs keeps the
    convention applied exactly once per crossing.
    """

    @staticmethod
    def to_objective(delta):
        return -np.asarray(delta, dtype=float)

    @staticmethod
    def to_discrepancy(objective):
        return -np.asarray(objective, dtype=float)


class ParetoFront:
    """A set of mutually nondominated points (maximization sense)."""

    def __init__(self, points):
        P = np.asarray(points, dtype=float)
        if P.size == 0:
            P = P.reshape(0, 2 if P.ndim != 2 else P.shape[1])
        P = np.atleast_2d(P)
        if not np.all(np.isfinite(P)):
            raise ContractError("front points must be finite")
        m = P.shape[0]
        for i in range(m):
            ge = np.all(P >= P[i], axis=1)
            gt = np.any(P > P[i], axis=1)
            if np.any(ge & gt):
                raise ContractError(
                    f"front point {P[i]} is dominated; construct via pareto_filter"
                )
        P.setflags(write=False)
        self.points = P

    def __len__(self):
        return self.points.shape[0]

    def __iter__(self):
        return iter(self.points)


class ReferencePoint:
    """Lower bound of the hypervolume box (maximization sense)."""

    def __init__(self, values):
        v = np.atleast_1d(np.asarray(values, dtype=float))
        if v.ndim != 1 or not np.all(np.isfinite(v)):
            raise ContractError("reference point must be a finite vector")
        v.setflags(write=False)
        self.values = v

    @property
    def K(self):
        return self.values.size


def default_reference_point(objectives):
    """Componentwise minimum of the observed objectives minus 0.1.

    Recomputed every iteration so all observations stay dominated by the
    reference point as new ones arrive.
    """
    obj = np.atleast_2d(np.asarray(objectives, dtype=float))
    if obj.size == 0 or not np.all(np.isfinite(obj)):
        raise ContractError("objectives must be a non-empty finite array")
    return ReferencePoint(obj.min(axis=0) - _REF_MARGIN)


def pareto_filter(points):
    """Maximal (nondominated) subset of `points`, ties collapsed to one.

    Empty input yields an empty front.
    """
    P = np.asarray(points, dtype=float)
    if P.size == 0:
        return ParetoFront(np.empty((0, 2)))
    P = np.atleast_2d(P)
    if not np.all(np.isfinite(P)):
        raise ContractError("points must be finite")
    P = np.unique(P, axis=0)  # collapse exact ties
    K = P.shape[1]
    if K == 1:
        return ParetoFront(P[[np.argmax(P[:, 0])]])
    if K == 2:
        # sort by x descending, y descending; a point is nondominated iff its
        # y strictly exceeds every y seen so far (all of which have larger or
        # equal x)
        order = np.lexsort((-P[:, 1], -P[:, 0]))
        S = P[order]
        best = -np.inf
        keep = np.zeros(len(S), dtype=bool)
        for i, y in enumerate(S[:, 1]):
            if y > best:
                keep[i] = True
                best = y
        return ParetoFront(S[keep])
    # K > 2 is out of scope for the optimization path, but the filter itself
    # generalizes with the quadratic check
    keep = np.ones(len(P), dtype=bool)
    for i in range(len(P)):
        ge = np.all(P >= P[i], axis=1)
        gt = np.any(P > P[i], axis=1)
        keep[i] = not np.any(ge & gt)
    return ParetoFront(P[keep])


def hypervolume_2d(front, ref):
    """Exact area dominated by `front` above `ref` (maximization sense).

    Sort-and-sweep over vertical strips: with points at ascending x (hence
    descending y for a nondominated set), the strip between consecutive xs
    is covered up to the y of its right edge.
    """
    if isinstance(ref, ReferencePoint):
        r = ref.values
    else:
        r = ReferencePoint(ref).values
    if r.size != 2:
        raise ContractError("hypervolume_2d needs a 2-d reference point")
    P = front.points if isinstance(front, ParetoFront) else ParetoFront(front).points
    if len(P) == 0:
        return 0.0
    if P.shape[1] != 2:
        raise ContractError("hypervolume_2d needs 2-d points")
    if np.any(P < r):
        raise ContractError(
            "reference point must be componentwise below every front point"
        )
    order = np.argsort(P[:, 0])
    xs = P[order, 0]
    ys = P[order, 1]
    widths = np.diff(np.concatenate([[r[0]], xs]))
    return float(np.sum(widths * (ys - r[1])))


def eta2(n, p, eps_eta=0.1, variant="standard"):
    """Exploration weight of the lower confidence bound.

    standard: 2 log(n^{p/2+2} pi^2 / (3 eps)); reduced drops the dimension
    dependence to 2 log(n^2 pi^2 / (3 eps)), appropriate when p is large.
    """
    n = int(n)
    if n < 1:
        raise ContractError("eta2 needs n >= 1")
    if eps_eta <= 0:
        raise ContractError("eps_eta must be positive")
    if variant == "standard":
        exponent = p / 2.0 + 2.0
    elif variant == "reduced":
        exponent = 2.0
    else:
        raise ContractError(f"unknown lcb variant: {variant!r}")
    val = 2.0 * (exponent * np.log(n) + np.log(np.pi ** 2 / (3.0 * eps_eta)))
    if val <= 0:
        raise ContractError(
            f"eta^2 = {val:.4g} <= 0 (n={n}, p={p}, eps_eta={eps_eta}); "
            "decrease eps_eta or gather more data"
        )
    return float(val)


def lcb(q, surrogate, n=None, p=None, eps_eta=0.1, variant="standard"):
    """Lower confidence bound mu - sqrt(eta^2 sigma^2) on the discrepancy.

    Vectorized over query rows; a single point returns a float.  `n`
    defaults to the surrogate's training count and `p` to its input
    dimension.
    """
    if surrogate.training.K != 1:
        raise ContractError("lcb requires a single-output surrogate")
    if n is None:
        n = surrogate.training.n
    if p is None:
        p = surrogate.training.p
    e2 = eta2(n, p, eps_eta, variant)
    q = np.asarray(q, dtype=float)
    single = q.ndim == 1
    mean, cov = surrogate.predict(np.atleast_2d(q))
    out = mean[:, 0] - np.sqrt(e2 * np.maximum(cov[:, 0, 0], 0.0))
    return float(out[0]) if single else out


class NehviEvaluator:
    """Noisy expected hypervolume improvement with shared posterior draws.

    At construction the latent objective values at all observed inputs are
    drawn jointly (mc_samples draws) and turned into per-draw staircase
    fronts.  Every candidate is then scored against the same draws (common
    random numbers, so comparisons between candidates within one
    optimization are low-noise), with its own value drawn from the exact
    conditional distribution given the observed-point draw.  One standard
    normal pair is shared across candidates for the conditional draw, which
    keeps results independent of how candidates are batched.
    """

    def __init__(self, surrogate, ref, mc_samples=128, seed=0):
        if surrogate.training.K != 2:
            raise ContractError("nehvi requires a two-output surrogate")
        if mc_samples < 16:
            raise ContractError("nehvi needs mc_samples >= 16")
        if not isinstance(ref, ReferencePoint):
            ref = ReferencePoint(ref)
        if ref.K != 2:
            raise ContractError("nehvi needs a 2-d reference point")
        self.surrogate = surrogate
        self.ref = ref.values
        self.mc = int(mc_samples)
        self.seed = seed

        X = surrogate.training.inputs
        self._X = X
        n = X.shape[0]
        mean_o, cov_oo = surrogate.posterior_joint(X)
        scale = max(np.mean(np.diag(cov_oo)), 1e-300)
        L = None
        for level in (1e-12, 1e-10, 1e-8, 1e-6):
            try:
                L = np.linalg.cholesky(cov_oo + level * scale * np.eye(2 * n))
                break
            except np.linalg.LinAlgError:
                continue
        if L is None:
            raise ContractError("posterior covariance at observed points is singular")
        self._L_oo = L
        self._U = np.random.default_rng((seed, 1)).standard_normal((self.mc, 2 * n))
        self._w = np.random.default_rng((seed, 2)).standard_normal((self.mc, 2))

        draws = mean_o.ravel()[None, :] + self._U @ L.T  # (mc, 2n)
        obj = np.maximum(ObjectiveSign.to_objective(draws.reshape(self.mc, n, 2)),
                         self.ref)

        # per-draw staircases, padded with (inf, ref_y) sentinels so strip
        # widths past the real front are zero
        fronts = []
        for s in range(self.mc):
            x, y = obj[s, :, 0], obj[s, :, 1]
            order = np.lexsort((-y, -x))
            xs, ys = x[order], y[order]
            best = -np.inf
            keep = np.zeros(n, dtype=bool)
            for i in range(n):
                if ys[i] > best:
                    keep[i] = True
                    best = ys[i]
            fronts.append((xs[keep][::-1], ys[keep][::-1]))  # ascending x
        width = max(len(f[0]) for f in fronts) + 1
        self._xs = np.full((self.mc, width), np.inf)
        self._ys = np.full((self.mc, width), self.ref[1])
        for s, (fx, fy) in enumerate(fronts):
            self._xs[s, : len(fx)] = fx
            self._ys[s, : len(fy)] = fy
        self._prevx = np.concatenate(
            [np.full((self.mc, 1), self.ref[0]), self._xs[:, :-1]], axis=1
        )

    def __call__(self, candidates):
        """Mean hypervolume improvement per candidate row, shape (b,)."""
        Q = np.atleast_2d(np.asarray(candidates, dtype=float))
        out = np.empty(Q.shape[0])
        step = 32  # keep the (mc, b, strips) block modest
        for lo in range(0, Q.shape[0], step):
            out[lo:lo + step] = self._batch(Q[lo:lo + step])
        return out

    def _batch(self, Q):
        b = Q.shape[0]
        mu_c, cov_c = self.surrogate.predict(Q)
        Sigma_oc = self.surrogate.posterior_cross(self._X, Q)  # (2n, 2b)
        a = solve_triangular(self._L_oo, Sigma_oc, lower=True)
        shift = (self._U @ a).reshape(self.mc, b, 2)
        a_r = a.reshape(a.shape[0], b, 2)
        cond_cov = cov_c - np.einsum("nje,njf->jef", a_r, a_r)

        # closed-form 2x2 Cholesky with degeneracy clamped to zero
        c00 = np.maximum(cond_cov[:, 0, 0], 0.0)
        l00 = np.sqrt(c00)
        safe = np.where(l00 > 0, l00, 1.0)
        l10 = np.where(l00 > 0, cond_cov[:, 1, 0] / safe, 0.0)
        l11 = np.sqrt(np.maximum(cond_cov[:, 1, 1] - l10 ** 2, 0.0))

        w = self._w
        draw0 = mu_c[None, :, 0] + shift[:, :, 0] + w[:, [0]] * l00[None, :]
        draw1 = (mu_c[None, :, 1] + shift[:, :, 1]
                 + w[:, [0]] * l10[None, :] + w[:, [1]] * l11[None, :])
        u = np.maximum(ObjectiveSign.to_objective(draw0), self.ref[0])  # (mc, b)
        v = np.maximum(ObjectiveSign.to_objective(draw1), self.ref[1])

        width = np.clip(
            np.minimum(u[:, :, None], self._xs[:, None, :]) - self._prevx[:, None, :],
            0.0, None,
        )
        height = np.clip(v[:, :, None] - self._ys[:, None, :], 0.0, None)
        return (width * height).sum(axis=2).mean(axis=0)


def nehvi(candidates, surrogate, ref, mc_samples=128, seed=0):
    """NEHVI estimates for a batch of candidates (see NehviEvaluator)."""
    return NehviEvaluator(surrogate, ref, mc_samples, seed)(candidates)


def optimize_acquisition(surrogate, bounds, restarts=10, candidates_per_restart=100,
                         mode="lcb", seed=0, *, ref=None, mc_samples=128,
                         eps_eta=0.1, variant=None, polish_rounds=20,
                         full_output=False):
    """Random multi-start acquisition maximization with coordinate polishing.

    Each restart screens `candidates_per_restart` uniform draws, keeps the
    best, and all restarts are then polished in lockstep by compass search
    (per-coordinate steps, halved whenever a restart fails to improve).
    The returned point always lies inside `bounds`.

    mode="lcb" minimizes the lower confidence bound (scalar surrogates);
    mode="nehvi" maximizes expected hypervolume improvement and requires
    `ref`.  `variant=None` picks the reduced LCB exploration weight when
    the parameter dimension exceeds 3.
    """
    B = np.asarray(bounds, dtype=float)
    if B.ndim != 2 or B.shape[1] != 2 or not np.all(np.isfinite(B)):
        raise ContractError("bounds must be a finite (p, 2) array")
    lo, hi = B[:, 0], B[:, 1]
    if np.any(hi <= lo):
        raise ContractError("bounds must satisfy lo < hi")
    p = B.shape[0]
    if restarts < 1 or candidates_per_restart < 1:
        raise ContractError("restarts and candidates_per_restart must be >= 1")

    if mode == "lcb":
        var = variant if variant is not None else ("reduced" if p > 3 else "standard")
        n_train = surrogate.training.n

        def score(Q):
            return -lcb(Q, surrogate, n=n_train, p=p, eps_eta=eps_eta, variant=var)
    elif mode == "nehvi":
        if ref is None:
            raise ContractError("nehvi mode requires a reference point")
        score = NehviEvaluator(surrogate, ref, mc_samples, seed)
    else:
        raise ContractError(f"unknown acquisition mode: {mode!r}")

    rng = np.random.default_rng((seed, 0))
    cand = rng.uniform(lo, hi, size=(restarts, candidates_per_restart, p))
    sc = score(cand.reshape(-1, p)).reshape(restarts, candidates_per_restart)
    best = np.argmax(sc, axis=1)
    X = cand[np.arange(restarts), best]
    F = sc[np.arange(restarts), best]

    h = 0.25 * (hi - lo) * np.ones((restarts, 1))  # (restarts, p) step sizes
    steps = np.concatenate([np.eye(p), -np.eye(p)], axis=0)  # (2p, p)
    for _ in range(polish_rounds):
        hs = np.tile(h, (1, 2))  # step size for each of the 2p directions
        neigh = X[:, None, :] + hs[:, :, None] * steps[None, :, :]
        neigh = np.clip(neigh, lo, hi)
        ns = score(neigh.reshape(-1, p)).reshape(restarts, 2 * p)
        j = np.argmax(ns, axis=1)
        nf = ns[np.arange(restarts), j]
        improved = nf > F
        X[improved] = neigh[np.arange(restarts), j][improved]
        F[improved] = nf[improved]
        h[~improved] *= 0.5

    g = int(np.argmax(F))
    theta = X[g]
    if full_output:
        value = F[g] if mode == "nehvi" else -F[g]
        return theta, float(value)
    return theta
