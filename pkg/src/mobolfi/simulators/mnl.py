"""Multinomial-logit auxiliary model over three alternatives.

Used to compress simulated choice data into a score-vector summary: fit the
logit once to the observed choices, then evaluate the gradient of its
log-likelihood (the score) at that fixed estimate for any simulated dataset.
Data that resembles the observed choices scores near zero, so the scaled
score vector acts as a set of calibrated summary statistics.

The utility specification uses five parameters: alternative-specific
constants for the second and third alternatives (the first is the base) and
one generic coefficient per attribute column.
"""

import numpy as np
from scipy.special import logsumexp, softmax

from mobolfi.exceptions import ContractError, SimulatorError

N_PARAMS = 5


def _design(attributes):
    """Per-alternative feature rows, shape (n, 3, 5).

    Feature order: [constant_2, constant_3, attr_1, attr_2, attr_3].
    """
    x = np.asarray(attributes, dtype=float)
    if x.ndim != 2 or x.shape[1] != 9:
        raise ContractError("attributes must be (n, 9): three alternatives")
    n = x.shape[0]
    feats = np.zeros((n, 3, N_PARAMS))
    feats[:, 1, 0] = 1.0
    feats[:, 2, 1] = 1.0
    feats[:, :, 2:] = x.reshape(n, 3, 3)
    return feats


def _check_choices(ch, n):
    ch = np.asarray(ch, dtype=float)
    if ch.shape != (n, 3):
        raise ContractError(f"choices must be ({n}, 3) one-hot rows")
    if not np.all(np.isin(ch, (0.0, 1.0))) or not np.all(ch.sum(axis=1) == 1.0):
        raise ContractError("choices must be one-hot")
    return ch


def mnl_loglik(xi, ch, attributes):
    """Multinomial-logit log-likelihood of one-hot choices."""
    feats = _design(attributes)
    ch = _check_choices(ch, feats.shape[0])
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if xi.size != N_PARAMS:
        raise ContractError(f"xi must have {N_PARAMS} components")
    util = feats @ xi
    return float((util * ch).sum() - logsumexp(util, axis=1).sum())


def mnl_score(xi, ch, attributes):
    """Gradient of the log-likelihood in xi, shape (5,)."""
    feats = _design(attributes)
    ch = _check_choices(ch, feats.shape[0])
    xi = np.asarray(xi, dtype=float).reshape(-1)
    util = feats @ xi
    resid = ch - softmax(util, axis=1)
    return np.einsum("nak,na->k", feats, resid)


def _hessian(xi, attributes):
    feats = _design(attributes)
    util = feats @ np.asarray(xi, dtype=float).reshape(-1)
    p = softmax(util, axis=1)
    # Sum of per-row -F^T (diag(p) - p p^T) F, all rows at once.
    fp = np.einsum("nak,na->nk", feats, p)
    h = np.einsum("nak,na,nal->kl", feats, p, feats) - np.einsum(
        "nk,nl->kl", fp, fp
    )
    return -h


def mnl_fit_mle(ch, attributes):
    """Maximum-likelihood estimate of the five logit parameters.

    Newton iteration from zero with a minimum-norm step, so directions the
    data cannot identify (a feature constant across alternatives drops out
    of every utility difference) are simply left at zero instead of
    drifting on rounding noise. The log-likelihood is concave; the failure
    modes are separation (the maximizer runs to infinity, detected by
    divergence) and an alternative that is never chosen.
    """
    feats = _design(attributes)
    ch = _check_choices(ch, feats.shape[0])
    counts = ch.sum(axis=0)
    if np.any(counts == 0.0):
        raise ContractError(
            "every alternative must be chosen at least once to fit the logit"
        )
    xi = np.zeros(N_PARAMS)
    for _ in range(200):
        g = mnl_score(xi, ch, attributes)
        if np.linalg.norm(g) < 1e-9:
            break
        h = _hessian(xi, attributes)
        step = np.linalg.lstsq(h, g, rcond=1e-10)[0]
        # Damped Newton: halve until the log-likelihood does not decrease.
        base = mnl_loglik(xi, ch, attributes)
        scale = 1.0
        for _ in range(40):
            cand = xi - scale * step
            if mnl_loglik(cand, ch, attributes) >= base - 1e-12:
                break
            scale *= 0.5
        xi = xi - scale * step
        if np.linalg.norm(xi) > 1e3:
            raise SimulatorError(
                "logit fit diverged: separated data has no finite maximizer"
            )
    g = mnl_score(xi, ch, attributes)
    if np.linalg.norm(g) >= 1e-6:
        raise SimulatorError(
            f"logit fit did not converge: gradient norm {np.linalg.norm(g):.2e}"
        )
    return xi


def mnl_score_summary(ch, attributes, xi_hat, scaling):
    """Componentwise-scaled score vector at a fixed parameter estimate.

    ``scaling`` is a DiscrepancyScaling whose five factors put the score
    components on a common scale; the result is the summary-statistic
    vector for the supplied choice data.
    """
    score = mnl_score(xi_hat, ch, attributes)
    return scaling.apply(score)
