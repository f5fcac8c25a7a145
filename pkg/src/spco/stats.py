"""Distribution primitives and conjugate posterior updates used by the samplers.

All sampling functions take an explicit ``numpy.random.Generator``; there is
no global random state. Likelihoods are combined in log space by callers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .core import POSE_DIM, DegenerateDistributionError, ParameterError, is_spd, readonly

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class NiwParams:
    """Normal-inverse-Wishart parameters for one Gaussian component."""

    mu: np.ndarray
    kappa: float
    psi: np.ndarray
    nu: float

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        psi = np.asarray(self.psi, dtype=float)
        if mu.shape != (POSE_DIM,):
            raise ParameterError("mu must be a 4-vector")
        if self.kappa <= 0:
            raise ParameterError("kappa must be positive")
        if self.nu <= POSE_DIM - 1:
            raise ParameterError("nu must exceed the dimension minus one (3)")
        if not is_spd(psi):
            raise ParameterError("psi must be symmetric positive definite")
        object.__setattr__(self, "mu", readonly(mu))
        object.__setattr__(self, "psi", readonly(psi))


def sample_dirichlet(concentration, rng: np.random.Generator) -> np.ndarray:
    """Draw a simplex vector from Dir(concentration); all entries must be > 0."""
    conc = np.asarray(concentration, dtype=float)
    if conc.ndim != 1 or conc.size == 0:
        raise ParameterError("concentration must be a non-empty vector")
    if np.any(conc <= 0):
        raise ParameterError("all concentration entries must be positive")
    return _gamma_normalize(conc, rng)


def sample_dirichlet_with_zeros(concentration, rng: np.random.Generator) -> np.ndarray:
    """Dirichlet draw where zero-concentration entries get exactly zero mass.

    Used after word pruning, where columns of the concentration vector are
    legitimately zero. At least one entry must be positive.
    """
    conc = np.asarray(concentration, dtype=float)
    if np.any(conc < 0):
        raise ParameterError("concentration entries must be non-negative")
    if not np.any(conc > 0):
        raise DegenerateDistributionError("all concentration entries are zero")
    return _gamma_normalize(conc, rng)


def _gamma_normalize(conc: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_gamma(conc)
    total = g.sum()
    if total == 0.0:
        # pathological underflow with tiny concentrations: fall back to the
        # normalized concentration itself (the Dirichlet mean)
        pos = conc > 0
        g = np.where(pos, conc, 0.0)
        total = g.sum()
    return g / total


def sample_categorical(weights, rng: np.random.Generator) -> int:
    """Draw an index with probability proportional to ``weights``."""
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ParameterError("weights must be non-negative")
    total = w.sum()
    if total <= 0:
        raise DegenerateDistributionError("all categorical weights are zero")
    cdf = np.cumsum(w)
    u = rng.random() * total
    idx = int(np.searchsorted(cdf, u, side="right"))
    return min(idx, w.size - 1)


def sample_categorical_rows(log_weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Row-wise categorical draws from unnormalized log weights, one per row."""
    lw = np.asarray(log_weights, dtype=float)
    row_max = lw.max(axis=1)
    if np.any(np.isneginf(row_max)):
        bad = int(np.flatnonzero(np.isneginf(row_max))[0])
        raise DegenerateDistributionError(
            f"all categorical components at -inf for row {bad}"
        )
    p = np.exp(lw - row_max[:, None])
    cdf = np.cumsum(p, axis=1)
    u = rng.random(lw.shape[0]) * cdf[:, -1]
    idx = (cdf < u[:, None]).sum(axis=1)
    return np.minimum(idx, lw.shape[1] - 1)


def stick_breaking(concentration: float, truncation: int,
                   rng: np.random.Generator) -> np.ndarray:
    """Truncated stick-breaking weights; the final stick absorbs the remainder."""
    if concentration <= 0:
        raise ParameterError("concentration must be positive")
    if truncation < 1:
        raise ParameterError("truncation must be at least 1")
    weights = np.empty(truncation)
    remainder = 1.0
    for i in range(truncation - 1):
        v = rng.beta(1.0, concentration)
        weights[i] = v * remainder
        remainder -= weights[i]
    weights[truncation - 1] = remainder
    return weights


def niw_posterior(prior: NiwParams, data) -> NiwParams:
    """Conjugate NIW update from a batch of pose vectors (may be empty)."""
    x = np.asarray(data, dtype=float).reshape(-1, POSE_DIM)
    n = x.shape[0]
    if n == 0:
        return prior
    xbar = x.mean(axis=0)
    diff = x - xbar
    scatter = diff.T @ diff
    kappa_new = prior.kappa + n
    nu_new = prior.nu + n
    mu_new = (prior.kappa * prior.mu + n * xbar) / kappa_new
    dev = (xbar - prior.mu)[:, None]
    psi_new = prior.psi + scatter + (prior.kappa * n / kappa_new) * (dev @ dev.T)
    psi_new = 0.5 * (psi_new + psi_new.T)
    return NiwParams(mu=mu_new, kappa=kappa_new, psi=psi_new, nu=nu_new)


def _sample_wishart(df: float, scale: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Bartlett-decomposition Wishart draw with the given scale matrix."""
    p = scale.shape[0]
    chol = np.linalg.cholesky(scale)
    a = np.zeros((p, p))
    a[np.diag_indices(p)] = np.sqrt(rng.chisquare(df - np.arange(p)))
    a[np.tril_indices(p, k=-1)] = rng.standard_normal(p * (p - 1) // 2)
    la = chol @ a
    return la @ la.T


def sample_inv_wishart(psi: np.ndarray, nu: float, rng: np.random.Generator) -> np.ndarray:
    """Inverse-Wishart draw via a Wishart on the inverted scale."""
    try:
        c, lower = cho_factor(psi)
    except np.linalg.LinAlgError as exc:
        raise ParameterError("psi is not positive definite") from exc
    psi_inv = cho_solve((c, lower), np.eye(psi.shape[0]))
    w = _sample_wishart(nu, psi_inv, rng)
    cov = np.linalg.inv(w)
    return 0.5 * (cov + cov.T)


def sample_niw(params: NiwParams, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw (mean, covariance) from a Normal-inverse-Wishart."""
    cov = sample_inv_wishart(params.psi, params.nu, rng)
    chol = np.linalg.cholesky(cov / params.kappa)
    mean = params.mu + chol @ rng.standard_normal(POSE_DIM)
    return mean, cov


def gaussian_logpdf(x, mean, cov) -> float:
    """Log density of a multivariate normal at a single point."""
    return float(gaussian_logpdf_batch(np.asarray(x, dtype=float)[None, :], mean, cov)[0])


def gaussian_logpdf_batch(x: np.ndarray, mean, cov) -> np.ndarray:
    """Log densities of a multivariate normal at each row of ``x``."""
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    d = mean.shape[0]
    try:
        c, lower = cho_factor(cov)
    except np.linalg.LinAlgError as exc:
        raise ParameterError("covariance is not positive definite") from exc
    diff = np.asarray(x, dtype=float) - mean
    solved = cho_solve((c, lower), diff.T)
    maha = np.einsum("ij,ji->i", diff, solved)
    logdet = 2.0 * np.sum(np.log(np.diag(c)))
    return -0.5 * (d * _LOG_2PI + logdet + maha)


def multinomial_loglik(bag, probs) -> float:
    """Sum of bag_k * ln(probs_k) over entries with bag_k > 0.

    Returns -inf when the bag puts mass on a zero-probability entry. The
    multinomial coefficient is omitted: it is constant across concepts and
    cancels in every ratio and argmax computed here.
    """
    bag = np.asarray(bag, dtype=float)
    probs = np.asarray(probs, dtype=float)
    if bag.shape != probs.shape:
        raise ParameterError("bag and probs must have equal length")
    active = bag > 0
    if np.any(probs[active] == 0):
        return float("-inf")
    return float(np.dot(bag[active], np.log(probs[active])))


def multinomial_loglik_matrix(bags: np.ndarray, prob_rows: np.ndarray) -> np.ndarray:
    """(n, L) matrix of multinomial log likelihoods, -inf on support violations."""
    bags = np.asarray(bags, dtype=float)
    prob_rows = np.asarray(prob_rows, dtype=float)
    safe_log = np.log(np.where(prob_rows > 0, prob_rows, 1.0))
    out = bags @ safe_log.T
    violations = (bags > 0).astype(float) @ (prob_rows == 0).astype(float).T
    out[violations > 0] = -np.inf
    return out
