"""Name prediction from (position, visual bag) and position prediction from a name."""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from .core import (
    NoPredictionError,
    Pose,
    TrainedModel,
    VocabularyError,
)
from .learn import binary_word_concept_mi, _safe_log
from .stats import gaussian_logpdf, multinomial_loglik


def word_mi_weights(model: TrainedModel) -> np.ndarray:
    """Per-word MI weight: the max over concepts of the binary word/concept MI."""
    mi = binary_word_concept_mi(model.global_params.phi_w, model.global_params.g0)
    return mi.max(axis=1)


def _check_env(model: TrainedModel, env_id: int) -> None:
    if not 0 <= env_id < model.n_envs:
        raise VocabularyError(
            f"environment {env_id} was not trained (model has {model.n_envs})"
        )


def _concept_position_log_weights(env, pose: Pose) -> np.ndarray:
    """(L,) log of sum over regions of N(x | mu_R, Sigma_R) * pi[C, R]."""
    x = pose.to_array()
    M = env.mu.shape[0]
    pos_ll = np.array([gaussian_logpdf(x, env.mu[m], env.sigma[m]) for m in range(M)])
    return logsumexp(pos_ll[None, :] + _safe_log(env.pi), axis=1)


def predict_name(model: TrainedModel, env_id: int, pose: Pose, visual,
                 top_k: int = 3, candidates=None) -> list[tuple[str, float]]:
    """Rank candidate location names for an observed (position, visual bag).

    Candidates default to all unpruned dictionary entries; pruned words are
    always excluded. Scores are normalized over the candidate set.
    """
    _check_env(model, env_id)
    env = model.envs[env_id]
    if candidates is None:
        candidate_words = list(model.dictionary.entries)
    else:
        candidate_words = list(candidates)
    indices = []
    words = []
    for word in candidate_words:
        k = model.dictionary.index(word)
        if model.pruned_words[k]:
            continue  # pruned words never appear in predictions
        indices.append(k)
        words.append(word)
    if not indices:
        raise NoPredictionError("no unpruned candidate words")

    # per concept: p(v | theta_v_C) * G_e[C] * sum_R N(x) pi[C, R]
    base = np.array([
        multinomial_loglik(np.asarray(visual, dtype=float), env.theta_v[l])
        for l in range(env.theta_v.shape[0])
    ])
    base = base + _safe_log(env.ge) + _concept_position_log_weights(env, pose)

    log_theta = _safe_log(env.theta_w[:, indices])           # (L, K')
    log_scores = logsumexp(base[:, None] + log_theta, axis=0)
    mi = word_mi_weights(model)[indices]
    if mi.max() > 0:
        log_scores = log_scores + _safe_log(mi)
    # else: the MI factor carries no information (e.g. a single concept);
    # applying it would zero every candidate, so it is skipped

    if np.all(np.isneginf(log_scores)):
        raise NoPredictionError("every candidate word scored zero")
    shifted = np.exp(log_scores - log_scores[np.isfinite(log_scores)].max())
    shifted = np.where(np.isfinite(log_scores), shifted, 0.0)
    probs = shifted / shifted.sum()
    order = np.argsort(-probs, kind="stable")
    return [(words[i], float(probs[i])) for i in order[:top_k]]


def predict_region(model: TrainedModel, env_id: int, word: str):
    """Posterior over regions given a location name; returns (argmax, posterior)."""
    _check_env(model, env_id)
    env = model.envs[env_id]
    k = model.dictionary.index(word)
    if model.pruned_words[k]:
        raise VocabularyError(f"word {word!r} was pruned")
    weights = env.ge * env.theta_w[:, k]                     # (L,)
    posterior = weights @ env.pi                             # (M,)
    total = posterior.sum()
    if total <= 0:
        raise NoPredictionError(f"word {word!r} has zero posterior mass")
    posterior = posterior / total
    return int(np.argmax(posterior)), posterior


def predict_positions(model: TrainedModel, env_id: int, word: str,
                      n_samples: int, rng: np.random.Generator) -> list[Pose]:
    """Sample poses from the Gaussian of the most probable region for a name."""
    if n_samples < 1:
        raise VocabularyError("n_samples must be at least 1")
    region, _ = predict_region(model, env_id, word)
    env = model.envs[env_id]
    chol = np.linalg.cholesky(env.sigma[region])
    poses = []
    for _ in range(n_samples):
        x = env.mu[region] + chol @ rng.standard_normal(4)
        poses.append(Pose(float(x[0]), float(x[1]), float(x[2]), float(x[3])))
    return poses
