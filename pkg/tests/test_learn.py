"""Gibbs samplers: counting oracles, enumeration oracles, MI pruning, invariants."""

import json

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from spco.core import (
    ConfigurationError,
    Dictionary,
    Hyperparameters,
    Observation,
    Pose,
    PruningError,
)
from spco.data import SynthSpec, generate_synthetic
from spco.learn import (
    EnvData,
    EnvState,
    TrainConfig,
    binary_word_concept_mi,
    concept_log_posteriors,
    fit,
    fit_traced,
    ge_concentration,
    mi_prune,
    pi_concentration,
    region_log_posteriors,
    theta_v_concentration,
    theta_w_concentration,
)
from spco.model_io import model_to_dict
from spco.stats import NiwParams


def random_env(rng, n=12, L=4, M=3, d_v=5, d_w=4, with_words=True):
    """A random EnvState/EnvData pair with valid simplex parameters."""
    X = rng.standard_normal((n, 4))
    V = rng.integers(0, 5, size=(n, d_v)).astype(float)
    W = rng.integers(0, 3, size=(n, d_w)).astype(float)
    has_words = rng.random(n) < 0.7 if with_words else np.zeros(n, dtype=bool)
    W[~has_words] = 0.0
    data = EnvData(X=X, V=V, W=W, has_words=has_words)

    def simplex_rows(rows, cols):
        raw = rng.uniform(0.1, 1.0, size=(rows, cols))
        return raw / raw.sum(axis=1, keepdims=True)

    cov = np.empty((M, 4, 4))
    for m in range(M):
        a = rng.standard_normal((4, 4))
        cov[m] = a @ a.T + 2 * np.eye(4)
    env = EnvState(
        theta_v=simplex_rows(L, d_v),
        theta_w=simplex_rows(L, d_w),
        pi=simplex_rows(L, M),
        mu=rng.standard_normal((M, 4)),
        sigma=cov,
        ge=simplex_rows(1, L)[0],
        c=rng.integers(0, L, size=n),
        r=rng.integers(0, M, size=n),
        niw_prior=NiwParams(mu=np.zeros(4), kappa=1.0, psi=np.eye(4), nu=6.0),
    )
    return env, data


class TestConcentrationOracles:
    """Independent per-element counting loops as oracles for the vectorized sums."""

    def test_theta_v_concentration(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            env, data = random_env(rng)
            L, d_v = env.theta_v.shape
            phi_v = env.theta_v  # any simplex rows will do
            out = theta_v_concentration(data.V, env.c, L, 7.0, phi_v)
            expected = 7.0 * phi_v.copy()
            for i in range(data.n):
                for k in range(d_v):
                    expected[env.c[i], k] += data.V[i, k]
            assert np.allclose(out, expected, atol=1e-12)

    def test_theta_w_concentration_skips_wordless(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            env, data = random_env(rng)
            L, d_w = env.theta_w.shape
            phi_w = env.theta_w
            out = theta_w_concentration(data.W, data.has_words, env.c, L, 3.0, phi_w)
            expected = 3.0 * phi_w.copy()
            for i in range(data.n):
                if data.has_words[i]:
                    expected[env.c[i]] += data.W[i]
            assert np.allclose(out, expected, atol=1e-12)

    def test_pi_concentration(self):
        rng = np.random.default_rng(2)
        env, data = random_env(rng)
        L, M = env.pi.shape
        out = pi_concentration(env.c, env.r, L, M, 1.5)
        expected = np.full((L, M), 1.5)
        for i in range(data.n):
            expected[env.c[i], env.r[i]] += 1.0
        assert np.allclose(out, expected, atol=1e-12)

    def test_ge_concentration(self):
        rng = np.random.default_rng(3)
        env, _ = random_env(rng)
        L = env.ge.shape[0]
        g0 = env.ge
        out = ge_concentration(env.c, L, 10.0, g0)
        expected = 10.0 * g0.copy()
        for ci in env.c:
            expected[ci] += 1.0
        assert np.allclose(out, expected, atol=1e-12)


class TestSingleSitePosteriors:
    """Brute-force enumeration oracles for the region and concept posteriors."""

    def test_region_posterior_matches_enumeration(self):
        rng = np.random.default_rng(4)
        for _ in range(25):
            env, data = random_env(rng, L=rng.integers(2, 6), M=rng.integers(2, 6))
            logp = region_log_posteriors(env, data)
            probs = np.exp(logp - logp.max(axis=1, keepdims=True))
            probs /= probs.sum(axis=1, keepdims=True)
            M = env.mu.shape[0]
            for i in range(data.n):
                weights = np.array([
                    multivariate_normal(env.mu[m], env.sigma[m]).pdf(data.X[i])
                    * env.pi[env.c[i], m]
                    for m in range(M)
                ])
                assert np.allclose(probs[i], weights / weights.sum(), atol=1e-12)

    def test_concept_posterior_matches_enumeration(self):
        rng = np.random.default_rng(5)
        for _ in range(25):
            env, data = random_env(rng, L=rng.integers(2, 6), M=rng.integers(2, 6))
            logp = concept_log_posteriors(env, data)
            probs = np.exp(logp - logp.max(axis=1, keepdims=True))
            probs /= probs.sum(axis=1, keepdims=True)
            L = env.ge.shape[0]
            for i in range(data.n):
                weights = np.empty(L)
                for l in range(L):
                    w = np.prod(env.theta_v[l] ** data.V[i])
                    if data.has_words[i]:
                        w *= np.prod(env.theta_w[l] ** data.W[i])
                    w *= env.pi[l, env.r[i]] * env.ge[l]
                    weights[l] = w
                assert np.allclose(probs[i], weights / weights.sum(), atol=1e-12)

    def test_word_factor_dropped_without_bag(self):
        rng = np.random.default_rng(6)
        env, data = random_env(rng, with_words=False)
        # with no word bags anywhere, theta_w must not influence the posterior
        logp1 = concept_log_posteriors(env, data)
        env.theta_w = np.roll(env.theta_w, 1, axis=0)
        logp2 = concept_log_posteriors(env, data)
        assert np.allclose(logp1, logp2)

    def test_pruned_words_do_not_contribute(self):
        rng = np.random.default_rng(7)
        env, data = random_env(rng)
        pruned = np.zeros(data.W.shape[1], dtype=bool)
        pruned[0] = True
        env.theta_w[:, 0] = 0.0
        env.theta_w /= env.theta_w.sum(axis=1, keepdims=True)
        logp = concept_log_posteriors(env, data, pruned=pruned)
        assert np.all(np.isfinite(logp.max(axis=1)))


class TestMutualInformation:
    def test_two_by_two_example(self):
        # P(c)=0.5, P(w|c)=0.9, P(w|not c)=0.1 -> about 0.368 nats
        phi_w = np.array([[0.9, 0.1], [0.1, 0.9]])
        g0 = np.array([0.5, 0.5])
        mi = binary_word_concept_mi(phi_w, g0)
        p11, p10, p01, p00 = 0.45, 0.05, 0.05, 0.45
        expected = (p11 * np.log(p11 / 0.25) + p10 * np.log(p10 / 0.25)
                    + p01 * np.log(p01 / 0.25) + p00 * np.log(p00 / 0.25))
        assert abs(expected - 0.368) < 1e-3
        assert np.allclose(mi, expected, atol=1e-12)

    def test_uniform_word_has_zero_mi(self):
        phi_w = np.array([[0.5, 0.5], [0.5, 0.5]])
        g0 = np.array([0.3, 0.7])
        assert np.allclose(binary_word_concept_mi(phi_w, g0), 0.0, atol=1e-12)

    def test_matches_nested_loop_oracle(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            L, d_w = 4, 6
            raw = rng.uniform(0.05, 1.0, size=(L, d_w))
            phi_w = raw / raw.sum(axis=1, keepdims=True)
            g0raw = rng.uniform(0.1, 1.0, L)
            g0 = g0raw / g0raw.sum()
            mi = binary_word_concept_mi(phi_w, g0)
            for k in range(d_w):
                for l in range(L):
                    p11 = phi_w[l, k] * g0[l]
                    p_w = float(phi_w[:, k] @ g0)
                    p10 = g0[l] - p11
                    p01 = p_w - p11
                    p00 = 1.0 - p11 - p10 - p01
                    expected = 0.0
                    for p, mw, mc in ((p11, p_w, g0[l]), (p10, 1 - p_w, g0[l]),
                                      (p01, p_w, 1 - g0[l]), (p00, 1 - p_w, 1 - g0[l])):
                        if p > 0:
                            expected += p * np.log(p / (mw * mc))
                    assert abs(mi[k, l] - max(expected, 0.0)) < 1e-12


class TestMiPrune:
    def test_epsilon_zero_is_identity(self):
        phi_w = np.array([[0.9, 0.1], [0.1, 0.9]])
        g0 = np.array([0.5, 0.5])
        thetas = [phi_w.copy()]
        new_phi, new_thetas, mask = mi_prune(phi_w, g0, thetas, 0.0)
        assert new_phi is phi_w
        assert new_thetas[0] is thetas[0]
        assert not mask.any()

    def test_low_mi_column_pruned_and_renormalized(self):
        phi_w = np.array([[0.45, 0.1, 0.45], [0.05, 0.1, 0.85]])
        phi_w /= phi_w.sum(axis=1, keepdims=True)
        g0 = np.array([0.5, 0.5])
        theta = phi_w.copy()
        new_phi, (new_theta,), mask = mi_prune(phi_w, g0, [theta], 0.05)
        assert mask[1] and not mask[0] and not mask[2]
        assert np.all(new_phi[:, 1] == 0.0)
        assert np.all(new_theta[:, 1] == 0.0)
        assert np.allclose(new_phi.sum(axis=1), 1.0)
        assert np.allclose(new_theta.sum(axis=1), 1.0)

    def test_refuses_to_zero_a_row(self):
        phi_w = np.array([[0.5, 0.5], [0.5, 0.5]])
        g0 = np.array([0.5, 0.5])
        d = Dictionary(("a", "b"))
        with pytest.raises(PruningError, match="a.*b"):
            mi_prune(phi_w, g0, [], 0.1, d)


def small_corpus(seed=0, E=2):
    corpus, truth = generate_synthetic(
        SynthSpec(E=E, L_true=3, M_true=2, n_per_env=30, seed=seed))
    return corpus, truth


def desk_hyper(**kw):
    base = dict(L=6, M=10, iterations=20, epsilon=0.0)
    base.update(kw)
    return Hyperparameters(**base)


class TestFit:
    def test_deterministic(self):
        corpus, truth = small_corpus()
        cfg = TrainConfig(hyper=desk_hyper(), seed=3)
        a = fit(corpus, truth.dictionary, cfg)
        b = fit(corpus, truth.dictionary, cfg)
        assert json.dumps(model_to_dict(a), sort_keys=True) == \
            json.dumps(model_to_dict(b), sort_keys=True)

    def test_model_validates(self):
        corpus, truth = small_corpus()
        model = fit(corpus, truth.dictionary, TrainConfig(hyper=desk_hyper(), seed=1))
        assert model.validate() == []
        assert model.n_envs == 2

    def test_invariants_every_sweep(self):
        corpus, truth = small_corpus()
        violations = []

        def check(it, glob, env_states):
            for name, rows in (("phi_v", glob.phi_v), ("phi_w", glob.phi_w),
                               ("g0", glob.g0[None, :])):
                if not np.allclose(rows.sum(axis=1), 1.0, atol=1e-9):
                    violations.append(f"sweep {it}: {name}")
            for env in env_states:
                for name, rows in (("theta_v", env.theta_v), ("theta_w", env.theta_w),
                                   ("pi", env.pi), ("ge", env.ge[None, :])):
                    if not np.allclose(rows.sum(axis=1), 1.0, atol=1e-9):
                        violations.append(f"sweep {it}: {name}")
                for m in range(env.mu.shape[0]):
                    np.linalg.cholesky(env.sigma[m])

        fit(corpus, truth.dictionary, TrainConfig(hyper=desk_hyper(), seed=2),
            sweep_callback=check)
        assert violations == []

    def test_spcoa_requires_single_env(self):
        corpus, truth = small_corpus(E=2)
        with pytest.raises(ConfigurationError, match="single-environment"):
            fit(corpus, truth.dictionary,
                TrainConfig(hyper=desk_hyper(), mode="spcoa", seed=0))

    def test_spcoa_runs_and_has_uniform_visual_rows(self):
        corpus, truth = small_corpus(E=1)
        model = fit(corpus, truth.dictionary,
                    TrainConfig(hyper=desk_hyper(), mode="spcoa", seed=0))
        d_v = corpus[0].visual.shape[0]
        assert np.allclose(model.envs[0].theta_v, 1.0 / d_v)
        assert model.validate() == []

    def test_empty_corpus_rejected(self):
        with pytest.raises(ConfigurationError):
            fit([], Dictionary(("a",)), TrainConfig(hyper=desk_hyper(), seed=0))

    def test_empty_dictionary_rejected(self):
        corpus = [Observation(env_id=0, t=0, pose=Pose.from_angle(0, 0, 0),
                              visual=np.ones(3))]
        with pytest.raises(ConfigurationError, match="dictionary"):
            fit(corpus, Dictionary(()), TrainConfig(hyper=desk_hyper(), seed=0))

    def test_invalid_mode_rejected(self):
        with pytest.raises(ConfigurationError):
            TrainConfig(hyper=desk_hyper(), mode="bogus")

    def test_zero_iterations_returns_initial_state(self):
        corpus, truth = small_corpus()
        model = fit(corpus, truth.dictionary,
                    TrainConfig(hyper=desk_hyper(iterations=0), seed=0))
        assert model.validate() == []

    def test_trace_length(self):
        corpus, truth = small_corpus()
        cfg = TrainConfig(hyper=desk_hyper(iterations=5), seed=0, record_trace=True)
        model, trace = fit_traced(corpus, truth.dictionary, cfg)
        assert len(trace) == 5
        assert np.array_equal(trace[-1][0].c, model.assignments[0].c)

    def test_spcoa_mi_epsilon_zero_bitwise_equals_spcoa(self):
        corpus, truth = small_corpus(E=1)
        a = fit(corpus, truth.dictionary,
                TrainConfig(hyper=desk_hyper(), mode="spcoa", seed=5))
        b = fit(corpus, truth.dictionary,
                TrainConfig(hyper=desk_hyper(), mode="spcoa_mi", seed=5))
        da, db = model_to_dict(a), model_to_dict(b)
        da.pop("mode"), db.pop("mode")
        assert json.dumps(da, sort_keys=True) == json.dumps(db, sort_keys=True)
