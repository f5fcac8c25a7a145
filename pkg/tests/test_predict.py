"""Name and position prediction against brute-force enumeration oracles."""

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from spco.core import (
    Assignments,
    Dictionary,
    EnvParams,
    GlobalParams,
    Hyperparameters,
    NoPredictionError,
    Pose,
    TrainedModel,
    VocabularyError,
)
from spco.learn import binary_word_concept_mi
from spco.predict import predict_name, predict_positions, predict_region


def build_model(rng, L=3, M=3, d_v=4, d_w=4, pruned=None):
    def simplex_rows(rows, cols):
        raw = rng.uniform(0.1, 1.0, size=(rows, cols))
        return raw / raw.sum(axis=1, keepdims=True)

    theta_w = simplex_rows(L, d_w)
    phi_w = simplex_rows(L, d_w)
    mask = np.zeros(d_w, dtype=bool)
    if pruned:
        mask[list(pruned)] = True
        for rows in (theta_w, phi_w):
            rows[:, mask] = 0.0
            rows /= rows.sum(axis=1, keepdims=True)
    cov = np.empty((M, 4, 4))
    for m in range(M):
        a = rng.standard_normal((4, 4))
        cov[m] = a @ a.T + 2 * np.eye(4)
    g0 = simplex_rows(1, L)[0]
    env = EnvParams(theta_v=simplex_rows(L, d_v), theta_w=theta_w,
                    pi=simplex_rows(L, M), mu=rng.standard_normal((M, 4)),
                    sigma=cov, ge=simplex_rows(1, L)[0])
    return TrainedModel(
        hyper=Hyperparameters(L=L, M=M),
        dictionary=Dictionary(tuple(f"w{k}" for k in range(d_w))),
        global_params=GlobalParams(phi_v=simplex_rows(L, d_v), phi_w=phi_w, g0=g0),
        envs=(env,),
        assignments=(Assignments(c=np.zeros(1), r=np.zeros(1)),),
        pruned_words=mask,
    )


def oracle_name_scores(model, pose, visual, indices):
    """Direct nested-loop evaluation of the name score for each word index."""
    env = model.envs[0]
    L, M = env.pi.shape
    x = pose.to_array()
    mi = binary_word_concept_mi(model.global_params.phi_w, model.global_params.g0)
    scores = []
    for k in indices:
        total = 0.0
        for l in range(L):
            pv = np.prod(env.theta_v[l] ** visual)
            for m in range(M):
                total += (env.theta_w[l, k] * pv * env.ge[l]
                          * multivariate_normal(env.mu[m], env.sigma[m]).pdf(x)
                          * env.pi[l, m])
        scores.append(total * mi[k].max())
    scores = np.array(scores)
    return scores / scores.sum()


class TestPredictName:
    def test_matches_enumeration(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            model = build_model(rng)
            pose = Pose.from_angle(*rng.standard_normal(2), 0.3)
            visual = rng.integers(0, 4, size=4).astype(float)
            ranked = predict_name(model, 0, pose, visual, top_k=4)
            expected = oracle_name_scores(model, pose, visual, range(4))
            got = {w: s for w, s in ranked}
            for k in range(4):
                assert abs(got[f"w{k}"] - expected[k]) < 1e-9
            probs = [s for _, s in ranked]
            assert probs == sorted(probs, reverse=True)
            assert abs(sum(probs) - 1.0) < 1e-9

    def test_point_mass_model(self):
        # one concept, one region, one-hot word row -> top-1 scores 1.0
        rng = np.random.default_rng(1)
        model = build_model(rng, L=1, M=1, d_w=2)
        env = model.envs[0]
        object.__setattr__(env, "theta_w", np.array([[1.0, 0.0]]))
        ranked = predict_name(model, 0, Pose.from_angle(0, 0, 0),
                              np.ones(4), top_k=1)
        assert ranked[0][0] == "w0"
        assert abs(ranked[0][1] - 1.0) < 1e-12

    def test_pruned_words_never_in_output(self):
        rng = np.random.default_rng(2)
        model = build_model(rng, pruned=[1])
        ranked = predict_name(model, 0, Pose.from_angle(0, 0, 0),
                              np.ones(4), top_k=4)
        assert "w1" not in {w for w, _ in ranked}
        assert len(ranked) == 3

    def test_candidate_subset_normalizes_over_subset(self):
        rng = np.random.default_rng(3)
        model = build_model(rng)
        ranked = predict_name(model, 0, Pose.from_angle(0, 0, 0), np.ones(4),
                              top_k=4, candidates=["w0", "w2"])
        assert {w for w, _ in ranked} == {"w0", "w2"}
        assert abs(sum(s for _, s in ranked) - 1.0) < 1e-9

    def test_no_candidates_raises(self):
        rng = np.random.default_rng(4)
        model = build_model(rng, pruned=[0])
        with pytest.raises(NoPredictionError):
            predict_name(model, 0, Pose.from_angle(0, 0, 0), np.ones(4),
                         candidates=["w0"])

    def test_unknown_env_rejected(self):
        rng = np.random.default_rng(5)
        model = build_model(rng)
        with pytest.raises(VocabularyError):
            predict_name(model, 1, Pose.from_angle(0, 0, 0), np.ones(4))

    def test_concept_permutation_invariance(self):
        rng = np.random.default_rng(6)
        model = build_model(rng)
        perm = np.array([2, 0, 1])
        env = model.envs[0]
        g = model.global_params
        permuted = TrainedModel(
            hyper=model.hyper, dictionary=model.dictionary,
            global_params=GlobalParams(phi_v=g.phi_v[perm], phi_w=g.phi_w[perm],
                                       g0=g.g0[perm]),
            envs=(EnvParams(theta_v=env.theta_v[perm], theta_w=env.theta_w[perm],
                            pi=env.pi[perm], mu=env.mu, sigma=env.sigma,
                            ge=env.ge[perm]),),
            assignments=model.assignments,
            pruned_words=model.pruned_words,
        )
        pose = Pose.from_angle(0.5, -0.5, 0.1)
        visual = np.array([2.0, 0.0, 1.0, 3.0])
        a = predict_name(model, 0, pose, visual, top_k=4)
        b = predict_name(permuted, 0, pose, visual, top_k=4)
        assert [w for w, _ in a] == [w for w, _ in b]
        assert np.allclose([s for _, s in a], [s for _, s in b], atol=1e-9)


class TestPredictRegion:
    def test_matches_enumeration(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            L = int(rng.integers(2, 6))
            M = int(rng.integers(2, 6))
            model = build_model(rng, L=L, M=M)
            env = model.envs[0]
            best, posterior = predict_region(model, 0, "w1")
            k = 1
            expected = np.zeros(M)
            for m in range(M):
                for l in range(L):
                    expected[m] += env.pi[l, m] * env.theta_w[l, k] * env.ge[l]
            expected /= expected.sum()
            assert np.allclose(posterior, expected, atol=1e-12)
            assert abs(posterior.sum() - 1.0) < 1e-9
            assert best == int(np.argmax(expected))

    def test_tie_breaks_to_lowest_index(self):
        rng = np.random.default_rng(8)
        model = build_model(rng, L=1, M=2, d_w=2)
        env = model.envs[0]
        object.__setattr__(env, "pi", np.array([[0.5, 0.5]]))
        best, posterior = predict_region(model, 0, "w0")
        assert best == 0
        assert np.allclose(posterior, [0.5, 0.5])

    def test_pruned_word_rejected(self):
        rng = np.random.default_rng(9)
        model = build_model(rng, pruned=[2])
        with pytest.raises(VocabularyError, match="pruned"):
            predict_region(model, 0, "w2")

    def test_unknown_word_rejected(self):
        rng = np.random.default_rng(10)
        model = build_model(rng)
        with pytest.raises(VocabularyError):
            predict_region(model, 0, "nope")


class TestPredictPositions:
    def test_sample_count_and_distribution(self):
        rng = np.random.default_rng(11)
        model = build_model(rng, L=1, M=1)
        env = model.envs[0]
        poses = predict_positions(model, 0, "w0", 10, np.random.default_rng(0))
        assert len(poses) == 10
        many = predict_positions(model, 0, "w0", 4000, np.random.default_rng(1))
        xs = np.array([[p.x, p.y, p.sin_theta, p.cos_theta] for p in many])
        assert np.allclose(xs.mean(axis=0), env.mu[0], atol=0.2)
        assert np.allclose(np.cov(xs.T), env.sigma[0], atol=0.35)

    def test_samples_come_from_argmax_region(self):
        rng = np.random.default_rng(12)
        model = build_model(rng, L=1, M=2, d_w=2)
        env = model.envs[0]
        object.__setattr__(env, "pi", np.array([[0.99, 0.01]]))
        mu = env.mu.copy()
        mu[0] = [100.0, 100.0, 0.0, 1.0]
        mu[1] = [-100.0, -100.0, 0.0, 1.0]
        object.__setattr__(env, "mu", mu)
        object.__setattr__(env, "sigma", np.tile(np.eye(4), (2, 1, 1)))
        poses = predict_positions(model, 0, "w0", 20, np.random.default_rng(2))
        assert all(p.x > 50 for p in poses)

    def test_deterministic_given_rng(self):
        rng = np.random.default_rng(13)
        model = build_model(rng)
        a = predict_positions(model, 0, "w0", 5, np.random.default_rng(7))
        b = predict_positions(model, 0, "w0", 5, np.random.default_rng(7))
        assert a == b

    def test_nonpositive_count_rejected(self):
        rng = np.random.default_rng(14)
        model = build_model(rng)
        with pytest.raises(VocabularyError):
            predict_positions(model, 0, "w0", 0, np.random.default_rng(0))
