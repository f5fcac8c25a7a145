"""Gibbs samplers: the cross-environment transfer model and the SpCoA(+MI) baseline.

The transfer sampler sweeps, per environment, region and concept assignments,
region Gaussians, and the environment emissions, then resamples the shared
emission rows and top-level concept weights, and finally reconstructs the
word distributions with mutual-information pruning. SpCoA runs the
single-environment, word-only variant; SpCoA+MI adds the pruning block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    Assignments,
    ConfigurationError,
    DegenerateDistributionError,
    Dictionary,
    EnvParams,
    GlobalParams,
    Hyperparameters,
    PruningError,
    TrainedModel,
    group_by_env,
    validate_corpus,
)
from .stats import (
    NiwParams,
    gaussian_logpdf_batch,
    multinomial_loglik_matrix,
    niw_posterior,
    sample_categorical_rows,
    sample_dirichlet_with_zeros,
    sample_niw,
    stick_breaking,
)

MODES = ("transfer", "spcoa", "spcoa_mi")


@dataclass(frozen=True)
class TrainConfig:
    hyper: Hyperparameters
    mode: str = "transfer"
    seed: int = 0
    record_trace: bool = False
    prune_each_sweep: bool = True  # False: apply the MI block once, after the loop

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {self.mode!r}")


@dataclass
class EnvData:
    """Static per-environment observation arrays."""

    X: np.ndarray          # (n, 4) poses
    V: np.ndarray          # (n, D_v) visual bags
    W: np.ndarray          # (n, D_w) word bags, zero rows where absent
    has_words: np.ndarray  # (n,) bool

    @classmethod
    def from_observations(cls, observations, d_w: int) -> "EnvData":
        X = np.stack([obs.pose.to_array() for obs in observations])
        V = np.stack([obs.visual for obs in observations])
        W = np.zeros((len(observations), d_w))
        has_words = np.zeros(len(observations), dtype=bool)
        for i, obs in enumerate(observations):
            if obs.words is not None:
                W[i] = obs.words
                has_words[i] = True
        return cls(X=X, V=V, W=W, has_words=has_words)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def centroid(self) -> np.ndarray:
        return self.X.mean(axis=0)


@dataclass
class EnvState:
    """Mutable per-environment sampler state."""

    theta_v: np.ndarray
    theta_w: np.ndarray
    pi: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    ge: np.ndarray
    c: np.ndarray
    r: np.ndarray
    niw_prior: NiwParams


@dataclass
class GlobalState:
    """Mutable environment-shared sampler state."""

    phi_v: np.ndarray
    phi_w: np.ndarray
    g0: np.ndarray
    pruned: np.ndarray  # (D_w,) bool


def _safe_log(a: np.ndarray) -> np.ndarray:
    out = np.full(np.shape(a), -np.inf)
    np.log(a, out=out, where=np.asarray(a) > 0)
    return out


# ---------------------------------------------------------------------------
# Dirichlet concentration vectors (pure; also serve as counting oracles' target)

def theta_v_concentration(V, c, L, delta_v, phi_v) -> np.ndarray:
    counts = np.zeros((L, V.shape[1]))
    np.add.at(counts, c, V)
    return counts + delta_v * phi_v


def theta_w_concentration(W, has_words, c, L, delta_w, phi_w) -> np.ndarray:
    counts = np.zeros((L, W.shape[1]))
    np.add.at(counts, c[has_words], W[has_words])
    return counts + delta_w * phi_w


def pi_concentration(c, r, L, M, beta) -> np.ndarray:
    counts = np.zeros((L, M))
    np.add.at(counts, (c, r), 1.0)
    return counts + beta


def ge_concentration(c, L, gamma, g0) -> np.ndarray:
    return np.bincount(c, minlength=L).astype(float) + gamma * g0


def pooled_bag_counts(env_data_list, env_states, L, use_words: bool) -> np.ndarray:
    """Bag mass per concept summed across environments."""
    d = env_data_list[0].W.shape[1] if use_words else env_data_list[0].V.shape[1]
    counts = np.zeros((L, d))
    for data, state in zip(env_data_list, env_states):
        if use_words:
            np.add.at(counts, state.c[data.has_words], data.W[data.has_words])
        else:
            np.add.at(counts, state.c, data.V)
    return counts


def g0_concentration(env_states, L, gamma0) -> np.ndarray:
    # weak-limit direct-assignment surrogate: pooled concept counts across
    # environments plus a symmetric gamma0 / L term
    pooled = np.zeros(L)
    for state in env_states:
        pooled += np.bincount(state.c, minlength=L)
    return pooled + gamma0 / L


# ---------------------------------------------------------------------------
# Single-site posteriors (log space, normalizable by enumeration)

def region_log_posteriors(env: EnvState, data: EnvData) -> np.ndarray:
    """(n, M) unnormalized log posterior over region indices."""
    M = env.mu.shape[0]
    loglik = np.stack(
        [gaussian_logpdf_batch(data.X, env.mu[m], env.sigma[m]) for m in range(M)],
        axis=1,
    )
    return loglik + _safe_log(env.pi)[env.c, :]


def concept_log_posteriors(env: EnvState, data: EnvData,
                           use_visual: bool = True,
                           pruned: np.ndarray | None = None) -> np.ndarray:
    """(n, L) unnormalized log posterior over concept indices.

    The word factor is dropped for observations without a word bag
    (semi-supervised mode). Pruned words are out of the vocabulary and
    contribute nothing to any concept.
    """
    W = data.W
    if pruned is not None and pruned.any():
        W = np.where(pruned[None, :], 0.0, W)
    logp = multinomial_loglik_matrix(W, env.theta_w)
    logp[~data.has_words] = 0.0
    if use_visual:
        logp = logp + multinomial_loglik_matrix(data.V, env.theta_v)
    logp = logp + _safe_log(env.pi)[:, env.r].T
    return logp + _safe_log(env.ge)[None, :]


def sample_regions(env: EnvState, data: EnvData, rng: np.random.Generator) -> None:
    env.r = sample_categorical_rows(region_log_posteriors(env, data), rng)


def sample_concepts(env: EnvState, data: EnvData, rng: np.random.Generator,
                    use_visual: bool = True,
                    pruned: np.ndarray | None = None) -> None:
    env.c = sample_categorical_rows(
        concept_log_posteriors(env, data, use_visual, pruned), rng
    )


def sample_gaussians(env: EnvState, data: EnvData, rng: np.random.Generator) -> None:
    M = env.mu.shape[0]
    for m in range(M):
        posterior = niw_posterior(env.niw_prior, data.X[env.r == m])
        env.mu[m], env.sigma[m] = sample_niw(posterior, rng)


def sample_env_emissions(env: EnvState, glob: GlobalState, data: EnvData,
                         hyper: Hyperparameters, rng: np.random.Generator) -> None:
    L, M = env.pi.shape
    conc_v = theta_v_concentration(data.V, env.c, L, hyper.delta_v, glob.phi_v)
    conc_w = theta_w_concentration(data.W, data.has_words, env.c, L,
                                   hyper.delta_w, glob.phi_w)
    conc_pi = pi_concentration(env.c, env.r, L, M, hyper.beta)
    env.theta_v = np.vstack([sample_dirichlet_with_zeros(row, rng) for row in conc_v])
    env.theta_w = np.vstack([sample_dirichlet_with_zeros(row, rng) for row in conc_w])
    env.pi = np.vstack([sample_dirichlet_with_zeros(row, rng) for row in conc_pi])
    env.ge = sample_dirichlet_with_zeros(
        ge_concentration(env.c, L, hyper.gamma, glob.g0), rng
    )


def sample_global(env_data_list, env_states, glob: GlobalState,
                  hyper: Hyperparameters, rng: np.random.Generator) -> None:
    L = glob.phi_v.shape[0]
    conc_v = pooled_bag_counts(env_data_list, env_states, L, use_words=False) + hyper.alpha_v
    conc_w = pooled_bag_counts(env_data_list, env_states, L, use_words=True) + hyper.alpha_w
    glob.phi_v = np.vstack([sample_dirichlet_with_zeros(row, rng) for row in conc_v])
    glob.phi_w = np.vstack([sample_dirichlet_with_zeros(row, rng) for row in conc_w])
    glob.g0 = sample_dirichlet_with_zeros(g0_concentration(env_states, L, hyper.gamma0), rng)


# ---------------------------------------------------------------------------
# Mutual-information word pruning

def binary_word_concept_mi(word_rows: np.ndarray, concept_weights: np.ndarray) -> np.ndarray:
    """(D_w, L) mutual information between {word k vs not} and {concept l vs not}.

    Joint distribution: P(word | concept row) times the concept weights.
    """
    p_c = np.asarray(concept_weights, dtype=float)           # (L,)
    rows = np.asarray(word_rows, dtype=float)                # (L, D_w)
    p11 = (rows * p_c[:, None]).T                            # (D_w, L)
    p_w = p11.sum(axis=1)                                    # (D_w,)
    p10 = p_c[None, :] - p11
    p01 = p_w[:, None] - p11
    p00 = 1.0 - p11 - p10 - p01
    mw1, mw0 = p_w[:, None], (1.0 - p_w)[:, None]
    mc1, mc0 = p_c[None, :], (1.0 - p_c)[None, :]

    def term(p, margin_w, margin_c):
        with np.errstate(divide="ignore", invalid="ignore"):
            t = p * np.log(p / (margin_w * margin_c))
        return np.where(p > 0, t, 0.0)

    mi = (term(p11, mw1, mc1) + term(p10, mw0, mc1)
          + term(p01, mw1, mc0) + term(p00, mw0, mc0))
    return np.maximum(mi, 0.0)


def mi_prune(phi_w: np.ndarray, g0: np.ndarray, theta_w_list, epsilon: float,
             dictionary: Dictionary | None = None):
    """Zero word columns whose concept-association MI stays below ``epsilon``.

    Returns (phi_w, theta_w_list, pruned mask). When nothing qualifies, the
    inputs are returned unchanged (no renormalization), so a zero threshold
    is an exact no-op.
    """
    mi = binary_word_concept_mi(phi_w, g0)
    prune = mi.max(axis=1) < epsilon
    if not prune.any():
        return phi_w, list(theta_w_list), prune

    def zero_and_renormalize(rows, label):
        out = rows.copy()
        out[:, prune] = 0.0
        sums = out.sum(axis=1)
        if np.any(sums == 0):
            words = (
                [dictionary.entries[k] for k in np.flatnonzero(prune)]
                if dictionary is not None else np.flatnonzero(prune).tolist()
            )
            raise PruningError(
                f"pruning would zero an entire row of {label}; pruned words: {words}"
            )
        return out / sums[:, None]

    new_phi = zero_and_renormalize(phi_w, "phi_w")
    new_thetas = [zero_and_renormalize(t, "theta_w") for t in theta_w_list]
    return new_phi, new_thetas, prune


# ---------------------------------------------------------------------------
# Initialization and the full samplers

def init_state(env_data_list, d_v: int, d_w: int, config: TrainConfig,
               rng: np.random.Generator):
    hyper = config.hyper
    L, M = hyper.L, hyper.M
    glob = GlobalState(
        phi_v=np.full((L, d_v), 1.0 / d_v),
        phi_w=np.full((L, d_w), 1.0 / d_w),
        g0=stick_breaking(hyper.gamma0, L, rng),
        pruned=np.zeros(d_w, dtype=bool),
    )
    env_states = []
    for data in env_data_list:
        if data.n == 0:
            raise ConfigurationError("an environment has no observations")
        centroid = data.centroid
        mu0 = hyper.mu0 if hyper.mu0 is not None else centroid
        env_states.append(EnvState(
            theta_v=np.full((L, d_v), 1.0 / d_v),
            theta_w=np.full((L, d_w), 1.0 / d_w),
            pi=np.vstack([stick_breaking(hyper.beta, M, rng) for _ in range(L)]),
            mu=np.tile(centroid, (M, 1)),
            sigma=np.tile(np.diag([hyper.sigma_init] * 4), (M, 1, 1)),
            ge=np.full(L, 1.0 / L),
            c=rng.integers(0, L, size=data.n),
            r=rng.integers(0, M, size=data.n),
            niw_prior=NiwParams(mu=mu0, kappa=hyper.kappa0,
                                psi=hyper.psi0, nu=hyper.nu0),
        ))
    return glob, env_states


def _spcoa_emissions(env: EnvState, data: EnvData, hyper: Hyperparameters,
                     rng: np.random.Generator) -> None:
    L, M = env.pi.shape
    counts = np.zeros((L, data.W.shape[1]))
    np.add.at(counts, env.c[data.has_words], data.W[data.has_words])
    conc_w = counts + hyper.alpha_w
    conc_pi = pi_concentration(env.c, env.r, L, M, hyper.beta)
    env.theta_w = np.vstack([sample_dirichlet_with_zeros(row, rng) for row in conc_w])
    env.pi = np.vstack([sample_dirichlet_with_zeros(row, rng) for row in conc_pi])
    conc_g = np.bincount(env.c, minlength=L).astype(float) + hyper.gamma
    env.ge = sample_dirichlet_with_zeros(conc_g, rng)


def _transfer_sweep(env_data_list, env_states, glob, config, rng, dictionary):
    hyper = config.hyper
    for e, (data, env) in enumerate(zip(env_data_list, env_states)):
        try:
            sample_regions(env, data, rng)
            sample_concepts(env, data, rng, use_visual=True, pruned=glob.pruned)
            sample_gaussians(env, data, rng)
            sample_env_emissions(env, glob, data, hyper, rng)
        except DegenerateDistributionError as exc:
            raise DegenerateDistributionError(f"env {e}: {exc}") from exc
    sample_global(env_data_list, env_states, glob, hyper, rng)


def _spcoa_sweep(data, env, glob, config, rng):
    hyper = config.hyper
    sample_regions(env, data, rng)
    sample_concepts(env, data, rng, use_visual=False, pruned=glob.pruned)
    sample_gaussians(env, data, rng)
    _spcoa_emissions(env, data, hyper, rng)


def _apply_mi_block(env_states, glob, config, dictionary):
    hyper = config.hyper
    if config.mode == "transfer":
        glob.phi_w, thetas, glob.pruned = mi_prune(
            glob.phi_w, glob.g0, [env.theta_w for env in env_states],
            hyper.epsilon, dictionary,
        )
        for env, theta in zip(env_states, thetas):
            env.theta_w = theta
    else:  # spcoa_mi: the word rows double as the shared distribution
        env = env_states[0]
        new_rows, _, glob.pruned = mi_prune(
            env.theta_w, env.ge, [], hyper.epsilon, dictionary
        )
        env.theta_w = new_rows


def fit(corpus, dictionary: Dictionary, config: TrainConfig,
        sweep_callback=None) -> TrainedModel:
    """Run the configured Gibbs sampler over a validated corpus."""
    violations = validate_corpus(corpus, dictionary)
    if violations:
        raise ConfigurationError("invalid corpus: " + "; ".join(violations))
    if not corpus:
        raise ConfigurationError("corpus is empty")
    env_groups = group_by_env(corpus)
    if config.mode in ("spcoa", "spcoa_mi") and len(env_groups) != 1:
        raise ConfigurationError(
            f"{config.mode} requires a single-environment corpus, got {len(env_groups)}"
        )
    d_v = corpus[0].visual.shape[0]
    d_w = len(dictionary)
    if d_w == 0:
        raise ConfigurationError("dictionary is empty")
    env_data_list = [EnvData.from_observations(group, d_w) for group in env_groups]

    rng = np.random.default_rng(config.seed)
    glob, env_states = init_state(env_data_list, d_v, d_w, config, rng)

    run_mi = config.mode in ("transfer", "spcoa_mi")
    for it in range(config.hyper.iterations):
        try:
            if config.mode == "transfer":
                _transfer_sweep(env_data_list, env_states, glob, config, rng, dictionary)
            else:
                _spcoa_sweep(env_data_list[0], env_states[0], glob, config, rng)
            if run_mi and config.prune_each_sweep:
                _apply_mi_block(env_states, glob, config, dictionary)
        except (DegenerateDistributionError, PruningError) as exc:
            raise type(exc)(f"iteration {it}: {exc}") from exc
        if sweep_callback is not None:
            sweep_callback(it, glob, env_states)
    if run_mi and not config.prune_each_sweep and config.hyper.iterations > 0:
        _apply_mi_block(env_states, glob, config, dictionary)

    return _assemble_model(glob, env_states, dictionary, config, d_v)


def _assemble_model(glob: GlobalState, env_states, dictionary, config,
                    d_v: int) -> TrainedModel:
    if config.mode == "transfer":
        global_params = GlobalParams(phi_v=glob.phi_v, phi_w=glob.phi_w, g0=glob.g0)
    else:
        env = env_states[0]
        uniform_v = np.full((config.hyper.L, d_v), 1.0 / d_v)
        global_params = GlobalParams(phi_v=uniform_v, phi_w=env.theta_w, g0=env.ge)
    envs = []
    for env in env_states:
        envs.append(EnvParams(theta_v=env.theta_v, theta_w=env.theta_w, pi=env.pi,
                              mu=env.mu, sigma=env.sigma, ge=env.ge))
    assignments = [Assignments(c=env.c, r=env.r) for env in env_states]
    return TrainedModel(
        hyper=config.hyper,
        dictionary=dictionary,
        global_params=global_params,
        envs=tuple(envs),
        assignments=tuple(assignments),
        pruned_words=glob.pruned,
        mode=config.mode,
    )


def fit_traced(corpus, dictionary: Dictionary, config: TrainConfig):
    """Like :func:`fit`, additionally returning per-sweep assignment snapshots."""
    trace: list[tuple[Assignments, ...]] = []

    def record(_it, _glob, env_states):
        trace.append(tuple(Assignments(c=env.c, r=env.r) for env in env_states))

    model = fit(corpus, dictionary, config,
                sweep_callback=record if config.record_trace else None)
    return model, trace
