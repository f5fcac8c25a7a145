"""Domain types shared by the samplers, predictors, and evaluation drivers.

All types are immutable after construction (array fields are marked
read-only) and safe to share across threads.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

POSE_DIM = 4


class SpcoError(Exception):
    """Base class for all library errors."""


class ParameterError(SpcoError):
    """A distribution or model parameter violates its precondition."""


class DegenerateDistributionError(SpcoError):
    """Every component of a categorical posterior has zero mass."""


class VocabularyError(SpcoError):
    """A word is unknown to the dictionary or has been pruned."""


class PruningError(SpcoError):
    """Mutual-information pruning would zero an entire word distribution."""


class GenerationError(SpcoError):
    """The synthetic generator could not satisfy its constraints."""


class ConfigurationError(SpcoError):
    """Invalid training configuration or corpus structure."""


class MetricError(SpcoError):
    """An accuracy metric was asked to average over an empty group."""


class NoPredictionError(SpcoError):
    """Every candidate word scored zero."""


def readonly(a, dtype=float) -> np.ndarray:
    """Copy ``a`` into a read-only float array."""
    arr = np.array(a, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


def is_simplex(row: np.ndarray, tol: float = 1e-9) -> bool:
    row = np.asarray(row, dtype=float)
    return bool(np.all(row >= 0.0) and abs(row.sum() - 1.0) <= tol)


def is_spd(mat: np.ndarray) -> bool:
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        return False
    if not np.allclose(mat, mat.T, atol=1e-10):
        return False
    try:
        np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        return False
    return True


@dataclass(frozen=True)
class Pose:
    """Robot pose on the map: position in meters plus orientation as (sin, cos)."""

    x: float
    y: float
    sin_theta: float
    cos_theta: float

    @classmethod
    def from_angle(cls, x: float, y: float, theta: float) -> "Pose":
        pose = cls(float(x), float(y), math.sin(theta), math.cos(theta))
        norm = pose.sin_theta**2 + pose.cos_theta**2
        if abs(norm - 1.0) > 1e-6:
            raise ParameterError(f"orientation norm {norm} deviates from 1")
        return pose

    @classmethod
    def from_vector(cls, vec) -> "Pose":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (POSE_DIM,):
            raise ParameterError(f"pose vector must have shape (4,), got {vec.shape}")
        norm = vec[2] ** 2 + vec[3] ** 2
        if abs(norm - 1.0) > 1e-6:
            # recorded data may carry noisy orientations; accept but flag
            warnings.warn(
                f"pose orientation norm {norm:.6f} deviates from 1", stacklevel=2
            )
        return cls(float(vec[0]), float(vec[1]), float(vec[2]), float(vec[3]))

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.sin_theta, self.cos_theta])


@dataclass(frozen=True)
class Observation:
    """One timestep's (position, visual bag, optional word bag) in an environment."""

    env_id: int
    t: int
    pose: Pose
    visual: np.ndarray
    words: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "visual", readonly(self.visual))
        if self.words is not None:
            object.__setattr__(self, "words", readonly(self.words))


@dataclass(frozen=True)
class Dictionary:
    """Ordered list of distinct word strings; index k scores word-bag dimension k."""

    entries: tuple[str, ...]

    def __post_init__(self):
        entries = tuple(self.entries)
        if len(set(entries)) != len(entries):
            raise ParameterError("dictionary entries must be unique")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "_index", {w: k for k, w in enumerate(entries)})

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, word: str) -> bool:
        return word in self._index

    def index(self, word: str) -> int:
        try:
            return self._index[word]
        except KeyError:
            raise VocabularyError(f"unknown word: {word!r}") from None


def default_psi0() -> np.ndarray:
    return np.diag([10.0, 10.0, 0.5, 0.5])


@dataclass(frozen=True)
class Hyperparameters:
    """Fixed constants of the model; defaults follow the reference setup."""

    alpha_v: float = 3.0
    alpha_w: float = 1.0e-2
    delta_v: float = 3.0e5
    delta_w: float = 1.0e4
    gamma: float = 10.0
    gamma0: float = 0.2
    beta: float = 3.0
    mu0: np.ndarray | None = None  # None -> per-environment positional centroid
    kappa0: float = 5.0e-2
    psi0: np.ndarray = field(default_factory=default_psi0)
    nu0: float = 10.0
    s_v: float = 5.0
    s_w: float = 5.0e3
    epsilon: float = 0.1
    L: int = 15
    M: int = 20
    iterations: int = 200
    sigma_init: float = 1.0

    def __post_init__(self):
        for name in ("alpha_v", "alpha_w", "delta_v", "delta_w", "gamma",
                     "gamma0", "beta", "kappa0", "s_v", "s_w"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be positive")
        if self.nu0 <= POSE_DIM - 1:
            raise ParameterError("nu0 must exceed the pose dimension minus one (3)")
        if self.L < 1 or self.M < 1:
            raise ParameterError("truncations L and M must be at least 1")
        if self.iterations < 0:
            raise ParameterError("iterations must be non-negative")
        if self.epsilon < 0:
            raise ParameterError("epsilon must be non-negative")
        if self.sigma_init <= 0:
            raise ParameterError("sigma_init must be positive")
        psi0 = np.asarray(self.psi0, dtype=float)
        if not is_spd(psi0):
            raise ParameterError("psi0 must be symmetric positive definite")
        object.__setattr__(self, "psi0", readonly(psi0))
        if self.mu0 is not None:
            mu0 = np.asarray(self.mu0, dtype=float)
            if mu0.shape != (POSE_DIM,):
                raise ParameterError("mu0 must be a 4-vector")
            object.__setattr__(self, "mu0", readonly(mu0))


def _check_simplex_rows(name: str, rows: np.ndarray, violations: list[str],
                        tol: float = 1e-9) -> None:
    for i, row in enumerate(np.atleast_2d(rows)):
        if not is_simplex(row, tol):
            violations.append(f"{name}[{i}] is not a simplex (sum={row.sum()!r})")


@dataclass(frozen=True)
class GlobalParams:
    """Environment-shared knowledge: per-concept emission rows and the top-level weights."""

    phi_v: np.ndarray  # (L, D_v)
    phi_w: np.ndarray  # (L, D_w)
    g0: np.ndarray     # (L,)

    def __post_init__(self):
        object.__setattr__(self, "phi_v", readonly(self.phi_v))
        object.__setattr__(self, "phi_w", readonly(self.phi_w))
        object.__setattr__(self, "g0", readonly(self.g0))

    def validate(self) -> list[str]:
        out: list[str] = []
        _check_simplex_rows("phi_v", self.phi_v, out)
        _check_simplex_rows("phi_w", self.phi_w, out)
        _check_simplex_rows("g0", self.g0[None, :], out)
        return out


@dataclass(frozen=True)
class EnvParams:
    """Per-environment knowledge: emissions, region mixture, and region Gaussians."""

    theta_v: np.ndarray  # (L, D_v)
    theta_w: np.ndarray  # (L, D_w)
    pi: np.ndarray       # (L, M)
    mu: np.ndarray       # (M, 4)
    sigma: np.ndarray    # (M, 4, 4)
    ge: np.ndarray       # (L,)

    def __post_init__(self):
        for name in ("theta_v", "theta_w", "pi", "mu", "sigma", "ge"):
            object.__setattr__(self, name, readonly(getattr(self, name)))

    def validate(self) -> list[str]:
        out: list[str] = []
        _check_simplex_rows("theta_v", self.theta_v, out)
        _check_simplex_rows("theta_w", self.theta_w, out)
        _check_simplex_rows("pi", self.pi, out)
        _check_simplex_rows("ge", self.ge[None, :], out)
        for m, cov in enumerate(self.sigma):
            if not is_spd(cov):
                out.append(f"sigma[{m}] is not symmetric positive definite")
        return out


@dataclass(frozen=True)
class Assignments:
    """Latent concept and region indices per observation of one environment."""

    c: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "c", readonly(self.c, dtype=np.int64))
        object.__setattr__(self, "r", readonly(self.r, dtype=np.int64))
        if self.c.shape != self.r.shape:
            raise ParameterError("c and r must have equal length")


@dataclass(frozen=True)
class TrainedModel:
    """Final Gibbs state of one training run, serializable to JSON."""

    hyper: Hyperparameters
    dictionary: Dictionary
    global_params: GlobalParams
    envs: tuple[EnvParams, ...]
    assignments: tuple[Assignments, ...]
    pruned_words: np.ndarray  # (D_w,) bool
    mode: str = "transfer"

    def __post_init__(self):
        object.__setattr__(self, "envs", tuple(self.envs))
        object.__setattr__(self, "assignments", tuple(self.assignments))
        object.__setattr__(self, "pruned_words", readonly(self.pruned_words, dtype=bool))

    @property
    def n_envs(self) -> int:
        return len(self.envs)

    def validate(self) -> list[str]:
        out = self.global_params.validate()
        for e, env in enumerate(self.envs):
            out.extend(f"env {e}: {v}" for v in env.validate())
            pruned_cols = np.flatnonzero(self.pruned_words)
            if pruned_cols.size and np.any(env.theta_w[:, pruned_cols] != 0.0):
                out.append(f"env {e}: pruned word columns are not zero in theta_w")
        pruned_cols = np.flatnonzero(self.pruned_words)
        if pruned_cols.size and np.any(self.global_params.phi_w[:, pruned_cols] != 0.0):
            out.append("pruned word columns are not zero in phi_w")
        if len(self.assignments) != len(self.envs):
            out.append("assignments and envs lengths differ")
        return out


@dataclass(frozen=True)
class EvaluationRegion:
    """Ground-truth axis-aligned rectangle for one location name, in map meters."""

    name: str
    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ParameterError("rectangle bounds must satisfy min < max")

    def contains(self, x: float, y: float) -> bool:
        # boundary inclusive
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max


def validate_corpus(observations, dictionary: Dictionary | None = None) -> list[str]:
    """Report structural violations in a corpus; an empty list means valid."""
    violations: list[str] = []
    if not observations:
        return violations
    d_v = observations[0].visual.shape[0]
    d_w = len(dictionary) if dictionary is not None else None
    env_ids = set()
    for i, obs in enumerate(observations):
        env_ids.add(obs.env_id)
        if obs.env_id < 0:
            violations.append(f"observation {i}: negative env id {obs.env_id}")
        if obs.visual.shape != (d_v,):
            violations.append(
                f"observation {i}: visual dimension {obs.visual.shape[0]} != {d_v}"
            )
        if np.any(obs.visual < 0):
            violations.append(f"observation {i}: negative visual entries")
        if obs.words is not None:
            if d_w is None:
                d_w = obs.words.shape[0]
            if obs.words.shape != (d_w,):
                violations.append(
                    f"observation {i}: word dimension {obs.words.shape[0]} != {d_w}"
                )
            if np.any(obs.words < 0):
                violations.append(f"observation {i}: negative word entries")
    expected = set(range(len(env_ids)))
    if env_ids != expected:
        violations.append(
            f"env ids {sorted(env_ids)} are not contiguous from 0"
        )
    return violations


def group_by_env(observations) -> list[list[Observation]]:
    """Split a corpus into per-environment lists ordered by env id."""
    envs: dict[int, list[Observation]] = {}
    for obs in observations:
        envs.setdefault(obs.env_id, []).append(obs)
    return [envs[e] for e in sorted(envs)]
