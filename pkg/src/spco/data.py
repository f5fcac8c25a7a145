"""Corpus ingestion, bag encoding, and the forward-sampling synthetic generator.

Corpus file format: JSON lines, one record per line with fields
``{"env": int, "pose": [4 floats], "features": [...] | "visual": [...],
"sentence": "..." | null}``. ``features`` are raw activations and get scaled
by ``s_v``; ``visual`` is taken as an already-scaled bag.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import (
    Assignments,
    Dictionary,
    EnvParams,
    EvaluationRegion,
    GenerationError,
    GlobalParams,
    Observation,
    ParameterError,
    Pose,
    SpcoError,
)
from .stats import sample_dirichlet_with_zeros

_TERMINAL_PUNCT = ".,!?;:"

# scales used by the forward generator; count bags at these totals are small
# but carry the same information as the scaled production bags
GEN_VISUAL_DRAWS = 60
GEN_WORD_DRAWS = 4
GEN_POS_STD = 0.5
GEN_ANGLE_VAR = 0.01
GEN_G0_CONCENTRATION = 20.0
GEN_GE_CONCENTRATION = 100.0
GEN_THETA_CONCENTRATION = 1.0e4
_MAX_SEPARATION_ATTEMPTS = 1000


@dataclass(frozen=True)
class RawRecord:
    """One line of a corpus file before encoding."""

    env_id: int
    pose: np.ndarray
    features: np.ndarray | None = None
    visual: np.ndarray | None = None
    sentence: list[str] | None = None

    def __post_init__(self):
        if self.features is None and self.visual is None:
            raise ParameterError("record needs either features or visual")
        if self.features is not None and not np.all(np.isfinite(self.features)):
            raise ParameterError("features must be finite")
        if self.sentence is not None and any(not w for w in self.sentence):
            raise ParameterError("sentence words must be non-empty strings")


@dataclass(frozen=True)
class LoadConfig:
    s_v: float = 5.0
    s_w: float = 5.0e3


def tokenize(sentence: str) -> list[str]:
    """Lowercase, split on whitespace, strip terminal punctuation."""
    return [w for w in (tok.strip(_TERMINAL_PUNCT) for tok in sentence.lower().split()) if w]


def encode_visual(features, s_v: float) -> np.ndarray:
    """Scale activations into a bag of features; negatives clamp to zero."""
    if s_v <= 0:
        raise ParameterError("s_v must be positive")
    return np.maximum(np.asarray(features, dtype=float), 0.0) * s_v


def build_dictionary(records) -> Dictionary:
    """Unique words in first-appearance order across all record sentences."""
    seen: dict[str, None] = {}
    for rec in records:
        if rec.sentence:
            for word in rec.sentence:
                seen.setdefault(word, None)
    return Dictionary(tuple(seen))


def encode_words(sentence, dictionary: Dictionary, s_w: float) -> np.ndarray:
    """Presence bag: entry k is s_w iff word k occurs in the sentence, else 0."""
    if s_w <= 0:
        raise ParameterError("s_w must be positive")
    bag = np.zeros(len(dictionary))
    for word in sentence:
        bag[dictionary.index(word)] = s_w  # presence, not count
    return bag


def _parse_record(obj: dict, locus: str) -> RawRecord:
    try:
        env_id = int(obj["env"])
        pose = np.asarray(obj["pose"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise SpcoError(f"{locus}: malformed record ({exc})") from exc
    if pose.shape != (4,):
        raise SpcoError(f"{locus}: pose must have 4 entries")
    features = visual = None
    if obj.get("visual") is not None:
        visual = np.asarray(obj["visual"], dtype=float)
    elif obj.get("features") is not None:
        features = np.asarray(obj["features"], dtype=float)
    else:
        raise SpcoError(f"{locus}: record needs 'features' or 'visual'")
    sentence = None
    raw_sentence = obj.get("sentence")
    if raw_sentence is not None:
        sentence = tokenize(raw_sentence) if isinstance(raw_sentence, str) else [
            str(w) for w in raw_sentence
        ]
    return RawRecord(env_id=env_id, pose=pose, features=features,
                     visual=visual, sentence=sentence)


def read_records(path) -> list[RawRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SpcoError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            records.append(_parse_record(obj, f"{path}:{lineno}"))
    return records


def encode_corpus(records, dictionary: Dictionary,
                  config: LoadConfig = LoadConfig()) -> list[Observation]:
    """Encode raw records against a fixed dictionary, remapping env ids to 0..E-1."""
    if not records:
        return []
    env_order = sorted({rec.env_id for rec in records})
    env_map = {env: i for i, env in enumerate(env_order)}
    counters = {i: 0 for i in env_map.values()}
    observations = []
    d_v = None
    noisy_poses = 0
    for rec in records:
        if rec.visual is not None:
            visual = np.asarray(rec.visual, dtype=float)
        else:
            visual = encode_visual(rec.features, config.s_v)
        if d_v is None:
            d_v = visual.shape[0]
        elif visual.shape[0] != d_v:
            raise SpcoError(
                f"inconsistent visual dimension: {visual.shape[0]} != {d_v}"
            )
        words = None
        if rec.sentence is not None:
            words = encode_words(rec.sentence, dictionary, config.s_w)
        env = env_map[rec.env_id]
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            pose = Pose.from_vector(rec.pose)
        noisy_poses += len(caught)
        observations.append(
            Observation(env_id=env, t=counters[env], pose=pose,
                        visual=visual, words=words)
        )
        counters[env] += 1
    if noisy_poses:
        # one summary instead of a warning per record
        warnings.warn(
            f"{noisy_poses} of {len(records)} poses have orientation norms "
            "deviating from 1; accepted as recorded",
            stacklevel=2,
        )
    return observations


def load_corpus(path, config: LoadConfig = LoadConfig(),
                dictionary: Dictionary | None = None):
    """Load one corpus file; returns (observations, dictionary)."""
    records = read_records(path)
    if dictionary is None:
        dictionary = build_dictionary(records)
    return encode_corpus(records, dictionary, config), dictionary


def load_corpora(paths, config: LoadConfig = LoadConfig(),
                 dictionary: Dictionary | None = None):
    """Load several corpus files against one shared dictionary.

    Returns (per-file observation lists, dictionary). Env ids are remapped
    per file, so each file keeps its own 0..E-1 numbering.
    """
    record_lists = [read_records(p) for p in paths]
    if dictionary is None:
        dictionary = build_dictionary(rec for recs in record_lists for rec in recs)
    return [encode_corpus(recs, dictionary, config) for recs in record_lists], dictionary


def write_corpus(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            obj = {"env": rec.env_id, "pose": [float(v) for v in rec.pose]}
            if rec.visual is not None:
                obj["visual"] = [float(v) for v in rec.visual]
            else:
                obj["features"] = [float(v) for v in rec.features]
            obj["sentence"] = " ".join(rec.sentence) if rec.sentence else None
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


def write_regions(path, regions) -> None:
    payload = [
        {"name": r.name, "x_min": r.x_min, "x_max": r.x_max,
         "y_min": r.y_min, "y_max": r.y_max}
        for r in regions
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


def read_regions(path) -> list[EvaluationRegion]:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    return [EvaluationRegion(**obj) for obj in payload]


@dataclass(frozen=True)
class SynthSpec:
    """Controls for the forward-sampling synthetic corpus generator."""

    E: int = 3
    L_true: int = 3
    M_true: int = 2          # regions per concept
    n_per_env: int = 40
    D_v: int = 12
    D_w: int = 3
    separation: float = 8.0  # min distance between region means, in position stds
    peakedness: float = math.inf
    name_given_rate: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("E", "L_true", "M_true", "n_per_env", "D_v", "D_w"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be at least 1")
        if self.separation <= 0:
            raise ParameterError("separation must be positive")
        if not 0.0 <= self.name_given_rate <= 1.0:
            raise ParameterError("name_given_rate must lie in [0, 1]")
        if self.D_v < self.L_true or self.D_w < self.L_true:
            raise ParameterError("bag dimensions must be at least L_true")


@dataclass(frozen=True)
class SyntheticTruth:
    """Ground truth emitted alongside a synthetic corpus."""

    global_params: GlobalParams
    env_params: tuple[EnvParams, ...]
    assignments: tuple[Assignments, ...]
    dictionary: Dictionary
    regions: tuple[EvaluationRegion, ...]
    concept_names: tuple[str, ...]
    region_concept: np.ndarray  # (M,) concept owning each region

    def __post_init__(self):
        object.__setattr__(self, "env_params", tuple(self.env_params))
        object.__setattr__(self, "assignments", tuple(self.assignments))
        object.__setattr__(self, "regions", tuple(self.regions))
        object.__setattr__(self, "concept_names", tuple(self.concept_names))


def _dim_blocks(d: int, groups: int) -> list[np.ndarray]:
    return [np.asarray(b) for b in np.array_split(np.arange(d), groups)]


def _peaked_rows(groups: int, d: int, peakedness: float,
                 rng: np.random.Generator) -> np.ndarray:
    """Per-group emission simplexes concentrated on disjoint dimension blocks."""
    rows = np.zeros((groups, d))
    for l, block in enumerate(_dim_blocks(d, groups)):
        if math.isinf(peakedness):
            conc = np.zeros(d)
            conc[block] = 1.0
        else:
            conc = np.full(d, 1.0)
            conc[block] = peakedness
        rows[l] = sample_dirichlet_with_zeros(conc, rng)
    return rows


def _synthetic_dictionary(spec: SynthSpec) -> tuple[Dictionary, tuple[str, ...]]:
    blocks = _dim_blocks(spec.D_w, spec.L_true)
    entries = [f"word{k}" for k in range(spec.D_w)]
    names = []
    for l, block in enumerate(blocks):
        name = f"place{l}"
        entries[block[0]] = name
        names.append(name)
    return Dictionary(tuple(entries)), tuple(names)


def _draw_region_means(n_regions: int, separation: float,
                       rng: np.random.Generator) -> np.ndarray:
    min_dist = separation * GEN_POS_STD
    half = max(5.0, min_dist * math.ceil(math.sqrt(n_regions)))
    for _ in range(_MAX_SEPARATION_ATTEMPTS):
        xy = rng.uniform(-half, half, size=(n_regions, 2))
        diff = xy[:, None, :] - xy[None, :, :]
        dist = np.sqrt((diff**2).sum(axis=2))
        np.fill_diagonal(dist, np.inf)
        if dist.min() >= min_dist:
            return xy
    raise GenerationError(
        f"could not place {n_regions} region means with separation {separation}"
    )


def _pose_from_sample(x: np.ndarray) -> Pose:
    # sampled orientations are noisy by construction; skip the norm warning
    return Pose(float(x[0]), float(x[1]), float(x[2]), float(x[3]))


def generate_synthetic(spec: SynthSpec) -> tuple[list[Observation], SyntheticTruth]:
    """Run the generative process forward and return (corpus, ground truth)."""
    rng = np.random.default_rng(spec.seed)
    L, M = spec.L_true, spec.L_true * spec.M_true
    dictionary, names = _synthetic_dictionary(spec)

    phi_v = _peaked_rows(L, spec.D_v, spec.peakedness, rng)
    phi_w = _peaked_rows(L, spec.D_w, spec.peakedness, rng)
    g0 = sample_dirichlet_with_zeros(np.full(L, GEN_G0_CONCENTRATION), rng)
    region_concept = np.repeat(np.arange(L), spec.M_true)

    corpus: list[Observation] = []
    env_params = []
    assignments = []
    regions: list[EvaluationRegion] = []
    for e in range(spec.E):
        ge = sample_dirichlet_with_zeros(GEN_GE_CONCENTRATION * g0, rng)
        theta_v = np.vstack([
            sample_dirichlet_with_zeros(GEN_THETA_CONCENTRATION * row, rng)
            for row in phi_v
        ])
        theta_w = np.vstack([
            sample_dirichlet_with_zeros(GEN_THETA_CONCENTRATION * row, rng)
            for row in phi_w
        ])
        pi = np.zeros((L, M))
        for l in range(L):
            pi[l, region_concept == l] = 1.0 / spec.M_true

        xy = _draw_region_means(M, spec.separation, rng)
        angles = rng.uniform(-math.pi, math.pi, size=M)
        mu = np.column_stack([xy[:, 0], xy[:, 1], np.sin(angles), np.cos(angles)])
        sigma = np.tile(
            np.diag([GEN_POS_STD**2, GEN_POS_STD**2, GEN_ANGLE_VAR, GEN_ANGLE_VAR]),
            (M, 1, 1),
        )

        c = np.empty(spec.n_per_env, dtype=np.int64)
        r = np.empty(spec.n_per_env, dtype=np.int64)
        obs_env = []
        for t in range(spec.n_per_env):
            c[t] = rng.choice(L, p=ge)
            r[t] = rng.choice(M, p=pi[c[t]])
            x = mu[r[t]] + np.linalg.cholesky(sigma[r[t]]) @ rng.standard_normal(4)
            v = rng.multinomial(GEN_VISUAL_DRAWS, theta_v[c[t]]).astype(float)
            w = rng.multinomial(GEN_WORD_DRAWS, theta_w[c[t]]).astype(float)
            obs_env.append((x, v, w))

        # withhold word bags per place, keeping round(rate * n_l) of them
        keep = np.zeros(spec.n_per_env, dtype=bool)
        for l in range(L):
            idx = np.flatnonzero(c == l)
            n_keep = int(round(spec.name_given_rate * idx.size))
            if n_keep:
                keep[rng.choice(idx, size=n_keep, replace=False)] = True
        for t, (x, v, w) in enumerate(obs_env):
            corpus.append(
                Observation(env_id=e, t=t, pose=_pose_from_sample(x), visual=v,
                            words=w if keep[t] else None)
            )

        env_params.append(EnvParams(theta_v=theta_v, theta_w=theta_w, pi=pi,
                                    mu=mu, sigma=sigma, ge=ge))
        assignments.append(Assignments(c=c, r=r))
        for m in range(M):
            regions.append(EvaluationRegion(
                name=names[region_concept[m]],
                x_min=float(mu[m, 0] - 2 * GEN_POS_STD),
                x_max=float(mu[m, 0] + 2 * GEN_POS_STD),
                y_min=float(mu[m, 1] - 2 * GEN_POS_STD),
                y_max=float(mu[m, 1] + 2 * GEN_POS_STD),
            ))

    truth = SyntheticTruth(
        global_params=GlobalParams(phi_v=phi_v, phi_w=phi_w, g0=g0),
        env_params=tuple(env_params),
        assignments=tuple(assignments),
        dictionary=dictionary,
        regions=tuple(regions),
        concept_names=names,
        region_concept=region_concept,
    )
    return corpus, truth


def generate_test_set(truth: SyntheticTruth, env_id: int, n_per_place: int,
                      rng: np.random.Generator):
    """Forward-sample labelled test observations (no word bags) for one environment.

    Returns (observations, true place names).
    """
    env = truth.env_params[env_id]
    observations = []
    names = []
    t = 0
    for l, name in enumerate(truth.concept_names):
        for _ in range(n_per_place):
            r = rng.choice(env.pi.shape[1], p=env.pi[l])
            x = env.mu[r] + np.linalg.cholesky(env.sigma[r]) @ rng.standard_normal(4)
            v = rng.multinomial(GEN_VISUAL_DRAWS, env.theta_v[l]).astype(float)
            observations.append(
                Observation(env_id=env_id, t=t, pose=_pose_from_sample(x), visual=v)
            )
            names.append(name)
            t += 1
    return observations, names
