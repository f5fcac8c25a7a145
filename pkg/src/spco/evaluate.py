"""Accuracy metrics and the two experiment drivers.

The transfer driver sweeps the number of experienced environments used as
knowledge sources for one held-out environment whose word bags are withheld.
The adaptive driver sweeps the fraction of instructions given for
home-specific places in the new environment.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass

import numpy as np

from .core import MetricError, NoPredictionError, Observation, VocabularyError
from .learn import TrainConfig, fit
from .predict import predict_name, predict_positions

DEFAULT_POSITION_SAMPLES = 10
DEFAULT_TRIALS = 20
DEFAULT_RATES = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)


def name_accuracy(predictions, truths, places) -> float:
    """Macro average over places of the per-place fraction of correct names."""
    predictions, truths, places = list(predictions), list(truths), list(places)
    if not (len(predictions) == len(truths) == len(places)):
        raise MetricError("predictions, truths, and places must align")
    if not predictions:
        raise MetricError("no test data")
    groups: dict = {}
    for pred, truth, place in zip(predictions, truths, places):
        groups.setdefault(place, []).append(pred == truth)
    fractions = []
    for place in groups:
        hits = groups[place]
        if not hits:
            raise MetricError(f"place {place!r} has no test data")
        fractions.append(sum(hits) / len(hits))
    return float(np.mean(fractions))


def position_accuracy(samples_by_name, regions) -> float:
    """Macro average over names of the fraction of samples inside the named rectangles.

    A sample counts as correct when its (x, y) lies inside any rectangle
    carrying that name (boundary inclusive).
    """
    if not samples_by_name:
        raise MetricError("no predicted positions")
    fractions = []
    for name, poses in samples_by_name.items():
        rects = [r for r in regions if r.name == name]
        if not rects:
            raise MetricError(f"no ground-truth region for name {name!r}")
        if not poses:
            raise MetricError(f"no position samples for name {name!r}")
        hits = sum(any(r.contains(p.x, p.y) for r in rects) for p in poses)
        fractions.append(hits / len(poses))
    return float(np.mean(fractions))


@dataclass(frozen=True)
class ResultRow:
    setting: str
    trial: int
    place: str
    metric: str
    value: float


@dataclass
class ExperimentResult:
    rows: list[ResultRow]

    def summary(self) -> list[dict]:
        cells: dict = {}
        for row in self.rows:
            cells.setdefault((row.setting, row.place, row.metric), []).append(row.value)
        out = []
        for (setting, place, metric), values in cells.items():
            arr = np.asarray(values)
            out.append({
                "setting": setting,
                "place": place,
                "metric": metric,
                "mean": float(arr.mean()),
                "stddev": float(arr.std()),
                "trials": len(values),
            })
        return out

    def cell_mean(self, setting: str, metric: str, place: str = "all") -> float:
        for cell in self.summary():
            if (cell["setting"], cell["place"], cell["metric"]) == (setting, place, metric):
                return cell["mean"]
        raise KeyError((setting, place, metric))

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["setting", "trial", "place", "metric", "value"])
            for row in self.rows:
                writer.writerow([row.setting, row.trial, row.place, row.metric,
                                 repr(row.value)])

    def summary_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"cells": self.summary()}, fh, indent=2, sort_keys=True)


def _retag(observations, env_id: int, drop_words: bool = False):
    out = []
    for obs in observations:
        out.append(Observation(
            env_id=env_id, t=obs.t, pose=obs.pose, visual=obs.visual,
            words=None if drop_words else obs.words,
        ))
    return out


def _trial_seeds(base_seed: int, setting_key: int, trial: int):
    ss = np.random.SeedSequence([base_seed, setting_key, trial])
    train_seed, select_seed, predict_seed = (int(s) for s in ss.generate_state(3))
    return train_seed, np.random.default_rng(select_seed), np.random.default_rng(predict_seed)


def _top1(model, env_id, obs, candidates):
    try:
        ranked = predict_name(model, env_id, obs.pose, obs.visual, top_k=1,
                              candidates=candidates)
    except NoPredictionError:
        return None
    return ranked[0][0] if ranked else None


def _accuracy_rows(setting, trial, model, env_id, test_observations, test_names,
                   candidates, regions, names_for_positions, position_samples,
                   predict_rng):
    rows = []
    predictions = [_top1(model, env_id, obs, candidates) if candidates else None
                   for obs in test_observations]
    groups: dict = {}
    for pred, truth in zip(predictions, test_names):
        groups.setdefault(truth, []).append(pred == truth)
    fractions = {}
    for place in sorted(groups):
        fractions[place] = sum(groups[place]) / len(groups[place])
        rows.append(ResultRow(setting, trial, place, "name_accuracy", fractions[place]))
    rows.append(ResultRow(setting, trial, "all", "name_accuracy",
                          float(np.mean(list(fractions.values())))))

    pos_fractions = {}
    for name in names_for_positions:
        rects = [r for r in regions if r.name == name]
        if not rects:
            raise MetricError(f"no ground-truth region for name {name!r}")
        try:
            if name not in (candidates or []):
                raise VocabularyError(name)
            poses = predict_positions(model, env_id, name, position_samples, predict_rng)
            hits = sum(any(r.contains(p.x, p.y) for r in rects) for p in poses)
            frac = hits / position_samples
        except (VocabularyError, NoPredictionError):
            frac = 0.0
        pos_fractions[name] = frac
        rows.append(ResultRow(setting, trial, name, "position_accuracy", frac))
    rows.append(ResultRow(setting, trial, "all", "position_accuracy",
                          float(np.mean(list(pos_fractions.values())))))
    return rows


def run_transfer_experiment(experienced_envs, new_env, dictionary,
                            test_observations, test_names, regions,
                            env_counts, trials, config: TrainConfig,
                            position_samples: int = DEFAULT_POSITION_SAMPLES
                            ) -> ExperimentResult:
    """Sweep the number of experienced environments; words in the new
    environment are fully withheld, so names are only reachable via transfer.

    Candidate words are the ground-truth place names (the evaluation
    vocabulary), so an uninformed model performs at chance 1 / #names.
    """
    if max(env_counts) > len(experienced_envs):
        raise MetricError(
            f"need at least {max(env_counts)} experienced environments, "
            f"have {len(experienced_envs)}"
        )
    place_names = sorted({r.name for r in regions})
    rows: list[ResultRow] = []
    for n in env_counts:
        for trial in range(trials):
            train_seed, select_rng, predict_rng = _trial_seeds(config.seed, n, trial)
            chosen = sorted(select_rng.choice(len(experienced_envs), size=n,
                                              replace=False).tolist())
            corpus = []
            for i, env_idx in enumerate(chosen):
                corpus.extend(_retag(experienced_envs[env_idx], i))
            corpus.extend(_retag(new_env, n, drop_words=True))
            model = fit(corpus, dictionary,
                        dataclasses.replace(config, seed=train_seed))
            candidates = [w for w in place_names
                          if not model.pruned_words[model.dictionary.index(w)]]
            rows.extend(_accuracy_rows(
                f"{n}_envs", trial, model, n, test_observations, test_names,
                candidates, regions, place_names, position_samples, predict_rng,
            ))
    return ExperimentResult(rows=rows)


def _observed_words(corpus, dictionary) -> set[str]:
    mask = np.zeros(len(dictionary), dtype=bool)
    for obs in corpus:
        if obs.words is not None:
            mask |= obs.words > 0
    return {dictionary.entries[k] for k in np.flatnonzero(mask)}


def run_adaptive_experiment(experienced_envs, new_env, home_indices, dictionary,
                            test_observations, test_names, regions,
                            rates, trials, config: TrainConfig,
                            position_samples: int = DEFAULT_POSITION_SAMPLES
                            ) -> ExperimentResult:
    """Sweep the instruction rate for home-specific places in the new environment.

    ``home_indices`` maps each home-specific name to the indices of its
    observations in ``new_env``. General observations in the new environment
    never keep their word bags; home-specific ones keep a fraction equal to
    the rate. Candidate words are the place names actually observed during
    training, so an uninstructed name can never be predicted.
    """
    home_all = {i for idx in home_indices.values() for i in idx}
    home_names = sorted(home_indices)
    rows: list[ResultRow] = []
    for rate in rates:
        if not 0.0 <= rate <= 1.0:
            raise MetricError(f"rate {rate} outside [0, 1]")
        setting_key = int(round(rate * 10**6))
        for trial in range(trials):
            train_seed, select_rng, predict_rng = _trial_seeds(
                config.seed, setting_key, trial)
            keep: set[int] = set()
            for name in home_names:
                idx = [i for i in home_indices[name] if new_env[i].words is not None]
                n_keep = int(round(rate * len(idx)))
                if n_keep:
                    keep.update(select_rng.choice(idx, size=n_keep,
                                                  replace=False).tolist())
            corpus = []
            for i, env in enumerate(experienced_envs):
                corpus.extend(_retag(env, i))
            e_new = len(experienced_envs)
            for i, obs in enumerate(new_env):
                corpus.append(Observation(
                    env_id=e_new, t=obs.t, pose=obs.pose, visual=obs.visual,
                    words=obs.words if (i in keep and i in home_all) else None,
                ))
            model = fit(corpus, dictionary,
                        dataclasses.replace(config, seed=train_seed))
            observed = _observed_words(corpus, dictionary)
            all_names = sorted({r.name for r in regions})
            candidates = [w for w in all_names if w in observed
                          and not model.pruned_words[model.dictionary.index(w)]]
            rows.extend(_accuracy_rows(
                f"rate_{rate:g}", trial, model, e_new, test_observations,
                test_names, candidates, regions, home_names, position_samples,
                predict_rng,
            ))
    return ExperimentResult(rows=rows)
