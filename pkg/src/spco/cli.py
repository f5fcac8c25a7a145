"""Command-line surface: generate / train / predict / eval.

Every command is deterministic given its flags and seed; the seed in effect
is always printed so a run can be regenerated. Set the ``SPCO_LOG``
environment variable (DEBUG, INFO, ...) to control log verbosity.
"""

from __future__ import annotations

import json
import logging
import os
import sys
from pathlib import Path

import click
import numpy as np

from .core import Hyperparameters, Observation, Pose, SpcoError, group_by_env
from .data import (
    LoadConfig,
    RawRecord,
    SynthSpec,
    generate_synthetic,
    generate_test_set,
    load_corpora,
    read_regions,
    write_corpus,
    write_regions,
)
from .evaluate import (
    DEFAULT_RATES,
    DEFAULT_TRIALS,
    run_adaptive_experiment,
    run_transfer_experiment,
)
from .learn import MODES, TrainConfig, fit
from .model_io import load_model, save_model
from .predict import predict_name, predict_positions
from .report import render_figures

log = logging.getLogger("spco")


def _setup_logging() -> None:
    level = os.environ.get("SPCO_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


_HYPER_FLOATS = ("alpha_v", "alpha_w", "delta_v", "delta_w", "gamma", "gamma0",
                 "beta", "kappa0", "nu0", "s_v", "s_w", "epsilon", "sigma_init")


def hyper_options(fn):
    for name in reversed(_HYPER_FLOATS):
        flag = "--" + name.replace("_", "-")
        fn = click.option(flag, type=float, default=None,
                          help=f"override hyperparameter {name}")(fn)
    fn = click.option("--concept-limit", "-L", "L", type=int, default=None,
                      help="concept truncation L")(fn)
    fn = click.option("--region-limit", "-M", "M", type=int, default=None,
                      help="region truncation M")(fn)
    fn = click.option("--iterations", type=int, default=None,
                      help="Gibbs sweeps (default 200)")(fn)
    fn = click.option("--mu0", type=str, default=None,
                      help="comma-separated 4-vector prior mean")(fn)
    fn = click.option("--psi0-diag", type=str, default=None,
                      help="comma-separated 4-vector scale-matrix diagonal")(fn)
    return fn


def build_hyper(kwargs: dict) -> Hyperparameters:
    overrides = {}
    for name in _HYPER_FLOATS + ("L", "M", "iterations"):
        value = kwargs.pop(name, None)
        if value is not None:
            overrides[name] = value
    mu0 = kwargs.pop("mu0", None)
    if mu0 is not None:
        overrides["mu0"] = np.array([float(v) for v in mu0.split(",")])
    psi0_diag = kwargs.pop("psi0_diag", None)
    if psi0_diag is not None:
        overrides["psi0"] = np.diag([float(v) for v in psi0_diag.split(",")])
    return Hyperparameters(**overrides)


@click.group()
def main() -> None:
    """Spatial-concept learning with cross-environment knowledge transfer."""
    _setup_logging()


def _fail(exc: Exception) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(1)


# ---------------------------------------------------------------------------
# generate

def _corpus_records(corpus, dictionary):
    """Convert observations back to raw records; word bags become sentences."""
    records = []
    for obs in corpus:
        sentence = None
        if obs.words is not None:
            sentence = [dictionary.entries[k] for k in np.flatnonzero(obs.words > 0)]
        records.append(RawRecord(env_id=obs.env_id, pose=obs.pose.to_array(),
                                 visual=np.asarray(obs.visual), sentence=sentence))
    return records


def _write_test_set(path, observations, names) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for obs, name in zip(observations, names):
            obj = {
                "env": obs.env_id,
                "pose": [float(v) for v in obs.pose.to_array()],
                "visual": [float(v) for v in obs.visual],
                "name": name,
            }
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


def read_test_set(path):
    observations, names = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                pose = np.asarray(obj["pose"], dtype=float)
                observations.append(Observation(
                    env_id=int(obj["env"]), t=lineno - 1,
                    pose=Pose(*(float(v) for v in pose)),
                    visual=np.asarray(obj["visual"], dtype=float),
                ))
                names.append(str(obj["name"]))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise SpcoError(f"{path}:{lineno}: malformed test record ({exc})")
    return observations, names


@main.command()
@click.option("--envs", type=int, default=3, help="number of environments")
@click.option("--concepts", type=int, default=3, help="true concept count")
@click.option("--regions-per-concept", type=int, default=2)
@click.option("--obs-per-env", type=int, default=40)
@click.option("--dv", type=int, default=12, help="visual bag dimension")
@click.option("--dw", type=int, default=3, help="word bag dimension")
@click.option("--separation", type=float, default=8.0,
              help="minimum region-mean distance in position stds")
@click.option("--name-given-rate", type=float, default=1.0)
@click.option("--test-per-place", type=int, default=20)
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path(file_okay=False), default=".",
              help="output directory")
def generate(envs, concepts, regions_per_concept, obs_per_env, dv, dw,
             separation, name_given_rate, test_per_place, seed, out):
    """Write a synthetic corpus plus ground truth, regions, and test sets."""
    try:
        spec = SynthSpec(E=envs, L_true=concepts, M_true=regions_per_concept,
                         n_per_env=obs_per_env, D_v=dv, D_w=dw,
                         separation=separation, name_given_rate=name_given_rate,
                         seed=seed)
        corpus, truth = generate_synthetic(spec)
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)

        write_corpus(out_dir / "corpus.jsonl", _corpus_records(corpus, truth.dictionary))
        n_regions = concepts * regions_per_concept
        test_rng = np.random.default_rng(np.random.SeedSequence([seed, 2**20]))
        manifest = {
            "seed": seed, "envs": envs, "concepts": concepts,
            "regions_per_concept": regions_per_concept,
            "obs_per_env": obs_per_env, "D_v": dv, "D_w": dw,
            "dictionary": list(truth.dictionary.entries),
            "place_names": list(truth.concept_names),
            "corpus": "corpus.jsonl", "truth": "truth.json",
            "regions": [], "tests": [],
        }
        for e in range(envs):
            regions_path = out_dir / f"regions.{e}.json"
            write_regions(regions_path, truth.regions[e * n_regions:(e + 1) * n_regions])
            test_obs, test_names = generate_test_set(truth, e, test_per_place, test_rng)
            test_path = out_dir / f"test.{e}.jsonl"
            _write_test_set(test_path, test_obs, test_names)
            manifest["regions"].append(regions_path.name)
            manifest["tests"].append(test_path.name)

        truth_payload = {
            "concept_names": list(truth.concept_names),
            "region_concept": truth.region_concept.tolist(),
            "assignments": [
                {"c": a.c.tolist(), "r": a.r.tolist()} for a in truth.assignments
            ],
        }
        with open(out_dir / "truth.json", "w", encoding="utf-8") as fh:
            json.dump(truth_payload, fh, indent=2, sort_keys=True)
        with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
        click.echo(f"seed: {seed}")
        click.echo(f"wrote corpus and ground truth under {out_dir}")
    except SpcoError as exc:
        _fail(exc)


# ---------------------------------------------------------------------------
# train

def merge_corpora(corpora):
    """Concatenate per-file corpora, offsetting env ids so they stay distinct."""
    merged = []
    offset = 0
    for corpus in corpora:
        n_envs = len({obs.env_id for obs in corpus})
        for obs in corpus:
            merged.append(Observation(env_id=obs.env_id + offset, t=obs.t,
                                      pose=obs.pose, visual=obs.visual,
                                      words=obs.words))
        offset += n_envs
    return merged


@main.command()
@click.argument("corpus_paths", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False))
@click.option("--mode", type=click.Choice([m.replace("_", "-") for m in MODES]),
              default="transfer")
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path(dir_okay=False), default="model.json")
@hyper_options
def train(corpus_paths, mode, seed, out, **hyper_kwargs):
    """Train a model on one or more corpus files and write it as JSON."""
    try:
        hyper = build_hyper(hyper_kwargs)
        corpora, dictionary = load_corpora(
            corpus_paths, LoadConfig(s_v=hyper.s_v, s_w=hyper.s_w))
        corpus = merge_corpora(corpora)
        config = TrainConfig(hyper=hyper, mode=mode.replace("-", "_"), seed=seed)
        log.info("training %s on %d observations", config.mode, len(corpus))
        model = fit(corpus, dictionary, config)
        save_model(out, model)
        click.echo(f"seed: {seed}")
        click.echo(f"wrote model with {model.n_envs} environments to {out}")
    except SpcoError as exc:
        _fail(exc)


# ---------------------------------------------------------------------------
# predict

@main.group()
def predict() -> None:
    """Predict a location name or positions from a trained model."""


@predict.command("name")
@click.argument("model_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--env", type=int, default=0, help="environment index")
@click.option("--record", "record_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="JSON file with 'pose' and 'visual' (or 'features') fields")
@click.option("--top-k", type=int, default=3)
def predict_name_cmd(model_path, env, record_path, top_k):
    """Print the top-k candidate names for one observation as JSON."""
    try:
        model = load_model(model_path)
        with open(record_path, encoding="utf-8") as fh:
            obj = json.load(fh)
        pose = Pose.from_vector(np.asarray(obj["pose"], dtype=float))
        if obj.get("visual") is not None:
            visual = np.asarray(obj["visual"], dtype=float)
        else:
            visual = np.maximum(np.asarray(obj["features"], dtype=float), 0.0) \
                * model.hyper.s_v
        ranked = predict_name(model, env, pose, visual, top_k=top_k)
        click.echo(json.dumps(
            {"predictions": [{"word": w, "score": s} for w, s in ranked]},
            indent=2, sort_keys=True,
        ))
    except (SpcoError, KeyError, json.JSONDecodeError) as exc:
        _fail(exc)


@predict.command("position")
@click.argument("model_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--env", type=int, default=0, help="environment index")
@click.option("--word", required=True)
@click.option("--samples", type=int, default=10)
@click.option("--seed", type=int, default=0)
def predict_position_cmd(model_path, env, word, samples, seed):
    """Sample positions for a location name and print them as JSON."""
    try:
        model = load_model(model_path)
        rng = np.random.default_rng(seed)
        poses = predict_positions(model, env, word, samples, rng)
        click.echo(f"seed: {seed}", err=True)
        click.echo(json.dumps(
            {"positions": [[p.x, p.y, p.sin_theta, p.cos_theta] for p in poses]},
            indent=2, sort_keys=True,
        ))
    except SpcoError as exc:
        _fail(exc)


# ---------------------------------------------------------------------------
# eval

@main.group("eval")
def eval_group() -> None:
    """Run an experiment sweep and write CSV, JSON summary, and figures."""


def _load_eval_inputs(corpus_path, test_path, regions_path, hyper):
    corpora, dictionary = load_corpora(
        [corpus_path], LoadConfig(s_v=hyper.s_v, s_w=hyper.s_w))
    envs = group_by_env(corpora[0])
    test_obs, test_names = read_test_set(test_path)
    regions = read_regions(regions_path)
    return envs, dictionary, test_obs, test_names, regions


def _emit_result(result, out_dir, prefix):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{prefix}.csv"
    json_path = out / f"{prefix}_summary.json"
    result.to_csv(csv_path)
    result.summary_json(json_path)
    figures = render_figures(result, out, prefix=prefix)
    click.echo(f"wrote {csv_path}, {json_path}, {', '.join(figures)}")
    for cell in sorted(result.summary(),
                       key=lambda c: (c["metric"], c["setting"], c["place"])):
        if cell["place"] == "all":
            click.echo(f"{cell['metric']} {cell['setting']}: "
                       f"{cell['mean']:.3f} ({cell['stddev']:.3f})")


@eval_group.command("transfer")
@click.argument("corpus_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--new-env", type=int, required=True,
              help="env id held out as the new environment (words withheld)")
@click.option("--test", "test_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--regions", "regions_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--env-counts", default="0,2,4",
              help="comma-separated experienced-environment counts")
@click.option("--trials", type=int, default=DEFAULT_TRIALS)
@click.option("--position-samples", type=int, default=10)
@click.option("--seed", type=int, default=0)
@click.option("--mode", type=click.Choice(["transfer"]), default="transfer")
@click.option("--out", type=click.Path(file_okay=False), default=".")
@hyper_options
def eval_transfer(corpus_path, new_env, test_path, regions_path, env_counts,
                  trials, position_samples, seed, mode, out, **hyper_kwargs):
    """Sweep the number of experienced environments feeding the new one."""
    try:
        hyper = build_hyper(hyper_kwargs)
        envs, dictionary, test_obs, test_names, regions = _load_eval_inputs(
            corpus_path, test_path, regions_path, hyper)
        if not 0 <= new_env < len(envs):
            raise SpcoError(f"--new-env {new_env} outside corpus range 0..{len(envs)-1}")
        experienced = [env for e, env in enumerate(envs) if e != new_env]
        counts = [int(v) for v in env_counts.split(",")]
        config = TrainConfig(hyper=hyper, mode=mode, seed=seed)
        click.echo(f"seed: {seed}")
        result = run_transfer_experiment(
            experienced, envs[new_env], dictionary, test_obs, test_names,
            regions, counts, trials, config, position_samples)
        _emit_result(result, out, "transfer")
    except (SpcoError, ValueError) as exc:
        _fail(exc)


@eval_group.command("adaptive")
@click.argument("corpus_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--new-env", type=int, required=True)
@click.option("--home-names", required=True,
              help="comma-separated names of the home-specific places")
@click.option("--test", "test_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--regions", "regions_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--rates", default=",".join(f"{r:g}" for r in DEFAULT_RATES),
              help="comma-separated name-given rates in [0, 1]")
@click.option("--trials", type=int, default=DEFAULT_TRIALS)
@click.option("--position-samples", type=int, default=10)
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path(file_okay=False), default=".")
@hyper_options
def eval_adaptive(corpus_path, new_env, home_names, test_path, regions_path,
                  rates, trials, position_samples, seed, out, **hyper_kwargs):
    """Sweep the instruction rate for home-specific places in the new environment.

    Home-specific observations are the ones whose sentence contains the
    place name; the test set is restricted to those names.
    """
    try:
        hyper = build_hyper(hyper_kwargs)
        envs, dictionary, test_obs, test_names, regions = _load_eval_inputs(
            corpus_path, test_path, regions_path, hyper)
        if not 0 <= new_env < len(envs):
            raise SpcoError(f"--new-env {new_env} outside corpus range 0..{len(envs)-1}")
        names = [n for n in home_names.split(",") if n]
        target = envs[new_env]
        home_indices = {}
        for name in names:
            k = dictionary.index(name)
            idx = [i for i, obs in enumerate(target)
                   if obs.words is not None and obs.words[k] > 0]
            if not idx:
                raise SpcoError(f"no observation in env {new_env} mentions {name!r}")
            home_indices[name] = idx
        keep = [i for i, n in enumerate(test_names) if n in names]
        if not keep:
            raise SpcoError("test set contains no home-specific places")
        test_obs = [test_obs[i] for i in keep]
        test_names = [test_names[i] for i in keep]
        experienced = [env for e, env in enumerate(envs) if e != new_env]
        rate_values = [float(v) for v in rates.split(",")]
        config = TrainConfig(hyper=hyper, mode="transfer", seed=seed)
        click.echo(f"seed: {seed}")
        result = run_adaptive_experiment(
            experienced, target, home_indices, dictionary, test_obs,
            test_names, regions, rate_values, trials, config, position_samples)
        _emit_result(result, out, "adaptive")
    except (SpcoError, ValueError) as exc:
        _fail(exc)


if __name__ == "__main__":
    main()
