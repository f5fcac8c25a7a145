"""JSON persistence for trained models.

Floats are written with Python's shortest round-trip representation, so a
save/load cycle reproduces every parameter bit for bit.
"""

from __future__ import annotations

import json

import numpy as np

from .core import (
    Assignments,
    ConfigurationError,
    Dictionary,
    EnvParams,
    GlobalParams,
    Hyperparameters,
    TrainedModel,
)

SCHEMA_VERSION = "1"


def _array(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def _hyper_to_dict(h: Hyperparameters) -> dict:
    return {
        "alpha_v": h.alpha_v, "alpha_w": h.alpha_w,
        "delta_v": h.delta_v, "delta_w": h.delta_w,
        "gamma": h.gamma, "gamma0": h.gamma0, "beta": h.beta,
        "mu0": None if h.mu0 is None else _array(h.mu0),
        "kappa0": h.kappa0, "psi0": _array(h.psi0), "nu0": h.nu0,
        "s_v": h.s_v, "s_w": h.s_w, "epsilon": h.epsilon,
        "L": h.L, "M": h.M, "iterations": h.iterations,
        "sigma_init": h.sigma_init,
    }


def _hyper_from_dict(obj: dict) -> Hyperparameters:
    obj = dict(obj)
    if obj.get("mu0") is not None:
        obj["mu0"] = np.asarray(obj["mu0"], dtype=float)
    obj["psi0"] = np.asarray(obj["psi0"], dtype=float)
    return Hyperparameters(**obj)


def model_to_dict(model: TrainedModel) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "mode": model.mode,
        "hyper": _hyper_to_dict(model.hyper),
        "dictionary": list(model.dictionary.entries),
        "pruned_words": model.pruned_words.astype(int).tolist(),
        "global": {
            "phi_v": _array(model.global_params.phi_v),
            "phi_w": _array(model.global_params.phi_w),
            "g0": _array(model.global_params.g0),
        },
        "envs": [
            {
                "theta_v": _array(env.theta_v), "theta_w": _array(env.theta_w),
                "pi": _array(env.pi), "mu": _array(env.mu),
                "sigma": _array(env.sigma), "ge": _array(env.ge),
            }
            for env in model.envs
        ],
        "assignments": [
            {"c": a.c.tolist(), "r": a.r.tolist()} for a in model.assignments
        ],
    }


def model_from_dict(obj: dict) -> TrainedModel:
    version = obj.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigurationError(
            f"unsupported model schema version {version!r}, expected {SCHEMA_VERSION!r}"
        )
    try:
        glob = GlobalParams(
            phi_v=np.asarray(obj["global"]["phi_v"]),
            phi_w=np.asarray(obj["global"]["phi_w"]),
            g0=np.asarray(obj["global"]["g0"]),
        )
        envs = tuple(
            EnvParams(
                theta_v=np.asarray(e["theta_v"]), theta_w=np.asarray(e["theta_w"]),
                pi=np.asarray(e["pi"]), mu=np.asarray(e["mu"]),
                sigma=np.asarray(e["sigma"]), ge=np.asarray(e["ge"]),
            )
            for e in obj["envs"]
        )
        assignments = tuple(
            Assignments(c=np.asarray(a["c"]), r=np.asarray(a["r"]))
            for a in obj["assignments"]
        )
        return TrainedModel(
            hyper=_hyper_from_dict(obj["hyper"]),
            dictionary=Dictionary(tuple(obj["dictionary"])),
            global_params=glob,
            envs=envs,
            assignments=assignments,
            pruned_words=np.asarray(obj["pruned_words"], dtype=bool),
            mode=obj["mode"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"malformed model file ({exc})") from exc


def save_model(path, model: TrainedModel) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path) -> TrainedModel:
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON ({exc})") from exc
    return model_from_dict(obj)
