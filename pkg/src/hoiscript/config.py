"""One config file drives every command.

The file is JSON with the sections below; omitted keys take the defaults, and
single keys can be overridden from the command line with dotted paths
(``--set train.epochs=50``).  The config hash covers the fully resolved
configuration including the rulebook content, so two runs with the same hash
see exactly the same inputs.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass

from .domain import Hyper, ModelDims
from .evaluate import SuppressionThresholds
from .synth import Rulebook, default_rulebook, load_rulebook
from .trainer import TrainConfig, resolve_mode

DEFAULTS = {
    "dims": {
        "d_t": 32, "d_f": 16, "d_p": 8, "d_g": 7,
        "d_r": 12, "d_c": 8, "d_s": 16, "d_m": 16,
    },
    # path to a rulebook JSON file, or null for the built-in default world
    "rulebook": None,
    "hyper": {
        "kappa": 4.0, "lambda_gamma": 1.0, "lambda_delta": 1.0,
        "alpha_lower": 0.9, "alpha_upper": 0.9, "tau": 0.5,
        "lambda_ipl": 1.0, "lambda_csc": 0.5, "lambda_align": 0.5,
        "eps": 1e-8,
    },
    "train": {
        "epochs": 30, "batch_size": 64, "lr": 1e-3,
        "beta1": 0.9, "beta2": 0.999, "adam_eps": 1e-8,
        "n_counterfactuals": 4, "anchor_threshold": 1.0,
        "divergence_limit": 1e7, "mode": "full",
    },
    "suppression": {"embedding": 0.95, "script_js": 0.05, "alignment": 0.90},
    "eval": {"iou_threshold": 0.5, "rare_cutoff": 10, "top_k": 5},
    "world": {
        "n_train": 160, "n_val": 24, "n_test": 48,
        "rho_miss": 0.3, "verb_frac": 0.2, "phrase_frac": 0.2,
    },
    "seeds": {"world": 0, "split": 0, "train": 0},
    "ablate": {
        "modes": ["full", "closed_world", "no_ipl", "no_csc", "no_align",
                  "no_calibration"],
    },
}


class ConfigError(ValueError):
    pass


class ModeError(ConfigError):
    """Unknown training mode; a usage error rather than a data error."""


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key: {where}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where} must be a section, got {value!r}")
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path=None) -> dict:
    if path is None:
        return copy.deepcopy(DEFAULTS)
    try:
        with open(path) as f:
            raw = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    return _merge(DEFAULTS, raw)


def apply_overrides(cfg: dict, assignments) -> dict:
    """Apply ``section.key=value`` strings; values parse as JSON when they
    can and fall back to raw strings."""
    out = copy.deepcopy(cfg)
    for item in assignments or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        dotted, text = item.split("=", 1)
        keys = dotted.split(".")
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        node = out
        for key in keys[:-1]:
            if key not in node or not isinstance(node[key], dict):
                raise ConfigError(f"unknown config section: {dotted!r}")
            node = node[key]
        if keys[-1] not in node:
            raise ConfigError(f"unknown config key: {dotted!r}")
        if isinstance(node[keys[-1]], dict):
            raise ConfigError(f"{dotted!r} is a section, not a key")
        node[keys[-1]] = value
    return out


@dataclass
class Resolved:
    """Everything the commands consume, built once from the raw config."""

    raw: dict
    rulebook: Rulebook
    dims: ModelDims
    hyper: Hyper
    train: TrainConfig
    suppression: SuppressionThresholds
    eval: dict
    world: dict
    seeds: dict
    ablate_modes: list
    hash: str

    @property
    def hash_bytes(self) -> bytes:
        return bytes.fromhex(self.hash)


def resolve(cfg: dict) -> Resolved:
    if cfg["rulebook"] is None:
        rulebook = default_rulebook()
    else:
        rulebook = load_rulebook(cfg["rulebook"])
    dead = rulebook.validate()
    if dead:
        # callers decide whether a partially dead rulebook is acceptable
        import warnings
        names = ", ".join(f"{v} {c}" for _, v, c in dead)
        warnings.warn(f"rulebook has dead phrases that can never fire: {names}")

    dims = ModelDims(slot_sizes=rulebook.vocab.sizes,
                     categories=rulebook.categories, **cfg["dims"])
    hyper = Hyper.from_dict(cfg["hyper"])
    train = TrainConfig(**cfg["train"])
    try:
        resolve_mode(train.mode, hyper)
    except ValueError as e:
        raise ModeError(str(e)) from e
    supp = SuppressionThresholds(**cfg["suppression"])

    hashed = {"config": {k: v for k, v in cfg.items() if k != "rulebook"},
              "rulebook": rulebook.to_dict()}
    digest = hashlib.sha256(
        json.dumps(hashed, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()

    return Resolved(
        raw=cfg, rulebook=rulebook, dims=dims, hyper=hyper, train=train,
        suppression=supp, eval=dict(cfg["eval"]), world=dict(cfg["world"]),
        seeds=dict(cfg["seeds"]), ablate_modes=list(cfg["ablate"]["modes"]),
        hash=digest,
    )


def master_seed_override(cfg: dict, seed: int) -> dict:
    out = copy.deepcopy(cfg)
    out["seeds"] = {k: int(seed) for k in out["seeds"]}
    return out
