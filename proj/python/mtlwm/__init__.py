"""Python interface to the mtlwm core.

Structured results come back as dictionaries; models, heads and keys are
passed around as their canonical JSON text.
"""

import json

from . import _core
from ._core import (
    ConfigError,
    DomainError,
    Error,
    ParseError,
    TrainingError,
    chernoff_bound,
    collision_bound,
    default_domain_bits,
    derive_points,
    min_domain_bits,
    model_hash,
    optimize_lambda,
    recommend_gamma,
    watermark_inputs,
)

__all__ = [
    "ConfigError",
    "DomainError",
    "Error",
    "ParseError",
    "TrainingError",
    "calibrate",
    "chernoff_bound",
    "collision_bound",
    "default_config",
    "default_domain_bits",
    "derive_points",
    "min_domain_bits",
    "model_hash",
    "optimize_lambda",
    "ownership_story",
    "recommend_gamma",
    "run_attacks",
    "simulate",
    "train",
    "verify",
    "watermark_inputs",
]


def _text(doc):
    return doc if isinstance(doc, str) else json.dumps(doc)


def default_config():
    return json.loads(_core.default_config())


def train(config=None):
    out = dict(_core.train(_text(config or {})))
    for field in ("primary_report", "embed_report", "key"):
        out[field] = json.loads(out[field])
    return out


def verify(model, key, cwm, gamma=0.7):
    return json.loads(_core.verify(model, _text(key), cwm, gamma))


def run_attacks(config, model_full):
    return json.loads(_core.run_attacks(_text(config), model_full))


def calibrate(config, model_full):
    return json.loads(_core.calibrate(_text(config), model_full))


def simulate(sim_config, scenario, base_dir="."):
    trace, summary = _core.simulate(_text(sim_config), _text(scenario), base_dir)
    return [json.loads(line) for line in trace.splitlines()], json.loads(summary)


def ownership_story(config=None):
    return json.loads(_core.ownership_story(_text(config or {})))
