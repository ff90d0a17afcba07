"""Python access to the repbc core: tabular MDPs, exact bounds and tree-environment experiments."""

import json

from ._core import (
    ConfigError,
    kernel_estimate,
    performance,
    suite,
    visitation,
)
from . import _core

__all__ = [
    "ConfigError",
    "config_hash",
    "counterexample_report",
    "kernel_estimate",
    "performance",
    "run_experiment",
    "suite",
    "tree_env",
    "visitation",
]


def tree_env(duplication=10, seed=0):
    return json.loads(_core.tree_env_json(duplication, seed))


def counterexample_report():
    return json.loads(_core.counterexample_json())


def run_experiment(config=None, jobs=1):
    """Rows of results.csv as dicts; `config` overlays the built-in defaults."""
    return _core.run_experiment_json(json.dumps(config) if config else "", jobs)


def config_hash(config):
    return _core.config_hash_json(json.dumps(config))
