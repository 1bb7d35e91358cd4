"""Generalized energy-based models (C++ core)."""

import json
import os

from . import _core
from ._core import (
    ConfigError,
    DivergenceError,
    ParseError,
    gaussian_kl,
    make_dataset,
    mmd2,
    registered_experiments,
    rkhs_kale,
    w1_1d,
)

__all__ = [
    "ConfigError",
    "DivergenceError",
    "ParseError",
    "cli",
    "gaussian_kl",
    "kale",
    "make_dataset",
    "mmd2",
    "registered_experiments",
    "rkhs_kale",
    "run_benchmark",
    "sample",
    "train",
    "w1_1d",
]


def run_benchmark(name, config=None, out_root=None):
    """Runs a registered experiment; returns its summary as a dict."""
    text = _core.run_benchmark(name, json.dumps(config or {}), os.fspath(out_root or ""))
    return json.loads(text)


def train(config, out_dir):
    """Trains per `config` into `out_dir`; returns the effective config."""
    return json.loads(_core.train(json.dumps(config), os.fspath(out_dir)))


def sample(config, out_dir):
    """Samples a checkpoint into out_dir/samples.csv; returns the effective config."""
    return json.loads(_core.sample(json.dumps(config), os.fspath(out_dir)))


def kale(config, out_dir):
    """KALE between the CSV files config["x"] and config["y"]: {value, family, config, ...}."""
    return json.loads(_core.kale(json.dumps(config), os.fspath(out_dir)))


def cli(*args):
    """Runs the gebm_lab command line in-process: (exit code, stdout, stderr)."""
    return _core.cli([str(a) for a in args])
