"""Python access to the scene-graph engine.

Every function takes the same keys as the command-line flags, with dashes or
underscores.
"""

import json
import os
import tempfile

from ._ssg import (
    ConfigError,
    FormatError,
    IoError,
    NumericError,
    ShapeError,
    SsgError,
    StateError,
    ValidationError,
    config_keys,
    inverse_softmax,
    quartiles,
    run,
    softmax,
)


def _settings(kwargs):
    return {k.replace("_", "-"): v for k, v in kwargs.items()}


def gen(out, **kwargs):
    return run("gen", {**_settings(kwargs), "out": os.fspath(out)})


def stats(corpus, out, **kwargs):
    return run("stats", {**_settings(kwargs), "corpus": os.fspath(corpus), "out": os.fspath(out)})


def train(corpus, val_corpus, out, **kwargs):
    s = {**_settings(kwargs), "corpus": os.fspath(corpus), "out": os.fspath(out)}
    if val_corpus is not None:
        s["val-corpus"] = os.fspath(val_corpus)
    return run("train", s)


def evaluate(corpus, checkpoint, stats=None, **kwargs):
    """Evaluate a checkpoint on a corpus and return the report as a dict."""
    s = {**_settings(kwargs), "corpus": os.fspath(corpus), "checkpoint": os.fspath(checkpoint)}
    if stats is not None:
        s["stats"] = os.fspath(stats)
    with tempfile.TemporaryDirectory() as d:
        s["out"] = os.path.join(d, "report.json")
        run("eval", s)
        with open(s["out"]) as f:
            return json.load(f)


def predict(scene, checkpoint, stats=None, **kwargs):
    """Predicted graph for one scene file, as a dict."""
    s = {**_settings(kwargs), "scene": os.fspath(scene), "checkpoint": os.fspath(checkpoint)}
    if stats is not None:
        s["stats"] = os.fspath(stats)
    return json.loads(run("predict", s))


def ablate_stats(stats, out, drop_top_frac):
    return run("ablate-stats", {"stats": os.fspath(stats), "out": os.fspath(out), "drop-top-frac": drop_top_frac})
