"""Gated inertial odometry.

Configs may be given as dicts or JSON strings; arrays come back as numpy.
Pose arrays are N x 8 (t, x, y, z, qw, qx, qy, qz).
"""

import json as _json

from . import _core
from ._core import IoError, Net, NonFiniteError, NumericError, Sequence, random_walk

__all__ = [
    "IoError", "Net", "NonFiniteError", "NumericError", "Sequence",
    "evaluate", "fuse", "generate_dataset", "lr_at", "make_net", "random_walk",
    "run", "synth", "train", "window_mse",
]


def _text(cfg):
    if cfg is None:
        return ""
    return cfg if isinstance(cfg, str) else _json.dumps(cfg)


def synth(spec):
    return _core.synth(_text(spec))


def generate_dataset(config=None):
    return _core.generate_dataset(_text(config))


def make_net(config=None, seed=0):
    return Net(_text(config), seed)


def train(net, sequences, config=None):
    """Trains in place; returns one dict per epoch."""
    return _core.train(net, list(sequences), _text(config))


def window_mse(net, sequences):
    return _core.window_mse(net, list(sequences))


def fuse(sequence, config=None, net=None, seed=0):
    return _core.fuse(sequence, _text(config), net, seed)


def evaluate(estimate, ground_truth, alignment="first_pose"):
    return _core.evaluate(estimate, ground_truth, alignment)


def lr_at(epoch, schedule=None):
    return _core.lr_at(epoch, _text(schedule))


def run(*args):
    """`gnio` subcommand in-process: run("synth", "--out", d) -> (code, stdout, stderr)."""
    return _core.run([str(a) for a in args])
