"""Episode execution with backend selection.

The compiled kernel (``bohp._kernel``) is used when it was built and the
network is a plastic layer topped by at most one fixed layer. Everything else
goes through the numpy reference path. Set ``BOHP_PURE_PYTHON=1`` to force the
reference path.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _pyengine
from .core import FIXED_SOFTMAX, FIXED_TANH, Network
from .grad import EpisodeGradient
from .tasks import EpisodeScript

try:
    if os.environ.get("BOHP_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python backend requested")
    from . import _kernel
except ImportError:
    _kernel = None

BACKEND = "cython" if _kernel is not None else "python"

_UPPER_CODES = {None: 0, FIXED_TANH: 1, FIXED_SOFTMAX: 2}
_LOSS_CODES = {"l1": 0, "mse": 1, "ce": 2}
_EMPTY_W = np.zeros((0, 0))
_EMPTY_B = np.zeros(0)


@dataclass
class EpisodeResult:
    loss: float
    outputs: np.ndarray  # (steps, n_top)
    hidden: np.ndarray  # (steps, first-layer width)
    grad: EpisodeGradient | None


def kernel_supports(net: Network) -> bool:
    return net.plastic is not None and len(net.layers) <= 2


def _run_kernel(net: Network, script: EpisodeScript, loss: str, collect_grads: bool) -> EpisodeResult:
    plastic = net.plastic
    if len(net.layers) == 2:
        upper = net.layers[1]
        uw, ub, code = upper.w, upper.b, _UPPER_CODES[upper.kind]
    else:
        uw, ub, code = _EMPTY_W, _EMPTY_B, 0
    targets = script.targets if loss != "ce" else np.zeros_like(script.targets)
    out = _kernel.run_episode(
        plastic.w, plastic.alpha, plastic.b, float(net.gamma), uw, ub, code,
        np.ascontiguousarray(script.inputs, dtype=np.float64),
        np.ascontiguousarray(targets, dtype=np.float64),
        np.ascontiguousarray(script.classes, dtype=np.int64),
        np.ascontiguousarray(script.loss_active, dtype=np.uint8),
        _LOSS_CODES[loss], bool(collect_grads))
    total, outputs, hidden, gw, galpha, gb, guw, gub, _ = out
    grad = None
    if collect_grads:
        arrays = [gw, galpha, gb] + ([guw, gub] if len(net.layers) == 2 else [])
        grad = EpisodeGradient(arrays)
    return EpisodeResult(total, outputs, hidden, grad)


def run_episode_arrays(net: Network, script: EpisodeScript, loss: str,
                       collect_grads: bool = True, backend: str | None = None) -> EpisodeResult:
    """Run one episode from zeroed traces and return loss, activations and gradient."""
    _pyengine.check_loss(net, loss)
    backend = backend or BACKEND
    if backend == "cython" and _kernel is None:
        raise RuntimeError("compiled kernel is not available")
    if backend == "cython" and kernel_supports(net):
        return _run_kernel(net, script, loss, collect_grads)
    total, outputs, hidden, grad = _pyengine.run_episode(net, script, loss, collect_grads)
    return EpisodeResult(total, outputs, hidden, grad)
