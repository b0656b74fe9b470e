"""Episode runner built directly from the layer and gradient operations.

Slow (a handful of small numpy calls per timestep) but handles any supported
network stack. Used when the compiled kernel is unavailable or does not cover
the network shape.
"""
from __future__ import annotations

import numpy as np

from .core import FIXED_SOFTMAX, Network, network_forward
from .grad import (EpisodeGradient, GradientAccumulator, accumulate_episode_gradient,
                   plastic_grad_step, upper_backprop)
from .tasks import EpisodeScript, loss_cross_entropy, loss_l1, loss_mse


def step_loss(loss: str, top_y: np.ndarray, script: EpisodeScript, t: int):
    """Loss at step ``t`` and its gradient; the bool says whether the gradient is w.r.t. y_raw."""
    if loss == "ce":
        value, g = loss_cross_entropy(top_y, int(script.classes[t]))
        return value, g, True
    if loss == "l1":
        value, g = loss_l1(top_y, script.targets[t])
    elif loss == "mse":
        value, g = loss_mse(top_y, script.targets[t])
    else:
        raise ValueError(f"unknown loss {loss!r}")
    return value, g, False


def _raw_grad(kind: str, y: np.ndarray, g: np.ndarray) -> np.ndarray:
    if kind == FIXED_SOFTMAX:
        return y * (g - np.dot(y, g))
    return g * (1.0 - y * y)


def check_loss(net: Network, loss: str) -> None:
    if loss == "ce" and net.layers[-1].kind != FIXED_SOFTMAX:
        raise ValueError("cross-entropy needs a fixed-softmax output layer")
    if loss not in ("l1", "mse", "ce"):
        raise ValueError(f"unknown loss {loss!r}")


def run_episode(net: Network, script: EpisodeScript, loss: str, collect_grads: bool = True,
                *, self_only: bool = False, step_callback=None):
    """Run one episode from zeroed traces.

    Returns ``(total loss, top outputs, first-layer outputs, gradient or None)``.
    ``step_callback(t, net)`` is called after every timestep when given.
    """
    check_loss(net, loss)
    states = net.initial_states()
    plastic = net.plastic
    acc = GradientAccumulator.zeros(plastic.n_out, plastic.n_in) if plastic is not None else None
    n_steps = len(script)
    outputs = np.zeros((n_steps, net.spec.n_out))
    hidden = np.zeros((n_steps, net.spec.sizes[1]))
    total = 0.0
    d_hidden, dy_series = [], []
    grad = EpisodeGradient.zeros_like(net) if collect_grads else None
    n_first = 3 if plastic is not None else 2

    for t in range(n_steps):
        x = script.inputs[t]
        pre = states[0]
        acts, states = network_forward(net, states, x)
        if collect_grads and plastic is not None:
            acc = plastic_grad_step(plastic, pre, acc, x, acts[0].y, self_only=self_only)
        outputs[t] = acts[-1].y
        hidden[t] = acts[0].y
        active = bool(script.loss_active[t])
        g_hidden = np.zeros(net.spec.sizes[1])
        if active:
            value, g_top, wrt_raw = step_loss(loss, acts[-1].y, script, t)
            total += value
            if collect_grads and len(net.layers) == 1 and wrt_raw:
                g_first_raw = g_top
            elif collect_grads:
                up = upper_backprop(net, acts, g_top, wrt_raw=wrt_raw)
                g_hidden = up.d_hidden
                for offset, (gw, gb) in enumerate(up.layer_grads):
                    grad.arrays[n_first + 2 * offset] += gw
                    grad.arrays[n_first + 2 * offset + 1] += gb
                g_first_raw = _raw_grad(net.layers[0].kind, acts[0].y, g_hidden)
            if collect_grads and plastic is None:
                grad.arrays[0] += np.outer(g_first_raw, x)
                grad.arrays[1] += g_first_raw
        if collect_grads and plastic is not None:
            d_hidden.append(g_hidden)
            dy_series.append(acc.dy)
        if step_callback is not None:
            step_callback(t, net)

    if collect_grads and plastic is not None and n_steps:
        block = accumulate_episode_gradient(d_hidden, dy_series, script.loss_active)
        gw, galpha, gb = acc.split(block)
        grad.arrays[0] += gw
        grad.arrays[1] += galpha
        grad.arrays[2] += gb
    return total, outputs, hidden, grad
