"""Forward-mode gradients through Hebbian traces, plus backprop for fixed layers.

For a plastic cell ``j`` every parameter ``theta`` that it owns (its row of
``w``, its row of ``alpha`` and ``b[j]``) carries two running quantities:

* ``dy[j, theta]``: sensitivity of the current output ``y[j]``;
* ``dhebb[j, l, theta]``: sensitivity of the trace on input ``l``.

At every step

    d y_raw / d w_k     = x_k             + sum_l alpha_l x_l dhebb_l
    d y_raw / d alpha_k = x_k hebb_k      + sum_l alpha_l x_l dhebb_l
    d y_raw / d b       = 1               + sum_l alpha_l x_l dhebb_l
    dy                  = (1 - y^2) * d y_raw
    dhebb_l            <- (1 - gamma) dhebb_l + gamma x_l dy

The sum over ``l`` runs over *all* inputs of the cell: a parameter changes
``y``, which feeds every trace of that cell. Parameters of other cells never
reach this cell's traces, so only the per-cell block is stored.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .core import (FIXED_SOFTMAX, FIXED_TANH, FixedLayerParams, HebbianState, LayerActivation,
                   Network, PlasticLayerParams, ShapeError)

W, ALPHA, B = "w", "alpha", "b"


class ParamId(NamedTuple):
    layer: int
    kind: str
    j: int
    k: int | None = None

    def __str__(self):
        if self.k is None:
            return f"L{self.layer}.{self.kind}[{self.j}]"
        return f"L{self.layer}.{self.kind}[{self.j},{self.k}]"


def param_ids(net: Network) -> list[ParamId]:
    """Every scalar parameter of ``net`` in ``param_arrays`` flattening order."""
    ids = []
    for i, layer in enumerate(net.layers):
        kinds = (W, ALPHA) if isinstance(layer, PlasticLayerParams) else (W,)
        for kind in kinds:
            ids.extend(ParamId(i, kind, j, k) for j in range(layer.n_out) for k in range(layer.n_in))
        ids.extend(ParamId(i, B, j) for j in range(layer.n_out))
    return ids


@dataclass
class EpisodeGradient:
    """d(episode loss)/d(theta), stored as arrays parallel to ``net.param_arrays()``."""

    arrays: list

    @classmethod
    def zeros_like(cls, net: Network) -> "EpisodeGradient":
        return cls([np.zeros_like(a) for a in net.param_arrays()])

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays])

    def items(self, net: Network) -> Iterator[tuple[ParamId, float]]:
        return zip(param_ids(net), self.flat().tolist())

    def get(self, net: Network, pid: ParamId) -> float:
        idx = _array_index(net, pid)
        arr = self.arrays[idx]
        return float(arr[pid.j] if pid.k is None else arr[pid.j, pid.k])

    def __add__(self, other: "EpisodeGradient") -> "EpisodeGradient":
        return EpisodeGradient([a + b for a, b in zip(self.arrays, other.arrays)])

    def __mul__(self, c: float) -> "EpisodeGradient":
        return EpisodeGradient([c * a for a in self.arrays])

    __rmul__ = __mul__

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays)


def _array_index(net: Network, pid: ParamId) -> int:
    idx = 0
    for i, layer in enumerate(net.layers):
        kinds = (W, ALPHA, B) if isinstance(layer, PlasticLayerParams) else (W, B)
        if i == pid.layer:
            return idx + kinds.index(pid.kind)
        idx += len(kinds)
    raise KeyError(pid)


def perturbed(net: Network, pid: ParamId, delta: float) -> Network:
    """Copy of ``net`` with one scalar parameter shifted by ``delta``."""
    out = net.copy()
    arr = out.param_arrays()[_array_index(out, pid)]
    if pid.k is None:
        arr[pid.j] += delta
    else:
        arr[pid.j, pid.k] += delta
    return out


@dataclass
class GradientAccumulator:
    """Per-cell sensitivities of traces and outputs to that cell's parameters.

    Local parameter index ``p`` of cell ``j``: ``p < n_in`` is ``w[j, p]``,
    ``n_in <= p < 2 n_in`` is ``alpha[j, p - n_in]``, ``p = 2 n_in`` is ``b[j]``.
    """

    dhebb: np.ndarray  # (n_out, n_in, 2 n_in + 1)
    dy: np.ndarray  # (n_out, 2 n_in + 1)

    @classmethod
    def zeros(cls, n_out: int, n_in: int) -> "GradientAccumulator":
        n_p = 2 * n_in + 1
        return cls(np.zeros((n_out, n_in, n_p)), np.zeros((n_out, n_p)))

    @property
    def n_out(self) -> int:
        return self.dhebb.shape[0]

    @property
    def n_in(self) -> int:
        return self.dhebb.shape[1]

    def _scatter(self, block: np.ndarray) -> np.ndarray:
        # block[..., j, p] -> full[..., j, global index of cell j's parameter p]
        n_out, n_in = self.n_out, self.n_in
        full = np.zeros(block.shape[:-1] + (n_out * (2 * n_in + 1),))
        for j in range(n_out):
            cols = np.r_[j * n_in:(j + 1) * n_in,
                         n_out * n_in + j * n_in:n_out * n_in + (j + 1) * n_in,
                         2 * n_out * n_in + j]
            full[j][..., cols] = block[j]
        return full

    def full_dhebb(self) -> np.ndarray:
        """``(n_out, n_in, n_params)`` over every plastic-layer parameter (w, alpha, b flattened)."""
        return self._scatter(self.dhebb)

    def full_dy(self) -> np.ndarray:
        return self._scatter(self.dy)

    def split(self, vec: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Split a per-cell ``(n_out, 2 n_in + 1)`` block into (w, alpha, b) shaped arrays."""
        n = self.n_in
        return vec[:, :n], vec[:, n:2 * n], vec[:, 2 * n]


def grad_reset(acc: GradientAccumulator) -> GradientAccumulator:
    return GradientAccumulator(np.zeros_like(acc.dhebb), np.zeros_like(acc.dy))


def plastic_grad_step(params: PlasticLayerParams, state: HebbianState, acc: GradientAccumulator,
                      x, y, *, self_only: bool = False) -> GradientAccumulator:
    """Advance the accumulator by one timestep.

    ``state`` is the trace used to compute ``y`` (before this step's update).
    ``self_only`` drops the cross-input terms (``l != k``) of the recursion; it
    exists only to show that they matter.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n_out, n_in = params.w.shape
    if acc.dhebb.shape != (n_out, n_in, 2 * n_in + 1) or x.shape != (n_in,) or y.shape != (n_out,):
        raise ShapeError("accumulator, input or output does not match the layer")
    gamma = state.gamma

    immediate = np.empty((n_out, 2 * n_in + 1))
    immediate[:, :n_in] = x
    immediate[:, n_in:2 * n_in] = x * state.hebb
    immediate[:, 2 * n_in] = 1.0

    ax = params.alpha * x  # (n_out, n_in)
    if self_only:
        carried = np.zeros_like(immediate)
        idx = np.arange(n_in)
        for cols in (idx, n_in + idx):
            carried[:, cols] = ax * acc.dhebb[:, idx, cols]
        carried[:, 2 * n_in] = np.einsum("jl,jl->j", ax, acc.dhebb[:, :, 2 * n_in])
    else:
        carried = np.einsum("jl,jlp->jp", ax, acc.dhebb)
    dy = (1.0 - y * y)[:, None] * (immediate + carried)
    dhebb = (1.0 - gamma) * acc.dhebb + gamma * x[None, :, None] * dy[:, None, :]
    return GradientAccumulator(dhebb, dy)


class UpperGradient(NamedTuple):
    d_hidden: np.ndarray
    layer_grads: list  # [(gw, gb), ...] for the fixed layers, bottom to top


def upper_backprop(net: Network, acts: Sequence[LayerActivation], d_top,
                   *, wrt_raw: bool = False) -> UpperGradient:
    """Backpropagate one timestep's loss gradient down to the first layer's output.

    ``d_top`` is dLoss/dy of the top layer, or dLoss/dy_raw if ``wrt_raw``
    (as returned by softmax cross-entropy). Fixed layers keep no state, so
    there are no temporal terms.
    """
    g = np.asarray(d_top, dtype=np.float64)
    if g.shape != acts[-1].y.shape:
        raise ShapeError(f"top gradient has shape {g.shape}, output is {acts[-1].y.shape}")
    n_layers = len(net.layers)
    grads = []
    for i in range(n_layers - 1, 0, -1):
        layer, act = net.layers[i], acts[i]
        if wrt_raw and i == n_layers - 1:
            g_raw = g
        elif layer.kind == FIXED_TANH:
            g_raw = g * (1.0 - act.y * act.y)
        elif layer.kind == FIXED_SOFTMAX:
            g_raw = act.y * (g - np.dot(act.y, g))
        else:
            raise ShapeError(f"layer {i} cannot sit above the first layer")
        grads.append((np.outer(g_raw, act.x), g_raw))
        g = layer.w.T @ g_raw
    if wrt_raw and n_layers == 1:
        raise ValueError("raw-space gradients need a fixed top layer")
    grads.reverse()
    return UpperGradient(g, grads)


def accumulate_episode_gradient(d_hidden: Sequence[np.ndarray], dy_dtheta: Sequence[np.ndarray],
                                mask: Sequence[bool]) -> np.ndarray:
    """Sum over loss-active steps of dLoss/dy_j(t) * dy_j(t)/dtheta.

    ``dy_dtheta[t]`` is the per-cell block ``(n_out, 2 n_in + 1)``; the result
    has the same shape.
    """
    if not len(d_hidden) == len(dy_dtheta) == len(mask):
        raise ShapeError("per-timestep series have different lengths")
    total = None
    for g, dy, on in zip(d_hidden, dy_dtheta, mask):
        if total is None:
            total = np.zeros_like(np.asarray(dy, dtype=np.float64))
        if on:
            total += np.asarray(g)[:, None] * dy
    if total is None:
        raise ShapeError("empty episode")
    return total
