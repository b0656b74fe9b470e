"""Plastic layers: Hebbian trace maintenance and cell responses.

A plastic cell ``j`` receiving inputs ``x`` responds with

    y_raw[j] = sum_k (w[j, k] + alpha[j, k] * hebb[j, k]) * x[k] + b[j]
    y[j]     = tanh(y_raw[j])

and each connection keeps a running average of pre/post activity

    hebb[j, k] <- (1 - gamma) * hebb[j, k] + gamma * x[k] * y[j]

The response at step ``t`` reads the trace as it stood after step ``t - 1``;
the trace is advanced afterwards with the freshly computed ``y``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

PLASTIC_TANH = "plastic-tanh"
FIXED_TANH = "fixed-tanh"
FIXED_SOFTMAX = "fixed-softmax"
LAYER_KINDS = (PLASTIC_TANH, FIXED_TANH, FIXED_SOFTMAX)

DEFAULT_GAMMA = 0.5


class ShapeError(ValueError):
    """Arrays handed to a layer operation do not fit together."""


def _as_matrix(a, name: str) -> np.ndarray:
    arr = np.array(a, dtype=np.float64, copy=True)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def _as_vector(a, name: str) -> np.ndarray:
    arr = np.array(a, dtype=np.float64, copy=True)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {arr.shape}")
    return arr


def _check_finite(**arrays: np.ndarray) -> None:
    for name, arr in arrays.items():
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{name} contains non-finite entries")


@dataclass
class PlasticLayerParams:
    """Baseline weights, plasticity coefficients and biases of a plastic layer.

    ``w`` and ``alpha`` are ``(n_out, n_in)``; row ``j`` holds the incoming
    connections of cell ``j``.
    """

    w: np.ndarray
    alpha: np.ndarray
    b: np.ndarray

    kind = PLASTIC_TANH

    def __post_init__(self):
        self.w = _as_matrix(self.w, "w")
        self.alpha = _as_matrix(self.alpha, "alpha")
        self.b = _as_vector(self.b, "b")
        if self.alpha.shape != self.w.shape:
            raise ShapeError(f"alpha shape {self.alpha.shape} != w shape {self.w.shape}")
        if self.b.shape != (self.w.shape[0],):
            raise ShapeError(f"b has length {self.b.size}, expected {self.w.shape[0]}")
        _check_finite(w=self.w, alpha=self.alpha, b=self.b)

    @property
    def n_in(self) -> int:
        return self.w.shape[1]

    @property
    def n_out(self) -> int:
        return self.w.shape[0]

    @classmethod
    def zeros(cls, n_in: int, n_out: int) -> "PlasticLayerParams":
        return cls(np.zeros((n_out, n_in)), np.zeros((n_out, n_in)), np.zeros(n_out))

    @classmethod
    def uniform(cls, n_in: int, n_out: int, scale: float,
                rng: np.random.Generator) -> "PlasticLayerParams":
        w = rng.uniform(-scale, scale, (n_out, n_in))
        alpha = rng.uniform(-scale, scale, (n_out, n_in))
        b = rng.uniform(-scale, scale, n_out)
        return cls(w, alpha, b)

    def arrays(self) -> list[np.ndarray]:
        return [self.w, self.alpha, self.b]

    def copy(self) -> "PlasticLayerParams":
        return PlasticLayerParams(self.w, self.alpha, self.b)


@dataclass
class FixedLayerParams:
    """Non-plastic layer; ``kind`` is ``fixed-tanh`` or ``fixed-softmax``."""

    w: np.ndarray
    b: np.ndarray
    kind: str = FIXED_TANH

    def __post_init__(self):
        if self.kind not in (FIXED_TANH, FIXED_SOFTMAX):
            raise ValueError(f"unknown fixed layer kind {self.kind!r}")
        self.w = _as_matrix(self.w, "w")
        self.b = _as_vector(self.b, "b")
        if self.b.shape != (self.w.shape[0],):
            raise ShapeError(f"b has length {self.b.size}, expected {self.w.shape[0]}")
        _check_finite(w=self.w, b=self.b)

    @property
    def n_in(self) -> int:
        return self.w.shape[1]

    @property
    def n_out(self) -> int:
        return self.w.shape[0]

    @classmethod
    def uniform(cls, n_in: int, n_out: int, scale: float, rng: np.random.Generator,
                kind: str = FIXED_TANH) -> "FixedLayerParams":
        return cls(rng.uniform(-scale, scale, (n_out, n_in)),
                   rng.uniform(-scale, scale, n_out), kind)

    def arrays(self) -> list[np.ndarray]:
        return [self.w, self.b]

    def copy(self) -> "FixedLayerParams":
        return FixedLayerParams(self.w, self.b, self.kind)


LayerParams = Union[PlasticLayerParams, FixedLayerParams]


@dataclass
class HebbianState:
    hebb: np.ndarray
    gamma: float = DEFAULT_GAMMA

    def __post_init__(self):
        self.hebb = _as_matrix(self.hebb, "hebb")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")

    @classmethod
    def zeros(cls, n_out: int, n_in: int, gamma: float = DEFAULT_GAMMA) -> "HebbianState":
        return cls(np.zeros((n_out, n_in)), gamma)


@dataclass(frozen=True)
class LayerActivation:
    x: np.ndarray
    y_raw: np.ndarray
    y: np.ndarray


@dataclass(frozen=True)
class NetworkSpec:
    """Layer kinds plus layer widths; ``sizes[0]`` is the input width."""

    kinds: tuple
    sizes: tuple

    def __post_init__(self):
        if len(self.sizes) != len(self.kinds) + 1:
            raise ValueError("sizes must have one more entry than kinds")
        if not self.kinds:
            raise ValueError("a network needs at least one layer")
        for i, kind in enumerate(self.kinds):
            if kind not in LAYER_KINDS:
                raise ValueError(f"unknown layer kind {kind!r}")
            if kind == PLASTIC_TANH and i != 0:
                raise ValueError("only the first layer may be plastic")
        if any(s < 1 for s in self.sizes):
            raise ValueError("layer sizes must be positive")

    @property
    def n_in(self) -> int:
        return self.sizes[0]

    @property
    def n_out(self) -> int:
        return self.sizes[-1]

    @property
    def has_plastic(self) -> bool:
        return self.kinds[0] == PLASTIC_TANH


def reset_traces(state: HebbianState) -> HebbianState:
    return HebbianState(np.zeros_like(state.hebb), state.gamma)


def hebb_update(state: HebbianState, x, y) -> HebbianState:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n_out, n_in = state.hebb.shape
    if x.shape != (n_in,) or y.shape != (n_out,):
        raise ShapeError(f"trace {state.hebb.shape} does not fit x {x.shape}, y {y.shape}")
    g = state.gamma
    return HebbianState((1.0 - g) * state.hebb + g * np.outer(y, x), g)


def plastic_forward(params: PlasticLayerParams, state: HebbianState, x) -> LayerActivation:
    """Respond to ``x`` using the trace as it stands (before this step's update)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.n_in,):
        raise ShapeError(f"input has shape {x.shape}, layer expects ({params.n_in},)")
    if state.hebb.shape != params.w.shape:
        raise ShapeError(f"trace shape {state.hebb.shape} != weight shape {params.w.shape}")
    y_raw = (params.w + params.alpha * state.hebb) @ x + params.b
    return LayerActivation(x.copy(), y_raw, np.tanh(y_raw))


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - np.max(z))
    return e / e.sum()


def fixed_forward(params: FixedLayerParams, x, kind: str | None = None) -> LayerActivation:
    kind = params.kind if kind is None else kind
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.n_in,):
        raise ShapeError(f"input has shape {x.shape}, layer expects ({params.n_in},)")
    y_raw = params.w @ x + params.b
    if kind in ("tanh", FIXED_TANH):
        y = np.tanh(y_raw)
    elif kind in ("softmax", FIXED_SOFTMAX):
        y = softmax(y_raw)
    else:
        raise ValueError(f"unknown activation kind {kind!r}")
    return LayerActivation(x.copy(), y_raw, y)


@dataclass
class Network:
    """A feedforward stack whose optional first layer is plastic.

    ``gamma`` is shared by every trace in the network.
    """

    layers: list
    gamma: float = DEFAULT_GAMMA
    spec: NetworkSpec = field(init=False)

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        sizes = [self.layers[0].n_in]
        for i, layer in enumerate(self.layers):
            if layer.n_in != sizes[-1]:
                raise ShapeError(f"layer {i} expects {layer.n_in} inputs, previous layer gives {sizes[-1]}")
            sizes.append(layer.n_out)
        self.spec = NetworkSpec(tuple(l.kind for l in self.layers), tuple(sizes))

    @classmethod
    def build(cls, spec: NetworkSpec, rng: np.random.Generator, init_scale: float = 0.1,
              gamma: float = DEFAULT_GAMMA) -> "Network":
        layers = []
        for kind, n_in, n_out in zip(spec.kinds, spec.sizes[:-1], spec.sizes[1:]):
            if kind == PLASTIC_TANH:
                layers.append(PlasticLayerParams.uniform(n_in, n_out, init_scale, rng))
            else:
                layers.append(FixedLayerParams.uniform(n_in, n_out, init_scale, rng, kind))
        return cls(layers, gamma)

    @property
    def plastic(self) -> PlasticLayerParams | None:
        first = self.layers[0]
        return first if isinstance(first, PlasticLayerParams) else None

    def param_arrays(self) -> list[np.ndarray]:
        """Every trainable array, in a fixed order (layer by layer, w/alpha/b)."""
        out = []
        for layer in self.layers:
            out.extend(layer.arrays())
        return out

    def param_names(self) -> list[str]:
        names = []
        for i, layer in enumerate(self.layers):
            parts = ("w", "alpha", "b") if isinstance(layer, PlasticLayerParams) else ("w", "b")
            names.extend(f"{i}.{p}" for p in parts)
        return names

    def initial_states(self) -> list:
        return [HebbianState.zeros(l.n_out, l.n_in, self.gamma)
                if isinstance(l, PlasticLayerParams) else None for l in self.layers]

    def copy(self) -> "Network":
        return Network([l.copy() for l in self.layers], self.gamma)

    def to_dict(self) -> dict:
        layers = []
        for layer in self.layers:
            d = {"kind": layer.kind, "w": layer.w.tolist()}
            if isinstance(layer, PlasticLayerParams):
                d["alpha"] = layer.alpha.tolist()
            d["b"] = layer.b.tolist()
            layers.append(d)
        return {"gamma": self.gamma, "layers": layers}

    @classmethod
    def from_dict(cls, data: dict) -> "Network":
        layers = []
        for i, d in enumerate(data["layers"]):
            try:
                if d["kind"] == PLASTIC_TANH:
                    layers.append(PlasticLayerParams(d["w"], d["alpha"], d["b"]))
                else:
                    layers.append(FixedLayerParams(d["w"], d["b"], d["kind"]))
            except KeyError as exc:
                raise ValueError(f"layers[{i}] is missing field {exc.args[0]!r}") from None
        return cls(layers, float(data["gamma"]))

    def dumps(self) -> str:
        # float repr is the shortest string that round-trips exactly
        return json.dumps(self.to_dict(), indent=1)

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Network":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def network_forward(net: Network, states: Sequence, x) -> tuple[list[LayerActivation], list]:
    """Run one timestep through every layer.

    Returns the per-layer activations and the advanced trace states.
    """
    if len(states) != len(net.layers):
        raise ShapeError(f"{len(states)} states for {len(net.layers)} layers")
    acts, new_states = [], []
    h = np.asarray(x, dtype=np.float64)
    for layer, state in zip(net.layers, states):
        if isinstance(layer, PlasticLayerParams):
            if state is None:
                raise ShapeError("plastic layer has no trace state")
            act = plastic_forward(layer, state, h)
            new_states.append(hebb_update(state, act.x, act.y))
        else:
            act = fixed_forward(layer, h)
            new_states.append(None)
        acts.append(act)
        h = act.y
    return acts, new_states
