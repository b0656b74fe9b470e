"""Brute-force gradient oracle: central differences over whole re-simulated episodes.

The oracle only ever calls the forward pass (``core.network_forward``) and the
loss functions; it never touches the gradient engine.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import (DEFAULT_GAMMA, FIXED_SOFTMAX, FIXED_TANH, PLASTIC_TANH, Network, NetworkSpec,
                   network_forward)
from .engine import run_episode_arrays
from .grad import EpisodeGradient, ParamId, param_ids, perturbed
from .tasks import EpisodeScript, loss_cross_entropy, loss_l1, loss_mse

KINK_MARGIN = 1e-3


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class FdConfig:
    epsilon: float = 1e-4
    tolerance: float = 1e-4

    def __post_init__(self):
        if self.epsilon <= 0 or self.tolerance <= 0:
            raise ValueError("epsilon and tolerance must be positive")


def simulate(net: Network, script: EpisodeScript) -> list:
    """Per-step activations of every layer, starting from zeroed traces."""
    states = net.initial_states()
    history = []
    for x in script.inputs:
        acts, states = network_forward(net, states, x)
        history.append(acts)
    return history


def episode_loss(net: Network, script: EpisodeScript, loss: str) -> float:
    total = 0.0
    for t, acts in enumerate(simulate(net, script)):
        if not script.loss_active[t]:
            continue
        y = acts[-1].y
        if loss == "ce":
            total += loss_cross_entropy(y, int(script.classes[t]))[0]
        elif loss == "l1":
            total += loss_l1(y, script.targets[t])[0]
        elif loss == "mse":
            total += loss_mse(y, script.targets[t])[0]
        else:
            raise ValueError(f"unknown loss {loss!r}")
    return total


def _central(f: Callable[[Network], float], net: Network, pid: ParamId, eps: float) -> float:
    hi = f(perturbed(net, pid, eps))
    lo = f(perturbed(net, pid, -eps))
    if not (np.isfinite(hi) and np.isfinite(lo)):
        raise OracleError(f"non-finite loss while perturbing {pid}")
    return (hi - lo) / (2.0 * eps)


def fd_episode_gradient(net: Network, script: EpisodeScript, pid: ParamId,
                        cfg: FdConfig = FdConfig(), loss: str = "l1") -> float:
    return _central(lambda n: episode_loss(n, script, loss), net, pid, cfg.epsilon)


def fd_gradient(net: Network, script: EpisodeScript, cfg: FdConfig = FdConfig(),
                loss: str = "l1") -> EpisodeGradient:
    grad = EpisodeGradient.zeros_like(net)
    flat = [fd_episode_gradient(net, script, pid, cfg, loss) for pid in param_ids(net)]
    offset = 0
    for arr in grad.arrays:
        arr.flat[:] = flat[offset:offset + arr.size]
        offset += arr.size
    return grad


def fd_output_sensitivity(net: Network, script: EpisodeScript, pid: ParamId,
                          cfg: FdConfig = FdConfig(), layer: int = 0) -> np.ndarray:
    """d y(t) / d theta of one layer's output for every step, shape ``(steps, width)``."""
    def outputs(n):
        return np.array([acts[layer].y for acts in simulate(n, script)])
    hi = outputs(perturbed(net, pid, cfg.epsilon))
    lo = outputs(perturbed(net, pid, -cfg.epsilon))
    return (hi - lo) / (2.0 * cfg.epsilon)


def relative_error(a: float, f: float) -> float:
    return abs(a - f) / max(abs(a), abs(f), 1e-8)


@dataclass
class GradCheckReport:
    entries: list = field(default_factory=list)
    tolerance: float = 1e-4

    @property
    def max_rel_error(self) -> float:
        return max((e["relative_error"] for e in self.entries), default=0.0)

    @property
    def mean_rel_error(self) -> float:
        if not self.entries:
            return 0.0
        return float(np.mean([e["relative_error"] for e in self.entries]))

    @property
    def failures(self) -> list:
        return [e for e in self.entries if e["relative_error"] > self.tolerance]

    @property
    def passed(self) -> bool:
        return not self.failures

    def extend(self, other: "GradCheckReport", **extra) -> None:
        self.entries.extend({**e, **extra} for e in other.entries)

    def to_dict(self) -> dict:
        return {
            "entries": self.entries,
            "summary": {
                "n_entries": len(self.entries),
                "max_rel_error": self.max_rel_error,
                "mean_rel_error": self.mean_rel_error,
                "tolerance": self.tolerance,
                "passed": self.passed,
                "failed_params": sorted({e["param"] for e in self.failures}),
            },
        }


def compare_gradients(net: Network, analytical: EpisodeGradient, fd: EpisodeGradient,
                      cfg: FdConfig = FdConfig()) -> GradCheckReport:
    report = GradCheckReport(tolerance=cfg.tolerance)
    for pid, a, f in zip(param_ids(net), analytical.flat().tolist(), fd.flat().tolist()):
        report.entries.append({"param": str(pid), "analytical": a, "finite_difference": f,
                               "relative_error": relative_error(a, f)})
    return report


def analytical_gradient(net: Network, script: EpisodeScript, loss: str) -> EpisodeGradient:
    return run_episode_arrays(net, script, loss, collect_grads=True).grad


def _near_kink(net: Network, script: EpisodeScript, loss: str) -> bool:
    if loss != "l1":
        return False
    for t, acts in enumerate(simulate(net, script)):
        if script.loss_active[t] and np.any(np.abs(acts[-1].y - script.targets[t]) < KINK_MARGIN):
            return True
    return False


def random_instance(rng: np.random.Generator, max_in: int = 10, max_out: int = 4,
                    gamma: float = DEFAULT_GAMMA, max_steps: int = 10) -> tuple[Network, EpisodeScript, str]:
    """A random small network, episode and loss; L1 instances near the kink are redrawn."""
    while True:
        n_in = int(rng.integers(1, max_in + 1))
        n_hid = int(rng.integers(1, max_out + 1))
        steps = int(rng.integers(1, max_steps + 1))
        topology = rng.integers(0, 3)
        if topology == 0:
            spec = NetworkSpec((PLASTIC_TANH,), (n_in, n_hid))
            loss = ("l1", "mse")[rng.integers(0, 2)]
        elif topology == 1:
            spec = NetworkSpec((PLASTIC_TANH, FIXED_TANH), (n_in, n_hid, int(rng.integers(1, 4))))
            loss = ("l1", "mse")[rng.integers(0, 2)]
        else:
            spec = NetworkSpec((PLASTIC_TANH, FIXED_SOFTMAX), (n_in, n_hid, int(rng.integers(2, 4))))
            loss = "ce"
        net = Network.build(spec, rng, 1.0, gamma)
        n_top = spec.n_out
        script = EpisodeScript(
            kind="random",
            inputs=rng.integers(-1, 2, (steps, n_in)).astype(np.float64),
            targets=rng.integers(0, 2, (steps, n_top)).astype(np.float64),
            classes=rng.integers(0, n_top, steps),
            loss_active=rng.random(steps) < 0.7,
            segment=np.zeros(steps, dtype=np.int64),
        )
        script.loss_active[-1] = True
        if not _near_kink(net, script, loss):
            return net, script, loss


GradFn = Callable[[Network, EpisodeScript, str], EpisodeGradient]


def gradcheck_suite(n_instances: int = 100, cfg: FdConfig = FdConfig(), seed: int = 0,
                    grad_fn: GradFn = analytical_gradient) -> GradCheckReport:
    """Compare ``grad_fn`` against the oracle on ``n_instances`` random instances."""
    if n_instances < 1:
        raise ValueError("empty suite")
    rng = np.random.default_rng(seed)
    report = GradCheckReport(tolerance=cfg.tolerance)
    for i in range(n_instances):
        net, script, loss = random_instance(rng)
        one = compare_gradients(net, grad_fn(net, script, loss), fd_gradient(net, script, cfg, loss), cfg)
        report.extend(one, instance=i)
    return report
