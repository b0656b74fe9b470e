"""Episodic training: one parameter update per episode, then a frozen evaluation tail."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .core import FIXED_SOFTMAX, PLASTIC_TANH, Network, NetworkSpec
from .engine import run_episode_arrays
from .grad import EpisodeGradient
from .tasks import (COMPLETION, ONESHOT, REVERSAL, EpisodeScript, TaskConfig, generate,
                    metric_mean_abs_error, task_metric)

log = logging.getLogger(__name__)

HIDDEN_CELLS = 2


class DivergedRunError(RuntimeError):
    def __init__(self, episode: int, what: str):
        super().__init__(f"run diverged at episode {episode}: {what}")
        self.episode = episode


@dataclass(frozen=True)
class TrainConfig:
    task: TaskConfig = field(default_factory=TaskConfig)
    episodes_total: int = 10500
    freeze_last: int = 500
    learning_rate: float = 0.01
    optimizer: str = "sgd"
    gamma: float = 0.5
    init_scale: float = 0.1
    clip_alpha_nonnegative: bool = False
    loss: str | None = None  # default: l1 for completion, ce otherwise
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.freeze_last < self.episodes_total:
            raise ValueError("freeze_last must be in [0, episodes_total)")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")

    @property
    def loss_name(self) -> str:
        if self.loss is not None:
            return self.loss
        return "l1" if self.task.kind == COMPLETION else "ce"

    @property
    def train_episodes(self) -> int:
        return self.episodes_total - self.freeze_last

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["task"] = TaskConfig(**d["task"])
        return cls(**d)


# Per-task settings that train reliably at the default episode budget. Plain
# SGD at lr 0.01 is available through TrainConfig itself.
PRESETS = {
    COMPLETION: dict(optimizer="adam", learning_rate=0.003, gamma=0.5, init_scale=0.1),
    ONESHOT: dict(optimizer="adam", learning_rate=0.003, gamma=0.03, init_scale=0.001),
    REVERSAL: dict(optimizer="adam", learning_rate=0.04, gamma=0.05, init_scale=0.001),
}


def task_defaults(kind: str, n: int = 8, seed: int = 0) -> TrainConfig:
    """The recommended configuration for a task (used by the CLI)."""
    return TrainConfig(task=TaskConfig(kind, n, seed), seed=seed, **PRESETS[kind])


def network_spec(task: TaskConfig) -> NetworkSpec:
    if task.kind == COMPLETION:
        return NetworkSpec((PLASTIC_TANH,), (task.n, task.n))
    return NetworkSpec((PLASTIC_TANH, FIXED_SOFTMAX), (task.n + 2, HIDDEN_CELLS, 2))


@dataclass
class EpisodeOutcome:
    loss: float
    metric: float
    error: float
    grad: EpisodeGradient | None
    outputs: np.ndarray


def run_episode(net: Network, script: EpisodeScript, collect_grads: bool = True,
                loss: str | None = None, *, episode: int = -1) -> EpisodeOutcome:
    """Run one episode from zeroed traces.

    ``error`` is the per-element mean absolute error against the targets;
    ``metric`` is the task's headline number (see ``tasks.task_metric``).
    """
    if loss is None:
        loss = "l1" if script.kind == COMPLETION else "ce"
    res = run_episode_arrays(net, script, loss, collect_grads)
    if not (np.isfinite(res.loss) and np.all(np.isfinite(res.outputs))):
        raise DivergedRunError(episode, "non-finite activation or loss")
    if res.grad is not None and not res.grad.is_finite():
        raise DivergedRunError(episode, "non-finite gradient")
    return EpisodeOutcome(res.loss, task_metric(res.outputs, script),
                          metric_mean_abs_error(res.outputs, script), res.grad, res.outputs)


class Optimizer:
    """Plain SGD or Adam over a list of parameter arrays, updated in place."""

    def __init__(self, kind: str = "sgd", lr: float = 0.01, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.kind, self.lr = kind, lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m: list | None = None
        self.v: list | None = None

    def step(self, params: list, grads: list) -> None:
        if self.kind == "sgd":
            for p, g in zip(params, grads):
                p -= self.lr * g
            return
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def apply_update(net: Network, grad: EpisodeGradient, cfg: TrainConfig,
                 opt: Optimizer | None = None) -> Network:
    """Apply one update in place and return ``net``.

    Without ``opt`` a fresh optimizer is used, which for Adam means a
    first-step (bias-corrected) update.
    """
    if opt is None:
        opt = Optimizer(cfg.optimizer, cfg.learning_rate)
    params = net.param_arrays()
    if len(params) != len(grad.arrays) or any(p.shape != g.shape for p, g in zip(params, grad.arrays)):
        raise ValueError("gradient does not match the network's parameters")
    opt.step(params, grad.arrays)
    if cfg.clip_alpha_nonnegative and net.plastic is not None:
        np.maximum(net.plastic.alpha, 0.0, out=net.plastic.alpha)
    return net


@dataclass
class RunResult:
    seed: int
    errors: np.ndarray
    metrics: np.ndarray
    initial: Network
    final: Network
    diverged_at: int | None = None
    message: str = ""

    @property
    def frozen_slice(self) -> slice:
        return slice(len(self.errors) - self._freeze, None)

    _freeze: int = 0

    def frozen_error(self) -> float:
        return float(np.mean(self.errors[self.frozen_slice]))

    def frozen_metric(self) -> float:
        return float(np.nanmean(self.metrics[self.frozen_slice]))


def train_run(cfg: TrainConfig) -> RunResult:
    """Train one network from ``cfg.seed`` and evaluate it during the frozen tail.

    Raises ``DivergedRunError`` if anything becomes non-finite.
    """
    rng = np.random.default_rng(cfg.seed)
    net = Network.build(network_spec(cfg.task), rng, cfg.init_scale, cfg.gamma)
    if cfg.clip_alpha_nonnegative:
        np.maximum(net.plastic.alpha, 0.0, out=net.plastic.alpha)
    initial = net.copy()
    opt = Optimizer(cfg.optimizer, cfg.learning_rate)
    errors = np.zeros(cfg.episodes_total)
    metrics = np.zeros(cfg.episodes_total)
    loss = cfg.loss_name
    for ep in range(cfg.episodes_total):
        training = ep < cfg.train_episodes
        script = generate(cfg.task, rng)
        out = run_episode(net, script, training, loss, episode=ep)
        errors[ep] = out.error
        metrics[ep] = out.metric
        if training:
            apply_update(net, out.grad, cfg, opt)
    return RunResult(cfg.seed, errors, metrics, initial, net, _freeze=cfg.freeze_last)


def _safe_run(cfg: TrainConfig) -> RunResult | DivergedRunError:
    try:
        return train_run(cfg)
    except DivergedRunError as exc:
        return exc


@dataclass
class RunStats:
    """Per-episode error across runs plus per-run results.

    Diverged runs are listed in ``diverged`` (seed -> episode) and excluded
    from the aggregate series.
    """

    config: TrainConfig
    runs: list
    diverged: dict
    median: np.ndarray
    q25: np.ndarray
    q75: np.ndarray

    @property
    def seeds(self) -> list[int]:
        return [r.seed for r in self.runs]

    def frozen_errors(self) -> np.ndarray:
        return np.array([r.frozen_error() for r in self.runs])

    def frozen_metrics(self) -> np.ndarray:
        return np.array([r.frozen_metric() for r in self.runs])

    def csv_rows(self):
        for i, (m, lo, hi) in enumerate(zip(self.median, self.q25, self.q75)):
            yield i, m, lo, hi


def aggregate(cfg: TrainConfig, seeds: list[int], results: list) -> RunStats:
    runs = [r for r in results if isinstance(r, RunResult)]
    diverged = {}
    for seed, r in zip(seeds, results):
        if isinstance(r, DivergedRunError):
            diverged[seed] = r.episode
            log.warning("seed %d diverged at episode %d; excluded", seed, r.episode)
    if runs:
        errs = np.vstack([r.errors for r in runs])
        q25, med, q75 = np.percentile(errs, [25, 50, 75], axis=0)
    else:
        med = q25 = q75 = np.full(cfg.episodes_total, np.nan)
    return RunStats(cfg, runs, diverged, med, q25, q75)


def run_seeds(cfg: TrainConfig, n_runs: int) -> list[int]:
    return [cfg.seed + i for i in range(n_runs)]


def multi_run(cfg: TrainConfig, n_runs: int = 20, jobs: int = 1, seeds: list[int] | None = None) -> RunStats:
    """Independent runs with seeds ``cfg.seed, cfg.seed + 1, ...`` (or ``seeds``)."""
    if n_runs < 1:
        raise ValueError("n_runs must be at least 1")
    seeds = run_seeds(cfg, n_runs) if seeds is None else list(seeds)
    cfgs = [replace(cfg, seed=s, task=replace(cfg.task, seed=s)) for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            results = list(pool.map(_safe_run, cfgs))
    else:
        results = [_safe_run(c) for c in cfgs]
    return aggregate(cfg, seeds, results)
