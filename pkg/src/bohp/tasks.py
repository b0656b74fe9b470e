"""Seeded episode generators for the three experiments, plus losses and metrics."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

COMPLETION = "completion"
ONESHOT = "oneshot"
REVERSAL = "reversal"
TASK_KINDS = (COMPLETION, ONESHOT, REVERSAL)

EPISODE_STEPS = 20
REVERSAL_AT = 10  # zero-based index of the first reversal-instruction step
CE_FLOOR = 1e-12

# label suffixes; class index = position of the 1 bit
LABEL_01 = (0.0, 1.0)
LABEL_10 = (1.0, 0.0)
NEUTRAL = (0.0, 0.0)


@dataclass(frozen=True)
class TaskConfig:
    kind: str = COMPLETION
    n: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ValueError(f"unknown task {self.kind!r}; expected one of {TASK_KINDS}")
        if self.n < 2:
            raise ValueError("pattern length n must be at least 2")


@dataclass
class EpisodeScript:
    """One episode as arrays indexed by timestep.

    ``targets`` rows are NaN and ``classes`` entries are -1 where a step has
    no target. ``segment`` is 1 for steps after a reversal, else 0.
    """

    kind: str
    inputs: np.ndarray
    targets: np.ndarray
    classes: np.ndarray
    loss_active: np.ndarray
    segment: np.ndarray

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def steps(self) -> list[dict]:
        out = []
        for t in range(len(self)):
            if self.classes[t] >= 0:
                target = int(self.classes[t])
            elif np.all(np.isfinite(self.targets[t])):
                target = self.targets[t].tolist()
            else:
                target = None
            out.append({"input": self.inputs[t].tolist(), "target": target,
                        "loss_active": bool(self.loss_active[t])})
        return out

    def to_dict(self) -> dict:
        return {"task": self.kind, "steps": self.steps}


def _rng(cfg: TaskConfig, rng):
    return np.random.default_rng(cfg.seed) if rng is None else rng


def _empty(kind: str, steps: int, n_in: int, n_out: int) -> EpisodeScript:
    return EpisodeScript(
        kind=kind,
        inputs=np.zeros((steps, n_in)),
        targets=np.full((steps, n_out), np.nan),
        classes=np.full(steps, -1, dtype=np.int64),
        loss_active=np.zeros(steps, dtype=bool),
        segment=np.zeros(steps, dtype=np.int64),
    )


def gen_pattern_completion(cfg: TaskConfig, rng: np.random.Generator | None = None) -> EpisodeScript:
    rng = _rng(cfg, rng)
    n = cfg.n
    while True:
        pattern = rng.integers(0, 2, n).astype(np.float64)
        if pattern.any():
            break
    cue = rng.choice(np.flatnonzero(pattern))
    script = _empty(COMPLETION, 2, n, n)
    script.inputs[0] = pattern
    script.inputs[1, cue] = 1.0
    script.targets[1] = pattern
    script.loss_active[1] = True
    return script


def _two_patterns(n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    while True:
        a = rng.choice((-1.0, 1.0), n)
        b = rng.choice((-1.0, 1.0), n)
        if np.any(a != b):
            return a, b


def _set_step(script: EpisodeScript, t: int, pattern, suffix, cls: int | None) -> None:
    n = pattern.size
    script.inputs[t, :n] = pattern
    script.inputs[t, n:] = suffix
    if cls is not None:
        script.classes[t] = cls
        script.targets[t] = 0.0
        script.targets[t, cls] = 1.0
        script.loss_active[t] = True


def _queries(script, a, b, cls_a, cls_b, steps, rng) -> None:
    picks = rng.integers(0, 2, len(steps))
    for t, pick in zip(steps, picks):
        if pick == 0:
            _set_step(script, t, a, NEUTRAL, cls_a)
        else:
            _set_step(script, t, b, NEUTRAL, cls_b)


def gen_one_shot(cfg: TaskConfig, rng: np.random.Generator | None = None) -> EpisodeScript:
    """Pattern A is taught with label 01 (class 1), pattern B with 10 (class 0)."""
    rng = _rng(cfg, rng)
    a, b = _two_patterns(cfg.n, rng)
    script = _empty(ONESHOT, EPISODE_STEPS, cfg.n + 2, 2)
    _set_step(script, 0, a, LABEL_01, None)
    _set_step(script, 1, b, LABEL_10, None)
    _queries(script, a, b, 1, 0, range(2, EPISODE_STEPS), rng)
    return script


def gen_reversal(cfg: TaskConfig, rng: np.random.Generator | None = None) -> EpisodeScript:
    rng = _rng(cfg, rng)
    a, b = _two_patterns(cfg.n, rng)
    script = _empty(REVERSAL, EPISODE_STEPS, cfg.n + 2, 2)
    _set_step(script, 0, a, LABEL_01, None)
    _set_step(script, 1, b, LABEL_10, None)
    _queries(script, a, b, 1, 0, range(2, REVERSAL_AT), rng)
    _set_step(script, REVERSAL_AT, a, LABEL_10, None)
    _set_step(script, REVERSAL_AT + 1, b, LABEL_01, None)
    _queries(script, a, b, 0, 1, range(REVERSAL_AT + 2, EPISODE_STEPS), rng)
    script.segment[REVERSAL_AT:] = 1
    return script


GENERATORS = {
    COMPLETION: gen_pattern_completion,
    ONESHOT: gen_one_shot,
    REVERSAL: gen_reversal,
}


def generate(cfg: TaskConfig, rng: np.random.Generator | None = None) -> EpisodeScript:
    return GENERATORS[cfg.kind](cfg, rng)


def loss_l1(output, target) -> tuple[float, np.ndarray]:
    diff = np.asarray(output, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    return float(np.abs(diff).sum()), np.sign(diff)


def loss_mse(output, target) -> tuple[float, np.ndarray]:
    diff = np.asarray(output, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    return float(np.dot(diff, diff)), 2.0 * diff


def loss_cross_entropy(output, target: int) -> tuple[float, np.ndarray]:
    """Cross-entropy of a softmax output.

    The returned gradient is taken with respect to the softmax *input*.
    Probabilities below ``CE_FLOOR`` are clamped before the log.
    """
    p = np.asarray(output, dtype=np.float64)
    grad = p.copy()
    grad[target] -= 1.0
    return -math.log(max(p[target], CE_FLOOR)), grad


def ce_clamped(output, target: int) -> bool:
    return float(output[target]) < CE_FLOOR


def metric_mean_abs_error(outputs: np.ndarray, script: EpisodeScript) -> float:
    """Mean |output - target| per element over the loss-active steps."""
    active = script.loss_active
    return float(np.mean(np.abs(outputs[active] - script.targets[active])))


def metric_accuracy(outputs: np.ndarray, script: EpisodeScript, segment: int | None = None) -> float:
    """Fraction of loss-active steps whose argmax output is the target class."""
    active = script.loss_active.copy()
    if segment is not None:
        active &= script.segment == segment
    if not active.any():
        return float("nan")
    hits = np.argmax(outputs[active], axis=1) == script.classes[active]
    return float(hits.mean())


def task_metric(outputs: np.ndarray, script: EpisodeScript) -> float:
    """Headline metric: MAE for completion, accuracy for the label tasks.

    For reversal this is the post-reversal query accuracy.
    """
    if script.kind == COMPLETION:
        return metric_mean_abs_error(outputs, script)
    if script.kind == REVERSAL:
        return metric_accuracy(outputs, script, segment=1)
    return metric_accuracy(outputs, script)
