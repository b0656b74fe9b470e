"""End-to-end acceptance checks.

Each test prints one PASS/FAIL line (collected into the pytest terminal
summary by conftest.py). The training experiments use 20 seeded runs each and
take a few minutes in total; deselect them with ``-m "not slow"``.
"""
import time
from dataclasses import replace

import numpy as np
import pytest

from conftest import record

from bohp._pyengine import run_episode as py_run_episode
from bohp.core import (FIXED_TANH, PLASTIC_TANH, FixedLayerParams, HebbianState, Network,
                       NetworkSpec, PlasticLayerParams, fixed_forward, hebb_update,
                       network_forward, plastic_forward)
from bohp.fdcheck import FdConfig, gradcheck_suite
from bohp.summary import summarize
from bohp.tasks import COMPLETION, ONESHOT, REVERSAL
from bohp.trainer import multi_run, task_defaults, train_run

RUNS = 20
_cache = {}


def experiment(kind, clip=False):
    key = (kind, clip)
    if key not in _cache:
        cfg = replace(task_defaults(kind), clip_alpha_nonnegative=clip)
        _cache[key] = multi_run(cfg, RUNS)
    return _cache[key]


def check(criterion, passed, detail):
    record(criterion, passed, detail)
    print(f"{'PASS' if passed else 'FAIL'}  {criterion}: {detail}")
    assert passed, detail


def test_gradient_correctness():
    start = time.perf_counter()
    report = gradcheck_suite(100, FdConfig(1e-4, 1e-4), seed=0)
    elapsed = time.perf_counter() - start
    ablated = gradcheck_suite(
        100, FdConfig(1e-4, 1e-4), seed=0,
        grad_fn=lambda net, script, loss: py_run_episode(net, script, loss, self_only=True)[3])
    ok = report.passed and elapsed < 60 and not ablated.passed
    check("gradient correctness",
          ok, f"max rel error {report.max_rel_error:.2e} over {len(report.entries)} gradients "
              f"in {elapsed:.1f}s; without cross-input terms max rel error "
              f"{ablated.max_rel_error:.2e} ({len(ablated.failures)} failures)")


@pytest.mark.slow
def test_pattern_completion():
    stats = experiment(COMPLETION)
    med = float(np.median(stats.frozen_errors()))
    check("pattern completion", med < 0.05 and not stats.diverged,
          f"median frozen MAE {med:.4f} (< 0.05) over {len(stats.runs)} runs, "
          f"{len(stats.diverged)} diverged")


@pytest.mark.slow
def test_pattern_completion_structure():
    stats = experiment(COMPLETION)
    matches = sum(summarize(r.final)["diagonal_structure"]["matches"] for r in stats.runs)
    check("pattern completion structure", matches >= 18,
          f"{matches}/{RUNS} models have the largest fixed weight on the diagonal "
          f"and all cross connections plastic (>= 18)")


@pytest.mark.slow
def test_one_shot():
    stats = experiment(ONESHOT)
    med = float(np.median(stats.frozen_metrics()))
    check("one-shot learning", med >= 0.95 and not stats.diverged,
          f"median frozen query accuracy {med:.4f} (>= 0.95)")


@pytest.mark.slow
def test_one_shot_curve_improves():
    stats = experiment(ONESHOT)
    assert np.median(stats.median[-500:]) < np.median(stats.median[:500])


@pytest.mark.slow
def test_reversal():
    stats = experiment(REVERSAL)
    med = float(np.median(stats.frozen_metrics()))
    reports = [summarize(r.final) for r in stats.runs]
    negative = sum(rep["pattern_alpha_signs"]["all_negative"] for rep in reports)
    inhibitory = sum(rep["pattern_all_plastic_inhibitory"] for rep in reports)
    check("reversal learning", med >= 0.90 and negative >= 18 and not stats.diverged,
          f"median frozen post-reversal accuracy {med:.4f} (>= 0.90); "
          f"{negative}/{RUNS} models with all pattern plasticity negative (>= 18); "
          f"{inhibitory}/{RUNS} with every pattern connection classified plastic-inhibitory")


@pytest.mark.slow
def test_clipping_ablation():
    one_shot = float(np.median(experiment(ONESHOT, clip=True).frozen_metrics()))
    reversal = float(np.median(experiment(REVERSAL, clip=True).frozen_metrics()))
    check("non-negative plasticity ablation", one_shot >= 0.95 and reversal < 0.60,
          f"one-shot accuracy {one_shot:.4f} (>= 0.95), "
          f"post-reversal accuracy {reversal:.4f} (< 0.60)")


def _trace_fuzz(episodes=10_000):
    rng = np.random.default_rng(0)
    for _ in range(episodes):
        n_in, n_out = rng.integers(1, 11), rng.integers(1, 5)
        layer = PlasticLayerParams.uniform(n_in, n_out, rng.uniform(0.1, 10.0), rng)
        state = HebbianState.zeros(n_out, n_in, rng.uniform(0.01, 1.0))
        for x in rng.uniform(-1.0, 1.0, (rng.integers(1, 30), n_in)):
            state = hebb_update(state, x, plastic_forward(layer, state, x).y)
            if np.abs(state.hebb).max() > 1.0:
                return False
    return True


def _reset_isolation():
    rng = np.random.default_rng(1)
    net = Network.build(NetworkSpec((PLASTIC_TANH, FIXED_TANH), (5, 3, 2)), rng, 1.0)
    probe = rng.integers(-1, 2, (6, 5)).astype(float)

    def outputs(prefix):
        states = net.initial_states()
        for x in prefix:
            _, states = network_forward(net, states, x)
        states = net.initial_states()  # episode boundary
        out = []
        for x in probe:
            acts, states = network_forward(net, states, x)
            out.append(acts[-1].y)
        return np.array(out)

    fresh = outputs([])
    return all(np.array_equal(fresh, outputs(rng.integers(-1, 2, (k, 5)).astype(float)))
               for k in (1, 5, 20))


def _zero_alpha_equivalence():
    rng = np.random.default_rng(2)
    for _ in range(200):
        layer = PlasticLayerParams.uniform(4, 3, 2.0, rng)
        layer.alpha[:] = 0.0
        state = HebbianState.zeros(3, 4)
        fixed = FixedLayerParams(layer.w.copy(), layer.b.copy(), FIXED_TANH)
        for x in rng.uniform(-1, 1, (8, 4)):
            act = plastic_forward(layer, state, x)
            if not np.array_equal(act.y, fixed_forward(fixed, x).y):
                return False
            state = hebb_update(state, x, act.y)
    return True


def _reproducible():
    cfg = replace(task_defaults(REVERSAL), episodes_total=200, freeze_last=50)
    a, b = train_run(cfg), train_run(cfg)
    return (np.array_equal(a.errors, b.errors) and np.array_equal(a.metrics, b.metrics)
            and a.final.dumps() == b.final.dumps())


def _frozen_immutable():
    import bohp.trainer as trainer
    cfg = replace(task_defaults(ONESHOT), episodes_total=120, freeze_last=40)
    seen = []
    real = trainer.run_episode

    def spy(net, script, collect_grads=True, loss=None, *, episode=-1):
        if episode >= cfg.train_episodes:
            seen.append(net.dumps())
        return real(net, script, collect_grads, loss, episode=episode)

    trainer.run_episode = spy
    try:
        result = trainer.train_run(cfg)
    finally:
        trainer.run_episode = real
    return len(seen) == cfg.freeze_last and all(s == result.final.dumps() for s in seen)


def test_invariant_suites():
    checks = {"trace bound over 10^4 episodes": _trace_fuzz(),
              "reset isolation": _reset_isolation(),
              "zero plasticity equals feedforward": _zero_alpha_equivalence(),
              "bit-identical reruns": _reproducible(),
              "frozen parameters unchanged": _frozen_immutable()}
    failed = [k for k, v in checks.items() if not v]
    check("invariant suites", not failed,
          "all hold" if not failed else "failed: " + ", ".join(failed))
