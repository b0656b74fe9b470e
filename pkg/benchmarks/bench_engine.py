"""Time the compiled episode kernel against the pure-Python engine.

Usage: python3 benchmarks/bench_engine.py [--episodes 300] [--task reversal]
"""
import argparse
import time

import numpy as np

from bohp import engine
from bohp.core import Network
from bohp.tasks import TASK_KINDS, TaskConfig, generate
from bohp.trainer import network_spec


def time_backend(net, scripts, loss, backend):
    start = time.perf_counter()
    for s in scripts:
        engine.run_episode_arrays(net, s, loss, backend=backend)
    return time.perf_counter() - start


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--episodes", type=int, default=300)
    parser.add_argument("--task", choices=TASK_KINDS, default="reversal")
    parser.add_argument("--n", type=int, default=8)
    args = parser.parse_args()

    task = TaskConfig(args.task, args.n)
    rng = np.random.default_rng(0)
    net = Network.build(network_spec(task), rng, 0.5)
    scripts = [generate(task, rng) for _ in range(args.episodes)]
    loss = "l1" if args.task == "completion" else "ce"

    if engine._kernel is None:
        print("compiled kernel not available; only the Python engine can be timed")
    slow = time_backend(net, scripts, loss, "python")
    print(f"python : {slow / args.episodes * 1e6:9.1f} us/episode")
    if engine._kernel is not None:
        fast = time_backend(net, scripts, loss, "cython")
        print(f"cython : {fast / args.episodes * 1e6:9.1f} us/episode  ({slow / fast:.0f}x faster)")
        a = engine.run_episode_arrays(net, scripts[0], loss, backend="python")
        b = engine.run_episode_arrays(net, scripts[0], loss, backend="cython")
        diff = np.max(np.abs(a.grad.flat() - b.grad.flat()))
        print(f"max gradient difference between backends: {diff:.2e}")


if __name__ == "__main__":
    main()
