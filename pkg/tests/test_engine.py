import os
import subprocess
import sys

import numpy as np
import pytest

from bohp import engine
from bohp.core import FIXED_TANH, PLASTIC_TANH, Network, NetworkSpec
from bohp.tasks import ONESHOT, TaskConfig, generate
from bohp.trainer import network_spec


def backend_in_subprocess(env_value):
    env = dict(os.environ)
    env.pop("BOHP_PURE_PYTHON", None)
    if env_value is not None:
        env["BOHP_PURE_PYTHON"] = env_value
    out = subprocess.run([sys.executable, "-c", "import bohp.engine as e; print(e.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    return out.stdout.strip()


def test_environment_forces_pure_python():
    assert backend_in_subprocess("1") == "python"


@pytest.mark.skipif(engine._kernel is None, reason="compiled kernel not built")
def test_kernel_is_default_when_built():
    assert backend_in_subprocess(None) == "cython"
    assert backend_in_subprocess("0") == "cython"


def test_kernel_coverage():
    rng = np.random.default_rng(0)
    assert engine.kernel_supports(Network.build(network_spec(TaskConfig(ONESHOT)), rng, 0.1))
    deep = Network.build(NetworkSpec((PLASTIC_TANH, FIXED_TANH, FIXED_TANH), (3, 2, 2, 2)), rng, 0.1)
    assert not engine.kernel_supports(deep)
    flat = Network.build(NetworkSpec((FIXED_TANH,), (3, 2)), rng, 0.1)
    assert not engine.kernel_supports(flat)


def test_cross_entropy_needs_softmax_top():
    net = Network.build(NetworkSpec((PLASTIC_TANH,), (10, 2)), np.random.default_rng(0), 0.1)
    with pytest.raises(ValueError):
        engine.run_episode_arrays(net, generate(TaskConfig(ONESHOT, 8, 0)), "ce")


@pytest.mark.skipif(engine._kernel is None, reason="compiled kernel not built")
@pytest.mark.parametrize("collect", [True, False])
def test_task_episodes_agree_across_backends(collect):
    rng = np.random.default_rng(1)
    net = Network.build(network_spec(TaskConfig(ONESHOT)), rng, 1.0)
    for seed in range(20):
        script = generate(TaskConfig(ONESHOT, 8, seed))
        a = engine.run_episode_arrays(net, script, "ce", collect, backend="cython")
        b = engine.run_episode_arrays(net, script, "ce", collect, backend="python")
        assert a.loss == pytest.approx(b.loss, rel=1e-12)
        np.testing.assert_allclose(a.hidden, b.hidden, rtol=1e-12, atol=1e-15)
        if collect:
            np.testing.assert_allclose(a.grad.flat(), b.grad.flat(), rtol=1e-10, atol=1e-13)
        else:
            assert a.grad is None and b.grad is None
