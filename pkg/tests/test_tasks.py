import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bohp.tasks import (COMPLETION, EPISODE_STEPS, ONESHOT, REVERSAL, REVERSAL_AT, TaskConfig,
                        ce_clamped, generate, loss_cross_entropy, loss_l1, loss_mse,
                        metric_accuracy, metric_mean_abs_error, task_metric)


def test_config_validation():
    with pytest.raises(ValueError):
        TaskConfig("nonsense")
    with pytest.raises(ValueError):
        TaskConfig(COMPLETION, n=1)


def test_same_seed_same_episode():
    for kind in (COMPLETION, ONESHOT, REVERSAL):
        a, b = generate(TaskConfig(kind, 8, 42)), generate(TaskConfig(kind, 8, 42))
        assert a.to_dict() == b.to_dict()


def test_seeds_differ():
    dumps = {str(generate(TaskConfig(ONESHOT, 8, s)).to_dict()) for s in range(20)}
    assert len(dumps) > 15


class TestCompletion:
    def test_shapes(self):
        s = generate(TaskConfig(COMPLETION, 8, 0))
        assert s.inputs.shape == (2, 8) and s.targets.shape == (2, 8)
        assert list(s.loss_active) == [False, True]

    def test_many_seeds(self):
        rng = np.random.default_rng(0)
        for _ in range(10_000):
            s = generate(TaskConfig(COMPLETION, 8), rng)
            pattern, cue = s.inputs
            assert pattern.any() and set(np.unique(pattern)) <= {0.0, 1.0}
            assert cue.sum() == 1.0
            assert pattern[np.argmax(cue)] == 1.0
            assert np.array_equal(s.targets[1], pattern)

    def test_dump_shape(self):
        steps = generate(TaskConfig(COMPLETION, 4, 3)).steps
        assert steps[0]["target"] is None and isinstance(steps[1]["target"], list)


class TestLabelTasks:
    @pytest.mark.parametrize("kind", [ONESHOT, REVERSAL])
    def test_shapes(self, kind):
        s = generate(TaskConfig(kind, 8, 0))
        assert s.inputs.shape == (EPISODE_STEPS, 10)
        assert s.targets.shape == (EPISODE_STEPS, 2)

    def test_one_shot_many_seeds(self):
        rng = np.random.default_rng(1)
        for _ in range(10_000):
            s = generate(TaskConfig(ONESHOT, 8), rng)
            a, b = s.inputs[0, :8], s.inputs[1, :8]
            assert np.any(a != b)
            assert set(np.unique(np.concatenate([a, b]))) <= {-1.0, 1.0}
            assert list(s.inputs[0, 8:]) == [0.0, 1.0] and list(s.inputs[1, 8:]) == [1.0, 0.0]
            assert not s.loss_active[:2].any() and s.loss_active[2:].all()
            for t in range(2, EPISODE_STEPS):
                assert not s.inputs[t, 8:].any()
                expected = 1 if np.array_equal(s.inputs[t, :8], a) else 0
                assert np.array_equal(s.inputs[t, :8], a if expected else b)
                assert s.classes[t] == expected

    def test_reversal_many_seeds(self):
        rng = np.random.default_rng(2)
        for _ in range(10_000):
            s = generate(TaskConfig(REVERSAL, 8), rng)
            a, b = s.inputs[0, :8], s.inputs[1, :8]
            assert np.array_equal(s.inputs[REVERSAL_AT, :8], a)
            assert list(s.inputs[REVERSAL_AT, 8:]) == [1.0, 0.0]
            assert np.array_equal(s.inputs[REVERSAL_AT + 1, :8], b)
            assert list(s.inputs[REVERSAL_AT + 1, 8:]) == [0.0, 1.0]
            assert not s.loss_active[[0, 1, REVERSAL_AT, REVERSAL_AT + 1]].any()
            assert list(s.segment) == [0] * REVERSAL_AT + [1] * (EPISODE_STEPS - REVERSAL_AT)
            for t in np.flatnonzero(s.loss_active):
                is_a = np.array_equal(s.inputs[t, :8], a)
                before = t < REVERSAL_AT
                assert s.classes[t] == (int(is_a) if before else int(not is_a))

    def test_dump_targets_are_class_indices(self):
        steps = generate(TaskConfig(ONESHOT, 8, 0)).steps
        assert steps[0]["target"] is None and steps[2]["target"] in (0, 1)
        assert len(steps) == EPISODE_STEPS


class TestLosses:
    def test_l1(self):
        value, grad = loss_l1([0.5, -0.5], [1.0, -1.0])
        assert value == pytest.approx(1.0)
        assert list(grad) == [-1.0, 1.0]

    def test_mse(self):
        value, grad = loss_mse([0.5, -0.5], [1.0, -1.0])
        assert value == pytest.approx(0.5)
        np.testing.assert_allclose(grad, [-1.0, 1.0])

    def test_cross_entropy(self):
        value, grad = loss_cross_entropy([0.25, 0.75], 1)
        assert value == pytest.approx(-math.log(0.75))
        np.testing.assert_allclose(grad, [0.25, -0.25])

    def test_cross_entropy_floor(self):
        value, _ = loss_cross_entropy([1.0, 0.0], 1)
        assert value == pytest.approx(-math.log(1e-12))
        assert ce_clamped([1.0, 0.0], 1) and not ce_clamped([0.5, 0.5], 1)

    @given(st.lists(st.floats(-5, 5), min_size=1, max_size=6))
    def test_l1_nonnegative(self, xs):
        value, grad = loss_l1(xs, np.zeros(len(xs)))
        assert value >= 0 and np.all(np.abs(grad) <= 1)


class TestMetrics:
    def test_mae(self):
        s = generate(TaskConfig(COMPLETION, 4, 0))
        out = np.zeros((2, 4))
        out[1] = s.targets[1] + 0.1
        assert metric_mean_abs_error(out, s) == pytest.approx(0.1)
        assert task_metric(out, s) == pytest.approx(0.1)

    def test_accuracy(self):
        s = generate(TaskConfig(ONESHOT, 8, 0))
        perfect = np.eye(2)[np.maximum(s.classes, 0)]
        assert metric_accuracy(perfect, s) == 1.0
        assert metric_accuracy(1 - perfect, s) == 0.0

    def test_reversal_metric_uses_post_reversal_only(self):
        s = generate(TaskConfig(REVERSAL, 8, 0))
        out = np.eye(2)[np.maximum(s.classes, 0)]
        out[s.segment == 0] = 1 - out[s.segment == 0]
        assert task_metric(out, s) == 1.0
        assert metric_accuracy(out, s, segment=0) == 0.0

    def test_no_active_steps(self):
        s = generate(TaskConfig(ONESHOT, 8, 0))
        s.loss_active[:] = False
        assert math.isnan(metric_accuracy(np.zeros((EPISODE_STEPS, 2)), s))


class TestSpecExamples:
    def test_cue_never_points_at_a_zero_bit(self):
        rng = np.random.default_rng(5)
        seen = set()
        for _ in range(2000):
            s = generate(TaskConfig(COMPLETION, 3), rng)
            if s.inputs[0].tolist() == [1.0, 0.0, 1.0]:
                seen.add(tuple(s.inputs[1]))
        assert seen == {(1.0, 0.0, 0.0), (0.0, 0.0, 1.0)}

    def test_single_bit_pattern_is_its_own_cue(self):
        rng = np.random.default_rng(6)
        hits = 0
        for _ in range(2000):
            s = generate(TaskConfig(COMPLETION, 3), rng)
            if s.inputs[0].sum() == 1.0:
                hits += 1
                assert np.array_equal(s.inputs[1], s.inputs[0])
        assert hits > 0

    def test_reversal_flips_labels_across_halves(self):
        rng = np.random.default_rng(7)
        checked = 0
        for _ in range(500):
            s = generate(TaskConfig(REVERSAL, 8), rng)
            assert (~s.loss_active).sum() == 4
            if np.array_equal(s.inputs[4, :8], s.inputs[14, :8]):
                assert s.classes[4] != s.classes[14]
                checked += 1
        assert checked > 100

    def test_loss_values(self):
        assert loss_l1([0, 0, 0], [1, 0, 1])[0] == 2.0
        value, grad = loss_l1([0.3, -0.2], [0.3, -0.2])
        assert value == 0.0 and not grad.any()
        value, grad = loss_l1([0.5], [0.0])
        assert value == 0.5 and grad.tolist() == [1.0]
        assert loss_cross_entropy([0.5, 0.5], 0)[0] == pytest.approx(0.6931, abs=1e-4)
        assert loss_cross_entropy([1.0, 0.0], 0)[0] == 0.0
        assert loss_cross_entropy([0.9, 0.1], 1)[0] == pytest.approx(2.3026, abs=1e-4)

    def test_zero_output_against_half_set_pattern(self):
        s = generate(TaskConfig(COMPLETION, 8, 0))
        s.targets[1] = [1, 1, 1, 1, 0, 0, 0, 0]
        assert metric_mean_abs_error(np.zeros((2, 8)), s) == 0.5

    def test_perfect_completion(self):
        s = generate(TaskConfig(COMPLETION, 8, 0))
        assert metric_mean_abs_error(np.nan_to_num(s.targets), s) == 0.0

    def test_constant_prediction_is_near_chance(self):
        rng = np.random.default_rng(8)
        accs = []
        for _ in range(2000):
            s = generate(TaskConfig(ONESHOT, 8), rng)
            accs.append(metric_accuracy(np.tile([1.0, 0.0], (EPISODE_STEPS, 1)), s))
        assert np.mean(accs) == pytest.approx(0.5, abs=0.02)
