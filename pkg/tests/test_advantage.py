import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from anomkit.advantage import (
    AdvantageConfig,
    RewardWeights,
    class_reward,
    clipped_objective,
    compute_group_advantages,
    final_advantage,
    format_reward,
    group_normalize,
    location_reward,
    orthogonalize,
    reasoning_reward,
    response_reward,
    token_kl,
    total_reward,
)
from anomkit.core import AnomalyClass, Interval, LabeledInstance
from anomkit.embedding import hash_embedding, tokenize
from anomkit.errors import ConfigError, ShapeError

VALID_RESPONSE = (
    "<think>the middle region drifts upward</think>\n"
    "<answer>[[120, 150], [320, 350]]</answer>\n"
    "<class>trend</class>"
)


class TestFormatReward:
    def test_valid_layout(self):
        assert format_reward(VALID_RESPONSE) == 1

    def test_missing_class_block(self):
        text = "<think>x</think><answer>[[1, 2]]</answer>"
        assert format_reward(text) == 0

    def test_duplicate_blocks_rejected(self):
        assert format_reward(VALID_RESPONSE + "<class>trend</class>") == 0

    def test_empty_answer_is_valid(self):
        assert format_reward("<think>x</think><answer>[]</answer><class>normal</class>") == 1

    def test_malformed_answer(self):
        assert format_reward("<think>x</think><answer>[1, 2]</answer><class>trend</class>") == 0
        assert (
            format_reward('<think>x</think><answer>[["a", 2]]</answer><class>trend</class>')
            == 0
        )

    def test_unknown_class(self):
        assert format_reward("<think>x</think><answer>[]</answer><class>spike</class>") == 0


class TestClassReward:
    def test_match(self):
        assert class_reward("trend", "trend") == 1

    def test_mismatch(self):
        assert class_reward("seasonal", "trend") == 0

    def test_normalization(self):
        assert class_reward(" Global Point ", "global point") == 1

    def test_unparseable(self):
        assert class_reward("wobble", "trend") == 0
        assert class_reward(None, "trend") == 0


class TestLocationReward:
    def test_exact_match(self):
        assert location_reward([(4, 5)], [(4, 5)], 10, window=2) == 1.0

    def test_empty_prediction(self):
        assert location_reward([], [(4, 5)], 10, window=2) == 0.0

    def test_unparseable(self):
        assert location_reward(None, [(4, 5)], 10, window=2) == 0.0

    def test_hand_case(self):
        assert location_reward([(6, 6)], [(4, 5)], 10, window=2) == pytest.approx(1 / 3)


class TestTotalReward:
    def test_perfect(self):
        assert total_reward(1, 1, 1, RewardWeights()) == pytest.approx(1.0)

    def test_zero(self):
        assert total_reward(0, 0, 0, RewardWeights()) == 0.0

    def test_weighted_sum(self):
        assert total_reward(1, 1, 0.5, RewardWeights()) == pytest.approx(0.65)

    def test_weights_validated(self):
        with pytest.raises(ConfigError):
            RewardWeights(-0.1, 0.2, 0.7)
        with pytest.raises(ConfigError):
            RewardWeights(0.0, 0.0, 0.0)

    def test_breakdown_total_consistent(self):
        inst = LabeledInstance(
            "i", np.sin(np.arange(1000) / 7.0), AnomalyClass.TREND, (Interval(120, 150),)
        )
        breakdown = response_reward(VALID_RESPONSE, inst)
        weights = RewardWeights()
        recomputed = (
            weights.fmt * breakdown.r_fmt
            + weights.cls * breakdown.r_cls
            + weights.loc * breakdown.r_loc
        )
        assert breakdown.total == pytest.approx(recomputed, abs=1e-12)
        assert 0.0 <= breakdown.total <= 1.0


class TestGroupNormalize:
    def test_all_equal_guarded(self):
        np.testing.assert_allclose(group_normalize([2.0, 2.0, 2.0]), 0.0, atol=1e-12)

    def test_two_values(self):
        np.testing.assert_allclose(
            group_normalize([1.0, 0.0], eps=0.0), [1.0, -1.0], atol=1e-12
        )

    def test_five_values(self):
        expected = np.array([-math.sqrt(2), -math.sqrt(2) / 2, 0, math.sqrt(2) / 2, math.sqrt(2)])
        np.testing.assert_allclose(
            group_normalize([2, 4, 6, 8, 10], eps=0.0), expected, atol=1e-12
        )

    def test_small_groups_rejected(self):
        with pytest.raises(ConfigError):
            group_normalize([1.0])


class TestReasoningReward:
    def test_zero_distance(self):
        assert reasoning_reward(0.0) == 1.0

    def test_at_temperature(self):
        assert reasoning_reward(2.0, tau=2.0) == pytest.approx(math.exp(-1))

    def test_bad_temperature(self):
        with pytest.raises(ConfigError):
            reasoning_reward(1.0, tau=0.0)

    @settings(max_examples=200, deadline=None)
    @given(
        st.floats(0, 20, allow_nan=False),
        st.floats(0, 20, allow_nan=False),
        st.floats(0.5, 10, allow_nan=False),
    )
    def test_strictly_decreasing(self, w1, w2, tau):
        # stay clear of exp underflow so strictness is observable in floats
        if abs(w1 - w2) < 1e-6:
            return
        lo, hi = sorted((w1, w2))
        assert reasoning_reward(lo, tau) > reasoning_reward(hi, tau)


class TestOrthogonalize:
    def test_parallel_becomes_zero(self):
        main = np.array([1.0, 2.0, -1.0])
        np.testing.assert_allclose(
            orthogonalize(3.0 * main, main, eps=0.0), 0.0, atol=1e-12
        )

    def test_orthogonal_unchanged(self):
        a = np.array([1.0, 0.0])
        b = np.array([0.0, 1.0])
        np.testing.assert_allclose(orthogonalize(a, b, eps=0.0), a, atol=1e-12)

    def test_hand_case(self):
        out = orthogonalize(np.array([1.0, 0.0]), np.array([1.0, 1.0]), eps=0.0)
        np.testing.assert_allclose(out, [0.5, -0.5], atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            orthogonalize(np.zeros(3), np.zeros(4))


class TestFinalAdvantage:
    def test_alpha_zero(self):
        main = np.array([0.3, -0.3])
        np.testing.assert_array_equal(final_advantage(main, np.array([9.0, -9.0]), 0.0), main)

    def test_hand_case(self):
        out = final_advantage(np.array([1.0, -1.0]), np.array([0.5, -0.5]), 0.3)
        np.testing.assert_allclose(out, [1.15, -1.15], atol=1e-12)

    @pytest.mark.parametrize("alpha", [0.1, 0.3, 0.5, 0.7, 0.9])
    def test_main_direction_preserved(self, alpha):
        rng = np.random.default_rng(17)
        main = group_normalize(rng.random(5), eps=0.0)
        tsr = group_normalize(rng.random(5), eps=0.0)
        perp = orthogonalize(tsr, main, eps=0.0)
        final = final_advantage(main, perp, alpha)
        projection = (np.dot(final, main) / np.dot(main, main)) * main
        np.testing.assert_allclose(projection, main, atol=1e-9)


class TestClippedObjective:
    def test_unclipped_equals_mean_advantage(self):
        ratios = [np.ones(4), np.ones(6), np.ones(2)]
        adv = np.array([0.5, -0.25, 1.0])
        assert clipped_objective(ratios, adv, beta=0.0) == pytest.approx(float(adv.mean()))

    def test_clip_upper(self):
        assert clipped_objective([[2.0]], [1.0], eps_clip=0.2, beta=0.0) == pytest.approx(1.2)

    def test_clip_pessimistic_branch(self):
        assert clipped_objective([[0.5]], [-1.0], eps_clip=0.2, beta=0.0) == pytest.approx(-0.8)

    def test_kl_penalty(self):
        value = clipped_objective(
            [[1.0], [1.0]], [1.0, 1.0], kl=[[0.5], [1.5]], beta=0.1
        )
        assert value == pytest.approx(1.0 - 0.1 * 1.0)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            clipped_objective([[1.0]], [1.0, 2.0])
        with pytest.raises(ShapeError):
            clipped_objective([[1.0]], [1.0], kl=[[1.0, 2.0]])

    def test_eps_validated(self):
        with pytest.raises(ConfigError):
            clipped_objective([[1.0]], [1.0], eps_clip=1.5)

    def test_kl_helper(self):
        same = token_kl([-1.0, -2.0], [-1.0, -2.0])
        np.testing.assert_allclose(same, 0.0, atol=1e-12)
        assert np.all(token_kl([-1.0, -3.0], [-1.5, -2.0]) >= 0)


def _toy_group(inst):
    gt_text = (
        f"<think>clear pattern break</think>"
        f"<answer>{[[iv.start, iv.end] for iv in inst.intervals]}</answer>"
        f"<class>{inst.anomaly_class.value}</class>"
    )
    responses = [
        gt_text,
        "<think>steady</think><answer>[]</answer><class>normal</class>",
        "<think>hmm</think><answer>[[1, 3]]</answer><class>seasonal</class>",
        "plain prose with no tags at all",
        "<think>two spots</think><answer>[[10, 20], [40, 50]]</answer><class>trend</class>",
    ]
    return responses


class TestComputeGroupAdvantages:
    def make_instance(self):
        values = np.sin(2 * np.pi * np.arange(1000) / 50.0)
        values[500:505] += 4.0
        return LabeledInstance(
            "inst", values, AnomalyClass.GLOBAL_POINT, (Interval(500, 504),)
        )

    def test_zero_sum_and_orthogonality(self):
        inst = self.make_instance()
        responses = _toy_group(inst)
        expert = hash_embedding(tokenize("expert trace about the spike near 500"))
        embeddings = [hash_embedding(tokenize(r) or ["<empty>"]) for r in responses]
        group = compute_group_advantages(responses, inst, expert, embeddings)
        assert group.group_size == 5
        assert abs(float(group.a_main.sum())) <= 1e-9
        assert abs(float(group.a_tsr.sum())) <= 1e-9
        bound = 1e-9 * np.linalg.norm(group.a_tsr) * np.linalg.norm(group.a_main) + 1e-12
        assert abs(float(np.dot(group.a_perp, group.a_main))) <= max(bound, 1e-8)
        np.testing.assert_allclose(
            group.a_final, group.a_main + 0.3 * group.a_perp, atol=1e-12
        )

    def test_expert_match_attains_max_reasoning_reward(self):
        inst = self.make_instance()
        expert_text = "expert trace: spike confirmed at [500, 504] by the envelope"
        responses = [
            "<think>a</think><answer>[[500, 504]]</answer><class>global point</class>",
            expert_text,
            "<think>b</think><answer>[]</answer><class>normal</class>",
            "<think>c</think><answer>[[1, 2]]</answer><class>trend</class>",
            "<think>d</think><answer>[[900, 950]]</answer><class>seasonal</class>",
        ]
        expert = hash_embedding(tokenize(expert_text))
        embeddings = [hash_embedding(tokenize(r) or ["<empty>"]) for r in responses]
        group = compute_group_advantages(responses, inst, expert, embeddings)
        top = int(np.argmax(group.reasoning_rewards))
        assert top == 1
        others = np.delete(group.reasoning_rewards, top)
        assert group.reasoning_rewards[top] > float(np.max(others))

    def test_identical_responses_all_zero(self):
        inst = self.make_instance()
        text = "<think>a</think><answer>[[500, 504]]</answer><class>global point</class>"
        responses = [text] * 5
        expert = hash_embedding(tokenize("expert"))
        embeddings = [hash_embedding(tokenize(text))] * 5
        group = compute_group_advantages(responses, inst, expert, embeddings)
        np.testing.assert_allclose(group.a_main, 0.0, atol=1e-9)
        np.testing.assert_allclose(group.a_tsr, 0.0, atol=1e-9)
        np.testing.assert_allclose(group.a_final, 0.0, atol=1e-9)

    def test_alpha_zero_reduces_to_main(self):
        inst = self.make_instance()
        responses = _toy_group(inst)
        expert = hash_embedding(tokenize("expert text"))
        embeddings = [hash_embedding(tokenize(r) or ["<empty>"]) for r in responses]
        group = compute_group_advantages(
            responses, inst, expert, embeddings, AdvantageConfig(alpha=0.0)
        )
        np.testing.assert_array_equal(group.a_final, group.a_main)

    def test_group_size_validated(self):
        inst = self.make_instance()
        expert = hash_embedding(["a"])
        with pytest.raises(ConfigError):
            compute_group_advantages(["one"], inst, expert, [hash_embedding(["x"])])
        with pytest.raises(ShapeError):
            compute_group_advantages(
                ["one", "two"], inst, expert, [hash_embedding(["x"])]
            )

    def test_rewards_bounded(self):
        inst = self.make_instance()
        responses = _toy_group(inst)
        expert = hash_embedding(tokenize("expert text"))
        embeddings = [hash_embedding(tokenize(r) or ["<empty>"]) for r in responses]
        group = compute_group_advantages(responses, inst, expert, embeddings)
        assert np.all(group.rewards >= 0.0) and np.all(group.rewards <= 1.0)
        # a perfect response earns exactly 1 under the default weights
        assert group.rewards[0] == pytest.approx(1.0)
