import math

import pytest
from hypothesis import given, strategies as st

from zoomrl.errors import ConfigError, RewardJudgeError
from zoomrl.parsing import parse_response
from zoomrl.rewards import (
    answer_reward,
    format_rewards,
    rethink_volume_reward,
    total_reward,
    zoom_accuracy_reward,
    zoom_format_reward,
)
from zoomrl.textstats import lex_stats
from zoomrl.types import Sample

from conftest import make_response


def triggered_response(**kwargs):
    """Parsed response whose zoom block is nested and carries a box."""
    return parse_response(make_response(**kwargs))


class TestFormatRewards:
    def test_all_tags_well_formed(self):
        resp = triggered_response()
        assert format_rewards(resp) == (1.0, 0.5, 0.5)

    def test_missing_rethink(self):
        resp = triggered_response(rethink=None)
        assert format_rewards(resp) == (1.0, 0.5, 0.0)

    def test_reversed_answer_tags(self):
        resp = parse_response("<think>t</think><rethink>r</rethink></answer>4<answer>")
        assert format_rewards(resp) == (0.0, 0.5, 0.5)


class TestZoomFormatReward:
    def test_log_saturation_at_19_unique(self):
        resp = triggered_response()
        assert zoom_format_reward(resp, n_unique=19, diversity=0.9) == 1.0

    def test_log_term_oracle_at_7_unique(self):
        # direct evaluation: 0.5 + 0.5 * ln(8)/ln(20)
        expected = 0.5 + 0.5 * (math.log(8) / math.log(20))
        resp = triggered_response()
        assert zoom_format_reward(resp, n_unique=7, diversity=0.5) == pytest.approx(
            expected, abs=1e-12
        )
        assert expected == pytest.approx(0.8471, abs=1e-4)

    def test_low_diversity_branch(self):
        resp = triggered_response()
        assert zoom_format_reward(resp, n_unique=10, diversity=0.3) == 0.1

    def test_boundary_diversity_takes_high_branch(self):
        resp = triggered_response()
        low = zoom_format_reward(resp, n_unique=10, diversity=0.39999)
        boundary = zoom_format_reward(resp, n_unique=10, diversity=0.4)
        assert low == 0.1
        assert boundary >= 0.5

    def test_unique_word_gate(self):
        resp = triggered_response()
        assert zoom_format_reward(resp, n_unique=4, diversity=0.9) == 0.0

    def test_no_zoom_block(self):
        resp = parse_response(make_response(boxes=None))
        assert zoom_format_reward(resp, n_unique=20, diversity=0.9) == 0.0

    def test_zoom_outside_think_scores_zero(self):
        resp = triggered_response(nested=False)
        assert zoom_format_reward(resp, n_unique=20, diversity=0.9) == 0.0

    def test_stats_derived_from_think_text(self):
        resp = triggered_response(think="one two three four five six seven eight")
        stats = lex_stats(resp.think_text)
        expected = zoom_format_reward(
            resp, n_unique=stats.unique_words, diversity=stats.diversity
        )
        assert zoom_format_reward(resp) == expected


class CountingJudge:
    def __init__(self, score):
        self.score = score
        self.calls = 0

    def __call__(self, question, ground_truth, answer):
        self.calls += 1
        return self.score


class TestAnswerReward:
    def test_exact_match_skips_judge(self, make_sample):
        judge = CountingJudge(0.0)
        reward, score = answer_reward(make_sample(), triggered_response(answer="4"), judge)
        assert reward == 1.0
        assert score is None
        assert judge.calls == 0

    def test_exact_match_normalizes_case_and_whitespace(self, make_sample):
        sample = make_sample(ground_truth="Cat", task_type="other", gt_count=None)
        reward, _ = answer_reward(sample, triggered_response(answer="  cAt "), None)
        assert reward == 1.0

    def test_judge_pass_gives_half(self, make_sample):
        sample = make_sample(ground_truth="cat", task_type="other", gt_count=None)
        judge = CountingJudge(0.75)
        reward, score = answer_reward(sample, triggered_response(answer="kitty"), judge)
        assert reward == 0.5
        assert score == 0.75
        assert judge.calls == 1

    def test_judge_fail_gives_zero(self, make_sample):
        sample = make_sample(ground_truth="cat", task_type="other", gt_count=None)
        reward, score = answer_reward(sample, triggered_response(answer="dog"), CountingJudge(0.0))
        assert reward == 0.0
        assert score == 0.0

    def test_threshold_is_inclusive_at_0_7(self, make_sample):
        sample = make_sample(ground_truth="cat", task_type="other", gt_count=None)
        reward, _ = answer_reward(sample, triggered_response(answer="kitty"), CountingJudge(0.7))
        assert reward == 0.5

    def test_malformed_answer_gates_everything(self, make_sample):
        judge = CountingJudge(1.0)
        resp = parse_response("<think>t</think>4")  # answer text, no tags
        reward, score = answer_reward(make_sample(), resp, judge)
        assert reward == 0.0
        assert judge.calls == 0

    def test_judge_failure_carries_sample_id(self, make_sample):
        def broken(question, ground_truth, answer):
            raise ConnectionError("judge down")

        sample = make_sample(id="s42", ground_truth="cat", task_type="other", gt_count=None)
        with pytest.raises(RewardJudgeError, match="s42"):
            answer_reward(sample, triggered_response(answer="kitty"), broken)


class TestZoomAccuracyReward:
    def test_stage2_counting_recall(self, make_sample, stage2_cfg):
        sample = make_sample(ground_truth="6", gt_count=6)
        resp = triggered_response()
        r_zoom, _, s_scale = zoom_accuracy_reward(
            sample, resp, k=5, n=5, stage_cfg=stage2_cfg, n_unique=12, diversity=0.6
        )
        assert s_scale == 1.0
        assert r_zoom == pytest.approx(5 / 6, abs=1e-12)

    def test_spam_penalty_neutralizes_box_flood(self, make_sample, stage2_cfg):
        sample = make_sample(gt_count=4, ground_truth="4")
        resp = triggered_response()
        full, _, _ = zoom_accuracy_reward(
            sample, resp, k=20, n=20, stage_cfg=stage2_cfg, n_unique=12, diversity=0.6
        )
        spammed, _, _ = zoom_accuracy_reward(
            sample, resp, k=20, n=40, stage_cfg=stage2_cfg, n_unique=12, diversity=0.6
        )
        assert full == 1.0
        assert spammed == 0.0

    def test_stage1_precision(self, make_sample, stage1_cfg):
        resp = triggered_response()
        r_zoom, t_scale, _ = zoom_accuracy_reward(
            make_sample(), resp, k=1, n=2, stage_cfg=stage1_cfg, n_unique=12, diversity=0.6
        )
        assert t_scale == 1.0
        assert r_zoom == 0.5

    def test_stage1_low_diversity_scales_by_tenth(self, make_sample, stage1_cfg):
        resp = triggered_response()
        r_zoom, t_scale, _ = zoom_accuracy_reward(
            make_sample(), resp, k=2, n=2, stage_cfg=stage1_cfg, n_unique=12, diversity=0.2
        )
        assert t_scale == pytest.approx(0.1)
        assert r_zoom == pytest.approx(0.1)

    def test_no_boxes_zero_everywhere(self, make_sample, stage1_cfg, stage2_cfg):
        resp = parse_response(make_response(boxes=None))
        for cfg in (stage1_cfg, stage2_cfg):
            for sample in (make_sample(), make_sample(task_type="other", gt_count=None)):
                r_zoom, _, _ = zoom_accuracy_reward(
                    sample, resp, k=0, n=0, stage_cfg=cfg, n_unique=12, diversity=0.6
                )
                assert r_zoom == 0.0

    def test_stage2_non_counting_uses_precision_core(self, make_sample, stage2_cfg):
        sample = make_sample(task_type="other", gt_count=None, ground_truth="yes")
        resp = triggered_response()
        r_zoom, _, s_scale = zoom_accuracy_reward(
            sample, resp, k=3, n=4, stage_cfg=stage2_cfg, n_unique=12, diversity=0.6
        )
        assert r_zoom == pytest.approx(s_scale * 0.75)

    def test_stage2_s_scale_floor_without_diverse_reasoning(self, make_sample, stage2_cfg):
        sample = make_sample(ground_truth="2", gt_count=2)
        resp = triggered_response()
        r_zoom, _, s_scale = zoom_accuracy_reward(
            sample, resp, k=2, n=2, stage_cfg=stage2_cfg, n_unique=3, diversity=0.9
        )
        assert s_scale == pytest.approx(0.1)
        assert r_zoom == pytest.approx(0.1)

    def test_zero_count_question_rewards_abstention(self, make_sample, stage2_cfg):
        sample = make_sample(ground_truth="0", gt_count=0)
        resp = triggered_response()
        abstain, _, s = zoom_accuracy_reward(
            sample, resp, k=0, n=2, stage_cfg=stage2_cfg, n_unique=12, diversity=0.6
        )
        boxed, _, _ = zoom_accuracy_reward(
            sample, resp, k=2, n=2, stage_cfg=stage2_cfg, n_unique=12, diversity=0.6
        )
        assert abstain == pytest.approx(s * (1.0 - 0.05 * 2))
        assert boxed == 0.0

    def test_counting_without_gt_count_is_config_error(self, stage2_cfg):
        # Forged instance: dataset validation normally makes this unrepresentable.
        sample = object.__new__(Sample)
        for name, value in dict(
            id="forged",
            image_path="x.ppm",
            question="how many?",
            ground_truth="4",
            task_type="counting",
            gt_count=None,
            difficulty=None,
        ).items():
            object.__setattr__(sample, name, value)
        with pytest.raises(ConfigError, match="gt_count"):
            zoom_accuracy_reward(
                sample, triggered_response(), k=1, n=1, stage_cfg=stage2_cfg,
                n_unique=12, diversity=0.6,
            )

    def test_invalid_counts_rejected(self, make_sample, stage1_cfg):
        with pytest.raises(ValueError):
            zoom_accuracy_reward(
                make_sample(), triggered_response(), k=3, n=2, stage_cfg=stage1_cfg
            )

    @given(k=st.integers(0, 10), extra=st.integers(0, 10))
    def test_monotone_in_k(self, k, extra):
        import zoomrl.types as types

        cfg = types.load_stage_config(types.Stage.STAGE2)
        sample = Sample(
            id="m", image_path="x.ppm", question="q", ground_truth="5",
            task_type="counting", gt_count=5,
        )
        resp = triggered_response()
        n = k + extra
        if n == 0:
            return
        lower, _, _ = zoom_accuracy_reward(
            sample, resp, k=max(0, k - 1), n=n, stage_cfg=cfg, n_unique=12, diversity=0.6
        )
        higher, _, _ = zoom_accuracy_reward(
            sample, resp, k=k, n=n, stage_cfg=cfg, n_unique=12, diversity=0.6
        )
        assert higher >= lower - 1e-12

    @given(k=st.integers(0, 10), extra=st.integers(0, 10))
    def test_antitone_in_n(self, k, extra):
        import zoomrl.types as types

        cfg = types.load_stage_config(types.Stage.STAGE2)
        sample = Sample(
            id="m", image_path="x.ppm", question="q", ground_truth="5",
            task_type="counting", gt_count=5,
        )
        resp = triggered_response()
        n = k + extra
        if n == 0:
            return
        tight, _, _ = zoom_accuracy_reward(
            sample, resp, k=k, n=n, stage_cfg=cfg, n_unique=12, diversity=0.6
        )
        loose, _, _ = zoom_accuracy_reward(
            sample, resp, k=k, n=n + 1, stage_cfg=cfg, n_unique=12, diversity=0.6
        )
        assert loose <= tight + 1e-12


class TestRethinkVolumeReward:
    def test_sqrt_saturation_at_25(self):
        assert rethink_volume_reward(triggered_response(), n_unique_rethink=25) == 1.0

    def test_direct_evaluation_at_9(self):
        assert rethink_volume_reward(
            triggered_response(), n_unique_rethink=9
        ) == pytest.approx(0.6, abs=1e-12)

    def test_gate_below_5_regardless_of_answer_format(self):
        with_answer = triggered_response()
        without_answer = parse_response("<rethink>a b c d</rethink>")
        assert rethink_volume_reward(with_answer, n_unique_rethink=4) == 0.0
        assert rethink_volume_reward(without_answer, n_unique_rethink=4) == 0.0

    def test_malformed_answer_halves(self):
        resp = parse_response("<think>t</think><rethink>r</rethink>no tags")
        assert rethink_volume_reward(resp, n_unique_rethink=25) == 0.5


PERFECT_THINK = " ".join(
    "alpha bravo charlie delta echo foxtrot golf hotel india juliet kilo lima "
    "mike november oscar papa quebec romeo sierra tango uniform victor whiskey "
    "xray yankee zulu".split()
)
PERFECT_RETHINK = " ".join(
    "verified counted checked confirmed inspected reviewed compared matched "
    "located resolved identified separated distinguished enumerated totaled "
    "grouped aligned isolated framed bounded zoomed magnified clarified "
    "focused sharpened".split()
)


class TestTotalReward:
    def test_perfect_response_hits_exact_maxima(self, make_sample, stage1_cfg):
        text = make_response(think=PERFECT_THINK, rethink=PERFECT_RETHINK, answer="4")
        resp = parse_response(text)
        breakdown = total_reward(make_sample(), resp, k=1, n=1, stage_cfg=stage1_cfg)
        assert breakdown.r_fmt_unweighted == 3.0
        assert breakdown.r_total == 4.2

    def test_empty_response_scores_zero(self, make_sample, stage1_cfg):
        breakdown = total_reward(make_sample(), parse_response(""), 0, 0, stage1_cfg)
        assert breakdown.r_total == 0.0
        assert breakdown.r_fmt_unweighted == 0.0

    def test_well_formatted_wrong_answer_no_boxes(self, make_sample, stage1_cfg):
        text = make_response(boxes=None, rethink=PERFECT_RETHINK, answer="7")
        resp = parse_response(text)
        breakdown = total_reward(make_sample(), resp, 0, 0, stage1_cfg)
        assert breakdown.r_zfmt == 0.0
        assert breakdown.r_ans == 0.0
        assert breakdown.r_zoom == 0.0
        expected = 0.1 * (1 + 0.5 + 0.5) + 0.5 * breakdown.r_revo
        assert breakdown.r_total == pytest.approx(expected, abs=1e-12)

    def test_gating_invariants(self, make_sample, stage1_cfg, stage2_cfg):
        no_answer = parse_response("<think>words</think>")
        b = total_reward(make_sample(), no_answer, 0, 0, stage1_cfg)
        assert b.r_ans == 0.0
        no_zoom = parse_response(make_response(boxes=None))
        for cfg in (stage1_cfg, stage2_cfg):
            b = total_reward(make_sample(), no_zoom, 0, 0, cfg)
            assert b.r_zfmt == 0.0
            assert b.r_zoom == 0.0

    def test_breakdown_records_intermediates(self, make_sample, stage2_cfg):
        resp = parse_response(make_response())
        b = total_reward(make_sample(ground_truth="6", gt_count=6), resp, 3, 5, stage2_cfg)
        assert (b.k, b.n) == (3, 5)
        stats = lex_stats(resp.think_text)
        assert b.n_unique == stats.unique_words
        assert b.diversity == stats.diversity

    def test_bounds_under_default_weights(self, make_sample, stage1_cfg):
        import random

        rng = random.Random(7)
        words = ["alpha", "beta", "gamma", "delta", "the", "a"]
        for _ in range(200):
            text = make_response(
                think=" ".join(rng.choices(words, k=rng.randrange(0, 30))),
                boxes=rng.choice([None, "[]", "[[1,2,3,4]]", "[[1,2,3,4],[5,6,7,8]]"]),
                rethink=rng.choice([None, " ".join(rng.choices(words, k=12))]),
                answer=rng.choice([None, "4", "7"]),
                nested=rng.random() < 0.8,
            )
            resp = parse_response(text)
            n = len(resp.zoom_boxes_raw)
            k = rng.randint(0, n) if n else 0
            b = total_reward(make_sample(), resp, k, n, stage1_cfg)
            assert 0.0 <= b.r_total <= 4.2
            assert b.r_fmt_unweighted <= 3.0
