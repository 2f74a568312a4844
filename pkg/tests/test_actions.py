import math

import pytest

from drybeam.actions import (
    BeamHypothesis,
    EpisodeConfig,
    InvalidActionError,
    N_ACTIONS,
    accumulate_score,
    action_label,
    decode_action,
    decode_indices,
    encode_action,
    format_sequence,
    parse_action_label,
)


class TestDecodeAction:
    def test_table_corners(self):
        assert decode_action(0) == ("PP", 80)
        assert decode_action(21) == ("SJR", 190)
        assert decode_action(43) == ("SP", 190)

    def test_block_layout(self):
        # ids 0-10 PP, 11-21 SJR, 22-32 DEP, 33-43 SP
        assert decode_action(11) == ("SJR", 80)
        assert decode_action(22) == ("DEP", 80)
        assert decode_action(33) == ("SP", 80)

    @pytest.mark.parametrize("bad", [-1, 44, 100])
    def test_out_of_range(self, bad):
        with pytest.raises(InvalidActionError):
            decode_action(bad)


class TestEncodeAction:
    def test_examples(self):
        assert encode_action("PP", 0) == 0
        assert encode_action("DEP", 3) == 25
        assert encode_action("SP", 10) == 43

    def test_accepts_module_index(self):
        assert encode_action(1, 4) == 15

    def test_errors(self):
        with pytest.raises(InvalidActionError):
            encode_action("IR", 0)
        with pytest.raises(InvalidActionError):
            encode_action("PP", 11)

    def test_round_trip_all_44(self):
        for action in range(N_ACTIONS):
            module, temp_index = decode_indices(action)
            assert encode_action(module, temp_index) == action
            label = action_label(action)
            assert parse_action_label(label) == action

    def test_canonical_label(self):
        assert action_label(encode_action("SJR", 4)) == "SJR@124"
        assert format_sequence([0, 43]) == "PP@80 SP@190"


class TestAccumulateScore:
    def test_single_step(self):
        assert accumulate_score(0.0, math.log(0.5)) == pytest.approx(-0.6931, abs=1e-4)

    def test_certain_action(self):
        assert accumulate_score(0.0, 0.0) == 0.0

    def test_product_rule(self):
        assert accumulate_score(math.log(0.5), math.log(0.5)) == pytest.approx(math.log(0.25))


class TestEpisodeConfig:
    def test_defaults(self):
        cfg = EpisodeConfig()
        assert cfg.initial_temp_c == 20.0
        assert cfg.initial_dbmc == 1.5
        assert cfg.target_dbmc == 0.2
        assert cfg.max_modules == 12
        assert cfg.ir_enabled is False

    def test_round_trip(self):
        cfg = EpisodeConfig(speed_factor=0.4, ir_enabled=True)
        assert EpisodeConfig.from_dict(cfg.to_dict()) == cfg

    def test_validation(self):
        with pytest.raises(ValueError):
            EpisodeConfig(speed_factor=1.5)


def test_hypothesis_extension_accumulates_score():
    beam = BeamHypothesis()
    child = beam.extended(17, math.log(0.25))
    assert child.actions == (17,)
    assert child.score == pytest.approx(math.log(0.25))
    grandchild = child.extended(3, math.log(0.5))
    assert grandchild.score == pytest.approx(math.log(0.125))
