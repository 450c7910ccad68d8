from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from presslab.errors import ConfigError, EmptyTimeline, TimelineParseError, UnclosedRow
from presslab.timing import (
    ACT, PRE, REF, RFM, CommandTimeline, default_timing, ns_to_ticks, parse_timeline,
    row_open_episodes, ticks_to_ns, validate_timeline,
)


def tl(*cmds, rows=8):
    return CommandTimeline(cmds, rows)


class TestDefaultTiming:
    def test_trc_is_128_ticks_48ns(self, tp):
        assert tp.tRC == 128
        assert ticks_to_ns(tp.tRC) == 48

    def test_tras_tpre_sum(self, tp):
        # oracle: 36 ns and 12 ns at 8/3 ticks per ns, exact rationals
        assert tp.tRAS == Fraction(36) * Fraction(8, 3) == 96
        assert tp.tPRE == Fraction(12) * Fraction(8, 3) == 32
        assert tp.tRAS + tp.tPRE == tp.tRC

    def test_tonmax_is_five_trefi(self, tp):
        assert tp.tONMax == 52000
        assert Fraction(tp.tONMax, tp.tREFI) == 5

    def test_rfm_latency_rounded_up(self, tp):
        assert tp.tRFM == 547  # ceil(205 * 8/3)
        assert tp.tRFC == 934  # ceil(350 * 8/3)

    def test_non_integral_ns_rejected(self):
        with pytest.raises(ConfigError):
            ns_to_ticks(1, name="x")  # 8/3 ticks

    def test_with_ns_must_keep_trc_identity(self, tp):
        with pytest.raises(ConfigError):
            tp.with_ns(tRAS=39)


@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_shift_division_matches_exact(x):
    tp = default_timing()
    assert tp.div_trc(x) == x // tp.tRC == x >> 7


class TestValidate:
    def test_tras_then_trc(self, tp):
        assert validate_timeline(tl(ACT(0, 0), PRE(96), ACT(1, 128), PRE(224)), tp)

    def test_tras_violation(self, tp):
        r = validate_timeline(tl(ACT(0, 0), PRE(50)), tp)
        assert not r and r.rule == "min_open"

    def test_tonmax_boundary(self, tp):
        assert validate_timeline(tl(ACT(0, 0), PRE(52000)), tp)
        assert not validate_timeline(tl(ACT(0, 0), PRE(52001)), tp)
        r = validate_timeline(tl(REF(0), ACT(0, 0), PRE(52001)), tp, postponed_refs_allowed=None)
        assert not r and r.rule == "max_open"

    def test_act_to_act(self, tp):
        r = validate_timeline(tl(ACT(0, 0), PRE(96), ACT(1, 127), PRE(300)), tp)
        assert not r and r.rule in ("act_to_act", "pre_to_act")

    def test_double_act(self, tp):
        r = validate_timeline(tl(ACT(0, 0), ACT(1, 200)), tp)
        assert not r and r.rule == "double_act"

    def test_row_range(self, tp):
        r = validate_timeline(tl(ACT(9, 0), PRE(96)), tp)
        assert not r and r.rule == "row_range"

    def test_refresh_cadence(self, tp):
        far = 5 * tp.tREFI + 1
        r = validate_timeline(tl(ACT(0, far), PRE(far + 96)), tp)
        assert not r and r.rule == "refresh_cadence"
        assert validate_timeline(tl(ACT(0, far), PRE(far + 96)), tp, postponed_refs_allowed=None)
        assert validate_timeline(tl(REF(tp.tREFI), ACT(0, far), PRE(far + 96)), tp)

    def test_rfm_with_open_row(self, tp):
        r = validate_timeline(tl(ACT(0, 0), RFM(50), PRE(96)), tp)
        assert not r and r.rule == "rfm_open_bank"

    def test_empty(self, tp):
        with pytest.raises(EmptyTimeline):
            validate_timeline(tl(), tp)

    def test_ref_closes_row(self, tp):
        assert validate_timeline(tl(ACT(0, 0), REF(200), ACT(1, 232), PRE(328)), tp)


class TestEpisodes:
    def test_single(self):
        eps = row_open_episodes(tl(ACT(0, 0), PRE(96)))
        assert [(e.row, e.tON) for e in eps] == [(0, 96)]

    def test_two(self):
        eps = row_open_episodes(tl(ACT(0, 0), PRE(224), ACT(1, 256), PRE(352)))
        assert [(e.row, e.tON) for e in eps] == [(0, 224), (1, 96)]

    def test_unclosed(self):
        with pytest.raises(UnclosedRow):
            row_open_episodes(tl(ACT(0, 0)))


class TestTextFormat:
    def test_round_trip(self, tp):
        t = tl(ACT(3, 0), PRE(96), REF(10400), RFM(10500), ACT(1, 10600), PRE(10700))
        back = parse_timeline(t.to_text())
        assert back == t
        assert validate_timeline(back, tp) == validate_timeline(t, tp)

    def test_comments_and_blank_lines(self):
        t = parse_timeline("# demo\nrows=4\n\nACT 2 @0  # open\nPRE @96\n")
        assert t.bank_rows == 4 and len(t) == 2

    def test_bad_line_reports_line_number(self):
        with pytest.raises(TimelineParseError, match="line 3"):
            parse_timeline("rows=4\nACT 1 @0\nOPEN 2\n")

    def test_missing_header(self):
        with pytest.raises(TimelineParseError):
            parse_timeline("ACT 1 @0\n")


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=2**31))
def test_valid_timelines_have_bounded_episodes(seed):
    from presslab.attacks import RandomConstraints, gen_random_legal

    tp = default_timing()
    t = gen_random_legal(seed, RandomConstraints(30000, rows=4, max_ton=20000), tp)
    assert validate_timeline(t, tp)
    for e in row_open_episodes(t):
        assert tp.tRAS <= e.tON <= tp.tONMax
    assert validate_timeline(parse_timeline(t.to_text()), tp) == validate_timeline(t, tp)
