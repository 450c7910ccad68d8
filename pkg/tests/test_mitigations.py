from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from presslab.attacks import RandomConstraints, gen_impressn_evasion, gen_random_legal, gen_rowhammer
from presslab.charge import ChargeModel, tcl_episode
from presslab.errors import ConfigError
from presslab.fixedpoint import ONE
from presslab.mitigations import (
    PolicyConfig, apply_policy, eact_fx, express_effective_threshold, express_rewrite,
    impress_n_synthetic, transform_express, transform_impress_n, transform_impress_p, transform_norp,
)
from presslab.timing import ACT, PRE, CommandTimeline, default_timing, row_open_episodes, validate_timeline

TP = default_timing()


def tl(*cmds, rows=1024):
    return CommandTimeline(cmds, rows)


class TestNoRP:
    def test_unit_events(self):
        t = gen_rowhammer(0, 3, TP)
        assert [e.weight for e in transform_norp(t)] == [ONE] * 3

    def test_long_episode_still_one_event(self):
        t = tl(ACT(0, 0), PRE(TP.tRAS + 9 * TP.tRC))
        assert [e.weight for e in transform_norp(t)] == [ONE]

    def test_empty(self):
        assert transform_norp(tl()) == []


class TestImpressP:
    @pytest.mark.parametrize("ton,eact", [
        (96, 1), (96 + 128, 2), (96 + 64, Fraction(3, 2)),
    ])
    def test_eact_values(self, ton, eact):
        assert eact_fx(ton, TP) == eact * ONE

    def test_truncation(self):
        # 1 + 1/128 truncated to 4 bits is 1
        assert eact_fx(97, TP, 4) == ONE
        assert eact_fx(96 + 64 + 8, TP, 4) == ONE + ONE // 2 + ONE // 16

    def test_event_at_close(self):
        evs = transform_impress_p(tl(ACT(4, 0), PRE(300)), TP)
        assert evs[0].time == 300 and evs[0].row == 4

    def test_bad_bits(self):
        with pytest.raises(ConfigError):
            transform_impress_p(tl(ACT(4, 0), PRE(300)), TP, 8)

    def test_matches_norp_on_pure_rowhammer(self):
        t = gen_rowhammer(7, 20, TP)
        assert [e.weight for e in transform_impress_p(t, TP)] == [e.weight for e in transform_norp(t)]


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([0, Fraction(35, 100), Fraction(48, 100), 1]))
def test_impress_p_safety(seed, alpha):
    t = gen_random_legal(seed, RandomConstraints(40000, rows=6, max_ton=6000), TP)
    cm = ChargeModel(alpha)
    for e in row_open_episodes(t):
        w = eact_fx(e.tON, TP)
        c = tcl_episode(e.tON, cm, TP)
        assert w >= c
        if alpha == 1:
            assert w == c


@given(st.integers(TP.tRAS, TP.tONMax), st.fractions(0, 1, max_denominator=100))
def test_impress_p_safety_closed_form(ton, alpha):
    diff = Fraction(eact_fx(ton, TP), ONE) - (1 + alpha * Fraction(ton - TP.tRAS, TP.tRC))
    assert diff == (1 - alpha) * Fraction(ton - TP.tRAS, TP.tRC)


class TestImpressN:
    def test_row_open_across_full_window(self):
        # open over boundaries 128 and 256: written twice -> one synthetic event
        syn = impress_n_synthetic(tl(ACT(3, 100), PRE(300)), TP)
        assert [(e.row, e.time) for e in syn] == [(3, 256)]

    def test_closed_page_no_synthetic(self):
        assert impress_n_synthetic(gen_rowhammer(3, 50, TP), TP) == []

    def test_boundary_is_half_open(self):
        # closes exactly on 256: open at 128 only
        assert impress_n_synthetic(tl(ACT(3, 32), PRE(256)), TP) == []
        assert len(impress_n_synthetic(tl(ACT(3, 32), PRE(257)), TP)) == 1

    def test_reopened_row_is_not_a_repeat(self):
        # registered at 128 by one episode and at 256 by the next: the second
        # ACT is a real event, the row was not open for the whole window
        t = tl(ACT(3, 100), PRE(200), ACT(3, 232), PRE(328))
        assert impress_n_synthetic(t, TP) == []

    def test_long_episode_one_event_per_window(self):
        t = tl(ACT(3, 0), PRE(TP.tRAS + 9 * TP.tRC))
        assert len(transform_impress_n(t, TP)) == 1 + 9

    def test_evasion_one_event_per_round(self):
        rounds = 5
        t = gen_impressn_evasion(500, 508, rounds, TP)
        evs = transform_impress_n(t, TP)
        aggr = [e for e in evs if e.row == 500]
        decoy = [e for e in evs if e.row == 508]
        assert len(aggr) == rounds and not any(e.synthetic for e in aggr)
        assert len(decoy) >= rounds
        cm = ChargeModel(Fraction(35, 100))
        for e in row_open_episodes(t):
            if e.row == 500:
                assert tcl_episode(e.tON, cm, TP) == 173


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**31))
def test_impress_n_bounded_leakage(seed):
    t = gen_random_legal(seed, RandomConstraints(30000, rows=4, max_ton=3000), TP)
    syn = impress_n_synthetic(t, TP)
    cm = ChargeModel(1)
    bound = Fraction(TP.tRC + TP.tPRE, TP.tRC)  # alpha = 1
    for e in row_open_episodes(t):
        seen = 1 + sum(1 for s in syn if s.row == e.row and e.open_time <= s.time < e.close_time)
        leak = Fraction(tcl_episode(e.tON, cm, TP), ONE) - seen
        assert leak <= bound


class TestExPress:
    def test_long_episode_split(self):
        tmro = TP.tRAS + TP.tRC
        t = tl(ACT(2, 0), PRE(TP.tRAS + 3 * TP.tRC))
        new, evs, reacts = transform_express(t, tmro, TP)
        eps = row_open_episodes(new)
        # 480 ticks -> 224 + 224 + 32 (padded to tRAS)
        assert eps[0].close_time == tmro
        assert [e.tON for e in eps] == [224, 224, TP.tRAS]
        assert reacts == 2 and len(evs) == 3
        assert all(e.tON <= tmro for e in eps)

    def test_short_episode_unchanged(self):
        t = tl(ACT(2, 0), PRE(TP.tRAS))
        new, reacts = express_rewrite(t, TP.tRAS + TP.tRC, TP)
        assert new == t and reacts == 0

    def test_tmro_below_tras(self):
        with pytest.raises(ConfigError):
            express_rewrite(tl(ACT(2, 0), PRE(96)), 50, TP)

    @pytest.mark.parametrize("tmro,alpha,want", [
        (96, Fraction(35, 100), 4000),
        (224, 1, 2000),
        (224, Fraction(35, 100), Fraction(4000) / Fraction(135, 100)),
    ])
    def test_effective_threshold(self, tmro, alpha, want):
        assert express_effective_threshold(4000, tmro, alpha, TP) == want

    def test_074(self):
        v = express_effective_threshold(4000, 224, Fraction(35, 100), TP)
        assert round(float(v / 4000), 2) == 0.74


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**31), st.integers(TP.tRAS, 2000))
def test_express_rewrite_valid(seed, tmro):
    t = gen_random_legal(seed, RandomConstraints(20000, rows=4, max_ton=5000, refresh=False), TP)
    new, reacts = express_rewrite(t, tmro, TP)
    assert validate_timeline(new, TP, postponed_refs_allowed=None)
    assert all(e.tON <= tmro for e in row_open_episodes(new))
    long_eps = [e for e in row_open_episodes(t) if e.tON > tmro]
    assert (reacts > 0) == bool(long_eps)


def test_policy_config():
    with pytest.raises(ConfigError):
        PolicyConfig("express")
    with pytest.raises(ConfigError):
        PolicyConfig("magic")
    out = apply_policy(gen_rowhammer(1, 3, TP), PolicyConfig("impress_p"), TP)
    assert len(out.events) == 3
