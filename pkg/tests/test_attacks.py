from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from presslab.attacks import (
    AttackLoop, RandomConstraints, StreamWorkload, gen_combined_loop, gen_impressn_evasion,
    gen_random_legal, gen_rowhammer, gen_rowpress, gen_stream,
)
from presslab.charge import ChargeModel, tcl_episode
from presslab.errors import ConfigError, RowsTooClose, TONOutOfRange
from presslab.mitigations import express_rewrite, transform_impress_n
from presslab.timing import Cmd, default_timing, row_open_episodes, validate_timeline

TP = default_timing()


def acts(t):
    return [c.time for c in t.commands if c.kind is Cmd.ACT]


def test_rowhammer_times():
    assert acts(gen_rowhammer(0, 3, TP)) == [0, 128, 256]
    with pytest.raises(ConfigError):
        gen_rowhammer(0, 0, TP)


def test_rowpress_degenerates():
    assert gen_rowpress(5, TP.tRAS, 4, TP) == gen_rowhammer(5, 4, TP)
    with pytest.raises(TONOutOfRange):
        gen_rowpress(5, TP.tRAS - 1, 4, TP)


def test_rowpress_one_round_charge():
    t = gen_rowpress(5, TP.tRAS + TP.tRC, 1, TP)
    (e,) = row_open_episodes(t)
    assert tcl_episode(e.tON, ChargeModel(Fraction(35, 100)), TP) == 173


def test_rowpress_long_needs_refresh_budget():
    t = gen_rowpress(5, TP.tONMax, 2, TP)
    assert validate_timeline(t, TP, postponed_refs_allowed=None)
    assert not validate_timeline(t, TP)


def test_combined_loop():
    assert gen_combined_loop(AttackLoop(0, 7, 3), TP) == gen_rowhammer(3, 7, TP)
    (e,) = row_open_episodes(gen_combined_loop(AttackLoop(72, 1), TP))
    assert e.tON + TP.tPRE == 73 * TP.tRC  # about one tREFI
    t = gen_combined_loop(AttackLoop(1, 2), TP)
    assert t.end_time + TP.tPRE == 2 * 2 * TP.tRC == 512
    with pytest.raises(ConfigError):
        AttackLoop(-1, 1)


class TestEvasion:
    def test_shape(self):
        t = gen_impressn_evasion(500, 508, 2, TP)
        eps = row_open_episodes(t)
        assert [(e.row, e.open_time, e.close_time) for e in eps[:2]] == [(500, 32, 256), (508, 288, 384)]

    def test_events(self):
        t = gen_impressn_evasion(500, 508, 10, TP)
        evs = transform_impress_n(t, TP)
        assert sum(e.row == 500 for e in evs) == 10
        assert sum(e.row == 508 for e in evs) >= 10

    def test_decoy_too_close(self):
        with pytest.raises(RowsTooClose):
            gen_impressn_evasion(500, 503, 2, TP)

    def test_default_decoy(self):
        t = gen_impressn_evasion(1020, None, 1, TP)
        assert {e.row for e in row_open_episodes(t)} == {1020, 1012}


class TestStream:
    def test_sequential_long_rows(self):
        t = gen_stream(StreamWorkload(8, 32), 20000, TP)
        assert all(e.tON == 256 > TP.tRAS for e in row_open_episodes(t))

    def test_random_closed_page(self):
        t = gen_stream(StreamWorkload(row_sequence="random"), 20000, TP, seed=4)
        assert all(e.tON == TP.tRAS for e in row_open_episodes(t))
        assert t == gen_stream(StreamWorkload(row_sequence="random"), 20000, TP, seed=4)

    def test_express_reacts_count_long_episodes(self):
        t = gen_stream(StreamWorkload(8, 32), 20000, TP)
        tmro = TP.tRAS + TP.tRC
        _, reacts = express_rewrite(t, tmro, TP)
        assert reacts == sum(1 for e in row_open_episodes(t) if e.tON > tmro)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.integers(0, 4))
def test_random_legal(seed, postponed):
    c = RandomConstraints(60000, rows=8, postponed_refs=postponed)
    t = gen_random_legal(seed, c, TP)
    assert validate_timeline(t, TP, postponed_refs_allowed=postponed)
    assert t == gen_random_legal(seed, c, TP)


def test_all_generators_legal():
    gens = [
        gen_rowhammer(3, 100, TP),
        gen_rowpress(3, 1000, 20, TP),
        gen_combined_loop(AttackLoop(8, 30), TP),
        gen_impressn_evasion(500, 508, 30, TP),
        gen_stream(StreamWorkload(), 30000, TP),
    ]
    for t in gens:
        assert validate_timeline(t, TP, postponed_refs_allowed=None)
