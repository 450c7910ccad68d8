import math
from fractions import Fraction
from importlib import resources
from pathlib import Path

import pytest

from presslab.cli import EXIT_FLIP, EXIT_INPUT, EXIT_OK, EXIT_REPRO, main
from presslab.report import ReportTable

PRESETS = Path(str(resources.files("presslab") / "presets"))


def test_evasion_flip_point(tmp_path):
    assert main(["simulate", "--config", str(PRESETS / "evasion_demo.cfg"), "--out", str(tmp_path)]) == EXIT_OK
    t = ReportTable.read(tmp_path / "results.csv")
    for row in t.rows:
        a = Fraction(row["alpha"])
        assert int(row["first_flip_acts"]) == math.ceil(32 / (1 + a))
        assert row["first_flip_row"] in ("499", "501")


def test_assert_no_flip(tmp_path):
    assert main(["simulate", "--config", str(PRESETS / "evasion_demo.cfg"), "--out", str(tmp_path),
                 "--assert-no-flip"]) == EXIT_FLIP
    assert main(["simulate", "--config", str(PRESETS / "impress_p_safe.cfg"), "--out", str(tmp_path),
                 "--assert-no-flip"]) == EXIT_OK


def test_sweep_writes_svg_and_timeline(tmp_path):
    tl = tmp_path / "sub" / "tl.txt"
    rc = main(["sweep", "--config", str(PRESETS / "evasion_demo.cfg"), "--out", str(tmp_path),
               "--emit-timeline", str(tl)])
    assert rc == EXIT_OK
    assert (tmp_path / "results.svg").read_text().lstrip().startswith("<?xml")
    assert main(["validate", "--timeline", str(tl), "--attacker-stream"]) == EXIT_OK


def test_parallel_matches_serial(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    cfg = str(PRESETS / "evasion_demo.cfg")
    main(["simulate", "--config", cfg, "--out", str(a)])
    main(["simulate", "--config", cfg, "--out", str(b), "--jobs", "2"])
    assert (a / "results.csv").read_bytes() == (b / "results.csv").read_bytes()


def test_bad_config_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[run]\nname = x\nbogus = 1\n")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_INPUT
    assert "line 3" in capsys.readouterr().err
    assert main(["validate", "--config", str(tmp_path / "missing.cfg")]) == EXIT_INPUT


def test_analytic_stdout(capsys):
    assert main(["analytic", "precision", "--b", "4..7"]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert out[1] == "b,relative_threshold"
    assert out[2:] == ["4,0.9375", "5,0.96875", "6,0.984375", "7,1"]


def test_analytic_bad_value():
    assert main(["analytic", "para_slowdown", "--p", "x"]) == EXIT_INPUT


def test_plot_is_byte_stable(tmp_path):
    csv = tmp_path / "g.csv"
    assert main(["analytic", "graphene_slowdown", "--K", "0..20", "--out", str(csv)]) == EXIT_OK
    s1, s2 = tmp_path / "1.svg", tmp_path / "2.svg"
    for s in (s1, s2):
        assert main(["plot", str(csv), "--x", "K", "--y", "slowdown", "--series", "T", "--out", str(s)]) == EXIT_OK
    assert s1.read_bytes() == s2.read_bytes()


def test_plot_rejects_empty_csv(tmp_path):
    empty = tmp_path / "e.csv"
    empty.write_text("# presslab-csv v1 kind=x\na,b\n")
    assert main(["plot", str(empty), "--x", "a", "--y", "b"]) == EXIT_INPUT


def test_adversary_writes_witness(tmp_path):
    cfg = tmp_path / "adv.cfg"
    cfg.write_text((PRESETS / "evasion_demo.cfg").read_text() + "\n[search]\nhorizon_ns = 1200\n")
    assert main(["adversary", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_OK
    t = ReportTable.read(tmp_path / "adversary.csv")
    assert [r["A"] for r in t.rows] == ["1.35", "2"]
    assert (tmp_path / "witness_000.txt").exists()


def test_repro_single_criterion(tmp_path):
    assert main(["repro", "--criterion", "9", "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "c09.csv").exists()


def test_repro_failure_exit_code(tmp_path):
    for p in PRESETS.glob("*.cfg"):
        (tmp_path / p.name).write_text(p.read_text())
    c02 = tmp_path / "c02_impressn_tstar.cfg"
    c02.write_text(c02.read_text().replace("alpha = 0.35, 1", "alpha = 0.5, 1"))
    assert main(["repro", "--criterion", "2", "--presets", str(tmp_path)]) == EXIT_REPRO
