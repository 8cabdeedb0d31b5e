import csv
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpsboson.cli import ConfigError, RunConfig, main, write_svg


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_config_parse_sections_and_fractions():
    text = "[common]\nmodel = blbq\nparam.p = 1/3\nD = 2, 3\n[sweep-p]\np = 0, 1/3, 0.5\nN_k = 64\n"
    cfg = RunConfig.parse(text, section="sweep-p")
    assert cfg.params["p"] == pytest.approx(1 / 3)
    assert cfg.D == [2, 3]
    assert cfg.p[1] == pytest.approx(1 / 3)
    assert cfg.N_k == 64
    assert RunConfig.parse(text, section="ed").N_k == 512


@pytest.mark.parametrize("text", ["[common]\nmodel = ising\n", "[common]\nbogus = 1\n",
                                  "[common]\nN_k = 7\n", "[common]\nD = two\n", "[common]\np = 1/0\n",
                                  "not a config"])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        RunConfig.parse(text)


@settings(max_examples=30, deadline=None)
@given(D=st.lists(st.integers(1, 60), min_size=1, max_size=5),
       p=st.lists(st.floats(-1, 1, allow_nan=False), min_size=1, max_size=5),
       tol=st.floats(1e-14, 1e-2), seed=st.integers(0, 2 ** 31), L=st.one_of(st.none(), st.integers(1, 40)),
       h=st.floats(-2, 2, allow_nan=False), checks=st.booleans())
def test_config_round_trip(D, p, tol, seed, L, h, checks):
    cfg = RunConfig(model="heis_stag", params={"h": h}, D=D, p=p, tol=tol, seed=seed, L=L, window_checks=checks)
    back = RunConfig.parse(cfg.serialize())
    assert back == cfg
    assert back.serialize() == cfg.serialize()


def test_bad_config_exit_code(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[common]\nmodel = foo\n")
    assert main(["ed", "--config", str(bad), "--out", str(tmp_path / "o")]) == 3
    assert main(["nonsense"]) == 3


def test_ed_command_outputs(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[common]\nparam.p = 1/3\n[ed]\nN = 6, 8\nbc = open\n")
    out = tmp_path / "o"
    assert main(["ed", "--config", str(cfg), "--out", str(out), "--seed", "3"]) == 0
    rows = read_csv(out / "ed.csv")
    assert [int(r["N"]) for r in rows] == [6, 8]
    assert float(rows[1]["energy"]) == pytest.approx(-14 / 3, abs=1e-8)
    # 17 significant digits
    assert len(rows[1]["energy"].lstrip("-").replace(".", "").lstrip("0")) >= 15
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 3 and man["command"] == "ed"
    assert man["versions"]["kernel_backend"] in ("cython", "numpy")
    first = (out / "ed.csv").read_text()
    assert main(["ed", "--config", str(cfg), "--out", str(out), "--seed", "3"]) == 0
    assert (out / "ed.csv").read_text() == first


def test_gram_spectrum_command(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[gram-spectrum]\nL = 10\n")
    assert main(["gram-spectrum", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "gram_spectrum.csv")
    assert {int(r["y"]) for r in rows} == set(range(1, 7))
    assert max(float(r["abs_err"]) for r in rows) < 1e-8
    summary = {r["key"]: r["value"] for r in read_csv(tmp_path / "gram_summary.csv")}
    assert int(summary["null_dim"]) > 0


def test_sweep_d_small(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text(f"[common]\nmodel = heis_stag\nparam.h = 0.2\nD_ref = 8\ncache_dir = {tmp_path / 'cache'}\n"
                   "[sweep-d]\nD = 1, 2\nN_k = 128\n")
    assert main(["sweep-d", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "sweep_d.csv")
    assert list(rows[0])[:7] == ["D", "E_mps", "E_fluct", "E_total", "E_ref", "surplus_mps", "surplus_total"]
    for r in rows:
        assert float(r["surplus_total"]) < float(r["surplus_mps"])
    assert float(rows[1]["surplus_mps"]) <= float(rows[0]["surplus_mps"])
    svg = (tmp_path / "sweep_d.svg").read_text()
    assert "stroke-dasharray" in svg and svg.count("<polyline") == 2


def test_sweep_p_aklt_row(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text(f"[common]\nD_ref = 8\ncache_dir = {tmp_path / 'cache'}\n[sweep-p]\np = 1/3\nN_k = 128\n")
    assert main(["sweep-p", "--config", str(cfg), "--out", str(tmp_path), "--no-cache"]) == 0
    rows = {int(r["D"]): r for r in read_csv(tmp_path / "sweep_p.csv")}
    assert set(rows) == {1, 2}
    assert float(rows[2]["surplus_mps"]) < 1e-6
    assert abs(float(rows[2]["surplus_total"])) < 1e-6
    assert float(rows[1]["surplus_total"]) < float(rows[1]["surplus_mps"])
    assert not (tmp_path / "cache").exists()


def test_crosscheck_negative_control(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[crosscheck]\nwindow_checks = no\ncorrupt = delta_sign\n")
    assert main(["crosscheck", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    rows = read_csv(tmp_path / "crosscheck.csv")
    assert any(r["passed"] == "0" and r["check"] == "delta_reconstruction" for r in rows)


def test_svg_writer(tmp_path):
    write_svg(tmp_path / "a.svg", [("mps", [0, 1], [1.0, 0.5], True), ("corr", [0, 1], [0.5, float("nan")], False)],
              "x", "y")
    text = (tmp_path / "a.svg").read_text()
    assert text.startswith("<svg") and text.rstrip().endswith("</svg>")
