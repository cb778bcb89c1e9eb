import csv
import json
import re
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from pam_lab.cli import main
from pam_lab.config import ConfigError, ExperimentConfig, normalize_value, parse_config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture(autouse=True)
def _cache(tmp_path, monkeypatch):
    monkeypatch.setenv("PAM_LAB_CACHE", str(tmp_path / "cache"))


def _records(path):
    return [json.loads(line) for line in Path(path).read_text().splitlines()]


def _without_timing(text):
    return [{k: v for k, v in json.loads(line).items() if k != "timing"} for line in text.splitlines()]


keys = st.from_regex(r"[a-z][a-z0-9_]{0,6}(\.[a-z][a-z0-9_]{0,6})?", fullmatch=True)
atoms = st.one_of(
    st.integers(-10**6, 10**6).map(str),
    st.floats(-1e6, 1e6, allow_nan=False).map(repr),
    st.fractions(max_denominator=50).map(lambda f: f"{f.numerator}/{f.denominator}"),
    st.sampled_from(["townes", "trial", "true", "false"]),
)
values = st.lists(atoms, min_size=1, max_size=4).map(", ".join)


@given(st.dictionaries(keys, values, max_size=8))
def test_text_round_trip(d):
    cfg = ExperimentConfig({k: normalize_value(v) for k, v in d.items()})
    again = parse_config(cfg.to_text())
    assert again == cfg
    assert again.hash() == cfg.hash()


def test_normalization_makes_equal_configs_hash_equal():
    a = parse_config("p = 2\nhurst.h0 = 0.8\nhurst.h = 1/2, 2/4\n")
    b = parse_config("# comment\nhurst.h = 1/2,1/2\nhurst.h0 = 0.80   # decimal\np = 2.0\n")
    assert a.values["hurst.h"] == "1/2,1/2"
    assert a.hash() == b.hash()
    # a decimal and a rational are different inputs
    assert parse_config("hurst.h0 = 4/5\n").hash() != parse_config("hurst.h0 = 0.8\n").hash()


def test_frozen_hash():
    cfg = parse_config("hurst.h0 = 1\nhurst.h = 1/2, 1/2\np = 2\nkappa = townes\n")
    assert cfg.canonical() == "hurst.h=1/2,1/2\nhurst.h0=1\nkappa=townes\np=2\n"
    assert cfg.hash() == "579161717de59ff5d3875a32c1e206f8397b43df63d487b320268795250cff3e"


def test_workers_not_part_of_identity():
    cfg = parse_config("p = 2\nmc.workers = 4\n")
    assert "mc.workers" not in cfg.identity()
    assert cfg.hash() == parse_config("p = 2\n").hash()


def test_parse_errors():
    with pytest.raises(ConfigError):
        parse_config("p = 1\np = 2\n")
    with pytest.raises(ConfigError):
        parse_config("just words\n")
    with pytest.raises(ConfigError):
        parse_config("p =\n")


def test_exit_code_for_config_errors(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("hurst.h0 = 4/5\nhurst.h = 1/2, 1/2\np = two\nkappa = townes\n")
    assert main(["critical-time", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert main(["regime", "--config", str(tmp_path / "missing.cfg"), "--out", str(tmp_path)]) == 2
    assert main(["check", "nonsense", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_exit_code_for_numerical_guard(tmp_path):
    cfg = tmp_path / "sing.cfg"
    cfg.write_text("hurst.h0 = 4/5\nhurst.h = 1/2, 1/2\nt = 1\neps = 0\n")
    assert main(["beta-mean", "--config", str(cfg), "--out", str(tmp_path)]) == 3


def test_regime_example(tmp_path, capsys):
    assert main(["regime", "--config", str(CONFIGS / "critical_proxy.cfg"), "--out", str(tmp_path)]) == 0
    rec = _records(tmp_path / "result.jsonl")[0]
    assert rec["outputs"]["skorohod"] == "Critical"
    assert rec["command"] == "regime"
    assert set(rec) == {"config_hash", "command", "inputs", "outputs", "warnings", "version", "timing"}


def test_critical_time_white_noise_is_half_townes_mass(tmp_path):
    from pam_lab.variational import gn_kappa_townes

    assert main(["critical-time", "--config", str(CONFIGS / "white_noise_2d.cfg"), "--out", str(tmp_path)]) == 0
    rec = _records(tmp_path / "result.jsonl")[0]
    assert rec["outputs"]["t0"] == pytest.approx(gn_kappa_townes()["qMass"] / 2.0, rel=1e-12)


def test_rerun_byte_identical_and_cache_agrees(tmp_path):
    args = ["moments", "--config", str(CONFIGS / "critical_proxy.cfg"), "--set", "mc.paths=60",
            "--set", "mc.spectral=32", "--set", "mc.steps=16", "--set", "t_grid=0.25,0.5"]
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert main(args + ["--no-cache", "--out", str(a)]) == 0
    ra = (a / "result.jsonl").read_text()
    assert main(args + ["--no-cache", "--set", "mc.workers=3", "--out", str(b)]) == 0
    assert _without_timing(ra) == _without_timing((b / "result.jsonl").read_text())
    assert (a / "table.csv").read_bytes() == (b / "table.csv").read_bytes()
    # first cached run computes, second reads the cache
    assert main(args + ["--out", str(c)]) == 0
    first = (c / "result.jsonl").read_text()
    assert main(args + ["--out", str(c)]) == 0
    assert (c / "result.jsonl").read_text() == first
    assert _without_timing(first) == _without_timing(ra)


def test_plot_columns_exist_in_table(tmp_path):
    args = ["moments", "--config", str(CONFIGS / "critical_proxy.cfg"), "--set", "mc.paths=40",
            "--set", "mc.spectral=16", "--set", "mc.steps=8", "--set", "t_grid=0.2,0.4,0.6", "--out", str(tmp_path)]
    assert main(args) == 0
    with open(tmp_path / "table.csv", newline="") as fh:
        header = next(csv.reader(fh))
    assert (tmp_path / "table.csv").read_bytes().count(b"\r\n") == 4
    plot = (tmp_path / "plot.gp").read_text()
    cols = [int(c) for c in re.findall(r"using (\d+):", plot)]
    cols += [int(c) for c in re.findall(r":(\d+) with", plot)]
    assert cols and all(1 <= c <= len(header) for c in cols)
    assert header[cols[0] - 1] == "t"
    # a command without a plot removes a stale one
    assert main(["regime", "--config", str(CONFIGS / "critical_proxy.cfg"), "--out", str(tmp_path)]) == 0
    assert not (tmp_path / "plot.gp").exists()
