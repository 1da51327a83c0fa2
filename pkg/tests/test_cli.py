import csv
import json

import pytest

from bbz import acceptance, cli
from bbz.acceptance import CheckResult
from bbz.cli import Command, UsageError, load_config, main, parse_args, write_outputs
from bbz.io import dumps_csv, dumps_json, format_number
from bbz.profiles import Branch, Parity


def test_parse_spectrum():
    cmd = parse_args(["spectrum", "--alpha", "1.0", "--branch", "minus", "--n", "2048", "--length", "60"])
    assert cmd == Command("spectrum", alpha=1.0, branch=Branch.MINUS, n=2048, length=60.0)


def test_parse_sweep():
    cmd = parse_args(["sweep", "--alpha-min", "2.0", "--alpha-max", "6.0", "--steps", "200",
                      "--branch", "minus"])
    assert (cmd.name, cmd.alpha_min, cmd.alpha_max, cmd.steps, cmd.branch) == \
        ("sweep", 2.0, 6.0, 200, Branch.MINUS)


@pytest.mark.parametrize("argv,flag", [
    (["spectrum", "--h", "0.5"], "--h"),
    (["spectrum", "--alpha", "1", "--h", "0.1"], "--alpha"),
    (["spectrum"], "--alpha"),
    (["profile", "--alpha", "-1"], "--alpha"),
    (["spectrum", "--alpha", "1", "--n", "8"], "--n"),
    (["spectrum", "--alpha", "1", "--format", "xml"], "--format"),
    (["sweep", "--alpha-min", "3", "--alpha-max", "2"], "--alpha-min"),
    (["frobnicate"], "frobnicate"),
])
def test_usage_errors(argv, flag):
    with pytest.raises(UsageError, match=flag):
        parse_args(argv)


def test_h_error_cites_interval():
    with pytest.raises(UsageError, match=r"\(0, 2/\(3\*sqrt\(6\)\)\)"):
        parse_args(["spectrum", "--h", "0.5"])


def test_usage_exit_code(capsys):
    assert main(["spectrum", "--h", "0.5"]) == 2
    assert "--h" in capsys.readouterr().err


def test_config_precedence(tmp_path):
    path = tmp_path / "cfg.txt"
    path.write_text("# sweep settings\nalpha_min=2.0\nzero_tol=1e-6\nparity = full\n")
    cfg = load_config(path, {"alpha_min": 2.2})
    assert cfg.alpha_min == 2.2
    assert isinstance(cfg.zero_tol, float) and cfg.zero_tol == 1e-6
    assert cfg.parity is Parity.FULL


def test_empty_config_defaults(tmp_path):
    path = tmp_path / "empty.txt"
    path.write_text("")
    cfg = load_config(path)
    assert (cfg.alpha_min, cfg.alpha_max, cfg.steps) == (2.0, 6.0, 100)


def test_unknown_config_key(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("alpha_min=2\nbogus=1\n")
    with pytest.raises(UsageError, match="bogus"):
        load_config(path)


def test_sweep_flag_overrides_config(tmp_path):
    path = tmp_path / "cfg.txt"
    path.write_text("alpha_min=2.0\nsteps=10\n")
    cmd = parse_args(["sweep", "--config", str(path), "--alpha-min", "2.2", "--branch", "plus"])
    cfg = cli._sweep_config(cmd)
    assert (cfg.alpha_min, cfg.steps, cfg.branch) == (2.2, 10, Branch.PLUS)


def test_profile_command(tmp_path):
    assert main(["profile", "--alpha", "1", "--branch", "plus", "--out", str(tmp_path)]) == 0
    with open(tmp_path / "profile.csv", newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["x", "u", "phi", "uprime"]
    assert float(rows[1][1]) == pytest.approx(0.294572, abs=1e-6)
    assert float(rows[-1][1]) == pytest.approx(0.294572, abs=1e-6)


def test_spectrum_command_deterministic(tmp_path):
    argv = ["spectrum", "--alpha", "3", "--parity", "even", "--n", "256", "--format", "json"]
    for sub in ("a", "b"):
        assert main(argv + ["--out", str(tmp_path / sub)]) == 0
    a = (tmp_path / "a" / "spectrum.json").read_bytes()
    assert a == (tmp_path / "b" / "spectrum.json").read_bytes()
    d = json.loads(a)
    assert d["branch"] == "minus" and d["counts"]["ki_minus"] == 1


def test_sweep_command_outputs(tmp_path):
    argv = ["sweep", "--alpha-min", "4", "--alpha-max", "6", "--steps", "2", "--n", "256",
            "--out", str(tmp_path)]
    assert main(argv) == 0
    header = (tmp_path / "branch.csv").read_text().splitlines()[0]
    assert header == "alpha,h,mu,krein,edge,gap_margin,zero_mult,kr,kc,ki_minus,index_pass"
    ev = json.loads((tmp_path / "collision.json").read_text())
    assert set(ev) >= {"alpha_star", "h_star", "kind", "bracket", "quartet"}
    assert ev["kind"] == "NoneInRange"


def test_unwritable_output(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["profile", "--alpha", "1", "--n", "64", "--out", str(blocker / "sub")]) == 1
    assert capsys.readouterr().err


def test_computation_error_exit(capsys):
    assert main(["profile", "--alpha", "0.5", "--length", "10"]) == 1
    assert "half_length" in capsys.readouterr().err


def _fake_checks():
    return [(1, "one", lambda ctx: CheckResult(1, "one", True, "ok", {"x": 0.1})),
            (2, "two", lambda ctx: CheckResult(2, "two", False, "bad", {"y": [1, 2]}))]


def test_verify_exit_code_and_determinism(tmp_path, monkeypatch, capsys):
    monkeypatch.setattr(acceptance, "CHECKS", _fake_checks())
    for sub in ("a", "b"):
        assert main(["verify", "--format", "json", "--out", str(tmp_path / sub)]) == 1
    out = capsys.readouterr().out
    assert "PASS   1  one" in out and "FAIL   2  two" in out
    a = (tmp_path / "a" / "verify.json").read_bytes()
    assert a == (tmp_path / "b" / "verify.json").read_bytes()
    assert json.loads(a)[1]["pass"] is False


def test_write_outputs_formats(tmp_path):
    docs = {"t": ({"v": [1.0, float("nan")]}, ("a", "b"), [(1.0, True)]),
            "j": ({"k": 1}, None, None)}
    paths = write_outputs(docs, "csv", tmp_path)
    assert sorted(p.name for p in paths) == ["j.json", "t.csv"]
    assert (tmp_path / "t.csv").read_text() == "a,b\n1,true\n"
    write_outputs(docs, "json", tmp_path)
    assert json.loads((tmp_path / "t.json").read_text()) == {"v": [1.0, None]}


def test_number_formatting():
    assert format_number(0.1) == "0.10000000000000001"
    assert format_number(2) == "2"
    assert format_number(None) == ""
    assert dumps_json({"a": 1 / 3}) == '{\n  "a": 0.33333333333333331\n}\n'
    assert json.loads(dumps_json({"x": [1e-300, -0.0, True, None]})) == {"x": [1e-300, 0.0, True, None]}
    assert dumps_csv(("a",), [(float("inf"),)]) == "a\ninf\n"
