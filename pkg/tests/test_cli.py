import json
import subprocess
import sys

import numpy as np
import pytest

from rptests.cli import RunConfig, UsageError, execute, main, parse_and_validate


@pytest.fixture
def dataset(tmp_path):
    x, y = tmp_path / "x.csv", tmp_path / "y.csv"
    argv = ["simulate", "--n", "50", "--p", "40", "--seed", "4", "--x-out", str(x), "--y-out", str(y)]
    assert main(argv + ["--out", str(tmp_path / "sim.json")]) == 0
    return x, y


def test_parse_group_example(dataset):
    x, y = dataset
    cfg = parse_and_validate(["group", "--x", str(x), "--y", str(y), "--group", "5,6,7", "--B", "249", "--seed", "1"])
    assert isinstance(cfg, RunConfig)
    assert cfg.B == 249 and cfg.group == [5, 6, 7] and cfg.seed == 1


def test_group_default_b(dataset):
    x, y = dataset
    assert parse_and_validate(["group", "--x", str(x), "--y", str(y), "--group", "1"]).B == 249


def test_missing_group_is_usage_error(dataset):
    x, y = dataset
    with pytest.raises(UsageError, match="--group is required"):
        parse_and_validate(["group", "--x", str(x), "--y", str(y)])


def test_single_defaults_to_100(dataset):
    x, y = dataset
    assert parse_and_validate(["single", "--x", str(x), "--y", str(y)]).B == 100


def test_all_violations_reported(tmp_path, capsys):
    code = main(["group", "--x", str(tmp_path / "nope.csv"), "--B", "1", "--lambda", "-1"])
    err = capsys.readouterr().err
    assert code == 2
    lines = [l for l in err.splitlines() if l.startswith("rptest: error:")]
    assert len(lines) == 5
    for text in ("--group is required", "cannot read", "--y is required", "--B must", "--lambda must"):
        assert text in err


def test_seed_falls_back_to_environment(dataset, monkeypatch):
    x, y = dataset
    argv = ["hetero", "--x", str(x), "--y", str(y)]
    monkeypatch.setenv("RPTEST_SEED", "17")
    assert parse_and_validate(argv).seed == 17
    assert parse_and_validate(argv + ["--seed", "3"]).seed == 3
    monkeypatch.setenv("RPTEST_SEED", "abc")
    with pytest.raises(UsageError):
        parse_and_validate(argv)
    monkeypatch.delenv("RPTEST_SEED")
    assert parse_and_validate(argv).seed == 0


def test_simulated_null_then_group(dataset, tmp_path):
    x, y = dataset
    sim = json.loads((tmp_path / "sim.json").read_text())
    support = set(sim["result"]["support"])
    group = [j for j in range(40) if j not in support][:10]
    out = tmp_path / "g.json"
    argv = ["group", "--x", str(x), "--y", str(y), "--group", ",".join(map(str, group)),
            "--B", "19", "--seed", "2", "--out", str(out)]
    assert main(argv) == 0
    rep = json.loads(out.read_text())
    assert rep["schema_version"] == 1 and rep["status"] == "ok"
    assert 0 < rep["result"]["pvalue"] <= 1
    assert rep["config"]["group"] == group and rep["seed"] == 2
    first = out.read_bytes()
    assert main(argv) == 0
    assert out.read_bytes() == first


def test_single_report(dataset, tmp_path):
    x, y = dataset
    out = tmp_path / "s.json"
    assert main(["single", "--x", str(x), "--y", str(y), "--B", "10", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())["result"]
    assert len(rep["pvalues"]) == 40
    assert all(0 < p <= 1 for p in rep["pvalues"])


def test_computational_error_exits_1(tmp_path):
    x, y = tmp_path / "x.csv", tmp_path / "y.csv"
    np.savetxt(x, np.column_stack([np.arange(10.0), np.ones(10)]), delimiter=",")
    np.savetxt(y, np.arange(10.0), delimiter=",")
    code, rep = execute(parse_and_validate(["hetero", "--x", str(x), "--y", str(y)]))
    assert code == 1 and rep["status"] == "error"
    assert rep["error"]["type"] == "ZeroColumn"


def test_envelope_command(tmp_path):
    out = tmp_path / "e.json"
    assert main(["envelope", "--B", "19", "--n-sim", "500", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())["result"]
    assert rep["m"] == 20 and np.all(np.diff(rep["q"]) >= 0)


def test_study_command(tmp_path):
    out, csv = tmp_path / "st.json", tmp_path / "ecdf.csv"
    argv = ["simulate", "--study", "--n", "40", "--p", "30", "--n-designs", "2", "--reps", "2",
            "--B", "9", "--test", "hetero", "--out", str(out), "--ecdf-csv", str(csv)]
    assert main(argv) == 0
    rep = json.loads(out.read_text())["result"]
    assert np.array(rep["pvalues"]).shape == (2, 2)
    assert csv.exists()


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "rptests.cli", "group"], capture_output=True, text=True
    )
    assert proc.returncode == 2
    assert "rptest: error:" in proc.stderr
