import json
import re

import pytest

from gwlab import cli
from gwlab.cli import Config, ConfigError, Result, SchemaError, Table


def test_parse_config():
    text = "# header\nlaw = FixedGaussian\n b=3  # trailing\n\nn_list = 1,2,3\n"
    assert cli.parse_config(text) == {"law": "FixedGaussian", "b": "3", "n_list": "1,2,3"}
    with pytest.raises(ConfigError, match="line 2"):
        cli.parse_config("a = 1\nnot a pair\n")
    with pytest.raises(ConfigError, match="empty key"):
        cli.parse_config("= 4\n")


def test_config_accessors():
    cfg = Config({"n": "1e3", "x": "0.5", "xs": "1, 2.5", "bad": "abc", "law": "FixedGaussian", "b": "3"})
    assert cfg.integer("n", 0) == 1000 and cfg.number("x", 0) == 0.5
    assert cfg.numbers("xs", []) == [1.0, 2.5] and cfg.integers("missing", [4]) == [4]
    assert cfg.law().family == "FixedGaussian"
    with pytest.raises(ConfigError, match="bad"):
        cfg.integer("bad", 1)
    with pytest.raises(ConfigError):
        Config({"law": "FixedGaussian", "b": "1"}).law()
    assert Config({"a": "1", "b": "2"}).digest() == Config({"b": "2", "a": "1"}).digest()


def test_cell_formatting_keeps_full_precision():
    t = Table(["x", "y"], [[0.1 + 0.2, 3]])
    assert cli.table_text(t).splitlines() == ["x,y", "0.30000000000000004,3"]


def test_exit_codes(tmp_path, capsys):
    assert cli.main(["no-such-experiment"]) == cli.EXIT_USAGE
    bad = tmp_path / "bad.cfg"
    bad.write_text("this line has no equals sign\n")
    assert cli.main(["verify-law", "--config", str(bad), "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    law = tmp_path / "law.cfg"
    law.write_text("law = FixedGaussian\nb = 1\n")
    assert cli.main(["verify-law", "--config", str(law), "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    big = tmp_path / "big.cfg"
    big.write_text("budget = 10\nn_samples = 1000\n")
    assert cli.main(["verify-law", "--config", str(big), "--out", str(tmp_path)]) == cli.EXIT_BUDGET
    assert cli.main(["verify-law", "--config", str(tmp_path / "missing.cfg")]) == cli.EXIT_CONFIG


def test_assert_flag_maps_failures(tmp_path, monkeypatch, capsys):
    monkeypatch.setitem(cli.EXPERIMENTS, "verify-law",
                        lambda cfg: Result({"": Table(["a"], [[1]])}, {}, {"check": cli.FAIL}))
    assert cli.main(["verify-law", "--out", str(tmp_path)]) == cli.EXIT_OK
    assert cli.main(["verify-law", "--out", str(tmp_path), "--assert"]) == cli.EXIT_ASSERT


def test_artifacts_and_json_schema(tmp_path, capsys):
    cfg = tmp_path / "v.cfg"
    cfg.write_text("n_samples = 2000\n")
    assert cli.main(["verify-law", "--config", str(cfg), "--seed", "3", "--out", str(tmp_path)]) == cli.EXIT_OK
    summary = json.loads((tmp_path / "verify-law.json").read_text())
    assert set(summary) == {"schema_version", "experiment", "config_digest", "metrics", "verdicts"}
    assert summary["schema_version"] == cli.SCHEMA_VERSION and summary["experiment"] == "verify-law"
    assert summary["config_digest"] == Config({"n_samples": "2000", "seed": "3"}).digest()
    assert all(v in (cli.PASS, cli.FAIL, cli.INFO) for v in summary["verdicts"].values())
    lines = (tmp_path / "verify-law.csv").read_text().splitlines()
    assert re.fullmatch(r"# generated \d{4}-\d\d-\d\dT\d\d:\d\d:\d\d\+00:00", lines[0])
    assert json.loads(capsys.readouterr().out) == summary


def test_run_table_schema():
    res = cli.run("theorem-main", Config({"replicas": "2", "n_list": "500,1000"}))
    assert res.tables[""].columns == cli.RUN_COLUMNS
    assert len(res.tables[""].rows) == 4
    res = cli.run("spine-check", Config({"cases": "2", "n_samples": "1000", "line_samples": "200"}))
    assert res.tables[""].columns == cli.SPINE_COLUMNS


def _write(path, cols, rows):
    path.write_text("# generated now\n" + cli.table_text(Table(cols, rows)))
    return path


def test_summarize_statistics(tmp_path):
    one = _write(tmp_path / "one.csv", ["n", "v"], [[10, 2.0]])
    s = cli.summarize([one])
    assert s["columns"]["v"] == {"median": 2.0, "q25": 2.0, "q75": 2.0}
    two = _write(tmp_path / "two.csv", ["n", "v"], [[10, 2.0], [20, 4.0]])
    assert cli.summarize([two])["columns"]["v"]["median"] == 3.0
    line = _write(tmp_path / "line.csv", ["n", "v", "tag"], [[x, 0.75 * x - 2, "t"] for x in range(1, 9)])
    fit = cli.summarize([line], "n", "v")["fit"]
    assert fit["slope"] == pytest.approx(0.75, abs=1e-12) and fit["intercept"] == pytest.approx(-2, abs=1e-12)


def test_summarize_schema_errors(tmp_path, capsys):
    a = _write(tmp_path / "a.csv", ["n", "v"], [[1, 2]])
    b = _write(tmp_path / "b.csv", ["n", "w"], [[1, 2]])
    with pytest.raises(SchemaError):
        cli.summarize([a, b])
    with pytest.raises(SchemaError):
        cli.summarize([a], "n", "zzz")
    assert cli.main(["summarize", str(a), str(b)]) == cli.EXIT_SCHEMA
    out = tmp_path / "s.json"
    assert cli.main(["summarize", str(a), "--out", str(out)]) == cli.EXIT_OK
    assert json.loads(out.read_text())["rows"] == 1


@pytest.mark.parametrize("name,values", [
    ("extremes", {"replicas": "3", "n": "1000"}),
    ("gamma-scaling", {"replicas": "2", "r_list": "3,5"}),
    ("excursion-tail", {"replicas": "1", "r": "3", "n_excursions": "300"}),
])
def test_reruns_are_identical(name, values):
    a = cli.run(name, Config(dict(values)))
    b = cli.run(name, Config(dict(values)))
    assert {k: cli.table_text(t) for k, t in a.tables.items()} == {k: cli.table_text(t) for k, t in b.tables.items()}
    c = cli.run(name, Config(dict(values, seed="99")))
    assert cli.table_text(c.tables[""]) != cli.table_text(a.tables[""])


def test_parallel_workers_match_serial():
    vals = {"replicas": "3", "r_list": "3,5"}
    a = cli.run("gamma-scaling", Config(dict(vals)))
    b = cli.run("gamma-scaling", Config(dict(vals, workers="2")))
    assert cli.table_text(a.tables[""]) == cli.table_text(b.tables[""])


def test_shipped_configs_parse():
    from pathlib import Path
    cfgs = sorted((Path(__file__).parent.parent / "configs").glob("*.cfg"))
    assert {p.stem for p in cfgs} == set(cli.EXPERIMENTS)
    for p in cfgs:
        cfg = Config(cli.parse_config(p.read_text()))
        if "law" in cfg.values:
            cfg.law()
