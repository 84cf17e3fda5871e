import csv
import json

import pytest
from click.testing import CliRunner

from lefschetz_lab.cli import main, read_config, run_experiment
from lefschetz_lab.experiments import ACCEPTANCE, REGISTRY, ConfigError


def invoke(*args):
    return CliRunner().invoke(main, list(args), catch_exceptions=False)


def body(result):
    return json.loads(result.output)


def strip_timing(report):
    if isinstance(report, dict):
        return {k: strip_timing(v) for k, v in report.items() if k != "timing"}
    if isinstance(report, list):
        return [strip_timing(v) for v in report]
    return report


def test_mis_snc_json_shape():
    r = invoke("mis", "snc", "--alphas", "1.5,2.25")
    assert r.exit_code == 0
    d = body(r)
    assert d["schema"] == 1 and d["passed"]
    assert d["results"]["generators"] == [[1, 2]]
    assert d["results"]["jumps"] == ["4/9", "2/3", "8/9"]
    assert set(d) >= {"experiment", "inputs", "results", "checks", "versions", "timing"}


def test_mis_siu_and_errors_verbatim():
    d = body(invoke("mis", "siu", "--a", "0.5", "--b", "0.9", "--c", "2.3"))
    assert d["results"]["generators"] == [[0, 1], [1, 0]]
    r = CliRunner().invoke(main, ["mis", "siu", "--a", "0.5", "--b", "0.4", "--c", "2.3"])
    assert r.exit_code == 1
    assert "constraint ceil(a)-a < b fails" in r.output


def test_jump_csv(tmp_path):
    path = tmp_path / "jumps.csv"
    r = invoke("--csv", str(path), "mis", "jump", "--weight", "1.5*log|z1| + 2.25*log|z2|", "--tmax", "1")
    assert r.exit_code == 0
    rows = list(csv.DictReader(path.open()))
    assert [row["t"] for row in rows] == ["4/9", "2/3", "8/9"]
    assert rows[0]["ideal_after"] == "(w)"


def test_mis_lower_and_coherence():
    d = body(invoke("mis", "lower", "--weight", "log|z1| + log|z2|"))
    assert d["results"]["generators"] == [[0, 0]]
    r = invoke("mis", "coherence", "--K", "6", "--degree", "3")
    assert body(r)["results"]["verdict"] == "non-coherent witness found"


def test_exit_code_tracks_checks():
    ok = invoke("foliation", "integrable", "--section", "eta", "--expect", "false")
    bad = invoke("foliation", "integrable", "--section", "eta", "--expect", "true")
    assert ok.exit_code == 0 and bad.exit_code == 1
    assert body(ok)["results"]["integrable"] is False


def test_foliation_commands():
    d = body(invoke("foliation", "eta", "--S", "1", "--T", "-w^2", "--samples", "20"))
    assert d["results"]["bracket"] == "(-2*w)*W" and d["results"]["kernel_rank"] == 2
    d = body(invoke("foliation", "iota", "--trials", "5"))
    assert d["results"]["iota"] == [8.0, 0.0]


def test_run_requires_experiment():
    r = CliRunner().invoke(main, ["run"])
    assert r.exit_code == 2 and "experiment" in r.output


def test_missing_required_field_listed():
    r = CliRunner().invoke(main, ["mis", "jump"])
    assert r.exit_code == 2 and "['weight']" in r.output


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# mass bound of log|z1|\nexperiment = mass-bound\nweight = log|z1|\nradius = 0.1\n")
    d = body(invoke("--config", str(cfg), "run", "--set", "radius=0.25"))
    assert d["inputs"]["radius"] == 0.25
    assert d["results"]["mass_bound"] == pytest.approx(3.14159265 / 4, rel=1e-6)


def test_config_rejects_unknown_and_malformed(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("bogus = 1\n")
    r = CliRunner().invoke(main, ["--config", str(cfg), "kahler"])
    assert r.exit_code == 2 and "unknown key" in r.output
    cfg.write_text("no equals sign\n")
    with pytest.raises(ConfigError, match=":1:"):
        read_config(str(cfg))


def test_type_errors_name_field():
    with pytest.raises(ConfigError, match=r"bochner\.n: expected int"):
        run_experiment("bochner", {"n": "two"})


def test_out_file(tmp_path):
    out = tmp_path / "r.json"
    r = invoke("--out", str(out), "kahler", "--n-max", "2")
    assert r.exit_code == 0 and r.output == ""
    assert json.loads(out.read_text())["results"]["forms_checked"] == sum(4 ** n for n in (1, 2))


def test_reports_deterministic():
    a = run_experiment("mis-consistency", {"pairs": 30}, seed=11)
    b = run_experiment("mis-consistency", {"pairs": 30}, seed=11)
    assert json.dumps(strip_timing(a), sort_keys=True) == json.dumps(strip_timing(b), sort_keys=True)
    c = run_experiment("foliation-iota", {}, seed=3)
    d = run_experiment("foliation-iota", {}, seed=3)
    assert strip_timing(c) == strip_timing(d)


def test_seed_range():
    r = CliRunner().invoke(main, ["--seed", "-1", "kahler"])
    assert r.exit_code == 2


def test_every_experiment_has_command():
    names = {c for c in main.commands}
    assert set(REGISTRY) <= names
    assert {"snc", "siu", "jump", "lower", "coherence"} <= set(main.commands["mis"].commands)
    assert {"eta", "integrable", "iota"} <= set(main.commands["foliation"].commands)


def test_battery_covers_criteria():
    assert [c.number for c in ACCEPTANCE] == list(range(1, 12))
    assert sum(c.smoke for c in ACCEPTANCE) == 9
    for c in ACCEPTANCE:
        for name, params in c.runs:
            REGISTRY[name].validate(params)


def test_max_grid_env(monkeypatch):
    from lefschetz_lab.fourier_forms import max_grid
    monkeypatch.setenv("LEFSCHETZ_LAB_MAX_GRID", "64")
    assert max_grid() == 64
