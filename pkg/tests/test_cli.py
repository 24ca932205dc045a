import csv
import io
import json
from pathlib import Path

import pytest
import yaml

from mesofluct import cli

GOLDEN = Path(__file__).parent / "golden"


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_clt_default(capsys):
    code, out, _ = run(capsys, "clt")
    assert code == 0
    assert out.splitlines()[0] == (GOLDEN / "clt_header.csv").read_text().strip()
    table = rows(out)
    big = [r for r in table if r["N"] == "10000" and r["observable"] == "sigma_x"][0]
    assert float(big["abs_error"]) < 1e-4
    assert all(float(r["abs_error"]) == 0 for r in table if r["observable"] == "sigma_z")
    keys = [(float(r["beta"]), int(r["N"])) for r in table]
    assert keys == sorted(keys)


def test_clt_seventeen_digits(capsys):
    _, out, _ = run(capsys, "clt", "--n-list", "10")
    row = rows(out)[0]
    assert len(row["limit_value"].replace("0.", "", 1).lstrip("0")) == 17
    assert float(row["limit_value"]) == pytest.approx(0.6065306597126334, abs=1e-16)


def test_empty_grid_is_config_error(capsys):
    code, _, err = run(capsys, "clt", "--n-list", "")
    assert code == 1
    assert "n_list" in err


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("clt:\n  bogus: 1\n")
    code, _, err = run(capsys, "clt", "--config", str(cfg))
    assert code == 1 and "bogus" in err


def test_missing_config_reports_path(capsys):
    code, _, err = run(capsys, "clt", "--config", "/nonexistent/cfg.yaml")
    assert code == 1 and "/nonexistent/cfg.yaml" in err


def test_flags_override_config(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("clt:\n  n_list: [5, 6]\n  beta: [0.5]\n")
    _, out, _ = run(capsys, "clt", "--config", str(cfg), "--beta", "2.0")
    table = rows(out)
    assert {r["N"] for r in table} == {"5", "6"}
    assert {r["beta"] for r in table} == {"2"}


def test_usage_error_exit_code(capsys):
    assert cli.main(["nosuch"]) == 1
    assert cli.main(["protocol", "--measure", "weak"]) == 1


def test_dynamics_small(capsys):
    code, out, _ = run(capsys, "dynamics", "--n-list", "8,16,32", "--t-grid", "0,0.72273424781341566")
    assert code == 0
    assert out.splitlines()[0] == (GOLDEN / "dynamics_header.csv").read_text().strip()
    table = rows(out)
    bcs = [r for r in table if r["observable"] == "bcs_commutator_norm"]
    assert bcs and all(float(r["exact_value"]) < 1e-12 for r in bcs)
    t0 = [r for r in table if r["t"] == "0"]
    assert all(float(r["err_tilde"]) < 1e-10 and float(r["err_bar"]) < 1e-10 for r in t0)
    late = [r for r in table if r["observable"] == "var_S_y" and r["t"] not in ("", "0")]
    errs = [float(r["err_tilde"]) for r in late]
    assert errs == sorted(errs, reverse=True)
    assert all(float(r["err_bar"]) > 0.5 for r in late)


def test_dynamics_capacity_exit(capsys):
    code, _, err = run(capsys, "dynamics", "--n-list", "400", "--t-grid", "0.1", "--max-excitations", "399")
    assert code == 3 and "capacity" in err


def test_protocol_abelian_trivial(capsys):
    code, out, _ = run(capsys, "protocol", "--c-t", "1")
    assert code == 0
    rep = json.loads(out)["reports"][0]
    assert rep["total"] == pytest.approx(2.0, abs=1e-12)
    assert rep["variance_verdict"] == "separable-bound saturated"


def test_protocol_schema_matches_golden(capsys):
    golden = json.loads((GOLDEN / "protocol_schema.json").read_text())
    code, out, _ = run(capsys, "protocol", "--measure", "pure", "--couplings", "0.1,1,1", "--c-t", "0.5")
    d = json.loads(out)
    assert code == 2
    assert d["version"] == golden["version"]
    assert sorted(d) == [k for k in golden["top_level"] if k != "abelian_sweep"]
    assert sorted(d["reports"][0]) == golden["report"]
    assert sorted(d["reports"][0]["stability"]) == golden["stability"]
    assert sorted(d["diff"][0]) == golden["diff"]
    for c in d["reports"][0]["comparisons"].values():
        assert sorted(c) == golden["comparison"]


def test_protocol_pure_deep_point(capsys):
    code, out, _ = run(capsys, "protocol", "--measure", "pure", "--couplings", "0.001,1,1", "--c-t", "0.5")
    d = json.loads(out)
    rep = d["reports"][0]
    assert code == 2
    assert rep["total"] < 0.1
    assert rep["ppt_verdict"] == "entangled-NPT"
    assert rep["corrected"]["sum"] == pytest.approx(rep["total"], abs=1e-9)
    assert "alpha" in d["diff"][0]["mismatches"]


def test_protocol_consistent_run_exits_zero(capsys):
    code, out, _ = run(capsys, "protocol", "--measure", "pure", "--couplings", "1,0,3", "--t-grid", "0.3,0.9")
    assert code == 0
    assert len(json.loads(out)["reports"]) == 2


def test_protocol_a_x_zero_runs_oracle(capsys):
    code, out, _ = run(capsys, "protocol", "--couplings", "0,0,1", "--t-grid", "1.0")
    rep = json.loads(out)["reports"][0]
    assert code == 0
    assert rep["closed_form"] is None
    assert any("closed form skipped" in n for n in rep["notes"])


def test_protocol_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for path in (a, b):
        cli.main(["protocol", "--seed", "99", "--out", str(path)])
    assert a.read_bytes() == b.read_bytes()
    cli.main(["protocol", "--seed", "100", "--out", str(b)])
    assert a.read_bytes() != b.read_bytes()


def test_protocol_rejects_csv(capsys):
    code, _, err = run(capsys, "protocol", "--format", "csv")
    assert code == 1


def test_ghz(capsys):
    code, out, _ = run(capsys, "ghz")
    rep = json.loads(out)["report"]
    assert code == 0
    assert rep["bell_fidelity_after_plus"] == pytest.approx(1.0, abs=1e-12)
    assert rep["bc_reduced_separable"] is True


def test_show_config_round_trips(tmp_path, capsys):
    code, out, _ = run(capsys, "show-config")
    assert code == 0
    cfg = yaml.safe_load(out)
    assert cfg["protocol"]["measure"] == "abelian"
    path = tmp_path / "all.yaml"
    path.write_text(out)
    code, out2, _ = run(capsys, "show-config", "--config", str(path))
    assert code == 0 and out2 == out


def test_json_clt(capsys):
    code, out, _ = run(capsys, "clt", "--format", "json", "--n-list", "10")
    d = json.loads(out)
    assert d["schema"] == "mesofluct.clt" and d["columns"][0] == "N"
