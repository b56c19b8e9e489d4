import json

import numpy as np
import pytest

from clipdsp.artifacts import read_aggregate_csv, read_run_csv
from clipdsp.cli import main
from clipdsp.problem import build_paper_instance, fixed_point_residual

SHORT = """
[run]
T = 100
seeds = 2
stride = 10
"""


@pytest.fixture
def short_config(tmp_path):
    path = tmp_path / "short.toml"
    path.write_text(SHORT)
    return path


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_validate_preset(capsys):
    assert main(["validate", "--config", "fig2"]) == 0
    out = capsys.readouterr().out
    for name in ("graph.row_sums", "graph.contraction", "problem.gradient_bound", "schedules.c1",
                 "schedules.c3", "noise.delta_moment"):
        assert f"PASS  {name}" in out
    assert "theta=1.00465" in out and "beta=0.999669" in out
    assert "p + (2delta - 2) q > 1): 1.4 > 1 [ok]" in out


def test_validate_bad_schedule(tmp_path, capsys):
    cfg = write(tmp_path, "p04.toml", "[schedules]\nalpha_exp = 0.4\n")
    assert main(["validate", "--config", cfg]) == 1
    out = capsys.readouterr().out
    assert "FAIL  schedules.c1" in out
    assert "2p > 1): 0.8 > 1 [FAIL]" in out
    # the override downgrades schedule failures only
    assert main(["validate", "--config", cfg, "--override-schedule-check"]) == 0


def test_validate_asymmetric_matrix(tmp_path, capsys):
    text = """
[problem]
preset = "quadratic"
centers = [[0.0], [1.0]]
[graph]
preset = "matrix"
weights = [[0.5, 0.5], [0.1, 0.9]]
[noise]
kind = "gaussian"
[schedules]
tau_coeff = 10.0
"""
    cfg = write(tmp_path, "asym.toml", text)
    assert main(["validate", "--config", cfg, "--override-schedule-check"]) == 1
    out = capsys.readouterr().out
    assert "FAIL  graph.col_sums" in out
    assert "PASS  graph.row_sums" in out


def test_parse_error_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, "bad.toml", "[run\nT = 3\n")
    assert main(["validate", "--config", cfg]) == 2
    assert "line 1, column" in capsys.readouterr().err


def test_missing_config_exit_code(tmp_path, capsys):
    assert main(["validate", "--config", str(tmp_path / "nope.toml")]) == 2


def test_unknown_sweep_param_exit_code(short_config, tmp_path, capsys):
    code = main(["sweep", "--config", str(short_config), "--param", "gamma", "--values", "1,2", "--out",
                 str(tmp_path / "o")])
    assert code == 2
    assert "tail_index" in capsys.readouterr().err


def test_oracle_artifact(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["oracle", "--config", "fig2", "--out", str(out)]) == 0
    first = (out / "oracle.json").read_text()
    data = json.loads(first)
    (entry,) = data["problems"]
    assert entry["residual"] <= 1e-10
    inst, _ = build_paper_instance()
    theta = np.array(entry["theta_star"])
    assert fixed_point_residual(inst, theta, entry["step"]) <= 1e-10
    assert main(["oracle", "--config", "fig2", "--out", str(out)]) == 0
    assert (out / "oracle.json").read_text() == first


def test_quadratic_oracle(tmp_path):
    out = tmp_path / "q"
    assert main(["oracle", "--config", "quadratic", "--out", str(out)]) == 0
    (entry,) = json.loads((out / "oracle.json").read_text())["problems"]
    np.testing.assert_allclose(entry["theta_star"], [1.0, 0.0], atol=1e-10)


def test_fig4_oracle_has_two_problems(tmp_path):
    out = tmp_path / "f4"
    assert main(["oracle", "--config", "fig4", "--out", str(out)]) == 0
    problems = json.loads((out / "oracle.json").read_text())["problems"]
    assert sorted(p["problem"]["mu"] for p in problems) == [1.0, 10.0]


def test_run_writes_artifacts_and_is_reproducible(short_config, tmp_path, capsys):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", str(short_config), "--out", str(out1)]) == 0
    assert main(["run", "--config", str(short_config), "--out", str(out2), "--jobs", "2"]) == 0
    runs = sorted(p.relative_to(out1) for p in out1.rglob("*.csv"))
    assert [str(p) for p in runs] == [
        "aggregate.csv", "raw/clipping_on/seed_0.csv", "raw/clipping_on/seed_1.csv", "summary.csv",
    ]
    for rel in runs + [out1 / "manifest.json"]:
        assert (out1 / rel).read_bytes() == (out2 / rel).read_bytes()
    trace = read_run_csv(out1 / "raw/clipping_on/seed_0.csv")
    np.testing.assert_array_equal(trace["k"], np.arange(10, 101, 10))
    assert np.all(np.diff(trace["dist_to_opt"][:3]) != 0)
    manifest = json.loads((out1 / "manifest.json").read_text())
    assert manifest["seeds"] == [0, 1]
    assert manifest["divergence_counts"] == {"clipping=on": 0}
    assert len(read_aggregate_csv(out1 / "aggregate.csv")) == 10


def test_seed_flag_changes_results(short_config, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["run", "--config", str(short_config), "--out", str(a)])
    main(["run", "--config", str(short_config), "--out", str(b), "--seed", "5"])
    assert json.loads((b / "manifest.json").read_text())["seeds"] == [5, 6]
    assert (a / "aggregate.csv").read_bytes() != (b / "aggregate.csv").read_bytes()


def test_run_uses_oracle_file(short_config, tmp_path):
    out = tmp_path / "o"
    main(["oracle", "--config", str(short_config), "--out", str(out)])
    oracle = json.loads((out / "oracle.json").read_text())
    oracle["problems"][0]["theta_star"] = [0.0] * 6
    (out / "oracle.json").write_text(json.dumps(oracle))
    assert main(["run", "--config", str(short_config), "--out", str(out)]) == 0
    assert json.loads((out / "manifest.json").read_text())["theta_star"].popitem()[1] == [0.0] * 6


def test_run_refuses_invalid_schedules(tmp_path, capsys):
    cfg = write(tmp_path, "bad.toml", SHORT + "[schedules]\ntau_exp = 0.0\n")
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    assert "override-schedule-check" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o"), "--override-schedule-check"]) == 0


def test_single_value_sweep_matches_run(short_config, tmp_path):
    main(["run", "--config", str(short_config), "--out", str(tmp_path / "r")])
    main(["sweep", "--config", str(short_config), "--param", "tail_index", "--values", "2",
          "--out", str(tmp_path / "s")])
    run_rows = read_aggregate_csv(tmp_path / "r" / "aggregate.csv")
    sweep_rows = read_aggregate_csv(tmp_path / "s" / "aggregate.csv")
    assert sweep_rows[0]["sweep_id"] == "tail_index=2,clipping=on"
    strip = lambda rows: [{k: v for k, v in r.items() if k != "sweep_id"} for r in rows]  # noqa: E731
    assert strip(run_rows) == strip(sweep_rows)
    assert (tmp_path / "s" / "sweep_tail_index.csv").exists()


def test_sweep_clipping(short_config, tmp_path, capsys):
    out = tmp_path / "s"
    assert main(["sweep", "--config", str(short_config), "--param", "clipping", "--values", "on,off",
                 "--out", str(out)]) == 0
    lines = (out / "sweep_clipping.csv").read_text().splitlines()
    assert lines[0] == "sweep_id,final_k,final_median,auc_median,n_runs,n_divergent"
    assert [ln.split(",")[0] for ln in lines[1:]] == ["clipping=on", "clipping=off"]


def test_out_dir_from_environment(short_config, tmp_path, monkeypatch):
    monkeypatch.setenv("CLIPDSP_OUT", str(tmp_path / "env"))
    assert main(["run", "--config", str(short_config)]) == 0
    assert (tmp_path / "env" / "manifest.json").exists()


def test_out_dir_from_config(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("CLIPDSP_OUT", str(tmp_path / "env"))
    cfg = write(tmp_path, "c.toml", SHORT + '[output]\ndir = "from_config"\n')
    assert main(["run", "--config", cfg]) == 0
    assert (tmp_path / "from_config" / "manifest.json").exists()
    assert not (tmp_path / "env").exists()


def test_default_out_dir(short_config, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("CLIPDSP_OUT", raising=False)
    assert main(["run", "--config", str(short_config)]) == 0
    assert (tmp_path / "clipdsp-out" / "summary.csv").exists()


def test_diverged_runs_exit_3(tmp_path, capsys):
    # steps of size 1e308 overflow to inf, and projecting inf onto the ball gives nan
    text = """
[problem]
omega = "ball"
[schedules]
alpha_coeff = 1e308
alpha_exp = 0.0
tau_coeff = 1e308
tau_exp = 0.0
[run]
T = 100
seeds = 2
override_schedule_check = true
"""
    cfg = write(tmp_path, "div.toml", text)
    code = main(["run", "--config", cfg, "--out", str(tmp_path / "o")])
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert code == 3
    assert manifest["diverged_runs"]["clipping=on"] == [0, 1]
    assert "diverged 2/2" in capsys.readouterr().out


def test_version(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert "clipdsp 0.1.0" in capsys.readouterr().out
