import json

from cdmsim.cli import build_parser, main
from cdmsim.config_io import DEFAULTS, parse_manifest

FAST = (
    "params.sigma_q1 = 0.1\n"
    "params.sigma_q2 = 0.1\n"
    "params.sigma_r_prime1 = 0.08\n"
    "params.sigma_r_prime2 = 0.08\n"
    "params.q1 = 0.12\n"
    "params.q2 = 0.08\n"
    "params.r_prime1 = 0.2\n"
    "params.r_prime2 = 0.15\n"
    "params.k_decay1 = 0.05\n"
    "params.k_decay2 = 0.05\n"
    "integrator.dt = 0.05\n"
    "integrator.t_max = 40\n"
    "sweep.thetas = 0.3,0.5\n"
    "sweep.trials = 40\n"
)


def write_config(tmp_path, text=FAST):
    path = tmp_path / "exp.cfg"
    path.write_text(text)
    return str(path)


def read_rows(path):
    return path.read_text().strip().split("\n")


def test_simulate_row_count_and_manifest(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    assert main(["simulate", cfg, "--out", str(out)]) == 0
    rows = read_rows(out / "trajectory.csv")
    assert len(rows) == 1 + int(40 / 0.05) + 1  # header + floor(t_max/dt)+1
    fields = parse_manifest((out / "manifest.txt").read_text())
    assert fields["files.0"] == "trajectory.csv"
    assert fields["seed"] == "0"
    assert "wrote" in capsys.readouterr().out


def test_missing_config_names_path(tmp_path, capsys):
    missing = tmp_path / "nope.cfg"
    assert main(["simulate", str(missing)]) == 2
    assert str(missing) in capsys.readouterr().err


def test_invalid_config_exits_2(tmp_path, capsys):
    cfg = write_config(tmp_path, "params.quorum_T = 7\n")
    assert main(["simulate", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "params.quorum_T" in capsys.readouterr().err


def test_usage_errors_exit_1(capsys):
    assert main([]) == 1
    assert main(["frobnicate", "x"]) == 1
    capsys.readouterr()


def test_seed_override_changes_data_not_schema(tmp_path):
    cfg = write_config(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", cfg, "--seed", "6", "--out", str(a)]) == 0
    assert main(["simulate", cfg, "--seed", "7", "--out", str(b)]) == 0
    rows_a, rows_b = read_rows(a / "trajectory.csv"), read_rows(b / "trajectory.csv")
    assert rows_a[0] == rows_b[0]
    assert len(rows_a) == len(rows_b)
    assert rows_a[1:] != rows_b[1:]


def test_key_value_override_equals_flag_forms(tmp_path):
    cfg = write_config(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", cfg, "seed=9", "--out", str(a)]) == 0
    assert main(["simulate", cfg, "--seed", "9", "--out", str(b)]) == 0
    assert (a / "trajectory.csv").read_bytes() == (b / "trajectory.csv").read_bytes()


def test_sweep_output_schema_and_parallel_determinism(tmp_path):
    cfg = write_config(tmp_path)
    serial, par = tmp_path / "s", tmp_path / "p"
    assert main(["sweep", cfg, "--out", str(serial)]) == 0
    assert main(["sweep", cfg, "--jobs", "2", "--out", str(par)]) == 0
    rows = read_rows(serial / "sweep.csv")
    assert rows[0] == "theta,mean_decision_time,error_rate,timeout_rate,trials"
    assert len(rows) == 3
    assert (serial / "sweep.csv").read_bytes() == (par / "sweep.csv").read_bytes()


def test_compare_pairs_rows_and_shares_trial_streams(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "cmp"
    ladder = "sweep.thetas=0.3,0.5,0.7"
    assert main(["compare", cfg, ladder, "--out", str(out)]) == 0
    rows = read_rows(out / "compare.csv")
    assert rows[0] == "model,theta,mean_decision_time,error_rate,timeout_rate,trials"
    assert len(rows) == 7  # header + 2 models x 3 thetas
    assert sum(r.startswith("baseline,") for r in rows[1:]) == 3
    assert sum(r.startswith("modified,") for r in rows[1:]) == 3
    # common random numbers: the baseline rows equal a standalone baseline sweep
    alone = tmp_path / "alone"
    assert main(["sweep", cfg, "model=baseline", ladder, "--out", str(alone)]) == 0
    sweep_rows = read_rows(alone / "sweep.csv")[1:]
    baseline_rows = [r.split(",", 1)[1] for r in rows[1:] if r.startswith("baseline,")]
    assert baseline_rows == sweep_rows
    # no orphan outputs: the directory holds the manifest plus listed files
    assert sorted(p.name for p in out.iterdir()) == ["compare.csv", "manifest.txt"]


def test_fit_outputs_coefficients_and_dense_grid(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = tmp_path / "fit"
    assert main(["fit", cfg, "--out", str(out)]) == 0
    coeffs = read_rows(out / "fit_coefficients.csv")
    assert len(coeffs) == 1 and len(coeffs[0].split(",")) == 6
    rows = read_rows(out / "fit_evaluation.csv")
    assert rows[0] == "u,refit,step_quintic,gain_quintic"
    assert len(rows) == 202
    first = rows[1].split(",")
    assert float(first[0]) == 0.0
    assert float(first[2]) == -0.11   # reference step estimate at u=0
    assert float(first[3]) == 0.9     # reference gain multiplier at u=0
    last = rows[-1].split(",")
    assert abs(float(last[2]) - 1.14) < 1e-9
    assert abs(float(last[3]) - 2.15) < 1e-9
    # the refit and the reference step estimate both climb through the
    # transition region around the quorum (T = 0.3 here)
    by_u = {round(float(r.split(",")[0]), 3): r.split(",") for r in rows[1:]}
    for col in (1, 2):
        assert float(by_u[0.5][col]) > float(by_u[0.1][col])
    assert "rmse=" in capsys.readouterr().out


def test_simulate_dispatches_to_agent_model(tmp_path):
    cfg = write_config(tmp_path, FAST + "model = agents\n")
    out = tmp_path / "sa"
    assert main(["simulate", cfg, "--out", str(out)]) == 0
    rows = read_rows(out / "trajectory.csv")
    y1 = [float(r.split(",")[1]) for r in rows[1:]]
    assert all(v == int(v) for v in y1)  # agent counts, not mean-field reals


def test_agents_outputs_trajectory_and_outcome(tmp_path):
    cfg = write_config(tmp_path, FAST + "model = agents\nagents.quality2 = 0.8\n")
    out = tmp_path / "ag"
    assert main(["agents", cfg, "--out", str(out)]) == 0
    record = json.loads((out / "outcome.jsonl").read_text())
    assert set(record) == {"site", "decision_time", "correct", "timeout"}
    rows = read_rows(out / "trajectory.csv")
    assert rows[0] == "t,y1,y2,s"


def test_drift_output_schema(tmp_path, capsys):
    cfg = write_config(tmp_path, FAST + "model = modified\ndrift.replicates = 50\n"
                       "drift.x1_points = 11\n")
    out = tmp_path / "dr"
    assert main(["drift", cfg, "--out", str(out)]) == 0
    rows = read_rows(out / "drift.csv")
    assert rows[0] == "x1,x2,mean_dx1,var_dx1"
    assert len(rows) == 12
    assert "drift_constancy_diagnostic=" in capsys.readouterr().out


def test_all_timeouts_exit_3(tmp_path, capsys):
    cfg = write_config(tmp_path, FAST + "sweep.thetas = 1.0\nintegrator.t_max = 2\n")
    assert main(["sweep", cfg, "--out", str(tmp_path / "o")]) == 3
    err = capsys.readouterr().err
    assert "theta=1.0" in err and "error rate undefined" in err


def test_help_lists_every_config_default():
    text = build_parser().format_help()
    for key in DEFAULTS:
        assert key in text
