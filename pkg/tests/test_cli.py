import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from ticksim import cli
from ticksim.clockmodel import quasi_ideal_clock, thermodynamic_clock

from conftest import random_spec

LADDER1 = {"builtin": "ladder", "params": {"d": 1, "n_ticks": 2}}


def run(tmp_path, command, config, *extra, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(config))
    out = tmp_path / f"out_{command}_{path.stem}"
    code = cli.main([command, "--config", str(path), "--out", str(out), *extra])
    return code, out


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_delay_ladder_d2_density(tmp_path):
    cfg = {"clock": {"builtin": "ladder", "params": {"d": 2, "n_ticks": 2}},
           "grid": {"t_max": 40.0, "steps": 2000}, "k": 1}
    code, out = run(tmp_path, "delay", cfg)
    assert code == 0
    rows = read_csv(out / "delay_k1.csv")
    t = np.array([float(r["t"]) for r in rows])
    p = np.array([float(r["density"]) for r in rows])
    assert len(rows) == 2001
    assert np.max(np.abs(p - t * np.exp(-t))) <= 1e-8
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "delay" and manifest["config_hash"] == cli.config_hash(cfg)
    assert set(manifest["files"]) == {"delay_k1.csv", "manifest.json"}


def test_missing_config_exits_2(tmp_path, capsys):
    code = cli.main(["delay", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)])
    assert code == 2
    assert "error" in capsys.readouterr().err


def test_bad_json_and_bad_args(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    assert cli.main(["delay", "--config", str(path), "--out", str(tmp_path)]) == 2
    assert cli.main(["delay"]) == 2
    assert cli.main(["frobnicate", "--config", str(path)]) == 2


def test_delay_k_beyond_register_exits_2(tmp_path, capsys):
    cfg = {"clock": LADDER1, "grid": {"t_max": 10.0, "steps": 100}, "k": 3}
    assert run(tmp_path, "delay", cfg)[0] == 2
    assert "records at most" in capsys.readouterr().err


def test_delay_short_horizon_warns_with_exit_3(tmp_path, capsys):
    cfg = {"clock": LADDER1, "grid": {"t_max": 1.0, "steps": 100}, "k": 1}
    code, out = run(tmp_path, "delay", cfg)
    assert code == 3 and (out / "delay_k1.csv").exists()
    assert "t_max=2" in capsys.readouterr().err


def test_accuracy_command(tmp_path):
    cfg = {"clock": {"builtin": "ladder", "params": {"d": 3, "n_ticks": 2}},
           "grid": {"t_max": 120.0, "steps": 12000}, "k": [1, 2]}
    code, out = run(tmp_path, "accuracy", cfg)
    assert code == 0
    rows = read_csv(out / "accuracy.csv")
    assert [int(r["k"]) for r in rows] == [1, 2]
    for r in rows:
        assert float(r["R"]) == pytest.approx(3 * int(r["k"]), abs=1e-3)


def test_accuracy_empty_k_and_mass_deficit(tmp_path):
    cfg = {"clock": LADDER1, "grid": {"t_max": 10.0, "steps": 100}, "k": []}
    assert run(tmp_path, "accuracy", cfg)[0] == 2
    cfg = {"clock": LADDER1, "grid": {"t_max": 1.0, "steps": 100}, "k": 1}
    assert run(tmp_path, "accuracy", cfg)[0] == 3


def test_trajectories_byte_identical(tmp_path):
    cfg = {"clock": {"builtin": "ladder", "params": {"d": 2, "n_ticks": 3}},
           "trajectories": {"n": 500, "seed": 42, "t_max": 30.0, "k": [1, 2]}}
    code_a, out_a = run(tmp_path, "trajectories", cfg)
    code_b, out_b = run(tmp_path, "trajectories", cfg, "--threads", "3", name="again.json")
    assert code_a == code_b == 0
    assert (out_a / "ticks.csv").read_bytes() == (out_b / "ticks.csv").read_bytes()
    assert b"\r" not in (out_a / "ticks.csv").read_bytes()
    rows = read_csv(out_a / "empirical_accuracy.csv")
    assert [int(r["k"]) for r in rows] == [1, 2]
    assert int(rows[0]["n_used"]) + int(rows[0]["n_excluded"]) <= 500
    code_c, out_c = run(tmp_path, "trajectories", cfg, "--seed", "43", name="other.json")
    assert (out_a / "ticks.csv").read_bytes() != (out_c / "ticks.csv").read_bytes()


def test_trajectories_csv_parses_back_exactly(tmp_path):
    from ticksim.clockmodel import ladder_clock
    from ticksim.tickstats import sample_trajectories

    cfg = {"clock": {"builtin": "ladder", "params": {"d": 2, "n_ticks": 3}},
           "trajectories": {"n": 50, "seed": 7, "t_max": 20.0}}
    _, out = run(tmp_path, "trajectories", cfg)
    records = sample_trajectories(ladder_clock(2, n_ticks=3), 20.0, 50, 7)
    expected = [(r.trajectory_id, i, t) for r in records for i, t in enumerate(r.tick_times, 1)]
    parsed = [(int(r["trajectory_id"]), int(r["tick_index"]), float(r["time"]))
              for r in read_csv(out / "ticks.csv")]
    assert parsed == expected


def test_trajectories_atg(tmp_path):
    poisson = {"builtin": "ladder", "params": {"d": 1, "n_ticks": 1, "mode": "periodic"}}
    cfg = {"clock": poisson, "clock_b": poisson,
           "trajectories": {"n": 300, "seed": 1, "t_max": 30.0}}
    code, out = run(tmp_path, "trajectories", cfg)
    assert code == 0
    games = read_csv(out / "atg.csv")
    assert len(games) == 300
    assert {g["winner"] for g in games} <= {"a", "b", "draw", "none"}
    assert (out / "ticks_b.csv").exists()


def test_verify_ladder_all_pass(tmp_path):
    cfg = {"clock": {"builtin": "ladder", "params": {"d": 3, "n_ticks": 2}}}
    code, out = run(tmp_path, "verify", cfg)
    assert code == 0
    report = json.loads((out / "verify.json").read_text())
    assert set(cli.DEFAULT_CHECKS) <= set(report)
    for entry in report.values():
        assert entry["passed"] and {"max_deviation", "tolerance"} <= set(entry)


def test_verify_non_hermitian_hamiltonian_exits_2(tmp_path):
    section = cli.spec_to_config(random_spec(np.random.default_rng(1), d=2, n_ticks=1))
    section["explicit"]["h"][0][1] = [1.0, 0.0]
    section["explicit"]["h"][1][0] = [0.0, 0.0]
    assert run(tmp_path, "verify", {"clock": section})[0] == 2


def test_verify_expect_fail(tmp_path):
    check = {"name": "classical_clockwork", "params": {"basis": "computational", "t_max": 8.0, "steps": 40},
             "tol": 1e-12}
    cfg = {"clock": {"builtin": "quasi-ideal", "params": {"d": 8}}, "checks": [dict(check, expect="fail")]}
    code, out = run(tmp_path, "verify", cfg)
    assert code == 0
    assert json.loads((out / "verify.json").read_text())["classical_clockwork"]["passed"] is False
    cfg["checks"] = [check]
    assert run(tmp_path, "verify", cfg, name="strict.json")[0] == 5


def test_verify_resource_budget_exits_4(tmp_path):
    check = {"name": "measured_equivalence", "params": {"times": [0.1] * 8}}
    cfg = {"clock": {"builtin": "ladder", "params": {"d": 1, "n_ticks": 9}}, "checks": [check]}
    assert run(tmp_path, "verify", cfg)[0] == 4


def test_unknown_check_and_builtin(tmp_path):
    cfg = {"clock": LADDER1, "checks": ["bogus"]}
    assert run(tmp_path, "verify", cfg)[0] == 2
    cfg = {"clock": {"builtin": "sundial"}, "grid": {"t_max": 1.0, "steps": 10}}
    assert run(tmp_path, "delay", cfg)[0] == 2


@pytest.mark.parametrize("make", [
    lambda: random_spec(np.random.default_rng(9), d=3, n_ticks=2, n_l=2, n_j=2),
    lambda: thermodynamic_clock({"d": 2}, n_ticks=2),
    lambda: quasi_ideal_clock(6, n_ticks=2, mode="periodic"),
])
def test_spec_round_trip(make):
    spec = make()
    back = cli.spec_from_config(json.loads(json.dumps(cli.spec_to_config(spec))))
    assert back.mode is spec.mode and back.n_ticks == spec.n_ticks and back.k0 == spec.k0
    for a, b in [(spec.h, back.h), (spec.rho_c0, back.rho_c0)] + list(zip(spec.l_ops + spec.j_ops,
                                                                         back.l_ops + back.j_ops)):
        assert np.max(np.abs(a - b)) <= 1e-15
    assert np.max(np.abs(spec.generators.full.mat - back.generators.full.mat)) <= 1e-15


def test_config_hash_ignores_key_order():
    a = {"clock": {"builtin": "ladder", "params": {"d": 2, "n_ticks": 3}}, "k": 1}
    b = {"k": 1, "clock": {"params": {"n_ticks": 3, "d": 2}, "builtin": "ladder"}}
    assert cli.config_hash(a) == cli.config_hash(b)
    assert cli.config_hash(a) != cli.config_hash(dict(a, k=2))


def test_module_entry_point(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"clock": LADDER1, "grid": {"t_max": 30.0, "steps": 300}}))
    proc = subprocess.run([sys.executable, "-m", "ticksim", "delay", "--config", str(path),
                           "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "o" / "delay_k1.csv").exists()
