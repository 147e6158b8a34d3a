import json

import yaml

from twbh import cli
from twbh.correlations import analyze
from twbh.engine import MomentAccumulator, batch_snapshots, run_ensemble, snapshot
from twbh.experiment import builtin_spec, load_spec, sample_grid


def write_spec(tmp_path, chi=0.01, **ensemble):
    doc = {
        "chain": {"chi": chi, "damp_well": 3, "t_final": 2.0, "sample_every": 1.0},
        "ensemble": {"n_trajectories": 400, "base_seed": 4, "n_batches": 20, **ensemble},
        "analysis": {"times": [2.0]},
        "output": {"dir": str(tmp_path / "run")},
    }
    path = tmp_path / "spec.yaml"
    path.write_text(yaml.safe_dump(doc))
    return path


def test_simulate_then_analyze_matches_in_process(tmp_path, capsys):
    spec_path = write_spec(tmp_path)
    assert cli.main(["-q", "simulate", "--spec", str(spec_path)]) == 0
    out = tmp_path / "run"
    header = (out / "populations.csv").read_text().splitlines()[0]
    assert header == ("t,N1,N1_err,N2,N2_err,N3,N3_err,N1_chi0,N2_chi0,N3_chi0,"
                      "N1_meanfield,N2_meanfield,N3_meanfield")
    assert cli.main(["-q", "analyze", "--checkpoint", str(out / "checkpoint.npz"), "--time", "2",
                     "--out", str(out)]) == 0
    spec = load_spec(spec_path)
    acc = run_ensemble(spec.chain, spec.plan)
    assert acc.equals(MomentAccumulator.load(out / "checkpoint.npz"))
    direct = analyze(snapshot(acc, 2.0), batch_snapshots(acc, 2.0), time=2.0)
    assert (out / "report.csv").read_text() == direct.to_csv()
    assert json.loads((out / "report.json").read_text())["n_samples"] == 400


def test_outputs_are_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        d.mkdir()
        assert cli.main(["-q", "simulate", "--spec", str(write_spec(d))]) == 0
    assert (a / "run/populations.csv").read_text() == (b / "run/populations.csv").read_text()


def test_overrides(tmp_path):
    spec_path = write_spec(tmp_path)
    assert cli.main(["-q", "simulate", "--spec", str(spec_path), "--trajectories", "60", "--seed", "9",
                     "--out", str(tmp_path / "o")]) == 0
    acc = MomentAccumulator.load(tmp_path / "o/checkpoint.npz")
    assert acc.count == 60 and acc.plan.base_seed == 9 and acc.plan.n_batches == 2


def test_scan_angle(tmp_path, capsys):
    spec_path = write_spec(tmp_path)
    cli.main(["-q", "simulate", "--spec", str(spec_path)])
    capsys.readouterr()
    assert cli.main(["-q", "scan-angle", "--checkpoint", str(tmp_path / "run/checkpoint.npz"),
                     "--pair", "13", "--step", "45"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "theta,EPR13,EPR13_err,EPR31,EPR31_err"
    assert [l.split(",")[0] for l in lines[1:]] == ["0.0", "45.0", "90.0", "135.0"]


def test_oracle_check_exit_codes(tmp_path):
    spec_path = write_spec(tmp_path, chi=0.0)
    assert cli.main(["-q", "oracle-check", "--spec", str(spec_path)]) == 0
    assert cli.main(["-q", "oracle-check", "--spec", str(spec_path), "--noise-scale", "2"]) == 1


def test_oracle_check_needs_linear_chain(tmp_path):
    assert cli.main(["-q", "oracle-check", "--spec", str(write_spec(tmp_path))]) == 1


def test_error_exit_codes(tmp_path):
    assert cli.main(["-q", "simulate", "--spec", str(tmp_path / "missing.yaml")]) == 2
    bad = tmp_path / "bad.yaml"
    bad.write_text("chain: {damp_well: 7}\n")
    assert cli.main(["-q", "simulate", "--spec", str(bad)]) == 1
    spec_path = write_spec(tmp_path)
    cli.main(["-q", "simulate", "--spec", str(spec_path)])
    assert cli.main(["-q", "analyze", "--checkpoint", str(tmp_path / "run/checkpoint.npz"), "--time", "1.5"]) == 1
    assert cli.main(["-q", "analyze", "--checkpoint", str(tmp_path / "run/checkpoint.npz"),
                     "--criteria", "EPR19"]) == 1
    assert cli.main(["-q", "reproduce", "table-9"]) == 1


def test_builtin_specs():
    s = builtin_spec(3, 1e-2, 1000)
    assert s.chain.t_final == 80.0 and s.times == (80.0,) and s.plan.n_batches == 10
    assert builtin_spec(1, 1e-3, 1000).chain.t_final == 40.0
    assert builtin_spec(2, 1e-3, 1000).chain.t_final == 40.0
    assert sample_grid(2.0, 0.5, 1e-3) == (0.0, 0.5, 1.0, 1.5, 2.0)
    assert builtin_spec(3, 1e-2, 100_000).plan.n_batches == 100
    assert builtin_spec(3, 1e-2, 1001).plan.n_batches == 7
