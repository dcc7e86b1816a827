import json

import numpy as np
import pytest

from govsim import cli, harness
from govsim.errors import GovsimError, InvalidParameterError
from govsim.harness import ExperimentConfig, SweepResult, emit_csv, read_sweep, run_experiment

A, B, C = 0.0174, 0.0299, 0.0821


def _small(**kw):
    base = dict(grid_side=4, subgroup_sizes=[1, 2, 4], steps=20, trials=3, seed=5)
    base.update(kw)
    return ExperimentConfig(**base)


def _synthetic_sweep(path):
    xs = np.round(np.arange(1, 21) * 0.05, 10)
    lines = [harness.SWEEP_HEADER]
    for i, x in enumerate(xs):
        lines.append(f"norm-learning,{i + 1},{harness.fmt(A / (x + B) + C)},{harness.fmt(x)},0,0,1")
    path.write_text("\n".join(lines) + "\n")


def test_trial_seeds_stable_under_extension():
    short = harness.trial_seeds(9, "norm-learning", 4, 3)
    long = harness.trial_seeds(9, "norm-learning", 4, 10)
    for s, l in zip(short, long):
        assert s.generate_state(4).tolist() == l.generate_state(4).tolist()
    other = harness.trial_seeds(9, "el-farol", 4, 1)[0]
    assert other.generate_state(4).tolist() != short[0].generate_state(4).tolist()


def test_byte_identical_outputs(tmp_path):
    cfg = ExperimentConfig(grid_side=4, subgroup_sizes=[1], steps=1, trials=1, seed=3)
    run_experiment(cfg, output_dir=tmp_path / "a")
    run_experiment(cfg, output_dir=tmp_path / "b")
    for name in ("sweep.csv", "series_1.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_single_action_has_no_anarchy():
    res = run_experiment(ExperimentConfig(grid_side=2, num_actions=1, steps=1, trials=2), write=False)
    assert [s.poa for s in res.samples] == [0.0, 0.0]
    assert [s.pom for s in res.samples] == [0.0, 1.0]


def test_samples_in_unit_interval():
    for case in harness.CASES:
        cfg = _small(case=case)
        res = run_experiment(cfg, write=False)
        assert all(0.0 <= s.poa <= 1.0 and 0.0 <= s.pom <= 1.0 for s in res.samples)
        assert [len(v) for c in res.cells for v in c.series_mean.values()] == [20] * (3 * 3)


def test_keep_runs_records():
    res = run_experiment(_small(), write=False, keep_runs=True)
    run = res.cells[0].runs[1]
    assert len(run.series["coordination"]) == 20 and 0.0 <= run.final_metric <= 1.0


def test_bar_case_threshold_default():
    assert ExperimentConfig(case="el-farol", grid_side=10).bar_threshold == 60
    assert ExperimentConfig(case="el-farol").bar_threshold == 540


def test_config_validation(tmp_path):
    with pytest.raises(InvalidParameterError):
        ExperimentConfig(grid_side=4, subgroup_sizes=[5])
    with pytest.raises(InvalidParameterError):
        ExperimentConfig(trials=0)
    with pytest.raises(InvalidParameterError):
        ExperimentConfig(case="traffic")
    with pytest.raises(InvalidParameterError):
        ExperimentConfig(alpha0=1.5)
    with pytest.raises(InvalidParameterError):
        ExperimentConfig.from_dict({"grid_sid": 4})
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(GovsimError, match="bad.json"):
        ExperimentConfig.from_file(bad)


def test_emit_empty_sweep_writes_nothing(tmp_path):
    empty = SweepResult(ExperimentConfig(grid_side=4), [], [])
    with pytest.raises(GovsimError):
        emit_csv(empty, tmp_path / "out")
    assert not (tmp_path / "out").exists()


def test_one_sample_two_lines(tmp_path):
    res = run_experiment(ExperimentConfig(grid_side=3, subgroup_sizes=[1], steps=2, trials=1),
                         output_dir=tmp_path)
    assert len((tmp_path / "sweep.csv").read_text().splitlines()) == 2
    assert res.samples[0].pom == 0.0
    assert not (tmp_path / "pog.json").exists()


def test_series_header_and_lengths(tmp_path):
    run_experiment(_small(), output_dir=tmp_path)
    lines = (tmp_path / "series_2.csv").read_text().splitlines()
    assert lines[0] == "step,metric,mean,stddev"
    assert len(lines) == 1 + 20 * 3


def test_round_trip(tmp_path):
    res = run_experiment(_small(), output_dir=tmp_path)
    back = read_sweep(tmp_path / "sweep.csv")
    for s, r in zip(res.samples, back):
        for field in ("poa", "pom", "raw_performance", "raw_cost"):
            assert getattr(r, field) == float(harness.fmt(getattr(s, field)))
        assert r.n == s.n


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(harness.OUTPUT_ENV, str(tmp_path / "env"))
    run_experiment(_small(trials=1, steps=2))
    assert (tmp_path / "env" / "sweep.csv").exists()


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(GovsimError):
        run_experiment(_small(trials=1, steps=2), output_dir=blocker / "sub")


def test_bar_run_writes_benchmark_and_pog(tmp_path):
    cfg = ExperimentConfig(case="el-farol", grid_side=10, steps=30, trials=2)
    res = run_experiment(cfg, output_dir=tmp_path)
    assert (tmp_path / "series_benchmark.csv").exists()
    assert res.fit is not None
    payload = json.loads((tmp_path / "pog.json").read_text())
    assert set(payload) >= {"a", "b", "c", "residual", "gamma", "optimal_x", "optimal_pog", "optimal_n"}
    assert harness.fit_sweep(tmp_path / "sweep.csv")[1].optimal_n in cfg.sizes


# --- command line ------------------------------------------------------------


def test_cli_run_missing_config(capsys):
    assert cli.main(["run", "missing.json"]) == 1
    err = capsys.readouterr().err.strip()
    assert "missing.json" in err and len(err.splitlines()) == 1


def test_cli_usage_errors():
    with pytest.raises(SystemExit) as exc:
        cli.main(["run", "x.json", "--bogus"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["replicate", "fig9"])
    assert exc.value.code == 2


def test_cli_fit_synthetic(tmp_path, capsys):
    sweep = tmp_path / "sweep.csv"
    _synthetic_sweep(sweep)
    assert cli.main(["fit", str(sweep)]) == 0
    payload = json.loads((tmp_path / "pog.json").read_text())
    assert abs(payload["a"] - A) < 1e-6
    assert abs(payload["b"] - B) < 1e-6
    assert abs(payload["c"] - C) < 1e-6
    assert "optimal_n=" in capsys.readouterr().out


def test_cli_run_with_overrides(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"grid_side": 4, "subgroup_sizes": [1, 2, 3, 4], "steps": 50}))
    out = tmp_path / "out"
    assert cli.main(["run", str(cfg), "--trials", "2", "--steps", "5", "--seed", "1",
                     "--out", str(out)]) == 0
    rows = (out / "sweep.csv").read_text().splitlines()
    assert len(rows) == 5 and rows[1].endswith(",2")
    assert len((out / "series_1.csv").read_text().splitlines()) == 1 + 5 * 3


def test_cli_fit_missing_file(capsys):
    assert cli.main(["fit", "nowhere/sweep.csv"]) == 1
    assert "nowhere/sweep.csv" in capsys.readouterr().err


@pytest.mark.slow
def test_seed_swap_stability():
    kw = dict(grid_side=10, subgroup_sizes=[4], trials=200, steps=1000)
    a = run_experiment(ExperimentConfig(seed=0, **kw), write=False, keep_runs=True)
    b = run_experiment(ExperimentConfig(seed=1, **kw), write=False, keep_runs=True)
    assert abs(a.samples[0].poa - b.samples[0].poa) <= 0.05
    assert not np.array_equal(a.cells[0].runs[0].series["coordination"],
                              b.cells[0].runs[0].series["coordination"])

