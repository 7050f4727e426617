import json

import pytest

from igr import cli


def _run(capsys, *argv):
    rc = cli.main(list(argv))
    captured = capsys.readouterr()
    return rc, captured.out, captured.err


FIT_ARGS = (
    "fit", "--model", "igr-i", "--target", "custom:0.2,0.8",
    "--tau", "0.5", "--steps", "30", "--seed", "1",
)


def test_fit_prints_report(capsys):
    rc, out, err = _run(capsys, *FIT_ARGS)
    assert rc == 0
    payload = json.loads(out)
    assert payload["config"]["model"] == "igr-i"
    assert payload["config"]["tau"] == 0.5
    assert 0.0 <= payload["metrics"]["tv"] <= 1.0
    assert len(payload["trajectory"]) == 30


def test_fit_writes_output_directory(tmp_path, capsys):
    rc, out, err = _run(capsys, *FIT_ARGS, "--out", str(tmp_path / "run"))
    assert rc == 0
    assert out == ""
    results = json.loads((tmp_path / "run" / "results.json").read_text())
    assert results["config"]["seed"] == 1
    csv = (tmp_path / "run" / "pmf.csv").read_text().splitlines()
    assert csv[0] == "category,target_prob,recovered_prob"


def test_rerun_outputs_identical_modulo_wall_time(tmp_path, capsys):
    rc_a, _, _ = _run(capsys, *FIT_ARGS, "--out", str(tmp_path / "a"))
    rc_b, _, _ = _run(capsys, *FIT_ARGS, "--out", str(tmp_path / "b"))
    assert rc_a == rc_b == 0
    pa = json.loads((tmp_path / "a" / "results.json").read_text())
    pb = json.loads((tmp_path / "b" / "results.json").read_text())
    pa.pop("wall_seconds")
    pb.pop("wall_seconds")
    assert pa == pb
    assert (tmp_path / "a" / "pmf.csv").read_bytes() == (tmp_path / "b" / "pmf.csv").read_bytes()


def test_sweep_selects_best(capsys):
    rc, out, err = _run(
        capsys,
        "sweep", "--model", "igr-i", "--target", "custom:0.9,0.1",
        "--tau-grid", "0.25,0.5", "--steps", "30", "--seed", "0",
    )
    assert rc == 0
    payload = json.loads(out)
    assert set(payload) >= {"best", "runs"}
    assert len(payload["runs"]) == 2
    taus = [run["config"]["tau"] for run in payload["runs"]]
    assert taus == [0.25, 0.5]
    assert payload["best"]["metrics"]["tv"] == min(r["metrics"]["tv"] for r in payload["runs"])


def test_config_file_with_flag_override(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "model": "igr-i", "target": "custom:0.2,0.8",
        "tau": 0.5, "steps": 30, "seed": 1,
    }))
    rc, out, _ = _run(capsys, "fit", "--config", str(cfg), "--steps", "12")
    assert rc == 0
    payload = json.loads(out)
    assert payload["config"]["steps"] == 12  # flag wins
    assert payload["config"]["tau"] == 0.5  # file value survives


@pytest.mark.parametrize(
    "argv",
    [
        ("fit", "--model", "igr-i"),  # missing target
        ("fit", "--target", "custom:0.2,0.8"),  # missing model
        ("fit", "--model", "igr-i", "--target", "poisson:-3", "--tau", "0.5"),
        ("fit", "--model", "gs", "--target", "binomial:12,0.3", "--k", "5", "--tau", "0.5"),
        ("fit", "--model", "igr-i", "--target", "custom:0.2,0.8",
         "--tau", "0.5", "--tau-grid", "0.1,0.2"),
    ],
)
def test_config_errors_exit_one(capsys, argv):
    rc, out, err = _run(capsys, *argv)
    assert rc == 1
    assert "config error:" in err


def test_bad_config_file_exits_one(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    rc, _, err = _run(capsys, "fit", "--config", str(missing))
    assert rc == 1
    notdict = tmp_path / "list.json"
    notdict.write_text("[1, 2]")
    rc, _, err = _run(capsys, "fit", "--config", str(notdict))
    assert rc == 1
    broken = tmp_path / "broken.json"
    broken.write_text("{")
    rc, _, err = _run(capsys, "fit", "--config", str(broken))
    assert rc == 1


def test_usage_problems_exit_one(capsys):
    rc, _, _ = _run(capsys, "fit", "--model", "igr-i", "--no-such-flag")
    assert rc == 1
    rc, _, _ = _run(capsys)  # no subcommand
    assert rc == 1


def test_help_exits_zero(capsys):
    assert cli.main(["--help"]) == 0
    capsys.readouterr()


def test_runtime_failure_exits_two(capsys):
    rc, _, err = _run(
        capsys,
        "sweep", "--model", "igr-sb", "--target", "poisson:1",
        "--rho", str(1 - 1e-6), "--tau-grid", "0.25,0.4",
        "--steps", "5", "--batch", "4", "--seed", "0",
    )
    assert rc == 2
    assert "error:" in err


def test_target_subcommand_prints_pmf(capsys):
    rc, out, _ = _run(capsys, "target", "--target", "binomial:12,0.3")
    assert rc == 0
    payload = json.loads(out)
    assert payload["target"] == "binomial:12.0,0.3"
    probs = payload["probs"]
    assert len(probs) == 13
    assert sum(probs) == pytest.approx(1.0, abs=1e-12)


def test_target_subcommand_writes_file(tmp_path, capsys):
    rc, out, _ = _run(capsys, "target", "--target", "poisson:1", "--out", str(tmp_path))
    assert rc == 0
    assert out == ""
    payload = json.loads((tmp_path / "target.json").read_text())
    assert sum(payload["probs"]) == pytest.approx(1.0, abs=1e-12)


def test_check_grad_reports_all_pullbacks(capsys):
    rc, out, _ = _run(capsys, "check-grad")
    assert rc == 0
    lines = [line for line in out.splitlines() if line]
    assert len(lines) == 11
    assert all(line.startswith("PASS ") for line in lines)
