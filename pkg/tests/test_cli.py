import os
import shutil

import pytest

from seafusion import cli, io


def test_simulate_then_run(tmp_path):
    ds, out = str(tmp_path / "ds"), str(tmp_path / "out")
    assert cli.main(["simulate", "--output", ds, "--seed", "3", "--dropout", "0.1"]) == 0
    assert os.path.exists(os.path.join(ds, io.MANIFEST))
    assert cli.main(["run", "--dataset", ds, "--output", out, "--figures"]) == 0
    assert os.path.getsize(os.path.join(out, "obstacle_map.png")) > 0
    assert len(io.read_obstacle_maps(os.path.join(out, "obstacles.txt"))) == 100


def test_simulate_from_scenario_file(tmp_path):
    scene = tmp_path / "scene.yaml"
    scene.write_text("duration: 0.5\nboats:\n  - {length: 8, width: 3, height: 2, x: 25, y: 0}\n")
    ds = str(tmp_path / "ds")
    assert cli.main(["simulate", "--scenario", str(scene), "--output", ds]) == 0
    assert len(io.read_manifest(os.path.join(ds, io.MANIFEST))) == 5


def test_profile_and_project(sim_dataset, tmp_path, capsys):
    out = str(tmp_path / "prof")
    assert cli.main(["profile", "--dataset", sim_dataset, "--output", out, "--repetitions", "1"]) == 0
    assert "budget_violations:" in capsys.readouterr().out
    for name in ("profile_rows.csv", "profile_summary.csv", "profile.png"):
        assert os.path.exists(os.path.join(out, name))
    proj = str(tmp_path / "proj")
    assert cli.main(["project", "--dataset", sim_dataset, "--frame", "2", "--output", proj]) == 0
    assert os.path.exists(os.path.join(proj, "projection_000002.txt"))
    assert os.path.exists(os.path.join(proj, "projection_000002.png"))


def test_evaluate(sim_dataset, tmp_path, capsys):
    gt = os.path.join(sim_dataset, io.GROUND_TRUTH)
    out = str(tmp_path / "ev")
    code = cli.main(
        ["evaluate", "--predictions", gt, "--ground-truth", gt, "--iou-threshold", "0.15", "--output", out]
    )
    assert code == 0
    assert "mAP: 1.000000" in capsys.readouterr().out
    for name in ("report.txt", "report.json", "pr_curve.png"):
        assert os.path.exists(os.path.join(out, name))


def test_evaluate_requires_threshold(sim_dataset):
    gt = os.path.join(sim_dataset, io.GROUND_TRUTH)
    with pytest.raises(SystemExit) as exc:
        cli.main(["evaluate", "--predictions", gt, "--ground-truth", gt])
    assert exc.value.code == 2


def test_bad_config_fails_before_reading_data(tmp_path):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("cluster_tolerance: -1\n")
    out = tmp_path / "out"
    assert cli.main(["run", "--dataset", str(tmp_path / "nowhere"), "--config", str(cfg), "--output", str(out)]) == 2
    assert not out.exists()


def test_missing_dataset_exit_code(tmp_path):
    assert cli.main(["run", "--dataset", str(tmp_path / "nowhere"), "--output", str(tmp_path / "o")]) == 2


def test_too_many_skipped_frames_is_failure(sim_dataset, tmp_path):
    root = str(tmp_path / "broken")
    shutil.copytree(sim_dataset, root)
    for k in range(11):
        with open(os.path.join(root, io.CLOUD_DIR, f"{k:06d}.txt"), "a") as fh:
            fh.write("oops\n")
    assert cli.main(["run", "--dataset", root, "--output", str(tmp_path / "o")]) == 1
