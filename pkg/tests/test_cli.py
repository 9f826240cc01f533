import json

import pytest

from spatio_semantic_priors import cli
from spatio_semantic_priors.evaluation import load_report
from spatio_semantic_priors.run_config import RunConfig

SCENE = {
    "vocabulary": {"3": "storage", "5": "seat"},
    "extent": {"min": [-1.0, -4.0, 0.0], "max": [7.0, 4.0, 2.5]},
    "camera": {"position": [0.0, 0.0, 1.45], "far": 6.0, "expansion": 0.0},
    "walls": [{"start": [6.5, -4.0], "end": [6.5, 4.0]}],
    "objects": [
        {
            "label": 5,
            "region": {"min": [3.0, -0.5, 1.6], "max": [3.5, 0.5, 2.0]},
            "presence": 0.6,
            "radius": 0.2,
        },
        {
            "label": 3,
            "region": {"min": [2.0, 1.0, 0.3], "max": [2.5, 2.0, 0.9]},
            "presence": 0.5,
            "radius": 0.3,
        },
    ],
    "floor_density": 2.0,
}


@pytest.fixture
def run(tmp_path):
    """A small run: one synthetic scene with its ground truth."""
    (tmp_path / "scene.json").write_text(json.dumps(SCENE))
    (tmp_path / "gt").mkdir()
    (tmp_path / "gt" / "room.txt").write_text("seat, 0.7\nstorage, 0.3\n")
    config = {
        "scene_files": {"room": str(tmp_path / "scene.json")},
        "ground_truth": str(tmp_path / "gt"),
        "output_dir": str(tmp_path / "out"),
        "n_samples": 10,
        "n_vertices": 150,
        "log_level": "WARNING",
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    return path


def test_all(run, tmp_path):
    assert cli.main(["--config", str(run), "all"]) == 0
    scene = tmp_path / "out" / "room"
    for name in ("ingest_summary.json", "plan_results.json", "roadmap.txt"):
        assert (scene / name).is_file()
    assert (scene / "sample_set" / "manifest.json").is_file()

    summary = json.loads((scene / "ingest_summary.json").read_text())
    assert summary["n_samples"] == 10
    assert summary["warnings"] == []

    results = json.loads((scene / "plan_results.json").read_text())
    assert [r["label"] for r in results["results"]] == [3, 5]
    for r in results["results"]:
        assert r["p_plan"] <= r["p_det"]

    report = load_report(tmp_path / "out" / "report.json")
    assert [(row.scene, row.label) for row in report.rows] == [
        ("room", "storage"),
        ("room", "seat"),
    ]
    assert report.kl["room"]["det"] >= 0.0
    csv = (tmp_path / "out" / "report.csv").read_text().splitlines()
    assert csv[0] == "scene,label,p_det,p_plan,length,kl_det"
    assert len(csv) == 3


def test_stages_reproducible(run, tmp_path):
    for output in ("a", "b"):
        overrides = ["--set", "output_dir={}".format(tmp_path / output)]
        for stage in ("synth", "ingest", "plan", "eval"):
            assert cli.main(["--config", str(run)] + overrides + [stage]) == 0
    for name in (
        "report.csv",
        "report.json",
        "room/plan_results.json",
        "room/roadmap.txt",
        "room/sample_set/sample_0003.ply",
    ):
        assert (tmp_path / "a" / name).read_bytes() == (
            tmp_path / "b" / name
        ).read_bytes()


def test_single_label(run, tmp_path):
    assert cli.main(["--config", str(run), "synth"]) == 0
    assert cli.main(["--config", str(run), "plan", "--label", "5"]) == 0
    results = json.loads((tmp_path / "out" / "room" / "plan_results.json").read_text())
    assert [r["label"] for r in results["results"]] == [5]
    # unknown label
    assert cli.main(["--config", str(run), "plan", "--label", "42"]) == 1


def test_missing_ground_truth(run, tmp_path):
    args = ["--config", str(run), "--set", "ground_truth=''", "all"]
    assert cli.main(args) == 0
    report = load_report(tmp_path / "out" / "report.json")
    assert report.kl == {}
    assert any("no ground truth" in note for note in report.notes)


def test_unplanned_ground_truth_label(run, tmp_path):
    args = ["--config", str(run), "--set", "labels=[5]", "all"]
    assert cli.main(args) == 0
    report = load_report(tmp_path / "out" / "report.json")
    assert report.kl == {}
    assert any("not planned" in note for note in report.notes)


@pytest.mark.parametrize(
    "args, code",
    [
        (["--set", "n_vertices=1", "synth"], 2),
        (["--set", "colour=red", "synth"], 2),
        (["--log-level", "LOUD", "synth"], 2),
        (["--set", "scene_files={room: missing.json}", "synth"], 3),
        (["eval"], 3),
        (["plan"], 3),
    ],
)
def test_exit_codes(run, args, code):
    assert cli.main(["--config", str(run)] + args) == code


def test_missing_config(tmp_path):
    assert cli.main(["--config", str(tmp_path / "none.json"), "synth"]) == 3


def test_manifest_scene(run, tmp_path):
    """scenes given by a manifest are ingested from it"""
    assert cli.main(["--config", str(run), "synth"]) == 0
    manifest = tmp_path / "out" / "room" / "sample_set" / "manifest.json"
    config = RunConfig.load()
    config.manifests = {"other": str(manifest)}
    config.output_dir = str(tmp_path / "other_out")
    summaries = cli.cmd_ingest(config)
    assert summaries["other"]["n_samples"] == 10
    assert (tmp_path / "other_out" / "other" / "sample_set" / "manifest.json").is_file()


def test_help(capsys):
    with pytest.raises(SystemExit):
        cli.main(["--help"])
    out = capsys.readouterr().out
    assert "n_vertices (default: 2000)" in out
    for command in ("synth", "ingest", "plan", "eval", "all"):
        assert command in out
