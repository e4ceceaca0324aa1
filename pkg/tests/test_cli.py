import json

from typer.testing import CliRunner

from src.main import app, main
from src.simulator import standard_suite

runner = CliRunner()


def _simulate(tmp_path, scenario="static_pair"):
    dets = tmp_path / "video.jsonl"
    assert main(["simulate", "--scenario", scenario, "--out", str(dets)]) == 0
    return dets, tmp_path / "video.gt.jsonl"


def test_simulate_track_eval(tmp_path):
    dets, gt = _simulate(tmp_path)
    assert gt.exists()
    tracks = tmp_path / "tracks.jsonl"
    report = tmp_path / "report.json"

    assert main(["track", "--detections", str(dets), "--out", str(tracks)]) == 0
    assert main(["eval", "--tracks", str(tracks), "--gt", str(gt), "--report", str(report)]) == 0

    result = json.loads(report.read_text())
    assert result["aq_proxy"] == 1.0
    assert result["id_switches"] == 0
    assert len(result["per_track"]) == 2


def test_eval_prints_scores(tmp_path):
    dets, gt = _simulate(tmp_path)
    tracks = tmp_path / "tracks.jsonl"
    main(["track", "--detections", str(dets), "--out", str(tracks)])
    result = runner.invoke(
        app, ["eval", "--tracks", str(tracks), "--gt", str(gt), "--report", str(tmp_path / "r.json")]
    )
    assert result.exit_code == 0
    assert "id_switches=0 aq_proxy=1.0000" in result.output


def test_online_config_with_overlap_is_a_usage_error(tmp_path):
    dets, _ = _simulate(tmp_path)
    config = tmp_path / "tracker.env"
    config.write_text("MODE=online\nOVERLAP=1\n")
    code = main(["track", "--detections", str(dets), "--out", str(tmp_path / "t.jsonl"), "--config", str(config)])
    assert code == 1


def test_unknown_flag_is_a_usage_error():
    assert main(["track", "--no-such-flag"]) == 1


def test_missing_required_option():
    assert main(["eval", "--tracks", "t.jsonl"]) == 1


def test_malformed_detections_are_a_data_error(tmp_path):
    dets = tmp_path / "bad.jsonl"
    dets.write_text("{broken\n")
    assert main(["track", "--detections", str(dets), "--out", str(tmp_path / "t.jsonl")]) == 2


def test_missing_input_file_is_a_data_error(tmp_path):
    assert main(["track", "--detections", str(tmp_path / "absent.jsonl"), "--out", str(tmp_path / "t.jsonl")]) == 2


def test_unknown_scenario(tmp_path):
    assert main(["simulate", "--scenario", "nope", "--out", str(tmp_path / "d.jsonl")]) == 2


def test_scenario_from_json_file(tmp_path):
    from src.parser import write_scenario_spec
    from src.simulator import scenario_by_name

    spec_path = tmp_path / "custom.json"
    write_scenario_spec(scenario_by_name("linear_occlusion_short"), spec_path)
    out = tmp_path / "custom.jsonl"
    gt = tmp_path / "truth.jsonl"
    assert main(["simulate", "--scenario", str(spec_path), "--out", str(out), "--gt-out", str(gt)]) == 0
    assert out.stat().st_size > 0 and gt.stat().st_size > 0


def test_bench_reports_reduction_and_is_reproducible(tmp_path):
    first, second = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["bench", "--report", str(first)]) == 0
    assert main(["bench", "--report", str(second)]) == 0
    assert first.read_bytes() == second.read_bytes()

    report = json.loads(first.read_text())
    assert {row["buffer_mode"] for row in report["results"]} == {"location_aware", "naive"}
    assert len(report["results"]) == 2 * len(standard_suite())
    assert set(report["matching_space_reduction"]) == {row["scenario"] for row in report["results"]}
    assert report["config"]["tau"] == 10


def test_bench_single_mode_has_no_reduction(tmp_path):
    report = tmp_path / "naive.json"
    assert main(["bench", "--report", str(report), "--mode", "naive", "--tau", "5"]) == 0
    payload = json.loads(report.read_text())
    assert "matching_space_reduction" not in payload
    assert {row["tau"] for row in payload["results"]} == {5}


def test_sweep_writes_csv(tmp_path):
    report = tmp_path / "sweep.csv"
    args = ["sweep", "--report", str(report), "--tau", "1", "--tau", "10", "--alpha", "0.3"]
    assert main(args) == 0
    lines = report.read_text().splitlines()
    assert lines[0] == "tau,alpha,aq_proxy"
    assert len(lines) == 3


def test_zero_iou_gate_is_a_usage_error(tmp_path):
    dets, gt = _simulate(tmp_path)
    tracks = tmp_path / "tracks.jsonl"
    main(["track", "--detections", str(dets), "--out", str(tracks)])
    args = ["eval", "--tracks", str(tracks), "--gt", str(gt), "--report", str(tmp_path / "r.json"), "--iou-gate", "0"]
    assert main(args) == 1


def test_unknown_command_is_a_usage_error():
    assert main(["frobnicate"]) == 1
