import json

import numpy as np
import pytest

from src.config import TrackerConfig
from src.exceptions import InvalidRLE, ParseError, ShapeMismatch, SpecError
from src.parser import (
    read_detections,
    read_ground_truth,
    read_scenario_spec,
    read_tracks,
    scenario_from_dict,
    scenario_to_dict,
    write_detections,
    write_ground_truth,
    write_scenario_spec,
    write_tracks,
)
from src.pipeline import TrackOutput, process_video
from src.simulator import ObjectSpec, OcclusionSpec, ScenarioSpec, generate, scenario_by_name

from .conftest import clip_of, detection


def _record(**overrides):
    record = {
        "frame": 0, "clip": 0, "tube": 0, "class": 1, "score": 0.9,
        "embedding": [1.0, 0.0], "mask": {"w": 4, "h": 1, "rle": [1, 2, 1]},
    }
    record.update(overrides)
    return json.dumps(record)


def test_empty_detection_file(tmp_path):
    path = tmp_path / "dets.jsonl"
    path.write_text("")
    assert read_detections(path) == []


def test_detections_survive_a_write_read_cycle(tmp_path):
    _, clips = generate(scenario_by_name("linear_occlusion_short"))
    path = tmp_path / "dets.jsonl"
    write_detections(clips, path)
    restored = read_detections(path, 2, 1)

    assert [(c.first_frame, c.length) for c in restored] == [(c.first_frame, c.length) for c in clips]
    for written, loaded in zip(clips, restored):
        assert [t.clip_local_id for t in loaded.tubes] == [t.clip_local_id for t in written.tubes]
        for tube_a, tube_b in zip(written.tubes, loaded.tubes):
            for a, b in zip(tube_a.detections, tube_b.detections):
                assert a.mask == b.mask
                assert a.frame_index == b.frame_index
                np.testing.assert_array_equal(a.embedding, b.embedding)


def test_tracking_read_back_detections_matches_direct_run(tmp_path):
    _, clips = generate(scenario_by_name("identical_crowd"))
    path = tmp_path / "dets.jsonl"
    write_detections(clips, path)
    config = TrackerConfig()
    assert process_video(read_detections(path, 2, 1), config) == process_video(clips, config)


def test_layout_fills_missing_clips(tmp_path):
    path = tmp_path / "dets.jsonl"
    path.write_text(_record(frame=0, clip=0) + "\n" + _record(frame=3, clip=2) + "\n")
    clips = read_detections(path, 2, 1)
    assert [(c.first_frame, c.length, len(c.tubes)) for c in clips] == [(0, 2, 1), (1, 2, 0), (2, 2, 1)]


def test_inferred_clip_ranges(tmp_path):
    path = tmp_path / "dets.jsonl"
    path.write_text(_record(frame=4, clip=0) + "\n" + _record(frame=6, clip=0, tube=1) + "\n")
    (clip,) = read_detections(path)
    assert (clip.first_frame, clip.length) == (4, 3)


def test_invalid_rle_names_the_line(tmp_path):
    path = tmp_path / "dets.jsonl"
    bad = _record(mask={"w": 4, "h": 1, "rle": [1, 2, 2]})
    path.write_text(_record() + "\n" + bad + "\n")
    with pytest.raises(InvalidRLE, match=":2:"):
        read_detections(path)


def test_malformed_json_reports_the_line(tmp_path):
    path = tmp_path / "dets.jsonl"
    path.write_text(_record() + "\n\n{not json\n")
    with pytest.raises(ParseError) as info:
        read_detections(path)
    assert info.value.line == 3


def test_missing_field(tmp_path):
    path = tmp_path / "dets.jsonl"
    record = json.loads(_record())
    del record["embedding"]
    path.write_text(json.dumps(record) + "\n")
    with pytest.raises(ParseError, match="embedding"):
        read_detections(path)


def test_mixed_embedding_dimensions(tmp_path):
    path = tmp_path / "dets.jsonl"
    path.write_text(_record() + "\n" + _record(frame=1, embedding=[1.0, 0.0, 0.0]) + "\n")
    with pytest.raises(ShapeMismatch):
        read_detections(path)


def test_empty_tracks_write_only_a_summary(tmp_path):
    path = tmp_path / "tracks.jsonl"
    write_tracks(TrackOutput(), path)
    lines = path.read_text().splitlines()
    assert len(lines) == 1
    assert json.loads(lines[0])["summary"]["num_frames"] == 0
    assert read_tracks(path) == TrackOutput()


def test_tracks_round_trip_and_stable_bytes(tmp_path):
    _, clips = generate(scenario_by_name("churn_spawn_despawn"))
    output = process_video(clips, TrackerConfig())
    first, second = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_tracks(output, first)
    write_tracks(process_video(clips, TrackerConfig()), second)
    assert first.read_bytes() == second.read_bytes()

    restored = read_tracks(first)
    assert restored.steps == output.steps
    assert [f.frame_index for f in restored.frames] == [f.frame_index for f in output.frames]
    for a, b in zip(output.frames, restored.frames):
        assert sorted(a.objects, key=lambda o: o.global_id) == list(b.objects)


def test_track_records_keep_empty_frames(tmp_path):
    clips = [clip_of(0, 2, {0: [detection(0, (0, 0, 2, 2))]})]
    output = process_video(clips, TrackerConfig())
    path = tmp_path / "tracks.jsonl"
    write_tracks(output, path)
    restored = read_tracks(path)
    assert [len(f.objects) for f in restored.frames] == [1, 0]


def test_ground_truth_round_trip(tmp_path):
    gt, _ = generate(scenario_by_name("linear_occlusion_long"))
    path = tmp_path / "gt.jsonl"
    write_ground_truth(gt, path)
    assert read_ground_truth(path) == gt


def test_scenario_spec_round_trip(tmp_path):
    spec = scenario_by_name("random_motion_occlusion")
    path = tmp_path / "scenario.json"
    write_scenario_spec(spec, path)
    assert read_scenario_spec(path) == spec
    assert scenario_from_dict(scenario_to_dict(spec)) == spec


def test_bad_scenario_spec(tmp_path):
    raw = scenario_to_dict(scenario_by_name("static_pair"))
    raw["objects"][0]["despawn"] = -1
    with pytest.raises(SpecError):
        scenario_from_dict(raw)
    del raw["objects"]
    with pytest.raises(SpecError):
        scenario_from_dict(raw)


def _layout(clips):
    return [(c.first_frame, c.length, len(c.tubes)) for c in clips]


@pytest.mark.parametrize("despawn, occlusions", [
    (5, ()),
    (10, (OcclusionSpec(0, 4, 6),)),
])
def test_clip_ranges_survive_gaps_and_empty_tail(tmp_path, despawn, occlusions):
    spec = ScenarioSpec(20, 10, 10, objects=(ObjectSpec(1, 0, despawn, (2, 2), (4, 4)),), occlusions=occlusions)
    _, clips = generate(spec)
    assert any(not clip.tubes for clip in clips)
    path = tmp_path / "dets.jsonl"
    write_detections(clips, path)

    for restored in (read_detections(path), read_detections(path, 2, 1)):
        assert _layout(restored) == _layout(clips)
    assert process_video(read_detections(path), TrackerConfig()) == process_video(clips, TrackerConfig())


def test_no_clips_round_trip(tmp_path):
    path = tmp_path / "dets.jsonl"
    write_detections([], path)
    assert read_detections(path) == []


def test_records_beyond_summary_clips(tmp_path):
    path = tmp_path / "dets.jsonl"
    path.write_text(_record(clip=1, frame=1) + "\n" + json.dumps({"summary": {"clips": [[0, 2]]}}) + "\n")
    with pytest.raises(ParseError, match="beyond"):
        read_detections(path)
