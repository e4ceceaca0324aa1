import pytest

from src.exceptions import RangeMismatch
from src.metrics import evaluate, mean_and_std
from src.pipeline import FrameTracks, StepTelemetry, TrackedObject, TrackOutput
from src.simulator import GroundTruth, GroundTruthObject

from .conftest import rect_mask

SQUARES = {1: (0, 0, 4, 4), 2: (10, 0, 14, 4)}


def _gt(frames):
    """`frames` is a list of gt track id lists."""
    return GroundTruth(frames=tuple(
        tuple(GroundTruthObject(track_id=t, class_id=1, mask=rect_mask(*SQUARES[t])) for t in ids)
        for ids in frames
    ))


def _output(frames):
    """`frames` is a list of {gt square: predicted id} dicts."""
    return TrackOutput(frames=[
        FrameTracks(
            frame_index=f,
            objects=tuple(TrackedObject(global_id=pid, class_id=1, mask=rect_mask(*SQUARES[sq])) for sq, pid in ids.items()),
        )
        for f, ids in enumerate(frames)
    ])


def test_perfect_tracking():
    report = evaluate(_output([{1: 5, 2: 9}] * 6), _gt([[1, 2]] * 6))
    assert report.id_switches == 0
    assert report.aq_proxy == 1.0
    assert report.matching_space == (0.0, 0)


def test_split_track():
    # track 1 split into two equal halves, track 2 perfect
    output = _output([{1: 5, 2: 9}] * 2 + [{1: 6, 2: 9}] * 2)
    report = evaluate(output, _gt([[1, 2]] * 4))
    assert report.id_switches == 1
    per_track = {t.gt_track_id: t for t in report.per_track}
    assert per_track[1].identity_recall == 0.5
    assert per_track[1].id_switches == 1
    assert per_track[2].identity_recall == 1.0
    assert report.aq_proxy == pytest.approx(2 * 6 / 16)


def test_fresh_id_every_frame():
    frames = 7
    report = evaluate(_output([{1: 100 + f} for f in range(frames)]), _gt([[1]] * frames))
    assert report.id_switches == frames - 1


def test_label_permutation_invariance():
    output = _output([{1: 5, 2: 9}, {1: 9, 2: 5}, {1: 5, 2: 7}, {1: 5, 2: 7}])
    relabelled = _output([{1: 50, 2: 90}, {1: 90, 2: 50}, {1: 50, 2: 70}, {1: 50, 2: 70}])
    gt = _gt([[1, 2]] * 4)
    a, b = evaluate(output, gt), evaluate(relabelled, gt)
    assert (a.id_switches, a.aq_proxy) == (b.id_switches, b.aq_proxy)


def test_more_splits_never_raise_aq():
    gt = _gt([[1]] * 8)
    previous = 1.0
    for splits in range(1, 8):
        output = _output([{1: 1 + min(f, splits)} for f in range(8)])
        aq = evaluate(output, gt).aq_proxy
        assert aq <= previous
        previous = aq


def test_missing_frames_count_as_empty():
    output = TrackOutput(frames=[FrameTracks(0, (TrackedObject(1, 1, rect_mask(*SQUARES[1])),))])
    report = evaluate(output, _gt([[1]] * 2))
    assert report.aq_proxy == pytest.approx(2 * 1 / 3)


def test_iou_gate():
    gt = _gt([[1]])
    shifted = TrackOutput(frames=[FrameTracks(0, (TrackedObject(1, 1, rect_mask(2, 0, 6, 4)),))])
    assert evaluate(shifted, gt, iou_gate=0.5).aq_proxy == 0.0
    assert evaluate(shifted, gt, iou_gate=0.3).aq_proxy == 1.0


def test_out_of_range_frames():
    output = TrackOutput(frames=[FrameTracks(5, ())])
    with pytest.raises(RangeMismatch):
        evaluate(output, _gt([[1]] * 2))


def test_empty_everything():
    assert evaluate(TrackOutput(), GroundTruth(frames=())).aq_proxy == 1.0


def test_invalid_gate():
    with pytest.raises(ValueError):
        evaluate(TrackOutput(), _gt([[1]]), iou_gate=0.0)


def test_matching_space_carried_into_report():
    output = _output([{1: 1}, {1: 1}, {1: 1}])
    output.steps.extend([
        StepTelemetry(0, 1, False, 0, 0, 0, 0, 1),
        StepTelemetry(1, 2, True, 0, 3, 2, 0, 0),
        StepTelemetry(2, 3, True, 0, 5, 4, 0, 0),
    ])
    assert evaluate(output, _gt([[1]] * 3)).matching_space == (13.0, 20)


def test_mean_and_std_population():
    assert mean_and_std([1.0, 3.0]) == (2.0, 1.0)
    assert mean_and_std([]) == (0.0, 0.0)


def test_identity_totals_agree_with_breakdown():
    output = _output([{1: 5, 2: 9}, {1: 9, 2: 5}, {1: 5, 2: 7}, {1: 5, 2: 7}, {2: 7}])
    report = evaluate(output, _gt([[1, 2]] * 5))
    assert report.idtp == sum(track.idtp for track in report.per_track)
    assert (report.gt_detections, report.predicted_detections) == (10, 9)
    assert report.aq_proxy == pytest.approx(2 * report.idtp / 19)


def test_tracks_without_ground_truth_score_zero():
    assert evaluate(_output([{1: 5}]), _gt([[]])).aq_proxy == 0.0
