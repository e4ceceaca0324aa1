import numpy as np
import pytest

from src.domain import mask_to_normalized_box
from src.exceptions import SpecError
from src.simulator import (
    MotionSpec,
    ObjectSpec,
    OcclusionSpec,
    ScenarioSpec,
    clip_starts,
    generate,
    render,
    scenario_by_name,
    standard_suite,
    trajectory,
)

NAMES = {
    "static_pair",
    "linear_occlusion_short",
    "linear_occlusion_long",
    "identical_crowd",
    "random_motion_occlusion",
    "churn_spawn_despawn",
}


def _moving_spec(**kwargs):
    return ScenarioSpec(
        width=64,
        height=32,
        num_frames=25,
        objects=(ObjectSpec(1, 0, 25, (2, 5), (6, 6), MotionSpec(velocity=(2.0, 0.5))),),
        **kwargs,
    )


def test_static_object_is_constant():
    spec = ScenarioSpec(32, 16, 10, objects=(ObjectSpec(1, 0, 10, (4, 4), (5, 5)),))
    gt, clips = generate(spec)
    assert gt.track_ids == [1]
    dets = [det for clip in clips for tube in clip.tubes for det in tube.detections]
    assert len({det.mask for det in dets}) == 1
    for det in dets:
        np.testing.assert_array_equal(det.embedding, dets[0].embedding)


def test_occluded_frames_have_no_detection_and_box_follows_trajectory():
    spec = _moving_spec(occlusions=(OcclusionSpec(0, 10, 14),))
    gt, detections = render(spec)
    present = [f for f, dets in enumerate(detections) if dets]
    assert present == [f for f in range(25) if not 10 <= f <= 14]
    assert all(len(gt.frames[f]) == 0 for f in range(10, 15))
    box9 = mask_to_normalized_box(detections[9][0].mask).as_array()
    box15 = mask_to_normalized_box(detections[15][0].mask).as_array()
    shift = np.array([6 * 2.0 / 64, 6 * 0.5 / 32, 6 * 2.0 / 64, 6 * 0.5 / 32])
    tolerance = np.array([1 / 64, 1 / 32, 1 / 64, 1 / 32]) + 1e-12
    assert (np.abs(box15 - (box9 + shift)) <= tolerance).all()


def test_same_seed_is_bit_identical():
    spec = scenario_by_name("random_motion_occlusion")
    gt_a, clips_a = generate(spec)
    gt_b, clips_b = generate(spec)
    assert gt_a == gt_b
    for clip_a, clip_b in zip(clips_a, clips_b):
        for tube_a, tube_b in zip(clip_a.tubes, clip_b.tubes):
            for a, b in zip(tube_a.detections, tube_b.detections):
                assert a.mask == b.mask
                assert a.embedding.tobytes() == b.embedding.tobytes()


def test_standard_suite_contents():
    suite = dict(standard_suite())
    assert NAMES <= set(suite)
    crowd = suite["identical_crowd"]
    assert len(crowd.objects) >= 4
    assert len({obj.appearance_group for obj in crowd.objects}) == 1
    assert all(obj.noise > 0 for obj in crowd.objects)
    (gap,) = suite["linear_occlusion_long"].occlusions
    assert gap.end - gap.start + 1 < 10


def test_suite_invariants():
    for name, spec in standard_suite():
        gt, detections = render(spec)
        assert gt.track_ids == list(range(1, len(spec.objects) + 1)), name
        for frame, dets in enumerate(detections):
            union = np.zeros((spec.height, spec.width), dtype=int)
            for det in dets:
                assert det.mask.area > 0
                assert det.mask.shape == (spec.height, spec.width)
                assert np.linalg.norm(det.embedding) == pytest.approx(1.0)
                union += det.mask.bitmap
            assert union.max() <= 1, (name, frame)


def test_later_spawn_drawn_on_top():
    spec = ScenarioSpec(20, 10, 3, objects=(
        ObjectSpec(1, 0, 3, (0, 0), (6, 6)),
        ObjectSpec(1, 1, 3, (3, 0), (6, 6)),
    ))
    gt, _ = render(spec)
    first, second = gt.frames[1]
    assert second.mask.area == 36
    assert first.mask.area == 18


def test_clip_layout():
    assert clip_starts(5, 2, 1) == [0, 1, 2, 3]
    assert clip_starts(5, 1, 0) == [0, 1, 2, 3, 4]
    assert clip_starts(6, 3, 1) == [0, 2, 4]
    _, clips = generate(scenario_by_name("static_pair"), clip_length=3, overlap=1)
    assert [c.first_frame for c in clips] == list(range(0, 29, 2))
    assert clips[-1].last_frame == 29


def test_random_walk_deterministic():
    spec = scenario_by_name("random_motion_occlusion")
    assert trajectory(spec, 0) == trajectory(spec, 0)


@pytest.mark.parametrize("spec", [
    ScenarioSpec(10, 10, 5, objects=(ObjectSpec(1, 3, 3, (0, 0), (2, 2)),)),
    ScenarioSpec(10, 10, 5, objects=(ObjectSpec(1, 0, 6, (0, 0), (2, 2)),)),
    ScenarioSpec(10, 10, 5, objects=(ObjectSpec(1, 0, 5, (0, 0), (2, 2)),), occlusions=(OcclusionSpec(0, 3, 7),)),
    ScenarioSpec(10, 10, 5, objects=(ObjectSpec(1, 0, 5, (0, 0), (2, 2), MotionSpec(kind="teleport")),)),
    ScenarioSpec(0, 10, 5, objects=()),
])
def test_invalid_specs(spec):
    with pytest.raises(SpecError):
        generate(spec)


def test_unknown_scenario():
    with pytest.raises(SpecError):
        scenario_by_name("nope")


def test_suite_seed_offset():
    base, shifted = standard_suite(), standard_suite(seed_offset=5)
    assert [name for name, _ in base] == [name for name, _ in shifted]
    for (_, a), (_, b) in zip(base, shifted):
        assert b.rng_seed == a.rng_seed + 5
        assert b.objects == a.objects


def test_weak_appearance_scenarios_stay_separated():
    suite = dict(standard_suite())
    for name in ("noisy_appearance_pair", "noisy_appearance_trio"):
        spec = suite[name]
        assert not spec.occlusions
        gt, _ = render(spec)
        assert all(len(frame) == len(spec.objects) for frame in gt.frames), name
