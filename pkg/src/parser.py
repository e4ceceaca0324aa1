import dataclasses
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

from .domain import BinaryMask, Clip, Detection, Tube
from .exceptions import InvalidRLE, ParseError, ShapeMismatch, SpecError, TrackerError
from .pipeline import FrameTracks, StepTelemetry, TrackedObject, TrackOutput
from .simulator import GroundTruth, GroundTruthObject, MotionSpec, ObjectSpec, OcclusionSpec, ScenarioSpec

logger = logging.getLogger(__name__)

DETECTION_KEYS = ("frame", "clip", "tube", "class", "score", "embedding", "mask")
TRACK_KEYS = ("frame", "id", "class", "mask")
GROUND_TRUTH_KEYS = ("frame", "track", "class", "mask")


def _dumps(record: Dict[str, Any]) -> str:
    return json.dumps(record, separators=(", ", ": "), allow_nan=False)


def _iter_records(path) -> Iterator[Tuple[int, Dict[str, Any]]]:
    """(line number, object) for every non-blank line."""
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"{path}:{line_no}: {e.msg}", line=line_no) from e
            if not isinstance(record, dict):
                raise ParseError(f"{path}:{line_no}: expected a JSON object", line=line_no)
            yield line_no, record


def _require(record: Dict[str, Any], keys: Sequence[str], path, line_no: int):
    missing = [k for k in keys if k not in record]
    if missing:
        raise ParseError(f"{path}:{line_no}: missing field(s) {', '.join(missing)}", line=line_no)


def _mask_to_json(mask: BinaryMask) -> Dict[str, Any]:
    return {"w": mask.width, "h": mask.height, "rle": list(mask.runs)}


def _parse_mask(raw: Any, path, line_no: int) -> BinaryMask:
    if not isinstance(raw, dict) or not {"w", "h", "rle"} <= raw.keys():
        raise ParseError(f"{path}:{line_no}: mask needs w, h and rle", line=line_no)
    try:
        return BinaryMask(width=int(raw["w"]), height=int(raw["h"]), runs=tuple(int(r) for r in raw["rle"]))
    except InvalidRLE as e:
        raise InvalidRLE(f"{path}:{line_no}: {e}", data=line_no) from e
    except (TypeError, ValueError) as e:
        raise ParseError(f"{path}:{line_no}: malformed mask ({e})", line=line_no) from e


def _int_field(record, key, path, line_no) -> int:
    value = record[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParseError(f"{path}:{line_no}: field {key!r} must be an integer, got {value!r}", line=line_no)
    return value


# --- Detections ---

def _clip_ranges(summary: Any, path, line_no: int) -> List[Tuple[int, int]]:
    try:
        ranges = [(int(first), int(length)) for first, length in summary["clips"]]
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"{path}:{line_no}: malformed summary ({e})", line=line_no) from e
    if any(first < 0 or length < 1 for first, length in ranges):
        raise ParseError(f"{path}:{line_no}: clip ranges need first >= 0 and length >= 1", line=line_no)
    return ranges


def write_detections(clips: Sequence[Clip], path):
    """One record per (clip, tube, frame); keys in DETECTION_KEYS order."""
    with open(path, "w", encoding="utf-8") as handle:
        for clip_index, clip in enumerate(clips):
            for tube in clip.tubes:
                for det in tube.detections:
                    record = {
                        "frame": det.frame_index,
                        "clip": clip_index,
                        "tube": tube.clip_local_id,
                        "class": det.class_id,
                        "score": float(det.score),
                        "embedding": [float(v) for v in det.embedding],
                        "mask": _mask_to_json(det.mask),
                    }
                    handle.write(_dumps(record) + "\n")
        layout = [[clip.first_frame, clip.length] for clip in clips]
        handle.write(_dumps({"summary": {"clips": layout}}) + "\n")
    logger.info(f"Wrote {len(clips)} clips to {path}")


def read_detections(path, clip_length: Optional[int] = None, overlap: Optional[int] = None) -> List[Clip]:
    """Group detection records into clips.

    A summary line (written by write_detections) restores every clip range
    exactly, empty clips included. Otherwise, with a clip layout, clip k
    covers [k*stride, k*stride + clip_length) cut at the last frame in the
    file and clip indices without records become empty clips. Without one,
    each clip spans its own first..last recorded frame.
    """
    grouped: Dict[int, Dict[int, List[Tuple[int, Detection]]]] = {}
    last_frame = -1
    ranges: Optional[List[Tuple[int, int]]] = None
    for line_no, record in _iter_records(path):
        if "summary" in record:
            ranges = _clip_ranges(record["summary"], path, line_no)
            continue
        _require(record, DETECTION_KEYS, path, line_no)
        clip_index = _int_field(record, "clip", path, line_no)
        tube_id = _int_field(record, "tube", path, line_no)
        frame = _int_field(record, "frame", path, line_no)
        if clip_index < 0 or frame < 0:
            raise ParseError(f"{path}:{line_no}: clip and frame must be non-negative", line=line_no)
        mask = _parse_mask(record["mask"], path, line_no)
        try:
            det = Detection(
                frame_index=frame,
                class_id=_int_field(record, "class", path, line_no),
                score=float(record["score"]),
                mask=mask,
                embedding=[float(v) for v in record["embedding"]],
            )
        except (TypeError, ValueError) as e:
            raise ParseError(f"{path}:{line_no}: {e}", line=line_no) from e
        except TrackerError as e:
            raise type(e)(f"{path}:{line_no} (clip {clip_index}, tube {tube_id}): {e}", data=line_no) from e
        grouped.setdefault(clip_index, {}).setdefault(tube_id, []).append((line_no, det))
        last_frame = max(last_frame, frame)

    if ranges is not None:
        stray = [k for k in grouped if k >= len(ranges)]
        if stray:
            raise ParseError(f"{path}: records for clip {min(stray)} beyond the {len(ranges)} clips in the summary")
    elif not grouped:
        logger.warning(f"No detections in {path}")
        return []

    dims = {len(det.embedding) for tubes in grouped.values() for dets in tubes.values() for _, det in dets}
    if len(dims) > 1:
        raise ShapeMismatch(f"{path}: embedding dimensions differ across records: {sorted(dims)}")

    layout = clip_length is not None
    stride = clip_length - (overlap or 0) if layout else None
    if ranges is not None:
        indices = range(len(ranges))
    elif layout:
        indices = range(max(grouped) + 1)
    else:
        indices = sorted(grouped)
    clips = []
    for clip_index in indices:
        tubes_raw = grouped.get(clip_index, {})
        tubes = []
        for tube_id in sorted(tubes_raw):
            entries = sorted(tubes_raw[tube_id], key=lambda item: item[1].frame_index)
            dets = tuple(det for _, det in entries)
            try:
                tubes.append(Tube(clip_local_id=tube_id, class_id=dets[0].class_id, detections=dets))
            except TrackerError as e:
                raise type(e)(f"{path}:{entries[0][0]} (clip {clip_index}, tube {tube_id}): {e}") from e
        if ranges is not None:
            first, length = ranges[clip_index]
        elif layout:
            first = clip_index * stride
            length = max(1, min(clip_length, last_frame - first + 1))
        else:
            frames = [f for tube in tubes for f in tube.frames]
            first, length = min(frames), max(frames) - min(frames) + 1
        try:
            clips.append(Clip(first_frame=first, length=length, tubes=tuple(tubes)))
        except TrackerError as e:
            raise type(e)(f"{path}: clip {clip_index}: {e}") from e
    logger.info(f"Read {len(clips)} clips from {path}")
    return clips


# --- Tracks ---

def _step_to_json(step: StepTelemetry) -> Dict[str, Any]:
    return {
        "step": step.step,
        "frame": step.frame,
        "stitch_invoked": step.stitch_invoked,
        "stitched": step.stitched,
        "memory_rows": step.memory_rows,
        "memory_cols": step.memory_cols,
        "memory_matched": step.memory_matched,
        "newborn": step.newborn,
    }


def write_tracks(output: TrackOutput, path):
    """Track records in frame order, objects by id, then one summary line."""
    avg, peak = output.matching_space_stats()
    with open(path, "w", encoding="utf-8") as handle:
        for frame in output.frames:
            for obj in sorted(frame.objects, key=lambda o: o.global_id):
                record = {
                    "frame": frame.frame_index,
                    "id": obj.global_id,
                    "class": obj.class_id,
                    "mask": _mask_to_json(obj.mask),
                }
                handle.write(_dumps(record) + "\n")
        summary = {
            "first_frame": output.first_frame,
            "num_frames": output.num_frames,
            "steps": [_step_to_json(step) for step in output.steps],
            "stitch_invocations": output.stitch_invocations,
            "matching_space": {"avg": avg, "max": peak},
        }
        handle.write(_dumps({"summary": summary}) + "\n")
    logger.info(f"Wrote {output.num_frames} frames of tracks to {path}")


def read_tracks(path) -> TrackOutput:
    summary = None
    by_frame: Dict[int, List[TrackedObject]] = {}
    for line_no, record in _iter_records(path):
        if "summary" in record:
            summary = record["summary"]
            continue
        _require(record, TRACK_KEYS, path, line_no)
        frame = _int_field(record, "frame", path, line_no)
        by_frame.setdefault(frame, []).append(
            TrackedObject(
                global_id=_int_field(record, "id", path, line_no),
                class_id=_int_field(record, "class", path, line_no),
                mask=_parse_mask(record["mask"], path, line_no),
            )
        )

    if summary is not None:
        try:
            first, count = int(summary["first_frame"]), int(summary["num_frames"])
            steps = [StepTelemetry(**step) for step in summary.get("steps", [])]
        except (KeyError, TypeError, ValueError) as e:
            raise ParseError(f"{path}: malformed summary ({e})") from e
    elif by_frame:
        first, count, steps = min(by_frame), max(by_frame) - min(by_frame) + 1, []
    else:
        first, count, steps = 0, 0, []

    stray = [f for f in by_frame if not first <= f < first + count]
    if stray:
        raise ParseError(f"{path}: track records at frames {sorted(stray)} lie outside the summary range")
    frames = [FrameTracks(frame_index=f, objects=tuple(by_frame.get(f, ()))) for f in range(first, first + count)]
    return TrackOutput(frames=frames, steps=steps)


# --- Ground truth ---

def write_ground_truth(gt: GroundTruth, path):
    with open(path, "w", encoding="utf-8") as handle:
        for frame_index, objects in enumerate(gt.frames):
            for obj in sorted(objects, key=lambda o: o.track_id):
                record = {
                    "frame": frame_index,
                    "track": obj.track_id,
                    "class": obj.class_id,
                    "mask": _mask_to_json(obj.mask),
                }
                handle.write(_dumps(record) + "\n")
        handle.write(_dumps({"summary": {"num_frames": gt.num_frames}}) + "\n")
    logger.info(f"Wrote ground truth ({gt.num_frames} frames) to {path}")


def read_ground_truth(path) -> GroundTruth:
    num_frames = None
    by_frame: Dict[int, List[GroundTruthObject]] = {}
    for line_no, record in _iter_records(path):
        if "summary" in record:
            num_frames = int(record["summary"]["num_frames"])
            continue
        _require(record, GROUND_TRUTH_KEYS, path, line_no)
        frame = _int_field(record, "frame", path, line_no)
        by_frame.setdefault(frame, []).append(
            GroundTruthObject(
                track_id=_int_field(record, "track", path, line_no),
                class_id=_int_field(record, "class", path, line_no),
                mask=_parse_mask(record["mask"], path, line_no),
            )
        )
    if num_frames is None:
        num_frames = max(by_frame) + 1 if by_frame else 0
    if by_frame and max(by_frame) >= num_frames:
        raise ParseError(f"{path}: ground truth frame {max(by_frame)} beyond num_frames={num_frames}")
    return GroundTruth(frames=tuple(tuple(by_frame.get(f, ())) for f in range(num_frames)))


# --- Scenario specs ---

def scenario_to_dict(spec: ScenarioSpec) -> Dict[str, Any]:
    return dataclasses.asdict(spec)


def scenario_from_dict(raw: Dict[str, Any]) -> ScenarioSpec:
    try:
        objects = []
        for obj in raw["objects"]:
            obj = dict(obj)
            motion = dict(obj.pop("motion", {}))
            if "velocity" in motion:
                motion["velocity"] = tuple(motion["velocity"])
            motion = MotionSpec(**motion)
            for key in ("position", "size", "base_embedding"):
                if obj.get(key) is not None:
                    obj[key] = tuple(obj[key])
            objects.append(ObjectSpec(motion=motion, **obj))
        occlusions = tuple(OcclusionSpec(**occ) for occ in raw.get("occlusions", ()))
        fields = {k: v for k, v in raw.items() if k not in ("objects", "occlusions")}
        return ScenarioSpec(objects=tuple(objects), occlusions=occlusions, **fields).validate()
    except (KeyError, TypeError) as e:
        raise SpecError(f"Malformed scenario spec: {e}") from e


def write_scenario_spec(spec: ScenarioSpec, path):
    Path(path).write_text(json.dumps(scenario_to_dict(spec), indent=2) + "\n", encoding="utf-8")


def read_scenario_spec(path) -> ScenarioSpec:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}:{e.lineno}: {e.msg}", line=e.lineno) from e
    if not isinstance(raw, dict):
        raise SpecError(f"{path}: scenario spec must be a JSON object")
    return scenario_from_dict(raw)
