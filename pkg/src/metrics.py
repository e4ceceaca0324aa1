import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import motmetrics as mm
import numpy as np

from .assignment import FORBIDDEN, SimilarityMatrix, hungarian_max
from .domain import mask_iou
from .exceptions import RangeMismatch

logger = logging.getLogger(__name__)

DEFAULT_IOU_GATE = 0.5
IDENTITY_METRICS = ["idf1", "idtp", "num_objects", "num_predictions"]


@dataclass(frozen=True)
class TrackBreakdown:
    gt_track_id: int
    gt_frames: int
    matched_id: Optional[int]
    idtp: int
    identity_recall: float
    id_switches: int


@dataclass(frozen=True)
class EvalReport:
    id_switches: int
    aq_proxy: float
    per_track: Tuple[TrackBreakdown, ...] = ()
    matching_space: Tuple[float, int] = (0.0, 0)
    idtp: int = 0
    gt_detections: int = 0
    predicted_detections: int = 0


def _iou_table(gt_objects, predicted) -> np.ndarray:
    table = np.zeros((len(gt_objects), len(predicted)))
    for i, gt in enumerate(gt_objects):
        for j, pred in enumerate(predicted):
            table[i, j] = mask_iou(gt.mask, pred.mask)
    return table


def _distances(ious: np.ndarray, iou_gate: float) -> np.ndarray:
    """1 - IoU, NaN (not allowed to match) below the gate."""
    return np.where(ious >= iou_gate, 1.0 - ious, np.nan)


def _match_frame(gt_objects, predicted, ious: np.ndarray, iou_gate: float) -> List[Tuple[int, int]]:
    """(gt track id, predicted id) pairs for one frame, IoU-gated Hungarian."""
    if not gt_objects or not predicted:
        return []
    matrix = SimilarityMatrix(
        values=np.where(ious >= iou_gate, ious, FORBIDDEN),
        row_keys=tuple(gt.track_id for gt in gt_objects),
        col_keys=tuple(pred.global_id for pred in predicted),
    )
    return [(row, col) for row, col, _ in hungarian_max(matrix).pairs]


def _identity_mapping(overlap: Dict[Tuple[int, int], int], gt_ids, pred_ids) -> Dict[int, Tuple[int, int]]:
    """gt id -> (predicted id, shared frames) under the IDTP-maximising one-to-one map."""
    if not gt_ids or not pred_ids:
        return {}
    counts = np.full((len(gt_ids), len(pred_ids)), FORBIDDEN)
    for (gt_id, pred_id), count in overlap.items():
        counts[gt_ids.index(gt_id), pred_ids.index(pred_id)] = count
    identity = hungarian_max(SimilarityMatrix(counts, tuple(gt_ids), tuple(pred_ids)))
    return {gt_id: (pred_id, int(count)) for gt_id, pred_id, count in identity.pairs}


def evaluate(output, gt, iou_gate: float = DEFAULT_IOU_GATE) -> EvalReport:
    """Identity switches and identity-F1 of `output` against `gt`.

    IDF1 and IDTP come from motmetrics. Switches are counted on a pure
    per-frame Hungarian match (a gt track switches whenever its matched id
    differs from its previous match), which is stricter than the MOT
    accumulator's keep-previous-match rule.
    """
    if not 0 < iou_gate <= 1:
        raise ValueError(f"iou_gate must lie in (0, 1], got {iou_gate}")
    predicted_frames = {frame.frame_index: frame.objects for frame in output.frames}
    outside = [f for f in predicted_frames if not 0 <= f < gt.num_frames]
    if outside:
        raise RangeMismatch(
            f"Tracks cover frames {min(outside)}..{max(outside)} outside ground truth [0, {gt.num_frames})"
        )

    acc = mm.MOTAccumulator(auto_id=True)
    last_match: Dict[int, int] = {}
    switches: Dict[int, int] = {}
    gt_lengths: Dict[int, int] = {}
    pred_lengths: Dict[int, int] = {}
    overlap: Dict[Tuple[int, int], int] = {}

    for frame_index, gt_objects in enumerate(gt.frames):
        predicted = predicted_frames.get(frame_index, ())
        for obj in gt_objects:
            gt_lengths[obj.track_id] = gt_lengths.get(obj.track_id, 0) + 1
            switches.setdefault(obj.track_id, 0)
        for pred in predicted:
            pred_lengths[pred.global_id] = pred_lengths.get(pred.global_id, 0) + 1

        ious = _iou_table(gt_objects, predicted)
        acc.update(
            [obj.track_id for obj in gt_objects],
            [pred.global_id for pred in predicted],
            _distances(ious, iou_gate),
        )

        for gt_id, pred_id in _match_frame(gt_objects, predicted, ious, iou_gate):
            previous = last_match.get(gt_id)
            if previous is not None and previous != pred_id:
                switches[gt_id] += 1
            last_match[gt_id] = pred_id

        for i, j in zip(*np.nonzero(ious >= iou_gate)):
            key = (gt_objects[i].track_id, predicted[j].global_id)
            overlap[key] = overlap.get(key, 0) + 1

    n_gt = sum(gt_lengths.values())
    n_pred = sum(pred_lengths.values())
    if n_gt == 0 and n_pred == 0:
        aq_proxy, idtp = 1.0, 0
    elif n_gt == 0 or n_pred == 0:
        aq_proxy, idtp = 0.0, 0
    else:
        summary = mm.metrics.create().compute(acc, metrics=IDENTITY_METRICS, name="video")
        aq_proxy = float(summary["idf1"].iloc[0])
        idtp = int(summary["idtp"].iloc[0])

    gt_ids = sorted(gt_lengths)
    mapping = _identity_mapping(overlap, gt_ids, sorted(pred_lengths))
    per_track = tuple(
        TrackBreakdown(
            gt_track_id=gt_id,
            gt_frames=gt_lengths[gt_id],
            matched_id=mapping.get(gt_id, (None, 0))[0],
            idtp=mapping.get(gt_id, (None, 0))[1],
            identity_recall=mapping.get(gt_id, (None, 0))[1] / gt_lengths[gt_id],
            id_switches=switches[gt_id],
        )
        for gt_id in gt_ids
    )
    report = EvalReport(
        id_switches=sum(switches.values()),
        aq_proxy=aq_proxy,
        per_track=per_track,
        matching_space=output.matching_space_stats(),
        idtp=idtp,
        gt_detections=n_gt,
        predicted_detections=n_pred,
    )
    logger.info(f"Evaluated {gt.num_frames} frames: {report.id_switches} id switches, aq_proxy {aq_proxy:.4f}")
    return report


def mean_and_std(values) -> Tuple[float, float]:
    array = np.asarray(list(values), dtype=np.float64)
    if array.size == 0:
        return 0.0, 0.0
    return float(array.mean()), float(array.std())
