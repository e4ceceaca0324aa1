import logging
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from .assignment import FORBIDDEN, SimilarityMatrix, hungarian_max, threshold_filter
from .domain import Clip, mask_iou
from .exceptions import NoOverlap

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StitchResult:
    matches: Dict[int, int]  # curr clip_local_id -> global id
    unmatched: Tuple[int, ...]  # curr clip_local_ids
    overlap_frames: Tuple[int, ...]


def overlap_frames(prev: Clip, curr: Clip) -> Tuple[int, ...]:
    return tuple(f for f in curr.frame_range if f in prev.frame_range)


def overlap_similarity(prev: Clip, curr: Clip) -> SimilarityMatrix:
    """Mask IoU summed over the shared frames, prev tubes x curr tubes."""
    frames = overlap_frames(prev, curr)
    if not frames:
        raise NoOverlap(
            f"Clip [{prev.first_frame}, {prev.last_frame}] and "
            f"[{curr.first_frame}, {curr.last_frame}] share no frames"
        )
    values = np.zeros((len(prev.tubes), len(curr.tubes)))
    for i, a in enumerate(prev.tubes):
        for j, b in enumerate(curr.tubes):
            if a.class_id != b.class_id:
                values[i, j] = FORBIDDEN
                continue
            for frame in frames:
                det_a, det_b = a.at(frame), b.at(frame)
                if det_a is not None and det_b is not None:
                    values[i, j] += mask_iou(det_a.mask, det_b.mask)
    return SimilarityMatrix(
        values=values,
        row_keys=tuple(t.clip_local_id for t in prev.tubes),
        col_keys=tuple(t.clip_local_id for t in curr.tubes),
    )


def stitch_clips(prev: Clip, prev_ids: Dict[int, int], curr: Clip, alpha_stitch: float = 0.0) -> StitchResult:
    """Propagate global ids from `prev` to `curr` through the overlapping frames.

    `prev_ids` maps prev clip_local_id -> global id. Tubes of `prev` without an
    id cannot pass one on.
    """
    matrix = overlap_similarity(prev, curr)
    assignment = threshold_filter(hungarian_max(matrix), alpha_stitch)
    matches = {}
    for prev_local, curr_local, iou in assignment.pairs:
        global_id = prev_ids.get(prev_local)
        if global_id is None:
            continue
        matches[curr_local] = global_id
    unmatched = tuple(t.clip_local_id for t in curr.tubes if t.clip_local_id not in matches)
    shared = overlap_frames(prev, curr)
    logger.debug(
        f"stitch {matrix.shape[0]}x{matrix.shape[1]} over frames {shared}: "
        f"{len(matches)} matched, {len(unmatched)} unmatched"
    )
    return StitchResult(matches=matches, unmatched=unmatched, overlap_frames=shared)
