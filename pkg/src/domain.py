import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, List, Tuple

import numpy as np

from .exceptions import EmptyMask, InvalidRLE, ShapeMismatch

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BinaryMask:
    """Run-length encoded single-frame mask.

    Runs alternate background/foreground over the row-major pixel order and
    always start with a (possibly zero-length) background run.
    """

    width: int
    height: int
    runs: Tuple[int, ...]

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise InvalidRLE(f"Mask dimensions must be positive, got {self.width}x{self.height}")
        if any(r < 0 for r in self.runs):
            raise InvalidRLE("Run lengths must be non-negative.", data=self.runs)
        if sum(self.runs) != self.width * self.height:
            raise InvalidRLE(
                f"Runs sum to {sum(self.runs)}, expected {self.width * self.height}",
                data=self.runs,
            )

    @classmethod
    def from_bitmap(cls, bitmap) -> "BinaryMask":
        pixels = np.asarray(bitmap, dtype=bool)
        if pixels.ndim != 2:
            raise ShapeMismatch(f"Expected a 2-D bitmap, got shape {pixels.shape}")
        height, width = pixels.shape
        flat = pixels.ravel()
        changes = np.flatnonzero(np.diff(flat.astype(np.int8))) + 1
        bounds = np.concatenate(([0], changes, [flat.size]))
        runs = np.diff(bounds).tolist()
        if flat.size and flat[0]:
            runs.insert(0, 0)
        return cls(width=width, height=height, runs=tuple(int(r) for r in runs))

    @cached_property
    def bitmap(self) -> np.ndarray:
        values = np.arange(len(self.runs)) % 2 == 1
        flat = np.repeat(values, self.runs)
        flat.setflags(write=False)
        return flat.reshape(self.height, self.width)

    @cached_property
    def area(self) -> int:
        return int(sum(self.runs[1::2]))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.height, self.width


@dataclass(frozen=True)
class NormalizedBox:
    x_tl: float
    y_tl: float
    x_br: float
    y_br: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x_tl, self.y_tl, self.x_br, self.y_br], dtype=np.float64)

    @classmethod
    def from_array(cls, values) -> "NormalizedBox":
        x_tl, y_tl, x_br, y_br = (float(v) for v in values)
        return cls(x_tl, y_tl, x_br, y_br)


@dataclass(frozen=True, eq=False)
class Detection:
    frame_index: int
    class_id: int
    score: float
    mask: BinaryMask
    embedding: np.ndarray

    def __post_init__(self):
        if self.mask.area == 0:
            raise EmptyMask(f"Detection at frame {self.frame_index} has an empty mask.")
        embedding = np.asarray(self.embedding, dtype=np.float64)
        if embedding.ndim != 1:
            raise ShapeMismatch(f"Embedding must be a vector, got shape {embedding.shape}")
        object.__setattr__(self, "embedding", embedding)

    @cached_property
    def box(self) -> NormalizedBox:
        return mask_to_normalized_box(self.mask)


@dataclass(frozen=True)
class Tube:
    clip_local_id: int
    class_id: int
    detections: Tuple[Detection, ...]

    def __post_init__(self):
        frames = [d.frame_index for d in self.detections]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ShapeMismatch(
                f"Tube {self.clip_local_id} frame indices must be strictly increasing: {frames}"
            )
        if any(d.class_id != self.class_id for d in self.detections):
            raise ShapeMismatch(f"Tube {self.clip_local_id} mixes class ids.")

    def at(self, frame_index: int):
        for det in self.detections:
            if det.frame_index == frame_index:
                return det
        return None

    @property
    def frames(self) -> List[int]:
        return [d.frame_index for d in self.detections]

    @property
    def latest(self) -> Detection:
        return self.detections[-1]


@dataclass(frozen=True)
class Clip:
    first_frame: int
    length: int
    tubes: Tuple[Tube, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.length < 1:
            raise ShapeMismatch(f"Clip length must be >= 1, got {self.length}")
        for tube in self.tubes:
            for frame in tube.frames:
                if frame not in self.frame_range:
                    raise ShapeMismatch(
                        f"Tube {tube.clip_local_id} has frame {frame} outside clip "
                        f"[{self.first_frame}, {self.last_frame}]"
                    )

    @property
    def last_frame(self) -> int:
        return self.first_frame + self.length - 1

    @property
    def frame_range(self) -> range:
        return range(self.first_frame, self.first_frame + self.length)

    def iter_frame(self, frame_index: int) -> Iterator[Tuple[Tube, Detection]]:
        for tube in self.tubes:
            det = tube.at(frame_index)
            if det is not None:
                yield tube, det


def _check_same_shape(a: BinaryMask, b: BinaryMask):
    if a.shape != b.shape:
        raise ShapeMismatch(f"Mask shapes differ: {a.shape} vs {b.shape}")


def mask_to_normalized_box(mask: BinaryMask) -> NormalizedBox:
    """Tight box over the foreground, corners divided by the frame size."""
    if mask.area == 0:
        raise EmptyMask()
    pixels = mask.bitmap
    rows = np.flatnonzero(pixels.any(axis=1))
    cols = np.flatnonzero(pixels.any(axis=0))
    return NormalizedBox(
        x_tl=cols[0] / mask.width,
        y_tl=rows[0] / mask.height,
        x_br=(cols[-1] + 1) / mask.width,
        y_br=(rows[-1] + 1) / mask.height,
    )


def mask_intersection(a: BinaryMask, b: BinaryMask) -> int:
    _check_same_shape(a, b)
    return int(np.count_nonzero(a.bitmap & b.bitmap))


def mask_iou(a: BinaryMask, b: BinaryMask) -> float:
    inter = mask_intersection(a, b)
    union = a.area + b.area - inter
    if union == 0:
        return 0.0
    return inter / union
