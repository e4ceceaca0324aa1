import numpy as np
import pytest

from src.domain import BinaryMask, Clip, Detection, Tube


def rect_mask(x0, y0, x1, y1, width=20, height=10) -> BinaryMask:
    pixels = np.zeros((height, width), dtype=bool)
    pixels[y0:y1, x0:x1] = True
    return BinaryMask.from_bitmap(pixels)


def detection(frame, box, embedding=(1.0, 0.0), class_id=1, width=20, height=10) -> Detection:
    return Detection(
        frame_index=frame,
        class_id=class_id,
        score=0.9,
        mask=rect_mask(*box, width=width, height=height),
        embedding=np.asarray(embedding, dtype=float),
    )


def clip_of(first_frame, length, tubes) -> Clip:
    """`tubes` maps clip_local_id -> list of detections."""
    return Clip(
        first_frame=first_frame,
        length=length,
        tubes=tuple(
            Tube(clip_local_id=local_id, class_id=dets[0].class_id, detections=tuple(dets))
            for local_id, dets in sorted(tubes.items())
        ),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
