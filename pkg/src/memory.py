"""Memory buffer for long-term association.

Each tracked object keeps an appearance vector (moving average of its query
embeddings) and a short box history. Objects that go undetected have their
box extrapolated at constant velocity, and entries unseen for more than
`tau` frames are dropped.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .assignment import FORBIDDEN, SimilarityMatrix
from .config import LOCATION_AWARE, NAIVE
from .domain import Detection, NormalizedBox
from .exceptions import DegenerateEmbedding, DuplicateMatch, NoObservation, ShapeMismatch

logger = logging.getLogger(__name__)

DEFAULT_LAMBDA = 0.8
DEFAULT_TEMPERATURE = 1.0
DEFAULT_TAU = {LOCATION_AWARE: 10, NAIVE: 1}


@dataclass(eq=False)
class MemoryEntry:
    global_id: int
    class_id: int
    q_hat: np.ndarray
    box_history: Tuple[NormalizedBox, ...]  # newest first
    last_seen_frame: int
    created_frame: int
    missed_steps: int = 0
    anchor: Optional[NormalizedBox] = None  # last observed box
    velocity: Optional[np.ndarray] = None

    def __post_init__(self):
        self.q_hat = np.asarray(self.q_hat, dtype=np.float64)
        self.box_history = tuple(self.box_history)[:3]
        if not self.box_history:
            raise NoObservation(f"Entry {self.global_id} has no stored box.")
        if self.last_seen_frame < self.created_frame:
            raise ValueError(
                f"Entry {self.global_id}: last seen {self.last_seen_frame} before created {self.created_frame}"
            )
        if self.anchor is None:
            self.anchor = self.box_history[0]
        if self.velocity is None and self.missed_steps == 0 and len(self.box_history) >= 2:
            self.velocity = self.box_history[0].as_array() - self.box_history[1].as_array()

    @property
    def box(self) -> NormalizedBox:
        return self.box_history[0]


def encode_appearance(entry_q_hat, q_current, lam: float = DEFAULT_LAMBDA) -> np.ndarray:
    """Moving average of the stored and current appearance vectors."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    if entry_q_hat is None and q_current is None:
        raise NoObservation("No stored or current appearance vector.")
    if q_current is None:
        return np.asarray(entry_q_hat, dtype=np.float64)
    if entry_q_hat is None:
        return np.asarray(q_current, dtype=np.float64)
    stored = np.asarray(entry_q_hat, dtype=np.float64)
    current = np.asarray(q_current, dtype=np.float64)
    if stored.shape != current.shape:
        raise ShapeMismatch(f"Appearance shapes differ: {stored.shape} vs {current.shape}")
    return (1.0 - lam) * stored + lam * current


def encode_location(entry: Optional[MemoryEntry], box_current: Optional[NormalizedBox]) -> NormalizedBox:
    """Observed box when there is one, otherwise a constant-velocity prediction.

    Predictions are not clamped to the frame.
    """
    if box_current is not None:
        return box_current
    if entry is None or not entry.box_history:
        raise NoObservation("No stored box to extrapolate from.")
    if entry.velocity is None:
        return entry.box
    steps = entry.missed_steps + 1
    return NormalizedBox.from_array(entry.anchor.as_array() + steps * entry.velocity)


def similarity(
    q_i,
    b_i: NormalizedBox,
    entry: MemoryEntry,
    temperature: float = DEFAULT_TEMPERATURE,
    use_location: bool = True,
    use_appearance: bool = True,
    entry_box: Optional[NormalizedBox] = None,
) -> float:
    """exp(-|b_i - b_j|^2 / T) * cos(q_i, q_j).

    Either factor is replaced by 1 when its feature is disabled. `entry_box`
    overrides the entry's stored box (the pipeline passes the prediction for
    the current step).
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    score = 1.0
    if use_location:
        stored = entry_box if entry_box is not None else entry.box
        delta = b_i.as_array() - stored.as_array()
        score *= math.exp(-float(delta @ delta) / temperature)
    if use_appearance:
        score *= cosine(q_i, entry.q_hat)
    return score


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"Appearance shapes differ: {a.shape} vs {b.shape}")
    norm_a, norm_b = np.linalg.norm(a), np.linalg.norm(b)
    if norm_a == 0 or norm_b == 0:
        raise DegenerateEmbedding()
    return float(np.clip(a @ b / (norm_a * norm_b), -1.0, 1.0))


class MemoryBuffer:
    """Per-video store of tracked objects. Mutated by one pipeline only."""

    def __init__(
        self,
        tau: Optional[int] = None,
        lam: float = DEFAULT_LAMBDA,
        temperature: float = DEFAULT_TEMPERATURE,
        mode: str = LOCATION_AWARE,
        use_location: Optional[bool] = None,
        use_appearance: bool = True,
    ):
        if mode not in DEFAULT_TAU:
            raise ValueError(f"Unknown buffer mode: {mode}")
        self.mode = mode
        self.tau = DEFAULT_TAU[mode] if tau is None else tau
        self.lam = lam
        self.temperature = temperature
        self.use_location = (mode == LOCATION_AWARE) if use_location is None else use_location
        self.use_appearance = use_appearance
        self.entries: Dict[int, MemoryEntry] = {}

    def __len__(self):
        return len(self.entries)

    def __contains__(self, global_id):
        return global_id in self.entries

    def refresh(self, current_frame: int) -> List[int]:
        """Evict entries last seen more than tau frames before `current_frame`."""
        cutoff = current_frame - self.tau
        removed = sorted(gid for gid, e in self.entries.items() if e.last_seen_frame < cutoff)
        for gid in removed:
            del self.entries[gid]
        if removed:
            logger.debug(f"frame {current_frame}: refreshed out {removed}")
        return removed

    def candidates(self, exclude: Iterable[int] = ()) -> List[MemoryEntry]:
        excluded = set(exclude)
        return [self.entries[gid] for gid in sorted(self.entries) if gid not in excluded]

    def similarity_matrix(
        self,
        entries: Sequence[MemoryEntry],
        observations: Sequence[Tuple[int, Detection]],
    ) -> SimilarityMatrix:
        """Rows are entries, cols are (key, detection) observations; classes gate."""
        values = np.full((len(entries), len(observations)), FORBIDDEN)
        for i, entry in enumerate(entries):
            predicted = encode_location(entry, None)
            for j, (_, det) in enumerate(observations):
                if det.class_id != entry.class_id:
                    continue
                values[i, j] = similarity(
                    det.embedding,
                    det.box,
                    entry,
                    self.temperature,
                    use_location=self.use_location,
                    use_appearance=self.use_appearance,
                    entry_box=predicted,
                )
        return SimilarityMatrix(
            values=values,
            row_keys=tuple(e.global_id for e in entries),
            col_keys=tuple(key for key, _ in observations),
        )

    def upsert_from_matches(self, matches: Sequence[Tuple[int, Detection]], current_frame: int):
        """Encode matched detections, extrapolate everyone else, then refresh."""
        seen = set()
        for global_id, _ in matches:
            if global_id in seen:
                raise DuplicateMatch(f"Track {global_id} matched twice at frame {current_frame}", data=global_id)
            seen.add(global_id)

        for global_id, det in matches:
            entry = self.entries.get(global_id)
            if entry is None:
                self.entries[global_id] = MemoryEntry(
                    global_id=global_id,
                    class_id=det.class_id,
                    q_hat=encode_appearance(None, det.embedding, self.lam),
                    box_history=(encode_location(None, det.box),),
                    last_seen_frame=det.frame_index,
                    created_frame=det.frame_index,
                )
                continue
            box = encode_location(entry, det.box)
            entry.q_hat = encode_appearance(entry.q_hat, det.embedding, self.lam)
            entry.velocity = box.as_array() - entry.box.as_array()
            entry.anchor = box
            entry.box_history = (box,) + entry.box_history[:2]
            entry.missed_steps = 0
            entry.last_seen_frame = max(entry.last_seen_frame, det.frame_index)

        for global_id, entry in self.entries.items():
            if global_id in seen:
                continue
            predicted = encode_location(entry, None)
            entry.box_history = (predicted,) + entry.box_history[:2]
            entry.missed_steps += 1

        return self.refresh(current_frame)
