"""Forward-only k-means cross-attention over clip features.

Pixels of a T-frame clip are stacked along the height axis so a clip is
processed exactly like a single tall frame.
"""
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .exceptions import NonFiniteInput, ShapeMismatch

logger = logging.getLogger(__name__)


def _as_finite(values, ndim: int, name: str) -> np.ndarray:
    array = np.asarray(values, dtype=np.float64)
    if array.ndim != ndim:
        raise ShapeMismatch(f"{name} must have {ndim} dimensions, got shape {array.shape}")
    if not np.isfinite(array).all():
        raise NonFiniteInput(f"{name} contains non-finite values.")
    return array


@dataclass(frozen=True, eq=False)
class ClipFeatures:
    values: np.ndarray  # t x h x w x d

    def __post_init__(self):
        values = _as_finite(self.values, 4, "ClipFeatures")
        if min(values.shape) < 1:
            raise ShapeMismatch(f"ClipFeatures dimensions must be >= 1, got {values.shape}")
        object.__setattr__(self, "values", values)

    @property
    def t(self) -> int:
        return self.values.shape[0]

    @property
    def h(self) -> int:
        return self.values.shape[1]

    @property
    def w(self) -> int:
        return self.values.shape[2]

    @property
    def d(self) -> int:
        return self.values.shape[3]

    def pixels(self) -> np.ndarray:
        return self.values.reshape(-1, self.d)


@dataclass(frozen=True, eq=False)
class ClusterCenters:
    values: np.ndarray  # n x d

    def __post_init__(self):
        values = _as_finite(self.values, 2, "ClusterCenters")
        if values.shape[0] < 1 or values.shape[1] < 1:
            raise ShapeMismatch(f"ClusterCenters needs n, d >= 1, got {values.shape}")
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class ProjectionSet:
    w_qc: np.ndarray
    w_kp: np.ndarray
    w_vp: np.ndarray

    def __post_init__(self):
        for name in ("w_qc", "w_kp", "w_vp"):
            matrix = _as_finite(getattr(self, name), 2, name)
            if matrix.shape[0] != matrix.shape[1]:
                raise ShapeMismatch(f"{name} must be square, got {matrix.shape}")
            object.__setattr__(self, name, matrix)
        if not (self.w_qc.shape == self.w_kp.shape == self.w_vp.shape):
            raise ShapeMismatch("Projection matrices must share one size.")

    @classmethod
    def identity(cls, d: int) -> "ProjectionSet":
        eye = np.eye(d)
        return cls(eye, eye.copy(), eye.copy())

    @property
    def d(self) -> int:
        return self.w_qc.shape[0]


def flatten_clip(features: ClipFeatures) -> ClipFeatures:
    """Merge the t frames into one frame of height t*h."""
    t, h, w, d = features.values.shape
    return ClipFeatures(features.values.reshape(1, t * h, w, d))


def hard_assignment(logits: np.ndarray) -> np.ndarray:
    """One-hot cluster-wise argmax over axis 0; ties go to the lowest cluster."""
    logits = np.asarray(logits, dtype=np.float64)
    winners = np.argmax(logits, axis=0)
    one_hot = np.zeros_like(logits)
    one_hot[winners, np.arange(logits.shape[1])] = 1.0
    return one_hot


def _check_dims(centers: ClusterCenters, features: ClipFeatures, proj: ProjectionSet):
    if not (centers.d == features.d == proj.d):
        raise ShapeMismatch(
            f"Channel mismatch: centers {centers.d}, features {features.d}, projections {proj.d}"
        )


def _attend(centers: ClusterCenters, features: ClipFeatures, proj: ProjectionSet) -> Tuple[np.ndarray, np.ndarray]:
    _check_dims(centers, features, proj)
    pixels = features.pixels()
    queries = centers.values @ proj.w_qc
    keys = pixels @ proj.w_kp
    values = pixels @ proj.w_vp
    assignment = hard_assignment(queries @ keys.T)
    updated = centers.values + assignment @ values
    if not np.isfinite(updated).all():
        raise NonFiniteInput("Center update overflowed.")
    return updated, assignment


def kmeans_cross_attention(centers: ClusterCenters, features: ClipFeatures, proj: ProjectionSet) -> ClusterCenters:
    updated, _ = _attend(centers, features, proj)
    return ClusterCenters(updated)


def run_decoder_iterations(
    centers: ClusterCenters,
    features: ClipFeatures,
    proj: ProjectionSet,
    iters: int,
) -> Tuple[ClusterCenters, np.ndarray]:
    """Apply the update `iters` times; also return the last pixel partition as t x h x w."""
    if iters < 1:
        raise ValueError(f"iters must be >= 1, got {iters}")
    assignment = None
    for step in range(iters):
        updated, assignment = _attend(centers, features, proj)
        centers = ClusterCenters(updated)
        logger.debug(f"decoder iteration {step}: cluster sizes {assignment.sum(axis=1).astype(int).tolist()}")
    labels = np.argmax(assignment, axis=0).reshape(features.t, features.h, features.w)
    return centers, labels
