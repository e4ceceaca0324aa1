import asyncio
import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import pandas as pd

from .assignment import hungarian_max, threshold_filter
from .config import BENCH_HEADERS, LOCATION_AWARE, NAIVE, SWEEP_HEADERS, TrackerConfig
from .domain import BinaryMask, Clip, Detection
from .exceptions import ClipSequenceError
from .memory import MemoryBuffer
from .metrics import DEFAULT_IOU_GATE, evaluate, mean_and_std
from .simulator import ScenarioSpec, generate, standard_suite
from .stitching import stitch_clips

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrackedObject:
    global_id: int
    class_id: int
    mask: BinaryMask


@dataclass(frozen=True)
class FrameTracks:
    frame_index: int
    objects: Tuple[TrackedObject, ...] = ()


@dataclass(frozen=True)
class StepTelemetry:
    step: int
    frame: int
    stitch_invoked: bool
    stitched: int
    memory_rows: int
    memory_cols: int
    memory_matched: int
    newborn: int

    @property
    def memory_size(self) -> int:
        return self.memory_rows * self.memory_cols


@dataclass
class TrackOutput:
    frames: List[FrameTracks] = field(default_factory=list)
    steps: List[StepTelemetry] = field(default_factory=list)

    @property
    def first_frame(self) -> int:
        return self.frames[0].frame_index if self.frames else 0

    @property
    def num_frames(self) -> int:
        return len(self.frames)

    @property
    def stitch_invocations(self) -> int:
        return sum(1 for s in self.steps if s.stitch_invoked)

    def memory_steps(self) -> List[StepTelemetry]:
        """Steps after the first, where the memory stage can run."""
        return [s for s in self.steps if s.step > 0]

    def matching_space_stats(self) -> Tuple[float, int]:
        return matching_space_stats(self)


def matching_space_stats(output: TrackOutput) -> Tuple[float, int]:
    """Average and maximum memory-stage matrix size M x N."""
    sizes = [s.memory_size for s in output.memory_steps()]
    if not sizes:
        return 0.0, 0
    return sum(sizes) / len(sizes), max(sizes)


def matching_space_reduction(lamb: TrackOutput, naive: TrackOutput) -> float:
    """How many times smaller the first output's average matrix is."""
    lamb_avg, _ = matching_space_stats(lamb)
    naive_avg, _ = matching_space_stats(naive)
    if lamb_avg == 0:
        return float("inf") if naive_avg > 0 else 1.0
    return naive_avg / lamb_avg


class VideoTracker:
    """Hierarchical matcher for one video: stitching first, then the memory buffer."""

    def __init__(self, config: TrackerConfig):
        self.config = config
        self.buffer = MemoryBuffer(
            tau=config.tau,
            lam=config.lam,
            temperature=config.temperature,
            mode=config.buffer_mode,
            use_location=config.location_enabled,
            use_appearance=config.use_appearance,
        )
        self._next_id = itertools.count(1)
        self.allocated = 0
        self._prev_clip: Optional[Clip] = None
        self._prev_ids: Dict[int, int] = {}
        self.output = TrackOutput()

    def _check_sequence(self, clips: Sequence[Clip]):
        stride = self.config.stride
        for k, clip in enumerate(clips):
            expected = clips[0].first_frame + k * stride
            if clip.first_frame != expected:
                raise ClipSequenceError(
                    f"Clip {k} starts at frame {clip.first_frame}, expected {expected} "
                    f"(clip_length={self.config.clip_length}, overlap={self.config.overlap})"
                )
            if clip.length > self.config.clip_length:
                raise ClipSequenceError(
                    f"Clip {k} has length {clip.length}, longer than clip_length={self.config.clip_length}"
                )
            if k < len(clips) - 1 and clip.length != self.config.clip_length:
                raise ClipSequenceError(f"Only the last clip may be short; clip {k} has length {clip.length}")

    def _new_frames(self, clip: Clip) -> range:
        if self._prev_clip is None:
            return clip.frame_range
        start = max(clip.first_frame, self._prev_clip.last_frame + 1)
        return range(start, clip.last_frame + 1)

    def step(self, clip: Clip) -> StepTelemetry:
        k = len(self.output.steps)
        new_frames = self._new_frames(clip)
        current_frame = clip.last_frame
        self.buffer.refresh(current_frame)

        ids: Dict[int, int] = {}
        stitch_invoked = False
        if self._prev_clip is not None and self.config.stitching_enabled:
            result = stitch_clips(self._prev_clip, self._prev_ids, clip, self.config.alpha_stitch)
            ids.update(result.matches)
            stitch_invoked = True
        stitched = len(ids)

        # observation of a tube = its latest detection inside the new frames
        observations: Dict[int, Detection] = {}
        for tube in clip.tubes:
            fresh = [d for d in tube.detections if d.frame_index in new_frames]
            if fresh:
                observations[tube.clip_local_id] = fresh[-1]

        pending = [
            (tube.clip_local_id, observations[tube.clip_local_id])
            for tube in clip.tubes
            if tube.clip_local_id not in ids and tube.clip_local_id in observations
        ]
        memory_rows = memory_cols = memory_matched = 0
        if k > 0:
            candidates = self.buffer.candidates(exclude=ids.values())
            memory_rows, memory_cols = len(candidates), len(pending)
            if candidates and pending:
                matrix = self.buffer.similarity_matrix(candidates, pending)
                assignment = threshold_filter(hungarian_max(matrix), self.config.alpha)
                for global_id, local_id, _ in assignment.pairs:
                    ids[local_id] = global_id
                memory_matched = len(assignment.pairs)

        newborn = 0
        for local_id, _ in pending:
            if local_id not in ids:
                ids[local_id] = next(self._next_id)
                self.allocated += 1
                newborn += 1

        matches = [(ids[local_id], det) for local_id, det in observations.items() if local_id in ids]
        self.buffer.upsert_from_matches(matches, current_frame)

        for frame in new_frames:
            objects = tuple(
                TrackedObject(global_id=ids[tube.clip_local_id], class_id=tube.class_id, mask=det.mask)
                for tube, det in clip.iter_frame(frame)
                if tube.clip_local_id in ids
            )
            self.output.frames.append(FrameTracks(frame_index=frame, objects=objects))

        telemetry = StepTelemetry(
            step=k,
            frame=current_frame,
            stitch_invoked=stitch_invoked,
            stitched=stitched,
            memory_rows=memory_rows,
            memory_cols=memory_cols,
            memory_matched=memory_matched,
            newborn=newborn,
        )
        self.output.steps.append(telemetry)
        self._prev_clip = clip
        self._prev_ids = {local_id: gid for local_id, gid in ids.items()}
        logger.debug(
            f"step {k} frame {current_frame}: stitched {stitched}, memory {memory_rows}x{memory_cols} "
            f"matched {memory_matched}, newborn {newborn}"
        )
        return telemetry

    def process(self, clips: Sequence[Clip]) -> TrackOutput:
        self._check_sequence(clips)
        for clip in clips:
            self.step(clip)
        avg, peak = matching_space_stats(self.output)
        logger.info(
            f"Tracked {len(clips)} clips ({self.config.mode}, {self.config.buffer_mode}): "
            f"{self.allocated} ids, matching space avg {avg:.2f} max {peak}"
        )
        return self.output


def process_video(clips: Sequence[Clip], config: TrackerConfig) -> TrackOutput:
    return VideoTracker(config).process(clips)


def suite_videos(config: TrackerConfig, suite: Optional[Sequence[Tuple[str, ScenarioSpec]]] = None):
    """(name, clips, ground truth) per scenario, cut with the config's clip layout.

    The standard suite is seeded with `config.rng_seed` as offset.
    """
    suite = standard_suite(config.rng_seed) if suite is None else suite
    videos = []
    for name, spec in suite:
        gt, clips = generate(spec, config.clip_length, config.overlap)
        videos.append((name, clips, gt))
    return videos


@dataclass
class SweepResult:
    table: pd.DataFrame
    mean: float
    std: float


def _run_cell(videos, config: TrackerConfig, iou_gate: float) -> float:
    scores = []
    for name, clips, gt in videos:
        output = process_video(clips, config)
        scores.append(evaluate(output, gt, iou_gate).aq_proxy)
    return sum(scores) / len(scores) if scores else 0.0


async def _sweep(videos, cells: List[TrackerConfig], iou_gate: float) -> List[float]:
    loop = asyncio.get_running_loop()
    tasks = [loop.run_in_executor(None, _run_cell, videos, cell, iou_gate) for cell in cells]
    return await asyncio.gather(*tasks)


def parameter_sweep(
    videos: Sequence[Tuple[str, Sequence[Clip], object]],
    base_config: TrackerConfig,
    grid: Mapping[str, Sequence],
    iou_gate: float = DEFAULT_IOU_GATE,
) -> SweepResult:
    """Run every combination of the `grid` config overrides over `videos`.

    `videos` holds (name, clips, ground truth) triples; a cell scores the mean
    aq_proxy over them. Cells run concurrently, rows come back in grid order.
    """
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ValueError("Sweep grid must name at least one field and every axis must be non-empty")
    names = list(grid)
    combos = list(itertools.product(*(grid[n] for n in names)))
    cells = [base_config.with_overrides(**dict(zip(names, combo))) for combo in combos]
    logger.info(f"Sweeping {len(cells)} cells over {len(videos)} videos: {names}")
    scores = asyncio.run(_sweep(list(videos), cells, iou_gate))
    table = pd.DataFrame([list(combo) + [score] for combo, score in zip(combos, scores)], columns=names + ["aq_proxy"])
    mean, std = mean_and_std(table["aq_proxy"])
    return SweepResult(table=table, mean=mean, std=std)


def hyperparameter_sweep(videos, base_config: TrackerConfig, tau_grid, alpha_grid, iou_gate: float = DEFAULT_IOU_GATE) -> SweepResult:
    result = parameter_sweep(videos, base_config, {"tau": list(tau_grid), "alpha": list(alpha_grid)}, iou_gate)
    result.table = result.table[SWEEP_HEADERS]
    return result


BENCH_MODES = {"lamb": LOCATION_AWARE, "naive": NAIVE}


@dataclass
class BenchResult:
    table: pd.DataFrame
    reductions: Dict[str, float] = field(default_factory=dict)


def run_bench(
    suite: Optional[Sequence[Tuple[str, ScenarioSpec]]] = None,
    modes: Sequence[str] = ("lamb", "naive"),
    base_config: Optional[TrackerConfig] = None,
    tau: Optional[int] = None,
    iou_gate: float = DEFAULT_IOU_GATE,
) -> BenchResult:
    """Track every scenario under each buffer mode; one row per (scenario, mode)."""
    base_config = base_config or TrackerConfig()
    rows = []
    outputs: Dict[Tuple[str, str], TrackOutput] = {}
    videos = suite_videos(base_config, suite)
    for name, clips, gt in videos:
        for mode in modes:
            config = base_config.with_overrides(buffer_mode=BENCH_MODES[mode])
            if tau is not None:
                config = config.with_overrides(tau=tau)
            output = process_video(clips, config)
            report = evaluate(output, gt, iou_gate)
            avg, peak = report.matching_space
            outputs[name, mode] = output
            rows.append([name, config.buffer_mode, config.tau, report.id_switches, report.aq_proxy, avg, peak])
    reductions = {}
    if "lamb" in modes and "naive" in modes:
        reductions = {name: matching_space_reduction(outputs[name, "lamb"], outputs[name, "naive"]) for name, _, _ in videos}
    return BenchResult(table=pd.DataFrame(rows, columns=BENCH_HEADERS), reductions=reductions)
