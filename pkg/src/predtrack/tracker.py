"""Object-pool tracker driven by short- and long-term trajectory predictions.

Each frame runs associate -> spawn -> merge_pass -> terminate ->
refresh_predictions. Detections are gated against every track's short-term
prediction. Outside mode T1, tracks that miss a frame are carried forward on
their long-term prediction (virtual points) and tracks whose long-term
predictions and context sequences agree are merged into the elder. Stale
tracks are retired.

The pool works in normalized coordinates; :func:`run` converts to and from
scene units.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .geometry import Bounds, ZeroNorm, context_dissimilarity, spatial_dissimilarity
from .metrics import match_frame
from .predictor import PredictorConfig

log = logging.getLogger(__name__)

# mode -> (merge on SD, merge on CD, long-term trajectory update)
MODES = {
    "T1": (False, False, False),
    "T2": (True, False, True),
    "T3": (False, True, True),
    "T4": (True, True, True),
}


@dataclass
class TrackerConfig:
    assoc_gate: float = 0.03
    tau_sd: float = 0.025
    tau_cd: float = 0.2
    term_age: int = 10
    mode: str = "T4"
    matching: str = "optimal"
    fill_gaps: bool = True
    predictor: PredictorConfig = field(default_factory=PredictorConfig)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.assoc_gate <= 0 or self.tau_sd <= 0 or self.tau_cd <= 0:
            raise ValueError("assoc_gate, tau_sd and tau_cd must be > 0")
        if self.term_age < 1:
            raise ValueError("term_age must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {sorted(MODES)}")
        if self.matching not in ("optimal", "greedy"):
            raise ValueError("matching must be 'optimal' or 'greedy'")
        return self

    @property
    def use_sd(self):
        return MODES[self.mode][0]

    @property
    def use_cd(self):
        return MODES[self.mode][1]

    @property
    def use_gap_fill(self):
        """Bridge missed frames with long-term predictions (off in T1, or when ``fill_gaps`` is false)."""
        return self.fill_gaps and MODES[self.mode][2]


@dataclass
class Track:
    id: int
    birth_frame: int
    frames: list = field(default_factory=list)
    points: list = field(default_factory=list)
    observed: list = field(default_factory=list)
    boxes: list = field(default_factory=list)
    short_pred: object = None
    long_pred: object = None
    pred_frame: int = 0
    gap_pred: object = None  # long-term prediction made at the last observed point
    gap_frame: int = 0
    last_update: int = 0
    frames_since_update: int = 0
    state: str = "active"

    def add(self, frame, point, observed, box=None):
        if self.frames and frame <= self.frames[-1]:
            raise ValueError(f"track {self.id}: frame {frame} not after {self.frames[-1]}")
        self.frames.append(int(frame))
        self.points.append(np.asarray(point, dtype=float))
        self.observed.append(bool(observed))
        self.boxes.append(box if box is not None else (self.boxes[-1] if self.boxes else None))
        if observed:
            self.last_update = int(frame)
            self.frames_since_update = 0

    @property
    def last_point(self):
        return self.points[-1]

    def history(self, observed_only=False):
        pts = [p for p, o in zip(self.points, self.observed) if o or not observed_only]
        return np.asarray(pts).reshape(-1, 2)

    def window(self, first, last):
        """Points over frames first..last, left-padded with the earliest available."""
        sel = [p for f, p in zip(self.frames, self.points) if first <= f <= last]
        return np.asarray(sel).reshape(-1, 2)

    def trim(self):
        """Drop trailing virtual points."""
        while self.observed and not self.observed[-1]:
            for lst in (self.frames, self.points, self.observed, self.boxes):
                lst.pop()

    def absorb(self, other):
        """Fill frames this track lacks (or only holds virtual points for) from ``other``."""
        mine = {f: i for i, f in enumerate(self.frames)}
        rows = {f: (p, o, b) for f, p, o, b in zip(self.frames, self.points, self.observed, self.boxes)}
        for f, p, o, b in zip(other.frames, other.points, other.observed, other.boxes):
            i = mine.get(f)
            if i is None or (o and not self.observed[i]):
                rows[f] = (p, o, b)
        order = sorted(rows)
        self.frames = order
        self.points = [rows[f][0] for f in order]
        self.observed = [rows[f][1] for f in order]
        self.boxes = [rows[f][2] for f in order]
        self.last_update = max(self.last_update, other.last_update)


@dataclass
class FrameStats:
    frame: int
    matches: list
    spawned: int
    merged: int
    terminated: int
    pool_before: int
    pool_after: int


class Tracker:
    """Object pool plus the per-frame update loop."""

    def __init__(self, config, short_model, long_model):
        self.config = config.validate()
        self.short_model = short_model
        self.long_model = long_model
        self.live = []
        self.archive = []
        self.next_id = 1
        self.frame = None
        self.stats = []

    # -- lifecycle operations -------------------------------------------------

    def _new_track(self, frame, point, box=None):
        t = Track(self.next_id, int(frame))
        t.add(frame, point, True, box)
        self.next_id += 1
        self.live.append(t)
        return t

    def initialise(self, detections, frame=1, boxes=None):
        if self.live or self.archive:
            raise ValueError("initialise needs an empty pool")
        self.spawn(detections, range(len(detections)), frame, boxes)

    def _gate_point(self, track, frame):
        pred = track.short_pred
        offset = frame - track.pred_frame
        idx = min(max(offset, 1), len(pred.positions)) - 1
        return pred.positions[idx]

    def associate(self, detections, frame, boxes=None):
        """Gate detections against short-term predictions and update matched tracks.

        Returns ``(pairs, unmatched_detections, unmatched_tracks)`` with
        pairs of (track index, detection index) into ``self.live``.
        """
        dets = np.asarray(detections, dtype=float).reshape(-1, 2)
        cands = [i for i, t in enumerate(self.live) if t.short_pred is not None]
        pairs = []
        if cands and len(dets):
            pred = np.array([self._gate_point(self.live[i], frame) for i in cands])
            cost = np.linalg.norm(pred[:, None, :] - dets[None, :, :], axis=-1)
            if self.config.matching == "greedy":
                sub = _greedy(cost, self.config.assoc_gate)
            else:
                sub = match_frame(cost, self.config.assoc_gate)
            pairs = [(cands[r], c) for r, c in sub]
        matched_t = {i for i, _ in pairs}
        matched_d = {j for _, j in pairs}
        for i, j in pairs:
            self.live[i].add(frame, dets[j], True, None if boxes is None else boxes[j])
        unmatched_t = [i for i in range(len(self.live)) if i not in matched_t]
        for i in unmatched_t:
            t = self.live[i]
            t.frames_since_update = frame - t.last_update
            if self.config.use_gap_fill and t.gap_pred is not None:
                offset = frame - t.gap_frame
                idx = min(max(offset, 1), len(t.gap_pred.positions)) - 1
                t.add(frame, t.gap_pred.positions[idx], False)
        unmatched_d = [j for j in range(len(dets)) if j not in matched_d]
        return pairs, unmatched_d, unmatched_t

    def spawn(self, detections, indices, frame, boxes=None):
        dets = np.asarray(detections, dtype=float).reshape(-1, 2)
        for j in indices:
            self._new_track(frame, dets[j], None if boxes is None else boxes[j])
        return len(indices)

    def merge_pass(self):
        """Merge younger tracks into elder ones with similar long-term behaviour.

        Pairs are visited in ascending (birth_frame, id) order against the
        predictions held at the start of the pass. Returns the number of merges.
        """
        use_sd, use_cd = self.config.use_sd, self.config.use_cd
        if not (use_sd or use_cd):
            return 0
        pool = sorted((t for t in self.live if t.long_pred is not None), key=lambda t: (t.birth_frame, t.id))
        removed = set()
        for a, elder in enumerate(pool):
            if elder.id in removed:
                continue
            for young in pool[a + 1:]:
                if young.id in removed:
                    continue
                if self.similar(elder, young):
                    elder.absorb(young)
                    elder.frames_since_update = min(elder.frames_since_update, young.frames_since_update)
                    removed.add(young.id)
        if removed:
            self.live = [t for t in self.live if t.id not in removed]
        return len(removed)

    def similar(self, a, b):
        cfg = self.config
        if cfg.use_sd and spatial_dissimilarity(a.long_pred.positions, b.long_pred.positions) >= cfg.tau_sd:
            return False
        if cfg.use_cd:
            try:
                cd = context_dissimilarity(a.long_pred.contexts, b.long_pred.contexts)
            except ZeroNorm:
                return False
            if cd >= cfg.tau_cd:
                return False
        return True

    def terminate(self, frame):
        keep = []
        n = 0
        for t in self.live:
            t.frames_since_update = frame - t.last_update
            if t.frames_since_update >= self.config.term_age:
                t.state = "terminated"
                t.trim()
                self.archive.append(t)
                n += 1
            else:
                keep.append(t)
        self.live = keep
        return n

    def neighbours_of(self, track, radius):
        return [o for o in self.live if o is not track
                and np.linalg.norm(o.last_point - track.last_point) <= radius]

    def _windows(self, model, frame):
        hist, neigh = [], []
        radius = model.config.radius
        for t in self.live:
            if self.config.use_gap_fill:
                first = frame - model.obs_len + 1
                hist.append(t.window(first, frame))
                neigh.append([n.window(first, frame) for n in self.neighbours_of(t, radius)
                              if n.frames[-1] == frame and len(n.window(first, frame))])
            else:
                obs = t.history(observed_only=True)[-model.obs_len:]
                hist.append(obs)
                neigh.append([n.history(observed_only=True)[-model.obs_len:]
                              for n in self.neighbours_of(t, radius)])
        return hist, neigh

    def refresh_predictions(self, frame):
        if not self.live:
            return
        for model, attr in ((self.short_model, "short_pred"), (self.long_model, "long_pred")):
            hist, neigh = self._windows(model, frame)
            for t, res in zip(self.live, model.predict_batch(hist, neigh)):
                setattr(t, attr, res)
        for t in self.live:
            # predictions start right after the last history point
            t.pred_frame = t.frames[-1]
            # a gap is bridged along one prediction rather than re-predicted from its own guesses
            if t.observed[-1]:
                t.gap_pred, t.gap_frame = t.long_pred, t.frames[-1]

    def step(self, frame, detections, boxes=None):
        frame = int(frame)
        if self.frame is not None and frame <= self.frame:
            raise ValueError(f"frame {frame} is not after {self.frame}")
        self.frame = frame
        before = len(self.live)
        pairs, unmatched_d, _ = self.associate(detections, frame, boxes)
        matches = [(self.live[i].id, j) for i, j in pairs]
        spawned = self.spawn(detections, unmatched_d, frame, boxes)
        merged = self.merge_pass()
        terminated = self.terminate(frame)
        self.refresh_predictions(frame)
        self.stats.append(FrameStats(frame, matches, spawned, merged, terminated, before, len(self.live)))

    # -- output -------------------------------------------------------------------

    def tracks(self):
        """All tracks (archive and live) as ``{id: Track}``, trailing virtual points dropped."""
        out = {}
        for t in self.archive + self.live:
            t.trim()
            if t.frames:
                out[t.id] = t
        return dict(sorted(out.items()))


def _greedy(cost, gate):
    pairs = []
    used_r, used_c = set(), set()
    for flat in np.argsort(cost, axis=None, kind="stable"):
        r, c = np.unravel_index(flat, cost.shape)
        if cost[r, c] > gate:
            break
        if r in used_r or c in used_c:
            continue
        pairs.append((int(r), int(c)))
        used_r.add(r)
        used_c.add(c)
    return pairs


@dataclass
class TrackOutput:
    frames: np.ndarray
    positions: np.ndarray  # scene units
    observed: np.ndarray
    boxes: list


def run(frames, config, short_model, long_model, bounds):
    """Track a detection stream.

    ``frames`` yields ``(frame, positions)`` or ``(frame, positions, boxes)``
    in scene units, in increasing frame order; missing frame numbers are
    stepped through with no detections. Returns ``{id: TrackOutput}``.
    """
    if not isinstance(bounds, Bounds):
        bounds = Bounds(*bounds)
    tracker = Tracker(config, short_model, long_model)
    last = None
    for item in frames:
        f, pos = int(item[0]), np.asarray(item[1], dtype=float).reshape(-1, 2)
        boxes = item[2] if len(item) > 2 else None
        if last is not None and f <= last:
            raise ValueError(f"frames out of order: {f} after {last}")
        if last is not None:
            for gap in range(last + 1, f):
                tracker.step(gap, np.zeros((0, 2)))
        tracker.step(f, bounds.normalize(pos), boxes)
        last = f
    out = {}
    for tid, t in tracker.tracks().items():
        out[tid] = TrackOutput(np.asarray(t.frames), bounds.denormalize(np.asarray(t.points)),
                               np.asarray(t.observed), list(t.boxes))
    run.last_tracker = tracker
    return out
