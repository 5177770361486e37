"""CLEAR-MOT tracking metrics and framewise detection metrics on centroids.

Ground truth and hypotheses are passed frame-indexed: a mapping from frame
number to ``(ids, positions)`` with ``positions`` an (n, 2) array. Helpers
convert track dictionaries and MOTChallenge records into that form.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import pairwise_distances

MT_RATIO = 0.8
ML_RATIO = 0.2


@dataclass
class EvalReport:
    mota: float
    motp: float
    mt: float  # percent of GT targets
    ml: float
    fp: int
    fn: int
    ids: int
    frag: int
    moda: float
    modp: float
    recall: float
    precision: float
    n_gt: int = 0
    n_matches: int = 0
    n_targets: int = 0
    matches: list = field(default_factory=list, repr=False)  # (frame, gt id, hyp id, distance)

    def as_dict(self):
        keys = ("mota", "motp", "mt", "ml", "fp", "fn", "ids", "frag", "moda", "modp",
                "recall", "precision", "n_gt", "n_matches", "n_targets")
        return {k: getattr(self, k) for k in keys}

    def summary(self):
        """Plain-text metric table."""
        d = self.as_dict()
        head = "  ".join(f"{k.upper():>9}" for k in d)
        row = "  ".join(f"{_fmt(v):>9}" for v in d.values())
        return head + "\n" + row

    def key_values(self):
        """Machine-readable ``key=value`` lines."""
        return "\n".join(f"{k}={_fmt(v, full=True)}" for k, v in self.as_dict().items())


def _fmt(v, full=False):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v)) if full else f"{v:.4f}"


def parse_key_values(text):
    out = {}
    for line in text.strip().splitlines():
        k, _, v = line.partition("=")
        out[k.strip()] = float(v) if any(c in v for c in ".en") else int(v)
    return out


def match_frame(dist, threshold):
    """Maximum-cardinality matching among pairs with ``dist <= threshold``,
    ties broken by minimum total distance. Returns a list of (row, col) pairs."""
    dist = np.asarray(dist, dtype=float)
    if dist.size == 0:
        return []
    n, m = dist.shape
    feasible = dist <= threshold
    if not feasible.any():
        return []
    big = threshold * (min(n, m) + 1) + 1.0
    cost = np.where(feasible, dist, big)
    rows, cols = linear_sum_assignment(cost)
    return [(int(r), int(c)) for r, c in zip(rows, cols) if feasible[r, c]]


def _as_frames(data):
    out = {}
    for f, (ids, pos) in data.items():
        ids = [int(i) for i in ids]
        pos = np.asarray(pos, dtype=float).reshape(-1, 2)
        if len(ids) != len(pos):
            raise ValueError(f"frame {f}: {len(ids)} ids but {len(pos)} positions")
        if len(set(ids)) != len(ids):
            raise ValueError(f"frame {f}: duplicate ids")
        out[int(f)] = (ids, pos)
    return out


def evaluate_tracking(gt, hyp, threshold, matcher=match_frame):
    """CLEAR-MOT evaluation.

    Per frame, correspondences from the previous frame are kept while both
    objects are present and within ``threshold``; the rest are matched with
    ``matcher``. An identity switch is counted when a GT target is matched to
    a hypothesis other than the one it was last matched to.
    """
    if threshold <= 0:
        raise ValueError("threshold must be > 0")
    gt = _as_frames(gt)
    hyp = _as_frames(hyp)
    n_gt = sum(len(ids) for ids, _ in gt.values())
    if n_gt == 0:
        raise ValueError("ground truth is empty")

    fp = fn = ids_sw = 0
    dist_sum = 0.0
    tp_score = 0.0
    n_match = 0
    prev = {}  # gt id -> hyp id, previous frame only
    last = {}  # gt id -> last hyp id ever matched
    tracked = {}  # gt id -> list of (frame, bool)
    log = []
    for f in sorted(set(gt) | set(hyp)):
        g_ids, g_pos = gt.get(f, ([], np.zeros((0, 2))))
        h_ids, h_pos = hyp.get(f, ([], np.zeros((0, 2))))
        dist = pairwise_distances(g_pos, h_pos) if len(g_ids) and len(h_ids) else np.zeros((len(g_ids), len(h_ids)))
        h_index = {h: j for j, h in enumerate(h_ids)}
        pairs = []
        used_g, used_h = set(), set()
        for i, g in enumerate(g_ids):
            h = prev.get(g)
            j = h_index.get(h)
            if j is not None and j not in used_h and dist[i, j] <= threshold:
                pairs.append((i, j))
                used_g.add(i)
                used_h.add(j)
        free_g = [i for i in range(len(g_ids)) if i not in used_g]
        free_h = [j for j in range(len(h_ids)) if j not in used_h]
        if free_g and free_h:
            sub = dist[np.ix_(free_g, free_h)]
            pairs += [(free_g[r], free_h[c]) for r, c in matcher(sub, threshold)]
        cur = {}
        for i, j in pairs:
            g, h = g_ids[i], h_ids[j]
            if g in last and last[g] != h:
                ids_sw += 1
            last[g] = h
            cur[g] = h
            d = float(dist[i, j])
            dist_sum += d
            tp_score += min(1.0, max(0.0, 1.0 - d / threshold))
            log.append((f, g, h, d))
        prev = cur
        n_match += len(pairs)
        fp += len(h_ids) - len(pairs)
        fn += len(g_ids) - len(pairs)
        for g in g_ids:
            tracked.setdefault(g, []).append(g in cur)

    mt = ml = frag = 0
    for flags in tracked.values():
        flags = np.asarray(flags, dtype=bool)
        ratio = flags.mean()
        mt += ratio >= MT_RATIO
        ml += ratio <= ML_RATIO
        hit = np.flatnonzero(flags)
        if len(hit):
            span = flags[hit[0]:hit[-1] + 1]
            frag += int(np.sum(span[:-1] & ~span[1:]))
    n_t = len(tracked)
    return EvalReport(
        mota=1.0 - (fp + fn + ids_sw) / n_gt,
        motp=dist_sum / n_match if n_match else float("nan"),
        mt=100.0 * mt / n_t,
        ml=100.0 * ml / n_t,
        fp=fp, fn=fn, ids=ids_sw, frag=frag,
        moda=1.0 - (fp + fn) / n_gt,
        modp=tp_score / n_match if n_match else float("nan"),
        recall=n_match / n_gt,
        precision=n_match / (n_match + fp) if n_match + fp else float("nan"),
        n_gt=n_gt, n_matches=n_match, n_targets=n_t, matches=log,
    )


def evaluate_detection(gt, detections, threshold, matcher=match_frame):
    """Framewise detection accuracy: ``(moda, modp, precision, recall)``.

    ``gt`` maps frame -> (n, 2) positions (or ``(ids, positions)``);
    ``detections`` maps frame -> (k, 2) positions.
    """
    if threshold <= 0:
        raise ValueError("threshold must be > 0")

    def pts(v):
        if isinstance(v, tuple):
            v = v[1]
        return np.asarray(v, dtype=float).reshape(-1, 2)

    n_gt = sum(len(pts(v)) for v in gt.values())
    if n_gt == 0:
        raise ValueError("ground truth is empty")
    fp = fn = tp = 0
    score = 0.0
    for f in sorted(set(gt) | set(detections)):
        g = pts(gt.get(f, np.zeros((0, 2))))
        d = pts(detections.get(f, np.zeros((0, 2))))
        pairs = matcher(pairwise_distances(g, d), threshold) if len(g) and len(d) else []
        dist = pairwise_distances(g, d) if pairs else None
        for i, j in pairs:
            score += min(1.0, max(0.0, 1.0 - dist[i, j] / threshold))
        tp += len(pairs)
        fp += len(d) - len(pairs)
        fn += len(g) - len(pairs)
    moda = 1.0 - (fp + fn) / n_gt
    modp = score / tp if tp else float("nan")
    precision = tp / (tp + fp) if tp + fp else float("nan")
    return moda, modp, precision, tp / n_gt


def tracks_to_frames(tracks):
    """``{id: (frames, positions)}`` -> frame-indexed ``{frame: (ids, positions)}``."""
    acc = {}
    for tid in sorted(tracks):
        frames, pos = tracks[tid]
        for f, p in zip(frames, np.asarray(pos, dtype=float).reshape(-1, 2)):
            acc.setdefault(int(f), ([], []))
            acc[int(f)][0].append(int(tid))
            acc[int(f)][1].append(p)
    return {f: (ids, np.asarray(p, dtype=float).reshape(-1, 2)) for f, (ids, p) in sorted(acc.items())}


def records_to_frames(records):
    """MOTChallenge records -> frame-indexed centroids."""
    acc = {}
    for r in records:
        acc.setdefault(r.frame, ([], []))
        acc[r.frame][0].append(r.id)
        acc[r.frame][1].append(r.centroid)
    return {f: (ids, np.asarray(p, dtype=float).reshape(-1, 2)) for f, (ids, p) in sorted(acc.items())}
