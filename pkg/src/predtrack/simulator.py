"""Synthetic pedestrian scenes: ground truth, corrupted detections and
training windows for the predictor.

Agents follow a route of waypoints under a social-force style model: they
relax toward their preferred velocity, repel each other at short range and
group members are pulled toward their group centroid. Time is in frames and
speeds in scene units per frame.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import Bounds

BOX_SIZE = (0.6, 1.8)

# entry/exit points just inside the boundary of a 20 x 20 arena, as fractions
_PORTALS = np.array([
    [0.05, 0.25], [0.05, 0.75], [0.95, 0.25], [0.95, 0.75],
    [0.25, 0.05], [0.75, 0.05], [0.25, 0.95], [0.75, 0.95],
])
_INTERIOR = np.array([[x, y] for x in (0.3, 0.5, 0.7) for y in (0.3, 0.5, 0.7)])


@dataclass
class SceneConfig:
    seed: int = 0
    bounds: tuple = (0.0, 0.0, 20.0, 20.0)
    n_agents: int = 8
    n_groups: int = 0
    group_size: int = 2
    cohesion: float = 0.1
    cohesion_bound: float = 2.5
    route_length: int = 2
    speed_range: tuple = (0.2, 0.3)
    max_speed: float = 0.4
    relax_frames: float = 5.0
    repulsion: float = 0.08
    repulsion_radius: float = 1.2
    reach_radius: float = 0.8
    spawn_spread: int = 40
    n_frames: int = 120
    p_miss: float = 0.0
    clutter_rate: float = 0.0
    jitter: float = 0.0
    split_rate: float = 0.0  # per-frame chance an agent's detection starts splitting in two
    split_duration: float = 6.0  # mean frames a split lasts
    split_offset: float = 0.5  # distance between the two fragments
    occlusions: list = field(default_factory=list)  # (agent id, first frame, duration)
    name: str = ""

    def validate(self):
        if self.n_frames < 1:
            raise ValueError("n_frames must be >= 1")
        if not 0.0 <= self.p_miss <= 1.0:
            raise ValueError("p_miss must be in [0, 1]")
        if self.clutter_rate < 0 or self.jitter < 0:
            raise ValueError("clutter_rate and jitter must be >= 0")
        if not 0.0 <= self.split_rate <= 1.0 or self.split_duration < 1 or self.split_offset < 0:
            raise ValueError("split_rate must be in [0, 1], split_duration >= 1, split_offset >= 0")
        if self.n_agents < 0 or self.n_groups * self.group_size > self.n_agents:
            raise ValueError("groups need more agents than configured")
        lo, hi = self.speed_range
        if not 0 < lo <= hi <= self.max_speed:
            raise ValueError("speed_range must satisfy 0 < lo <= hi <= max_speed")
        x0, y0, x1, y1 = self.bounds
        if not (x1 > x0 and y1 > y0):
            raise ValueError("bounds must have positive extent")
        for occ in self.occlusions:
            if len(occ) != 3 or occ[2] < 0:
                raise ValueError(f"bad occlusion script {occ!r}")
        return self


@dataclass
class Scene:
    config: SceneConfig
    ground_truth: dict  # agent id -> (frames (n,), positions (n, 2))
    detections: list  # index f - 1 -> (k, 2) array for frame f
    clutter_count: int = 0

    @property
    def bounds(self):
        return Bounds(*self.config.bounds)

    def gt_frames(self):
        """Frame -> {agent id: position}."""
        out = {f: {} for f in range(1, self.config.n_frames + 1)}
        for aid, (frames, pos) in self.ground_truth.items():
            for f, p in zip(frames, pos):
                out[int(f)][aid] = p
        return out


def _simulate(cfg, rng):
    bx = Bounds(*cfg.bounds)
    size = np.array([bx.width, bx.height])
    origin = np.array([bx.xmin, bx.ymin])
    portals = origin + _PORTALS * size
    interior = origin + _INTERIOR * size

    n = cfg.n_agents
    group_of = np.full(n, -1)
    for g in range(cfg.n_groups):
        group_of[g * cfg.group_size:(g + 1) * cfg.group_size] = g

    start = rng.integers(0, cfg.spawn_spread + 1, size=n) if cfg.spawn_spread > 0 else np.zeros(n, int)
    speed = rng.uniform(*cfg.speed_range, size=n)
    routes = []
    pos = np.zeros((n, 2))
    vel = np.zeros((n, 2))
    leaders = {}
    for a in range(n):
        g = group_of[a]
        if g >= 0 and g in leaders:
            lead = leaders[g]
            start[a] = start[lead]
            speed[a] = speed[lead]
            routes.append(list(routes[lead]))
            offset = rng.normal(0.0, 1.0, size=2)
            offset *= 0.9 / max(np.linalg.norm(offset), 1e-9)
            pos[a] = pos[lead] + offset
            vel[a] = vel[lead]
            continue
        entry, exit_ = rng.choice(len(portals), size=2, replace=False)
        mids = rng.choice(len(interior), size=cfg.route_length, replace=False)
        routes.append([interior[m] for m in mids] + [portals[exit_]])
        pos[a] = portals[entry]
        heading = rng.uniform(0, 2 * np.pi)
        vel[a] = speed[a] * np.array([np.cos(heading), np.sin(heading)])
        if g >= 0:
            leaders[g] = a

    target_idx = np.zeros(n, dtype=int)
    alive = np.zeros(n, dtype=bool)
    done = np.zeros(n, dtype=bool)
    tracks = {a: ([], []) for a in range(n)}
    for f in range(1, cfg.n_frames + 1):
        alive |= (start + 1 == f) & ~done
        idx = np.flatnonzero(alive)
        if len(idx):
            acc = np.zeros((len(idx), 2))
            for j, a in enumerate(idx):
                to_goal = routes[a][target_idx[a]] - pos[a]
                dist = np.linalg.norm(to_goal)
                desired = speed[a] * to_goal / max(dist, 1e-9)
                acc[j] = (desired - vel[a]) / cfg.relax_frames
            p = pos[idx]
            diff = p[:, None, :] - p[None, :, :]
            d = np.linalg.norm(diff, axis=-1)
            np.fill_diagonal(d, np.inf)
            near = d < cfg.repulsion_radius
            mag = np.where(near, cfg.repulsion * np.exp(-d / 0.5), 0.0)
            acc += (mag[..., None] * diff / np.maximum(d, 1e-9)[..., None]).sum(axis=1)
            for g in np.unique(group_of[idx]):
                if g < 0:
                    continue
                members = idx[group_of[idx] == g]
                if len(members) < 2:
                    continue
                centroid = pos[members].mean(axis=0)
                for a in members:
                    off = centroid - pos[a]
                    dist = np.linalg.norm(off)
                    j = np.flatnonzero(idx == a)[0]
                    acc[j] += cfg.cohesion * max(dist - 0.6, 0.0) * off / max(dist, 1e-9)
            vel[idx] += acc
            sp = np.linalg.norm(vel[idx], axis=1)
            scale = np.minimum(1.0, cfg.max_speed / np.maximum(sp, 1e-12))
            vel[idx] *= scale[:, None]
            pos[idx] += vel[idx]
            for a in idx:
                if np.linalg.norm(routes[a][target_idx[a]] - pos[a]) < cfg.reach_radius:
                    target_idx[a] += 1
                    if target_idx[a] == len(routes[a]):
                        alive[a] = False
                        done[a] = True
                        continue
                if not bx.contains(pos[a]):
                    alive[a] = False
                    done[a] = True
                    continue
                tracks[a][0].append(f)
                tracks[a][1].append(pos[a].copy())
    gt = {}
    for a in range(n):
        frames, pts = tracks[a]
        if frames:
            gt[a + 1] = (np.asarray(frames, dtype=int), np.asarray(pts, dtype=float))
    return gt


def _corrupt(cfg, gt, rng):
    bx = Bounds(*cfg.bounds)
    occluded = set()
    for aid, first, dur in cfg.occlusions:
        for f in range(int(first), int(first) + int(dur)):
            occluded.add((int(aid), f))
    per_frame = [[] for _ in range(cfg.n_frames)]
    for aid in sorted(gt):
        frames, pts = gt[aid]
        split_left = 0
        for f, p in zip(frames, pts):
            if cfg.split_rate > 0:
                split_left = max(split_left - 1, 0)
                if split_left == 0 and rng.random() < cfg.split_rate:
                    split_left = int(rng.geometric(1.0 / cfg.split_duration))
                    angle = rng.uniform(0, 2 * np.pi)
                    half = 0.5 * cfg.split_offset * np.array([np.cos(angle), np.sin(angle)])
            if (aid, int(f)) in occluded:
                continue
            if cfg.p_miss > 0 and rng.random() < cfg.p_miss:
                continue
            # an over-segmented agent shows up as two fragments either side of its position
            parts = [p + half, p - half] if split_left else [p]
            for c in parts:
                q = c + rng.normal(0.0, cfg.jitter, size=2) if cfg.jitter > 0 else c.copy()
                per_frame[f - 1].append(q)
    n_clutter = 0
    dets = []
    for f in range(cfg.n_frames):
        k = int(rng.poisson(cfg.clutter_rate)) if cfg.clutter_rate > 0 else 0
        n_clutter += k
        pts = per_frame[f]
        if k:
            u = rng.uniform(size=(k, 2))
            pts = pts + list(np.column_stack([bx.xmin + u[:, 0] * bx.width, bx.ymin + u[:, 1] * bx.height]))
        arr = np.asarray(pts, dtype=float).reshape(-1, 2)
        if len(arr) > 1:
            arr = arr[rng.permutation(len(arr))]
        dets.append(arr)
    return dets, n_clutter


def generate(config):
    """Simulate a scene. Ground truth and corruption use independent streams of the seed."""
    config.validate()
    dyn_seq, det_seq = np.random.SeedSequence(config.seed).spawn(2)
    gt = _simulate(config, np.random.default_rng(dyn_seq))
    dets, n_clutter = _corrupt(config, gt, np.random.default_rng(det_seq))
    return Scene(config, gt, dets, n_clutter)


def _window_at(frames, pts, first, last):
    """Positions of one agent over frames first..last, left-padded; None if absent at ``last``."""
    if len(frames) == 0 or last < frames[0] or last > frames[-1]:
        return None
    lo = max(first, frames[0])
    seg = pts[lo - frames[0]:last - frames[0] + 1]
    if lo > first:
        seg = np.concatenate([np.repeat(seg[:1], lo - first, axis=0), seg], axis=0)
    return seg


def make_training_set(scenes, obs_len, pred_len, radius=0.2, stride=1, history_noise=0.0, seed=0):
    """Sliding-window samples ``(history, neighbours, future)`` in normalized coordinates.

    ``scenes`` may hold :class:`Scene` or :class:`SceneConfig` objects.
    Neighbours are the other agents within ``radius`` (normalized) of the
    subject at the last observed frame. Trajectories shorter than
    ``obs_len + pred_len`` are skipped. ``history_noise`` adds Gaussian
    jitter (normalized units) to observed windows only.
    """
    rng = np.random.default_rng(seed)
    samples = []
    for scene in scenes:
        if isinstance(scene, SceneConfig):
            scene = generate(scene)
        bx = scene.bounds
        norm = {aid: (fr, bx.normalize(p)) for aid, (fr, p) in scene.ground_truth.items()}
        for aid in sorted(norm):
            frames, pts = norm[aid]
            total = obs_len + pred_len
            for s in range(0, len(frames) - total + 1, stride):
                hist = pts[s:s + obs_len]
                fut = pts[s + obs_len:s + total]
                first, last = int(frames[s]), int(frames[s + obs_len - 1])
                neigh = []
                for other in sorted(norm):
                    if other == aid:
                        continue
                    w = _window_at(*norm[other], first, last)
                    if w is not None and np.linalg.norm(w[-1] - hist[-1]) <= radius:
                        neigh.append(w)
                if history_noise > 0:
                    hist = hist + rng.normal(0.0, history_noise, size=hist.shape)
                    neigh = [w + rng.normal(0.0, history_noise, size=w.shape) for w in neigh]
                samples.append((hist.copy(), neigh, fut.copy()))
    return samples


def training_scenes(n, seed=1000, **overrides):
    """``n`` clean scenes with varied layouts for predictor training."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        cfg = SceneConfig(
            seed=int(seed + i),
            n_agents=int(rng.integers(4, 11)),
            n_groups=int(rng.integers(0, 2)),
            n_frames=120,
            name=f"train-{i}",
        )
        out.append(replace(cfg, **overrides))
    return out


def standard_benchmark():
    """Frozen benchmark suite used by the acceptance tests and the ablation."""
    noisy = dict(p_miss=0.15, jitter=0.08, clutter_rate=0.3, split_rate=0.03)
    return [
        SceneConfig(seed=11, n_agents=6, spawn_spread=10, n_frames=120, name="crossing", **noisy),
        SceneConfig(seed=12, n_agents=6, n_groups=1, group_size=4, n_frames=120, name="group", **noisy),
        SceneConfig(seed=13, n_agents=5, n_frames=120, name="occlusion-3",
                    occlusions=[(1, 30, 3), (2, 40, 3), (3, 50, 3)], **noisy),
        SceneConfig(seed=14, n_agents=5, n_frames=120, name="occlusion-8",
                    occlusions=[(3, 50, 8)], **noisy),
        SceneConfig(seed=15, n_agents=5, n_frames=120, name="occlusion-12",
                    occlusions=[(2, 50, 12)], **noisy),
        SceneConfig(seed=16, n_agents=8, n_frames=120, name="clutter", p_miss=0.15, jitter=0.08,
                    clutter_rate=2.0, split_rate=0.03),
        SceneConfig(seed=17, n_agents=8, n_frames=120, name="moving-camera", p_miss=0.15, jitter=0.16,
                    clutter_rate=0.3, split_rate=0.03),
    ]
