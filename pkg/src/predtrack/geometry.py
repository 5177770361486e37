"""Distance and dissimilarity primitives shared by the tracker and metrics."""

import numpy as np


class EmptySequence(ValueError):
    pass


class ZeroNorm(ValueError):
    pass


def euclidean(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.hypot(*(a - b)))


def _as_points(seq):
    pts = np.asarray(seq, dtype=float)
    if pts.size == 0:
        raise EmptySequence("point sequence is empty")
    return pts.reshape(-1, 2)


def pairwise_distances(A, B):
    """Euclidean distance matrix between two point arrays, shape (len(A), len(B))."""
    A = np.asarray(A, dtype=float).reshape(-1, 2)
    B = np.asarray(B, dtype=float).reshape(-1, 2)
    diff = A[:, None, :] - B[None, :, :]
    return np.sqrt((diff ** 2).sum(axis=-1))


def directed_hausdorff(A, B):
    """max over a in A of the distance from a to its nearest point in B.

    Timestamps are ignored; only the point sets matter.
    """
    A = _as_points(A)
    B = _as_points(B)
    return float(pairwise_distances(A, B).min(axis=1).max())


def spatial_dissimilarity(A, B):
    """Symmetric Hausdorff distance between two predicted trajectories."""
    A = _as_points(A)
    B = _as_points(B)
    d = pairwise_distances(A, B)
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def context_dissimilarity(U, V):
    """One minus the cosine similarity of two time-flattened context sequences.

    ``U`` and ``V`` are (steps, dim) arrays; the per-step vectors are
    concatenated in time order before the cosine is taken.
    """
    u = np.asarray(U, dtype=float)
    v = np.asarray(V, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"context sequences differ in shape: {u.shape} vs {v.shape}")
    u = u.ravel()
    v = v.ravel()
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ZeroNorm("context sequence has zero norm")
    cos = float(np.dot(u, v) / (nu * nv))
    return 1.0 - min(1.0, max(-1.0, cos))


class Bounds:
    """Axis-aligned scene rectangle used to map positions to the unit square."""

    def __init__(self, xmin, ymin, xmax, ymax):
        if not (xmax > xmin and ymax > ymin):
            raise ValueError("bounds must have positive extent")
        self.xmin, self.ymin, self.xmax, self.ymax = float(xmin), float(ymin), float(xmax), float(ymax)

    @property
    def width(self):
        return self.xmax - self.xmin

    @property
    def height(self):
        return self.ymax - self.ymin

    @property
    def scale(self):
        """Scene units per normalized unit (the larger side, so aspect is kept)."""
        return max(self.width, self.height)

    def as_tuple(self):
        return (self.xmin, self.ymin, self.xmax, self.ymax)

    def contains(self, p):
        return self.xmin <= p[0] <= self.xmax and self.ymin <= p[1] <= self.ymax

    def normalize(self, pts):
        pts = np.asarray(pts, dtype=float)
        return (pts - [self.xmin, self.ymin]) / self.scale

    def denormalize(self, pts):
        pts = np.asarray(pts, dtype=float)
        return pts * self.scale + [self.xmin, self.ymin]

    @classmethod
    def from_points(cls, pts, margin=0.05):
        """Extent of ``pts`` grown by ``margin`` of each side (at least one unit wide)."""
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        if len(pts) == 0:
            raise ValueError("cannot infer bounds from no points")
        lo = pts.min(axis=0)
        hi = pts.max(axis=0)
        span = np.maximum(hi - lo, 1.0)
        lo = lo - margin * span
        hi = lo + span * (1 + 2 * margin)
        return cls(lo[0], lo[1], hi[0], hi[1])

    def __repr__(self):
        return f"Bounds{self.as_tuple()}"
