"""Attention-based trajectory predictor.

An LSTM encoder embeds the observed window of the subject and of every
neighbour. At each decode step a learned soft attention over the subject's
own encoder states is merged with a fixed inverse-distance ("hardwired")
attention over the neighbours' encoder states; the merged context conditions
an LSTM decoder that emits the next position.

All positions handled here are normalized to the unit square. Encoder and
decoder inputs are ``[p - 0.5, velocity_scale * (p - p_prev)]`` and the output
head predicts a scaled displacement, so a model with all-zero parameters
predicts a stationary target at its last observed position.
"""

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import neuralnet as nn

log = logging.getLogger(__name__)

INPUT_DIM = 4

# (epochs, learning rate) phases that fit a 200-scene training set into a few
# minutes on one CPU; the full-length defaults live in PredictorConfig
DESK_SCHEDULE = ((10, 3e-3), (4, 5e-4))


@dataclass
class PredictorConfig:
    hidden_dim: int = 32
    attention_dim: int = 16
    obs_short: int = 3
    pred_short: int = 2
    obs_long: int = 10
    pred_long: int = 10
    radius: float = 0.2
    eps_dist: float = 1e-3
    velocity_scale: float = 40.0
    lr: float = 1e-4
    finetune_lr: float = 1e-5
    batch_size: int = 32
    epochs: int = 100

    def __post_init__(self):
        for name in ("hidden_dim", "attention_dim", "obs_short", "pred_short", "obs_long", "pred_long"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.radius <= 0 or self.eps_dist <= 0 or self.velocity_scale <= 0:
            raise ValueError("radius, eps_dist and velocity_scale must be > 0")

    def horizon(self, which):
        if which == "short":
            return self.obs_short, self.pred_short
        if which == "long":
            return self.obs_long, self.pred_long
        raise ValueError(f"unknown horizon {which!r}")


@dataclass
class PredictionResult:
    positions: np.ndarray  # (T_pred, 2)
    contexts: np.ndarray  # (T_pred, 2 * hidden_dim)


@dataclass
class NeighbourhoodSnapshot:
    hidden: list = field(default_factory=list)  # per neighbour, (T_obs, H)
    distances: list = field(default_factory=list)  # per neighbour, (T_obs,)


def pad_history(points, length):
    """Last ``length`` points, left-padded by repeating the earliest one."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("empty trajectory")
    if len(pts) >= length:
        return pts[-length:].copy()
    pad = np.repeat(pts[:1], length - len(pts), axis=0)
    return np.concatenate([pad, pts], axis=0)


def features(windows, velocity_scale):
    """Encoder inputs for (B, T, 2) windows; the first step has zero displacement."""
    disp = np.zeros_like(windows)
    disp[:, 1:] = windows[:, 1:] - windows[:, :-1]
    return np.concatenate([windows - 0.5, velocity_scale * disp], axis=-1)


def init_params(config, seed=0):
    rng = np.random.default_rng(seed)
    H = config.hidden_dim
    params = {}
    params.update(nn.init_cell(rng, INPUT_DIM, H, "enc"))
    params.update(nn.init_scorer(rng, H, H, config.attention_dim, "att"))
    params.update(nn.init_cell(rng, INPUT_DIM + 2 * H, H, "dec"))
    params.update(nn.init_linear(rng, H, 2, "out"))
    return params


# -- single-sample building blocks --------------------------------------------

def encode(params, window, velocity_scale=PredictorConfig.velocity_scale, length=None):
    """Hidden states (T, H) from a zero-initialized recurrence over a (T, 2) window.

    With ``length`` set, a window of any other length is rejected.
    """
    window = np.asarray(window, dtype=float)
    if window.ndim != 2 or window.shape[1] != 2 or len(window) == 0:
        raise ValueError("window must be a non-empty (T, 2) array")
    if length is not None and len(window) != length:
        raise ValueError(f"window has {len(window)} points, expected {length}")
    hs, _ = _encode_batch(params, window[None], velocity_scale)
    return hs[0]


def softmax(scores):
    z = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def soft_attention(params, encoded, decoder_hidden):
    """Context vector and weights for one query over (T, H) encoder states."""
    encoded = np.asarray(encoded, dtype=float)
    q = np.asarray(decoder_hidden, dtype=float)
    scores = nn.ffn_score(params, "att", q[None], encoded[None])[0]
    alpha = softmax(scores)
    return alpha @ encoded, alpha


def hardwired_attention(snapshot, hidden_dim, eps_dist=PredictorConfig.eps_dist):
    """Sum of neighbour hidden states weighted by inverse distance."""
    out = np.zeros(hidden_dim)
    for h, d in zip(snapshot.hidden, snapshot.distances):
        w = 1.0 / np.maximum(np.asarray(d, dtype=float), eps_dist)
        out += w @ np.asarray(h, dtype=float)
    return out


def merge_context(c_soft, c_hard):
    c_soft = np.asarray(c_soft, dtype=float)
    c_hard = np.asarray(c_hard, dtype=float)
    if c_soft.shape != c_hard.shape:
        raise ValueError("soft and hardwired contexts differ in dimension")
    return np.tanh(np.concatenate([c_soft, c_hard], axis=-1))


# -- batched forward / backward --------------------------------------------------

@dataclass
class Batch:
    """Subjects (B, T, 2), flat neighbours (M, T, 2) and the subject index of each neighbour."""
    subjects: np.ndarray
    neighbours: np.ndarray
    owner: np.ndarray

    @classmethod
    def from_samples(cls, histories, neighbour_lists):
        subjects = np.asarray(histories, dtype=float)
        T = subjects.shape[1]
        neigh, owner = [], []
        for b, lst in enumerate(neighbour_lists):
            for n in lst:
                neigh.append(n)
                owner.append(b)
        neighbours = np.asarray(neigh, dtype=float).reshape(-1, T, 2)
        return cls(subjects, neighbours, np.asarray(owner, dtype=int))


def _encode_batch(params, windows, velocity_scale, cache=None):
    B, T, _ = windows.shape
    H = params["enc.Wh"].shape[0]
    x = features(windows, velocity_scale)
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    hs = np.empty((B, T, H))
    for t in range(T):
        if cache is None:
            h, c = nn.cell_step(params, "enc", x[:, t], (h, c))
        else:
            (h, c), cc = nn.cell_step(params, "enc", x[:, t], (h, c), cache=True)
            cache.append(cc)
        hs[:, t] = h
    return hs, c


def forward(params, config, batch, n_steps, record=False):
    """Run the predictor on a batch.

    Returns ``(positions (B, S, 2), contexts (B, S, 2H))`` and, when
    ``record`` is set, a tape for :func:`backward`.
    """
    k = config.velocity_scale
    subj = batch.subjects
    B, T, _ = subj.shape
    M = len(batch.owner)
    H = config.hidden_dim
    if subj.shape[2] != 2 or T == 0:
        raise ValueError("subjects must be (B, T, 2) with T >= 1")
    windows = np.concatenate([subj, batch.neighbours], axis=0) if M else subj
    enc_tape = [] if record else None
    hs_all, c_all = _encode_batch(params, windows, k, enc_tape)
    enc = hs_all[:B]

    c_hard = np.zeros((B, H))
    w = gather = None
    if M:
        d = np.linalg.norm(batch.neighbours - subj[batch.owner], axis=-1)
        w = 1.0 / np.maximum(d, config.eps_dist)
        gather = np.zeros((B, M))
        gather[batch.owner, np.arange(M)] = 1.0
        c_hard = gather @ np.einsum("mt,mth->mh", w, hs_all[B:])

    h = enc[:, -1]
    c = c_all[:B]
    q_prev = subj[:, -1]
    q_pp = subj[:, -2] if T > 1 else subj[:, -1]
    positions = np.empty((B, n_steps, 2))
    contexts = np.empty((B, n_steps, 2 * H))
    steps = []
    for s in range(n_steps):
        scores, sc_cache = nn.ffn_score(params, "att", h, enc, cache=True)
        alpha = softmax(scores)
        c_soft = np.einsum("bt,bth->bh", alpha, enc)
        cstar = np.tanh(np.concatenate([c_soft, c_hard], axis=1))
        inp = np.concatenate([q_prev - 0.5, k * (q_prev - q_pp), cstar], axis=1)
        (h_new, c_new), cell_cache = nn.cell_step(params, "dec", inp, (h, c), cache=True)
        q = q_prev + nn.linear(params, "out", h_new) / k
        positions[:, s] = q
        contexts[:, s] = cstar
        if record:
            steps.append((sc_cache, alpha, cstar, cell_cache, h_new))
        h, c = h_new, c_new
        q_pp, q_prev = q_prev, q
    if not record:
        return positions, contexts
    tape = dict(enc_tape=enc_tape, enc=enc, hs_all=hs_all, w=w, gather=gather, steps=steps, B=B, M=M, T=T)
    return positions, contexts, tape


def backward(params, config, tape, dpositions):
    """Gradients of a scalar loss w.r.t. every parameter given dL/dpositions (B, S, 2)."""
    k = config.velocity_scale
    H = config.hidden_dim
    B, M, T = tape["B"], tape["M"], tape["T"]
    steps = tape["steps"]
    S = len(steps)
    enc = tape["enc"]
    grads = nn.zeros_like_params(params)

    # dq[s + 1] is the gradient on the position emitted at decode step s; dq[0] is data
    dq = np.zeros((S + 1, B, 2))
    dq[1:] = np.transpose(dpositions, (1, 0, 2))
    denc = np.zeros_like(enc)
    dc_hard = np.zeros((B, H))
    dh = np.zeros((B, H))
    dc = np.zeros((B, H))
    for s in range(S - 1, -1, -1):
        sc_cache, alpha, cstar, cell_cache, h_new = steps[s]
        g = dq[s + 1]
        dq[s] += g
        dh = dh + nn.linear_backward(params, "out", h_new, g / k, grads)
        dinp, dh, dc = nn.cell_step_backward(params, "dec", cell_cache, dh, dc, grads)
        dvel = k * dinp[:, 2:4]
        dq[s] += dinp[:, :2] + dvel
        if s >= 1:
            dq[s - 1] -= dvel
        dpre = dinp[:, 4:] * (1.0 - cstar ** 2)
        dc_soft = dpre[:, :H]
        dc_hard += dpre[:, H:]
        denc += alpha[..., None] * dc_soft[:, None, :]
        dalpha = np.einsum("bh,bth->bt", dc_soft, enc)
        dscores = alpha * (dalpha - (alpha * dalpha).sum(axis=1, keepdims=True))
        dquery, dkeys = nn.ffn_score_backward(params, "att", sc_cache, dscores, grads)
        denc += dkeys
        dh = dh + dquery

    dhs = np.zeros_like(tape["hs_all"])
    dhs[:B] = denc
    dhs[:B, -1] += dh
    if M:
        dneigh_sum = tape["gather"].T @ dc_hard
        dhs[B:] = tape["w"][..., None] * dneigh_sum[:, None, :]
    dh_t = np.zeros((B + M, H))
    dc_t = np.zeros((B + M, H))
    dc_t[:B] = dc
    for t in range(T - 1, -1, -1):
        dh_t = dh_t + dhs[:, t]
        _, dh_t, dc_t = nn.cell_step_backward(params, "enc", tape["enc_tape"][t], dh_t, dc_t, grads)
    return grads


def mse_loss(positions, targets, velocity_scale):
    """Mean squared position error in displacement units (normalized * velocity_scale)."""
    diff = velocity_scale * (positions - targets)
    loss = float(np.mean(diff ** 2))
    dpos = 2.0 * velocity_scale * diff / diff.size
    return loss, dpos


def loss_and_grads(params, config, batch, targets):
    positions, _, tape = forward(params, config, batch, targets.shape[1], record=True)
    loss, dpos = mse_loss(positions, targets, config.velocity_scale)
    return loss, backward(params, config, tape, dpos)


# -- model wrapper -----------------------------------------------------------------

class Predictor:
    """One motion model for one horizon ("short" or "long")."""

    def __init__(self, config=None, horizon="long", params=None, seed=0):
        self.config = config or PredictorConfig()
        self.horizon = horizon
        self.obs_len, self.pred_len = self.config.horizon(horizon)
        self.params = params if params is not None else init_params(self.config, seed)

    def predict_batch(self, histories, neighbour_lists):
        """Predict for many subjects at once.

        ``histories`` are point arrays of any non-zero length (padded or
        truncated to the observation window); ``neighbour_lists`` holds, per
        subject, neighbour point arrays aligned to the same frames.
        Returns a list of :class:`PredictionResult`.
        """
        if len(histories) == 0:
            return []
        subj = [pad_history(h, self.obs_len) for h in histories]
        neigh = [[pad_history(n, self.obs_len) for n in lst] for lst in neighbour_lists]
        batch = Batch.from_samples(subj, neigh)
        pos, ctx = forward(self.params, self.config, batch, self.pred_len)
        return [PredictionResult(pos[i], ctx[i]) for i in range(len(subj))]

    def predict(self, history, neighbours=()):
        return self.predict_batch([history], [list(neighbours)])[0]

    def snapshot(self, history, neighbours):
        """Neighbourhood snapshot (encoded histories + distances) for one subject."""
        subj = pad_history(history, self.obs_len)
        snap = NeighbourhoodSnapshot()
        for n in neighbours:
            n = pad_history(n, self.obs_len)
            snap.hidden.append(encode(self.params, n, self.config.velocity_scale))
            snap.distances.append(np.linalg.norm(n - subj, axis=1))
        return snap

    def save(self, path, extra=None):
        meta = {"horizon": self.horizon, "config": asdict(self.config)}
        if extra:
            meta.update(extra)
        nn.save_checkpoint(path, self.params, meta)

    @classmethod
    def load(cls, path):
        params, meta = nn.load_checkpoint(path)
        config = PredictorConfig(**meta["config"])
        return cls(config, meta["horizon"], params)


# -- training ---------------------------------------------------------------------

class Dataset:
    """Training windows packed into arrays, with CSR-style neighbour storage."""

    def __init__(self, histories, neighbour_lists, futures):
        if len(histories) == 0:
            raise ValueError("empty dataset")
        self.histories = np.asarray(histories, dtype=float)
        self.futures = np.asarray(futures, dtype=float)
        T = self.histories.shape[1]
        counts = np.array([len(lst) for lst in neighbour_lists], dtype=int)
        self.offsets = np.concatenate([[0], np.cumsum(counts)])
        flat = [n for lst in neighbour_lists for n in lst]
        self.neighbours = np.asarray(flat, dtype=float).reshape(-1, T, 2)

    def __len__(self):
        return len(self.histories)

    @property
    def obs_len(self):
        return self.histories.shape[1]

    @property
    def pred_len(self):
        return self.futures.shape[1]

    def batch(self, idx):
        parts, owner = [], []
        for b, i in enumerate(idx):
            lo, hi = self.offsets[i], self.offsets[i + 1]
            if hi > lo:
                parts.append(self.neighbours[lo:hi])
                owner.extend([b] * (hi - lo))
        T = self.obs_len
        neigh = np.concatenate(parts, axis=0) if parts else np.zeros((0, T, 2))
        return Batch(self.histories[idx], neigh, np.asarray(owner, dtype=int)), self.futures[idx]

    @classmethod
    def from_samples(cls, samples):
        """``samples`` is a sequence of (history, neighbour list, future) triples."""
        samples = list(samples)
        if not samples:
            raise ValueError("empty dataset")
        return cls([s[0] for s in samples], [list(s[1]) for s in samples], [s[2] for s in samples])


def evaluate_loss(predictor, dataset, batch_size=256):
    total = 0.0
    for lo in range(0, len(dataset), batch_size):
        idx = np.arange(lo, min(lo + batch_size, len(dataset)))
        batch, fut = dataset.batch(idx)
        pos, _ = forward(predictor.params, predictor.config, batch, dataset.pred_len)
        total += mse_loss(pos, fut, predictor.config.velocity_scale)[0] * len(idx)
    return total / len(dataset)


def train(predictor, dataset, epochs=None, lr=None, batch_size=None, seed=0, optimizer=None):
    """Minimise position MSE with Adam. Returns the loss curve.

    ``curve[0]`` is the loss before any update; ``curve[e]`` the full-dataset
    loss after epoch ``e``. Parameters are updated in place.
    """
    cfg = predictor.config
    if not isinstance(dataset, Dataset):
        dataset = Dataset.from_samples(dataset)
    if dataset.obs_len != predictor.obs_len or dataset.pred_len != predictor.pred_len:
        raise ValueError(
            f"dataset windows ({dataset.obs_len}, {dataset.pred_len}) do not match "
            f"{predictor.horizon} horizon ({predictor.obs_len}, {predictor.pred_len})")
    epochs = cfg.epochs if epochs is None else epochs
    batch_size = batch_size or cfg.batch_size
    opt = optimizer or nn.Adam(lr=cfg.lr if lr is None else lr)
    rng = np.random.default_rng(seed)
    curve = [evaluate_loss(predictor, dataset)]
    for epoch in range(epochs):
        order = rng.permutation(len(dataset))
        for lo in range(0, len(order), batch_size):
            batch, fut = dataset.batch(order[lo:lo + batch_size])
            _, grads = loss_and_grads(predictor.params, cfg, batch, fut)
            opt.step(predictor.params, grads)
        curve.append(evaluate_loss(predictor, dataset))
        log.info("epoch %d/%d loss %.6g", epoch + 1, epochs, curve[-1])
    return curve


def train_phases(predictor, dataset, phases, batch_size=None, seed=0):
    """Train through ``[(epochs, lr), ...]`` with one Adam state carried across phases.

    Returns the concatenated loss curve (one initial value, then one per epoch).
    """
    if not isinstance(dataset, Dataset):
        dataset = Dataset.from_samples(dataset)
    opt = nn.Adam()
    curve = []
    for k, (epochs, lr) in enumerate(phases):
        opt.lr = lr
        part = train(predictor, dataset, epochs=epochs, batch_size=batch_size, seed=seed + 1000 * k,
                     optimizer=opt)
        curve += part if not curve else part[1:]
    return curve


def fine_tune(predictor, dataset, epochs=None, lr=None, **kwargs):
    lr = predictor.config.finetune_lr if lr is None else lr
    return train(predictor, dataset, epochs=epochs, lr=lr, **kwargs)


def mean_displacement_error(pred, truth):
    return float(np.mean(np.linalg.norm(np.asarray(pred) - np.asarray(truth), axis=-1)))


def constant_position(histories, n_steps):
    h = np.asarray(histories, dtype=float)
    return np.repeat(h[:, -1:, :], n_steps, axis=1)


def constant_velocity(histories, n_steps):
    h = np.asarray(histories, dtype=float)
    v = h[:, -1] - h[:, -2]
    steps = np.arange(1, n_steps + 1)[None, :, None]
    return h[:, -1:, :] + steps * v[:, None, :]
