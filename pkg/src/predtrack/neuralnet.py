"""Small differentiable building blocks: a gated recurrent cell, a feed-forward
scorer, a linear head, the Adam optimiser and a checkpoint format.

Every forward function can return a cache; the matching ``*_backward``
function turns an upstream gradient plus that cache into input and parameter
gradients. Arrays are float64 and batched along the leading axis.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

CHECKPOINT_FORMAT = "predtrack-checkpoint"
CHECKPOINT_VERSION = 1


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def uniform_init(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


# -- recurrent cell ---------------------------------------------------------

def init_cell(rng, input_dim, hidden_dim, prefix):
    fan_in = input_dim + hidden_dim
    return {
        f"{prefix}.Wx": uniform_init(rng, (input_dim, 4 * hidden_dim), fan_in),
        f"{prefix}.Wh": uniform_init(rng, (hidden_dim, 4 * hidden_dim), fan_in),
        f"{prefix}.b": uniform_init(rng, (4 * hidden_dim,), fan_in),
    }


def cell_step(params, prefix, x, state, cache=False):
    """One step of the LSTM cell; gates are packed as input, forget, output, candidate.

    ``x`` is (B, input_dim) and ``state`` a pair of (B, hidden_dim) arrays.
    Returns ``(h, c)`` or ``((h, c), cache)``.
    """
    Wx = params[f"{prefix}.Wx"]
    Wh = params[f"{prefix}.Wh"]
    b = params[f"{prefix}.b"]
    h_prev, c_prev = state
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != Wx.shape[0]:
        raise ValueError(f"{prefix}: input dim {x.shape[-1]} != {Wx.shape[0]}")
    if h_prev.shape[-1] != Wh.shape[0] or c_prev.shape != h_prev.shape:
        raise ValueError(f"{prefix}: state dim mismatch")
    H = Wh.shape[0]
    z = x @ Wx + h_prev @ Wh + b
    i = sigmoid(z[..., :H])
    f = sigmoid(z[..., H:2 * H])
    o = sigmoid(z[..., 2 * H:3 * H])
    g = np.tanh(z[..., 3 * H:])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    if not cache:
        return h, c
    return (h, c), (x, h_prev, c_prev, i, f, o, g, tc)


def cell_step_backward(params, prefix, cache, dh, dc, grads):
    """Backpropagate through one cell step, accumulating parameter grads into ``grads``.

    Returns ``(dx, dh_prev, dc_prev)``.
    """
    x, h_prev, c_prev, i, f, o, g, tc = cache
    dc = dc + dh * o * (1.0 - tc ** 2)
    do = dh * tc
    di = dc * g
    dg = dc * i
    df = dc * c_prev
    dc_prev = dc * f
    dz = np.concatenate([
        di * i * (1.0 - i),
        df * f * (1.0 - f),
        do * o * (1.0 - o),
        dg * (1.0 - g ** 2),
    ], axis=-1)
    grads[f"{prefix}.Wx"] += x.T @ dz
    grads[f"{prefix}.Wh"] += h_prev.T @ dz
    grads[f"{prefix}.b"] += dz.sum(axis=0)
    dx = dz @ params[f"{prefix}.Wx"].T
    dh_prev = dz @ params[f"{prefix}.Wh"].T
    return dx, dh_prev, dc_prev


# -- feed-forward scorer ------------------------------------------------------

def init_scorer(rng, query_dim, key_dim, hidden, prefix):
    fan_in = query_dim + key_dim
    return {
        f"{prefix}.Wq": uniform_init(rng, (query_dim, hidden), fan_in),
        f"{prefix}.Wk": uniform_init(rng, (key_dim, hidden), fan_in),
        f"{prefix}.b1": uniform_init(rng, (hidden,), fan_in),
        f"{prefix}.w2": uniform_init(rng, (hidden,), hidden),
        f"{prefix}.b2": uniform_init(rng, (1,), hidden),
    }


def ffn_score(params, prefix, query, keys, cache=False):
    """Score every key against its batch's query with a one-hidden-layer tanh net.

    The net sees the concatenation ``[query; key]``; splitting its first
    weight matrix into query and key blocks is the same linear map.
    ``query`` is (B, Dq), ``keys`` is (B, T, Dk); returns scores (B, T).
    """
    Wq = params[f"{prefix}.Wq"]
    Wk = params[f"{prefix}.Wk"]
    if query.shape[-1] != Wq.shape[0] or keys.shape[-1] != Wk.shape[0]:
        raise ValueError(f"{prefix}: input dims do not match scorer")
    pre = (query @ Wq)[:, None, :] + keys @ Wk + params[f"{prefix}.b1"]
    act = np.tanh(pre)
    scores = act @ params[f"{prefix}.w2"] + params[f"{prefix}.b2"][0]
    if not cache:
        return scores
    return scores, (query, keys, act)


def ffn_score_backward(params, prefix, cache, dscores, grads):
    """Returns ``(dquery, dkeys)``."""
    query, keys, act = cache
    grads[f"{prefix}.w2"] += np.einsum("bt,bta->a", dscores, act)
    grads[f"{prefix}.b2"] += dscores.sum()
    dpre = dscores[..., None] * params[f"{prefix}.w2"] * (1.0 - act ** 2)
    grads[f"{prefix}.b1"] += dpre.sum(axis=(0, 1))
    grads[f"{prefix}.Wk"] += np.einsum("btk,bta->ka", keys, dpre)
    dq_pre = dpre.sum(axis=1)
    grads[f"{prefix}.Wq"] += query.T @ dq_pre
    dkeys = dpre @ params[f"{prefix}.Wk"].T
    dquery = dq_pre @ params[f"{prefix}.Wq"].T
    return dquery, dkeys


def score_pair(params, prefix, a, b):
    """Scalar score for a single (query, key) pair."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(ffn_score(params, prefix, a[None, :], b[None, None, :])[0, 0])


# -- linear head ----------------------------------------------------------------

def init_linear(rng, in_dim, out_dim, prefix):
    return {
        f"{prefix}.W": uniform_init(rng, (in_dim, out_dim), in_dim),
        f"{prefix}.b": uniform_init(rng, (out_dim,), in_dim),
    }


def linear(params, prefix, x):
    return x @ params[f"{prefix}.W"] + params[f"{prefix}.b"]


def linear_backward(params, prefix, x, dy, grads):
    grads[f"{prefix}.W"] += x.T @ dy
    grads[f"{prefix}.b"] += dy.sum(axis=0)
    return dy @ params[f"{prefix}.W"].T


def zeros_like_params(params):
    return {k: np.zeros_like(v) for k, v in params.items()}


# -- optimiser ------------------------------------------------------------------

@dataclass
class Adam:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, params, grads):
        """Apply one bias-corrected Adam update to ``params`` in place and return it."""
        for k, g in grads.items():
            if g.shape != params[k].shape:
                raise ValueError(f"gradient for {k} has shape {g.shape}, expected {params[k].shape}")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            m = self.m.get(k)
            if m is None:
                m = self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            v = self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return params


def adam_step(state, params, grads):
    return state.step(params, grads)


# -- checkpoints ------------------------------------------------------------------

def save_checkpoint(path, params, meta=None):
    """Write parameters as a JSON key -> {shape, values} map.

    Values are written with Python's shortest round-trip float repr, so a
    load gives back bit-identical arrays.
    """
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "meta": meta or {},
        "params": {
            k: {"shape": list(v.shape), "values": [float(x) for x in v.ravel()]}
            for k, v in sorted(params.items())
        },
    }
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path):
    """Returns ``(params, meta)``."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    params = {}
    for k, entry in doc["params"].items():
        arr = np.asarray(entry["values"], dtype=float)
        params[k] = arr.reshape(entry["shape"])
    return params, doc.get("meta", {})
