import math

import numpy as np
import pytest

from predtrack import neuralnet as nn
from predtrack.predictor import Batch, PredictorConfig, init_params, loss_and_grads


def scalar_lstm(Wx, Wh, b, x, h, c):
    """Gate equations evaluated one scalar at a time."""
    H = len(h)
    sig = lambda v: 1.0 / (1.0 + math.exp(-v))
    z = []
    for k in range(4 * H):
        acc = b[k]
        for i in range(len(x)):
            acc += x[i] * Wx[i][k]
        for i in range(H):
            acc += h[i] * Wh[i][k]
        z.append(acc)
    h_new, c_new = [], []
    for k in range(H):
        i_g, f_g, o_g = sig(z[k]), sig(z[H + k]), sig(z[2 * H + k])
        g = math.tanh(z[3 * H + k])
        cn = f_g * c[k] + i_g * g
        c_new.append(cn)
        h_new.append(o_g * math.tanh(cn))
    return h_new, c_new


def test_cell_zero_params_gives_zero_hidden():
    params = {k: np.zeros_like(v) for k, v in nn.init_cell(np.random.default_rng(0), 3, 4, "c").items()}
    h, c = nn.cell_step(params, "c", np.array([[0.3, -2.0, 5.0]]), (np.zeros((1, 4)), np.zeros((1, 4))))
    assert np.all(h == 0.0) and np.all(c == 0.0)


def test_cell_matches_scalar_recomputation():
    params = nn.init_cell(np.random.default_rng(7), 2, 2, "c")
    x = np.array([[1.0, 0.0]])
    h0 = np.array([[0.1, -0.2]])
    c0 = np.array([[0.3, 0.05]])
    h, c = nn.cell_step(params, "c", x, (h0, c0))
    eh, ec = scalar_lstm(params["c.Wx"].tolist(), params["c.Wh"].tolist(), params["c.b"].tolist(),
                         [1.0, 0.0], [0.1, -0.2], [0.3, 0.05])
    assert np.allclose(h[0], eh, atol=1e-14, rtol=0)
    assert np.allclose(c[0], ec, atol=1e-14, rtol=0)


def test_cell_fixed_point_for_contractive_params():
    params = {k: 0.2 * v for k, v in nn.init_cell(np.random.default_rng(3), 2, 4, "c").items()}
    state = (np.zeros((1, 4)), np.zeros((1, 4)))
    x = np.zeros((1, 2))
    hs = []
    for _ in range(200):
        state = nn.cell_step(params, "c", x, state)
        hs.append(state[0].copy())
    tail = max(np.abs(hs[i + 1] - hs[i]).max() for i in range(150, 199))
    assert tail < 1e-6


def test_cell_hidden_bounded(rng):
    params = {k: 3.0 * v for k, v in nn.init_cell(rng, 3, 5, "c").items()}
    state = (np.zeros((50, 5)), np.zeros((50, 5)))
    for _ in range(20):
        state = nn.cell_step(params, "c", rng.normal(size=(50, 3)), state)
        assert np.all(np.abs(state[0]) < 1.0)


def test_cell_dimension_mismatch():
    params = nn.init_cell(np.random.default_rng(0), 2, 3, "c")
    with pytest.raises(ValueError):
        nn.cell_step(params, "c", np.zeros((1, 5)), (np.zeros((1, 3)), np.zeros((1, 3))))


def test_ffn_score_zero_and_manual():
    rng = np.random.default_rng(5)
    params = nn.init_scorer(rng, 3, 3, 4, "a")
    zero = {k: np.zeros_like(v) for k, v in params.items()}
    a = np.ones(3)
    b = np.ones(3)
    assert nn.score_pair(zero, "a", a, b) == 0.0
    W = np.vstack([params["a.Wq"], params["a.Wk"]])
    manual = 0.0
    for j in range(4):
        pre = params["a.b1"][j] + sum(W[i, j] * 1.0 for i in range(6))
        manual += params["a.w2"][j] * math.tanh(pre)
    manual += params["a.b2"][0]
    assert nn.score_pair(params, "a", a, b) == pytest.approx(manual, abs=1e-14)


def test_ffn_score_is_asymmetric():
    params = nn.init_scorer(np.random.default_rng(9), 3, 3, 4, "a")
    rng = np.random.default_rng(10)
    for _ in range(100):
        a, b = rng.normal(size=3), rng.normal(size=3)
        if abs(nn.score_pair(params, "a", a, b) - nn.score_pair(params, "a", b, a)) > 1e-3:
            return
    pytest.fail("no asymmetry witness found")


def test_ffn_dimension_mismatch():
    params = nn.init_scorer(np.random.default_rng(0), 3, 3, 4, "a")
    with pytest.raises(ValueError):
        nn.score_pair(params, "a", np.ones(2), np.ones(3))


def test_linear_mse_gradient_closed_form(rng):
    X = rng.normal(size=(20, 3))
    y = rng.normal(size=(20, 1))
    params = nn.init_linear(rng, 3, 1, "lin")
    params["lin.b"][:] = 0.0
    pred = nn.linear(params, "lin", X)
    dy = 2.0 * (pred - y) / len(X)
    grads = nn.zeros_like_params(params)
    nn.linear_backward(params, "lin", X, dy, grads)
    w = params["lin.W"]
    assert np.allclose(grads["lin.W"], 2.0 * X.T @ (X @ w - y) / len(X), atol=1e-14)


def test_gradient_zero_for_unused_parameter():
    # a one-step observation window makes the attention softmax constant
    cfg = PredictorConfig(hidden_dim=3, attention_dim=2)
    rng = np.random.default_rng(0)
    batch = Batch(rng.uniform(0.2, 0.8, (3, 1, 2)), np.zeros((0, 1, 2)), np.zeros(0, int))
    _, grads = loss_and_grads(init_params(cfg, 1), cfg, batch, rng.uniform(0.2, 0.8, (3, 2, 2)))
    for k in ("att.Wq", "att.Wk", "att.b1", "att.w2", "att.b2"):
        assert np.all(grads[k] == 0.0)


def test_adam_zero_gradient_keeps_params_and_decays_moments():
    opt = nn.Adam(lr=0.1)
    params = {"w": np.array([1.0, -2.0])}
    opt.step(params, {"w": np.array([0.5, 0.5])})
    before = params["w"].copy()
    m = opt.m["w"].copy()
    v = opt.v["w"].copy()
    opt.step(params, {"w": np.zeros(2)})
    assert np.allclose(opt.m["w"], 0.9 * m)
    assert np.allclose(opt.v["w"], 0.999 * v)
    assert opt.t == 2
    # the decayed first moment still moves the parameters, as in standard Adam
    fresh = nn.Adam(lr=0.1)
    p = {"w": np.array([1.0, -2.0])}
    fresh.step(p, {"w": np.zeros(2)})
    assert np.array_equal(p["w"], [1.0, -2.0])
    assert not np.array_equal(before, params["w"])


def test_adam_first_step_is_signed_lr():
    opt = nn.Adam(lr=1e-3)
    params = {"w": np.array([0.0, 0.0, 0.0])}
    g = np.array([0.3, -7.0, 2e-2])
    opt.step(params, {"w": g})
    assert np.allclose(params["w"], -1e-3 * np.sign(g), rtol=1e-5)


def test_adam_converges_on_quadratic_bowl():
    target = np.array([1.5, -0.5, 3.0])
    scale = np.array([1.0, 4.0, 0.5])
    params = {"w": np.zeros(3)}
    opt = nn.Adam(lr=0.05)
    for _ in range(500):
        opt.step(params, {"w": 2 * scale * (params["w"] - target)})
    assert np.allclose(params["w"], target, atol=1e-3)


def test_adam_shape_mismatch():
    with pytest.raises(ValueError):
        nn.Adam().step({"w": np.zeros(3)}, {"w": np.zeros(2)})


def test_checkpoint_roundtrip_is_bit_exact(tmp_path, rng):
    params = {"a.W": rng.normal(size=(3, 4)), "a.b": rng.normal(size=(1,))}
    path = tmp_path / "ck.json"
    nn.save_checkpoint(path, params, {"horizon": "long"})
    loaded, meta = nn.load_checkpoint(path)
    assert meta == {"horizon": "long"}
    for k in params:
        assert loaded[k].shape == params[k].shape
        assert np.array_equal(loaded[k], params[k])
    nn.save_checkpoint(tmp_path / "again.json", loaded, meta)
    assert path.read_bytes() == (tmp_path / "again.json").read_bytes()


def test_checkpoint_rejects_foreign_file(tmp_path):
    p = tmp_path / "x.json"
    p.write_text('{"format": "other"}')
    with pytest.raises(ValueError):
        nn.load_checkpoint(p)
