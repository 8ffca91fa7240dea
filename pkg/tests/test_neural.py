import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from symdet.neural import (Adam, Dense, LSTMCell, MLP, MixtureHead, ParamStore, ShapeError, Tensor,
                           TrainConfig, TrainingDiverged, bidirectional_run, cross_entropy, mdn_nll,
                           mixture_logpdf, nll_logits, tensor as T, train)
from symdet.neural import checkpoint
from symdet.neural.checkpoint import CheckpointError

# three-component mixture at y=0: weights .2/.5/.3, means -1/.5/2, variances .5/1/2
MDN_NLL_3 = 1.391602522792450648277676
FD_STEP = 1e-5
FD_TOL = 1e-4


def fd_check(f, leaves):
    """Compare reverse-mode gradients of scalar f() against central differences.

    Errors are measured per leaf as ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-8).
    """
    for t in leaves:
        t.grad = None
    out = f()
    out.backward()
    worst = 0.0
    for t in leaves:
        g = np.zeros_like(t.data) if t.grad is None else t.grad.copy()
        num = np.zeros_like(t.data)
        it = np.nditer(t.data, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            orig = t.data[i]
            t.data[i] = orig + FD_STEP
            with T.no_grad():
                up = float(f().data)
            t.data[i] = orig - FD_STEP
            with T.no_grad():
                dn = float(f().data)
            t.data[i] = orig
            num[i] = (up - dn) / (2 * FD_STEP)
        denom = max(np.linalg.norm(g), np.linalg.norm(num), 1e-8)
        worst = max(worst, np.linalg.norm(g - num) / denom)
    return worst


def leaf(rng, *shape, scale=1.0):
    return Tensor(rng.standard_normal(shape) * scale, requires_grad=True)


def test_activation_values():
    np.testing.assert_array_equal(T.relu(Tensor([-1.0, 2.0])).data, [0.0, 2.0])
    assert float(T.softsign(Tensor(0.0)).data) == 0.0
    assert float(T.softsign(Tensor(3.0)).data) == 0.75


UNARY = {
    "relu": T.relu, "sigmoid": T.sigmoid, "tanh": T.tanh, "softsign": T.softsign, "softplus": T.softplus,
    "exp": T.exp, "square": T.square, "neg": T.neg,
    "log": lambda x: T.log(T.softplus(x) + 0.1),
    "reciprocal": lambda x: T.reciprocal(T.square(x) + 0.5),
    "softmax": lambda x: T.softmax(x, axis=-1),
    "log_softmax": lambda x: T.log_softmax(x, axis=-1),
    "logsumexp": lambda x: T.logsumexp(x, axis=-1),
    "mean": lambda x: T.mean(x, axis=0),
    "getitem": lambda x: x[1:, ::2],
    "reshape": lambda x: T.reshape(x, (-1,)),
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_gradients(name, rng):
    x = leaf(rng, 3, 4)
    # keep relu away from its kink
    x.data = np.where(np.abs(x.data) < 1e-2, 0.5, x.data)
    w = rng.standard_normal(UNARY[name](x).shape)
    assert fd_check(lambda: T.sum(UNARY[name](x) * w), [x]) < FD_TOL


@pytest.mark.parametrize("op", ["add", "mul", "matmul", "concat", "broadcast_add"])
def test_binary_gradients(op, rng):
    a = leaf(rng, 3, 4)
    b = leaf(rng, 4, 2) if op == "matmul" else leaf(rng, 4) if op == "broadcast_add" else leaf(rng, 3, 4)
    fn = {"add": lambda: a + b, "mul": lambda: a * b, "matmul": lambda: a @ b,
          "concat": lambda: T.concat([a, b], axis=-1), "broadcast_add": lambda: a + b}[op]
    w = rng.standard_normal(fn().shape)
    assert fd_check(lambda: T.sum(fn() * w), [a, b]) < FD_TOL


def test_pick_and_nll_gradient(rng):
    z = leaf(rng, 6, 3)
    labels = rng.integers(0, 3, 6)
    assert fd_check(lambda: nll_logits(z, labels), [z]) < FD_TOL


def test_dense_gradient_and_zero_layer(rng):
    store = ParamStore(1)
    d = Dense(store, "d", 3, 2)
    x = leaf(rng, 5, 3)
    assert fd_check(lambda: T.sum(T.square(d(x))), [x, d.W, d.b]) < FD_TOL
    d.W.data[:] = 0.0
    x.grad = None
    out = d(x)
    np.testing.assert_array_equal(out.data, 0.0)
    T.sum(out).backward()
    np.testing.assert_array_equal(x.grad, 0.0)


def test_dense_shape_error_names_block():
    d = Dense(ParamStore(0), "layer7", 3, 2)
    with pytest.raises(ShapeError, match="layer7"):
        d(np.zeros((1, 4)))


@pytest.mark.parametrize("acts", [("relu",), ("sigmoid", "relu"), ("tanh", "softsign")])
def test_mlp_gradient(acts, rng):
    store = ParamStore(2)
    sizes = [3] + [5] * len(acts) + [2]
    net = MLP(store, "m", sizes, list(acts))
    x = rng.standard_normal((4, 3))
    assert fd_check(lambda: T.sum(T.square(net(x))), list(store)) < FD_TOL


def test_lstm_zero_weights_give_zero_states():
    store = ParamStore(0)
    cell = LSTMCell(store, "c", 2, 3)
    cell.W.data[:] = 0.0
    cell.b.data[:] = 0.0
    hs = cell.run([np.ones((1, 2))] * 4)
    for h in hs:
        np.testing.assert_array_equal(h.data, 0.0)


def test_lstm_length5_gradient(rng):
    store = ParamStore(3)
    cell = LSTMCell(store, "c", 2, 3)
    xs = [leaf(rng, 2, 2) for _ in range(5)]
    assert fd_check(lambda: T.sum(T.square(cell.run(xs)[-1])), list(store) + xs) < FD_TOL


def test_bidirectional_single_step_and_gradient(rng):
    store = ParamStore(4)
    f, b = LSTMCell(store, "f", 1, 2), LSTMCell(store, "b", 1, 2)
    x = rng.standard_normal((3, 1))
    out = bidirectional_run(f, b, [x])
    np.testing.assert_allclose(out[0].data[:, :2], f(x, f.zero_state(3))[0].data)
    np.testing.assert_allclose(out[0].data[:, 2:], b(x, b.zero_state(3))[0].data)
    xs = [rng.standard_normal((2, 1)) for _ in range(4)]
    w = rng.standard_normal((2, 4))
    assert fd_check(lambda: T.sum(bidirectional_run(f, b, xs)[1] * w), list(store)) < FD_TOL


def test_mixture_head_gradient(rng):
    store = ParamStore(5)
    head = MixtureHead(store, "h", 3, components=2, dim=2)
    x = rng.standard_normal((4, 3))
    y = rng.standard_normal((4, 2))
    assert fd_check(lambda: -T.sum(mixture_logpdf(*head(x), y)), list(store)) < FD_TOL
    logw, _, var = head(x)
    np.testing.assert_allclose(np.exp(logw.data).sum(axis=1), 1.0, atol=1e-12)
    assert np.all(var.data > 0)


def test_dropout_gradient_and_inference(rng):
    x = leaf(rng, 4, 5)
    np.testing.assert_array_equal(T.dropout(x, 0.5, None, training=False).data, x.data)
    seed = 9
    f = lambda: T.sum(T.square(T.dropout(x, 0.3, np.random.default_rng(seed), training=True)))
    assert fd_check(f, [x]) < FD_TOL


def _random_graph(rng, store, depth):
    """A random chain of blocks ending in a scalar."""
    width = 3
    x = rng.standard_normal((4, width))
    blocks = []
    for i in range(depth):
        kind = rng.choice(["dense", "act", "concat", "softmax"])
        if kind == "dense":
            out = int(rng.integers(2, 5))
            d = Dense(store, f"g{i}", width, out)
            blocks.append(d)
            width = out
        elif kind == "act":
            blocks.append(T.sigmoid if rng.random() < 0.5 else T.tanh)
        elif kind == "concat":
            blocks.append(lambda h: T.concat([h, T.softsign(h)], axis=-1))
            width *= 2
        else:
            blocks.append(lambda h: T.softmax(h, axis=-1))

    def f():
        h = T.as_tensor(x)
        for blk in blocks:
            h = blk(h)
        return T.sum(T.square(h))
    return f


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_composed_graph_gradient(seed):
    rng = np.random.default_rng(seed)
    store = ParamStore(seed)
    f = _random_graph(rng, store, 6)
    if len(store) == 0:
        store.add("unused", np.zeros(1))
    assert fd_check(f, list(store)) < FD_TOL


def test_unreachable_parameter_gets_zero_gradient(rng):
    store = ParamStore(0)
    a = Dense(store, "a", 2, 2)
    Dense(store, "b", 2, 2)
    T.sum(a(rng.standard_normal((3, 2)))).backward()
    g = store.flat_grad()
    assert g.shape == (store.size(),)
    np.testing.assert_array_equal(store["b.W"].grad if store["b.W"].grad is not None else 0.0, 0.0)


def test_backward_needs_scalar():
    with pytest.raises(ShapeError):
        Tensor(np.ones(3), requires_grad=True).backward()
    with pytest.raises(ShapeError):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_paramstore_flat_roundtrip(rng):
    store = ParamStore(0)
    MLP(store, "m", [3, 4, 2], ["relu"])
    v = store.flat()
    w = rng.standard_normal(v.shape)
    store.set_flat(w)
    np.testing.assert_array_equal(store.flat(), w)
    with pytest.raises(ShapeError):
        store.set_flat(np.zeros(3))
    with pytest.raises(KeyError):
        store.add("m.0.W", np.zeros(1))


def test_cross_entropy_examples():
    assert cross_entropy([0.0, 1.0], 1) == 0.0
    assert cross_entropy(np.full(4, 0.25), 2) == pytest.approx(np.log(4))
    assert cross_entropy([0.25, 0.75], 1) == pytest.approx(-np.log(0.75), abs=1e-15)
    with pytest.warns(RuntimeWarning):
        assert cross_entropy([1.0, 0.0], 1) == pytest.approx(300 * np.log(10))


def test_mdn_nll_examples():
    y = 0.3
    single = mdn_nll([0.0], [[1.0]], [[2.0]], [y])
    gauss = 0.5 * ((y - 1.0) ** 2 / 2.0 + np.log(2.0) + np.log(2 * np.pi))
    assert single == pytest.approx(gauss, abs=1e-14)
    dup = mdn_nll(np.log([0.5, 0.5]), [[1.0], [1.0]], [[2.0], [2.0]], [y])
    assert dup == pytest.approx(single, abs=1e-14)
    three = mdn_nll(np.log([0.2, 0.5, 0.3]), [[-1.0], [0.5], [2.0]], [[0.5], [1.0], [2.0]], [0.0])
    assert three == pytest.approx(MDN_NLL_3, abs=1e-12)


def test_mixture_logpdf_matches_mdn_nll(rng):
    logw = np.log([0.2, 0.5, 0.3])
    mu = np.array([-1.0, 0.5, 2.0])[None, :, None]
    var = np.array([0.5, 1.0, 2.0])[None, :, None]
    v = mixture_logpdf(Tensor(logw[None]), Tensor(mu), Tensor(var), np.zeros((1, 1)))
    assert -float(v.data[0]) == pytest.approx(MDN_NLL_3, abs=1e-12)


def test_adam_zero_gradient_is_noop():
    store = ParamStore(0)
    Dense(store, "d", 2, 2)
    before = store.flat()
    opt = Adam(store)
    for _ in range(3):
        opt.step()
    np.testing.assert_array_equal(store.flat(), before)


def _toy(seed=0, n=200):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 2))
    y = (X[:, 0] + X[:, 1] > 0).astype(int)
    X[:, :2] += np.where(y[:, None] == 1, 0.5, -0.5)
    return X, y


def _fit(config, seed=0):
    X, y = _toy()
    store = ParamStore(seed)
    net = MLP(store, "m", [2, 8, 2], ["relu"])
    trace = train(store, lambda idx: nll_logits(net(X[idx]), y[idx]), len(y), config)
    return store, net, trace, X, y


def test_training_zero_lr_keeps_parameters():
    store0 = ParamStore(0)
    MLP(store0, "m", [2, 8, 2], ["relu"])
    store, *_ = _fit(TrainConfig(lr=0.0, epochs=3))
    np.testing.assert_array_equal(store.flat(), store0.flat())


def test_training_separable_toy():
    store, net, trace, X, y = _fit(TrainConfig(lr=1e-2, epochs=60, batch_size=32))
    with T.no_grad():
        loss = float(nll_logits(net(X), y).data)
    assert loss < 0.1
    assert trace[-1] < trace[0]
    with T.no_grad():
        np.testing.assert_allclose(T.softmax(net(X)).data.sum(axis=1), 1.0, atol=1e-9)


def test_training_deterministic():
    a, *_ = _fit(TrainConfig(lr=1e-2, epochs=5, seed=3))
    b, *_ = _fit(TrainConfig(lr=1e-2, epochs=5, seed=3))
    assert a.flat().tobytes() == b.flat().tobytes()


def test_training_nan_aborts():
    store = ParamStore(0)
    w = store.add("w", np.ones(1))
    with pytest.raises(TrainingDiverged, match="epoch 0, batch 0"):
        train(store, lambda idx: T.sum(w * np.nan), 4, TrainConfig(epochs=1))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(optimizer="sgd")
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)


def test_checkpoint_roundtrip_exact(rng, tmp_path):
    params = {"a": rng.standard_normal((3, 2)), "b": np.array([1e-300, -0.1, np.pi])}
    p = tmp_path / "m.json"
    checkpoint.save(p, kind="viterbinet", arch={"L": 4}, seed=7, config={"lr": 1e-3}, params=params)
    doc = checkpoint.load(p, expect_kind="viterbinet")
    for k in params:
        assert doc["params"][k].tobytes() == params[k].tobytes()
    assert doc["seed"] == 7 and doc["arch"] == {"L": 4}


def test_checkpoint_errors(tmp_path):
    text = checkpoint.dump("detnet", {}, 0, {}, {"w": np.ones(2)})
    with pytest.raises(CheckpointError, match="truncated"):
        checkpoint.loads(text[: len(text) // 2])
    with pytest.raises(CheckpointError, match="expected 'sbrnn'"):
        checkpoint.loads(text, expect_kind="sbrnn")
    with pytest.raises(CheckpointError, match="version 99.*version 1"):
        checkpoint.loads(text.replace('"version": 1', '"version": 99'))
    with pytest.raises(CheckpointError):
        checkpoint.loads('{"format": "other"}')


@settings(max_examples=25)
@given(st.lists(st.floats(-1e300, 1e300, allow_nan=False), min_size=1, max_size=20))
def test_checkpoint_value_exact(values):
    arr = np.array(values)
    doc = checkpoint.loads(checkpoint.dump("sbrnn", {}, 0, {}, {"x": arr}))
    assert doc["params"]["x"].tobytes() == arr.tobytes()
