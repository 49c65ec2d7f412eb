import numpy as np
import pytest

from kinshape import data, grassmann, network
from kinshape.errors import ConfigError, DataError, DivergenceError, ShapeMismatchError, StateError
from kinshape.gradcheck import central_difference, random_shape, relative_error
from kinshape.network import (
    MlpParams,
    TrainConfig,
    fuse,
    init_mlp,
    mlp_backward,
    mlp_forward,
    softmax,
    softmax_xent,
)


def test_zero_network_is_uniform():
    net = MlpParams([(np.zeros((4, 3)), np.zeros(4)), (np.zeros((2, 4)), np.zeros(2))])
    logits, _ = mlp_forward(net, np.array([1.0, -2.0, 3.0]))
    np.testing.assert_array_equal(logits, [0.0, 0.0])
    np.testing.assert_array_equal(softmax(logits), [0.5, 0.5])


def test_identity_layer():
    net = MlpParams([(np.eye(2), np.zeros(2))])
    x = np.array([0.3, -1.2])
    logits, cache = mlp_forward(net, x)
    np.testing.assert_array_equal(logits, x)
    g = np.array([0.5, -2.0])
    grads, gin = mlp_backward(net, cache, g)
    np.testing.assert_array_equal(gin, net.layers[0][0].T @ g)


def test_softmax_xent_examples():
    loss, grad = softmax_xent([0.0, 0.0], 1)
    assert loss == pytest.approx(np.log(2))
    np.testing.assert_allclose(grad, [0.5, -0.5])
    loss, grad = softmax_xent([10.0, -10.0], 0)
    assert loss < 1e-8 and np.abs(grad).max() < 1e-8
    loss, grad = softmax_xent([1000.0, 0.0], 1)
    assert loss == pytest.approx(1000.0) and np.all(np.isfinite(grad))


def test_backward_matches_finite_differences(rng):
    for dims in ([5, 7, 2], [6, 8, 4, 2], [3, 2]):
        net = init_mlp(dims, rng)
        for w, b in net.layers:
            b += rng.standard_normal(b.shape) * 0.1
        x = rng.standard_normal(dims[0])
        label = int(rng.integers(0, 2))

        def loss_of(p):
            return softmax_xent(mlp_forward(p, x)[0], label)[0]

        logits, cache = mlp_forward(net, x)
        _, g_logits = softmax_xent(logits, label)
        grads, gin = mlp_backward(net, cache, g_logits)
        for li, ((w, b), (gw, gb)) in enumerate(zip(net.layers, grads)):
            def via_w(wv, li=li):
                p = net.copy()
                p.layers[li] = (wv, p.layers[li][1])
                return loss_of(p)

            def via_b(bv, li=li):
                p = net.copy()
                p.layers[li] = (p.layers[li][0], bv)
                return loss_of(p)

            assert relative_error(gw, central_difference(via_w, w, 1e-6)) < 1e-4
            assert relative_error(gb, central_difference(via_b, b, 1e-6)) < 1e-4
        fd_in = central_difference(lambda v: softmax_xent(mlp_forward(net, v)[0], label)[0], x, 1e-6)
        assert relative_error(gin, fd_in) < 1e-4


def test_zero_grad_logits(rng):
    net = init_mlp([4, 5, 2], rng)
    _, cache = mlp_forward(net, rng.standard_normal(4))
    grads, gin = mlp_backward(net, cache, np.zeros(2))
    assert not gin.any()
    assert all(not gw.any() and not gb.any() for gw, gb in grads)


def test_batch_equals_sum_of_singles(rng):
    net = init_mlp([4, 6, 2], rng)
    x = rng.standard_normal((5, 4))
    g = rng.standard_normal((5, 2))
    logits, cache = mlp_forward(net, x)
    grads, gin = mlp_backward(net, cache, g)
    total = [np.zeros_like(w) for w, _ in net.layers]
    for row in range(5):
        lr, cr = mlp_forward(net, x[row])
        np.testing.assert_allclose(lr, logits[row])
        gr, gi = mlp_backward(net, cr, g[row])
        np.testing.assert_allclose(gi, gin[row])
        for acc, (gw, _) in zip(total, gr):
            acc += gw
    for acc, (gw, _) in zip(total, grads):
        np.testing.assert_allclose(acc, gw)


def test_shape_and_state_errors(rng):
    net = init_mlp([4, 3, 2], rng)
    with pytest.raises(ShapeMismatchError):
        mlp_forward(net, np.ones(5))
    _, cache = mlp_forward(init_mlp([5, 3, 2], rng), np.ones(5))
    with pytest.raises(StateError):
        mlp_backward(net, cache, np.ones(2))
    _, cache = mlp_forward(net, np.ones(4))
    with pytest.raises(StateError):
        mlp_backward(net, cache, np.ones(3))
    with pytest.raises(ShapeMismatchError):
        MlpParams([(np.ones((3, 4)), np.ones(3)), (np.ones((2, 5)), np.ones(2))])


def test_full_pipeline_gradient(rng):
    """Loss as a function of one landmark shape, through mlp -> vec(B) -> AISC backward."""
    m = 10
    net = init_mlp([m * m, 16, 8, 2], rng)
    s0, s1 = random_shape(rng, m), random_shape(rng, m)
    label = 1

    def loss(s):
        b = grassmann.aisc_forward(s, s1)
        return softmax_xent(mlp_forward(net, b.ravel())[0], label)[0]

    b = grassmann.aisc_forward(s0, s1)
    logits, cache = mlp_forward(net, b.ravel())
    _, g_logits = softmax_xent(logits, label)
    _, g_in = mlp_backward(net, cache, g_logits)
    for backward in (grassmann.aisc_backward_svd, grassmann.aisc_backward_projector):
        g0, _ = backward(s0, s1, g_in.reshape(m, m))
        fd = central_difference(loss, s0, 1e-6)
        assert relative_error(g0, fd) < 1e-3


def test_fuse():
    assert fuse(0.8, 0.3, 1.0) == 0.8
    assert fuse(0.8, 0.6, 0.5) == pytest.approx(0.7)
    grid = np.linspace(0, 1, 11)
    for w in grid:
        vals = fuse(grid[:, None], grid[None, :], w)
        assert np.all(np.diff(vals, axis=0) >= -1e-15) and np.all(np.diff(vals, axis=1) >= -1e-15)
    with pytest.raises(ConfigError):
        fuse(0.5, 0.5, 1.5)


@pytest.fixture(scope="module")
def small_pairs():
    cfg = data.SynthConfig(family_count=40, appearance_heritability=0.0, seed=3)
    return data.generate_synthetic(cfg)


def test_train_lr_zero_leaves_params(small_pairs):
    cfg = TrainConfig(learning_rate=0.0, epochs=3, hidden_dims=(8,), seed=5)
    trained = network.train(small_pairs, cfg).model
    init = network.train(small_pairs, TrainConfig(epochs=0, hidden_dims=(8,), seed=5)).model
    for net_a, net_b in ((trained.shape_net, init.shape_net), (trained.appearance_net, init.appearance_net)):
        for (wa, ba), (wb, bb) in zip(net_a.layers, net_b.layers):
            np.testing.assert_array_equal(wa, wb)
            np.testing.assert_array_equal(ba, bb)


def test_train_is_deterministic(small_pairs):
    cfg = TrainConfig(epochs=4, seed=11)
    a = network.train(small_pairs, cfg)
    b = network.train(small_pairs, cfg)
    assert a.history == b.history
    for (wa, _), (wb, _) in zip(a.shape_net.layers, b.shape_net.layers):
        np.testing.assert_array_equal(wa, wb)


def test_train_separable_shape_data(small_pairs):
    result = network.train(small_pairs, TrainConfig(epochs=30))
    _, p_shape, _ = result.model.predict(small_pairs)
    labels = np.array([s.label for s in small_pairs])
    assert np.mean((p_shape > 0.5) == labels) >= 0.95
    assert all(np.isfinite(h["loss"]) for h in result.history)


def test_train_with_input_gradients(small_pairs):
    cfg = TrainConfig(epochs=2, input_grads=True, input_grad_path="svd")
    result = network.train(small_pairs[:20], cfg)
    assert all(h["shape_input_grad_norm"] > 0 for h in result.history)


def test_train_errors(small_pairs):
    kin_only = [s for s in small_pairs if s.label == 1]
    with pytest.raises(DataError):
        network.train(kin_only, TrainConfig(epochs=1))
    with pytest.raises(DivergenceError) as info, np.errstate(all="ignore"):
        network.train(small_pairs, TrainConfig(learning_rate=1e30, epochs=5, standardize="none"))
    assert info.value.epoch is not None
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0)
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"learning_rat": 0.1})


def test_feature_fusion_mode(small_pairs):
    result = network.train(small_pairs, TrainConfig(epochs=3, fusion="feature", hidden_dims=(16,)))
    assert result.model.joint_net is not None
    p_app, p_shape, p_fused = result.model.predict(small_pairs[:6])
    assert p_fused.shape == (6,) and np.all((p_fused >= 0) & (p_fused <= 1))


def test_checkpoint_round_trip(tmp_path, small_pairs):
    model = network.train(small_pairs, TrainConfig(epochs=2, hidden_dims=(8,), fusion="feature")).model
    path = tmp_path / "ckpt.json"
    network.save_checkpoint(path, model)
    loaded = network.load_checkpoint(path)
    for a, b in zip(model.predict(small_pairs), loaded.predict(small_pairs)):
        np.testing.assert_array_equal(a, b)
    assert loaded.config == model.config
    path2 = tmp_path / "ckpt2.json"
    network.save_checkpoint(path2, loaded)
    assert path.read_bytes() == path2.read_bytes()
    score = loaded.score(small_pairs[0])
    assert 0 <= score.p_fused <= 1


def test_checkpoint_rejects_foreign_files(tmp_path):
    bad = tmp_path / "x.json"
    bad.write_text('{"format": "other"}')
    with pytest.raises(Exception, match="not a kinshape checkpoint"):
        network.load_checkpoint(bad)
