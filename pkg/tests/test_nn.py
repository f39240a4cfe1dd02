import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from urllc_l2o.nn import GradientSet, Mlp, load_mlp, mlp_new, save_mlp


def fd_gradients(net, x, out_grad, h=1e-5):
    """Central finite differences of mean_n sum_k out_grad * net(x)."""

    def loss():
        return float(np.sum(out_grad * net.predict(x))) / x.shape[0]

    grads = []
    for arr in [*net.weights, *net.biases]:
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            up = loss()
            arr[idx] = old - h
            down = loss()
            arr[idx] = old
            g[idx] = (up - down) / (2 * h)
        grads.append(g)
    n = len(net.weights)
    return grads[:n], grads[n:]


def test_default_architecture():
    net = mlp_new([1, 8, 8, 8, 8, 1], "softplus", seed=7)
    assert net.num_layers == 5
    assert [w.shape for w in net.weights] == [(1, 8), (8, 8), (8, 8), (8, 8), (8, 1)]
    assert all(np.all(b == 0) for b in net.biases)


def test_zero_network_outputs_zero():
    net = mlp_new([1, 1], "identity", seed=0)
    net.weights[0][:] = 0.0
    net.biases[0][:] = 0.0
    assert net.predict(np.array([[3.0], [-2.0]])).tolist() == [[0.0], [0.0]]


def test_same_seed_is_bitwise_identical():
    a = mlp_new([2, 8, 3], "softplus", seed=11)
    b = mlp_new([2, 8, 3], "softplus", seed=11)
    assert a.params_equal(b)
    assert not a.params_equal(mlp_new([2, 8, 3], "softplus", seed=12))


@pytest.mark.parametrize("dims", [[1], [], [1, 0], [2, -1, 1], [1.5, 1]])
def test_invalid_dims(dims):
    with pytest.raises(ValueError):
        mlp_new(dims)


def test_affine_single_layer():
    net = Mlp([1, 1], [[[2.0]]], [[1.0]], output_activation="identity")
    assert net.predict(np.array([[0.5]]))[0, 0] == 2.0


def test_input_dimension_checked():
    net = mlp_new([2, 4, 1], seed=0)
    with pytest.raises(ValueError):
        net.forward(np.ones((5, 3)))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1),
       xs=st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=20))
def test_softplus_outputs_strictly_positive(seed, xs):
    net = mlp_new([1, 8, 8, 1], "softplus", seed=seed)
    rng = np.random.default_rng(seed)
    for w in net.weights:
        w *= rng.uniform(0.5, 5.0)
    out = net.predict(np.array(xs)[:, None])
    assert np.all(out > 0) and np.all(np.isfinite(out))


def test_zero_output_grad_gives_zero_gradients(rng):
    net = mlp_new([1, 8, 1], seed=3)
    x = rng.normal(size=(7, 1))
    _, cache = net.forward(x)
    grads = net.backward(cache, np.zeros((7, 1)))
    assert grads.norm() == 0.0


def test_backward_matches_finite_differences_small_net(rng):
    net = mlp_new([1, 8, 1], "softplus", seed=5)
    x = rng.normal(size=(6, 1))
    og = rng.normal(size=(6, 1))
    _, cache = net.forward(x)
    grads = net.backward(cache, og)
    fw, fb = fd_gradients(net, x, og)
    for a, b in zip(grads.weights + grads.biases, fw + fb):
        np.testing.assert_array_less(np.abs(a - b), 1e-5 * np.maximum(np.abs(b), 1e-5))


def test_gradient_check_100_random_draws():
    from conftest import rel_err

    worst = 0.0
    for k in range(100):
        rng = np.random.default_rng(1000 + k)
        in_dim, out_dim = rng.integers(1, 3, size=2)
        hidden = list(rng.integers(1, 9, size=rng.integers(1, 4)))
        act = ["softplus", "identity"][k % 2]
        net = mlp_new([int(in_dim), *map(int, hidden), int(out_dim)], act, seed=k)
        for b in net.biases:
            b[:] = rng.normal(scale=0.3, size=b.shape)
        x = rng.normal(size=(3, int(in_dim)))
        og = rng.normal(size=(3, int(out_dim)))
        _, cache = net.forward(x)
        g = net.backward(cache, og)
        fw, fb = fd_gradients(net, x, og)
        err = rel_err(g.flat(), GradientSet(fw, fb).flat())
        worst = max(worst, float(err.max()))
    assert worst < 1e-5


def test_batch_mean_linearity():
    net = mlp_new([1, 8, 1], seed=2)
    _, c1 = net.forward(np.array([[0.3]]))
    g1 = net.backward(c1, np.array([[1.7]]))
    _, c2 = net.forward(np.array([[0.3], [0.3]]))
    g2 = net.backward(c2, np.array([[1.7], [1.7]]))
    np.testing.assert_allclose(g1.flat(), g2.flat(), rtol=1e-14, atol=1e-16)


def test_stale_cache_rejected():
    net = mlp_new([1, 4, 1], seed=0)
    _, cache = net.forward(np.ones((2, 1)))
    grads = net.backward(cache, np.ones((2, 1)))
    net.apply_update(grads, 0.1)
    with pytest.raises(ValueError):
        net.backward(cache, np.ones((2, 1)))
    other = mlp_new([1, 4, 1], seed=0)
    _, cache = other.forward(np.ones((2, 1)))
    with pytest.raises(ValueError):
        net.backward(cache, np.ones((2, 1)))


def _zero_grads(net):
    return GradientSet([np.zeros_like(w) for w in net.weights],
                       [np.zeros_like(b) for b in net.biases])


def test_update_with_zero_grads_is_noop():
    net = mlp_new([1, 8, 1], seed=0)
    before = net.copy()
    net.apply_update(_zero_grads(net), 0.1, "descent")
    assert net.params_equal(before)


def test_descent_then_ascent_restores(rng):
    net = mlp_new([1, 8, 8, 1], seed=0)
    before = net.copy()
    _, cache = net.forward(rng.normal(size=(5, 1)))
    grads = net.backward(cache, rng.normal(size=(5, 1)))
    net.apply_update(grads, 0.1, "descent")
    net.apply_update(grads, 0.1, "ascent")
    for a, b in zip(net.weights + net.biases, before.weights + before.biases):
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-15)


def test_scalar_descent_arithmetic():
    net = Mlp([1, 1], [[[1.0]]], [[0.0]], output_activation="identity")
    grads = GradientSet([np.array([[2.0]])], [np.array([0.0])])
    net.apply_update(grads, 0.1, "descent")
    assert net.weights[0][0, 0] == pytest.approx(0.8, abs=1e-15)


def test_non_finite_update_rejected():
    net = mlp_new([1, 2, 1], seed=0)
    before = net.copy()
    grads = _zero_grads(net)
    grads.weights[0][0, 0] = np.nan
    with pytest.raises(FloatingPointError):
        net.apply_update(grads, 0.1)
    assert net.params_equal(before)
    with pytest.raises(ValueError):
        net.apply_update(_zero_grads(net), 0.0)


def test_identical_streams_identical_trajectories():
    def run():
        net = mlp_new([1, 8, 1], seed=4)
        data = np.random.default_rng(9)
        for _ in range(20):
            _, c = net.forward(data.normal(size=(10, 1)))
            net.apply_update(net.backward(c, data.normal(size=(10, 1))), 0.05)
        return net

    assert run().params_equal(run())


def test_serialization_roundtrip(tmp_path, rng):
    net = mlp_new([2, 8, 8, 1], "softplus", seed=21)
    path = tmp_path / "net.json"
    save_mlp(net, path)
    back = load_mlp(path)
    assert back.params_equal(net)
    x = rng.normal(size=(4, 2))
    np.testing.assert_array_equal(back.predict(x), net.predict(x))
