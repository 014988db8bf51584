import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qevae.neural import (MLP, AdamState, DenseLayer, EncoderNet, adam_step, encode,
                          kl_gaussian, kl_gaussian_grad, leaky_relu, reparameterize)


def zero_encoder(n, latent):
    body = MLP([DenseLayer.zeros(n, 8), DenseLayer.zeros(8, 7)])
    return EncoderNet(body, DenseLayer.zeros(7, latent), DenseLayer.zeros(7, latent))


def test_leaky_relu_slope():
    assert leaky_relu(np.array(-2.0)) == pytest.approx(-0.02)
    assert leaky_relu(np.array(3.0)) == 3.0


def test_zero_encoder_outputs_prior():
    mu, logvar = encode(zero_encoder(4, 2), [1, 0, 1, 1])
    assert np.array_equal(mu, np.zeros(2)) and np.array_equal(logvar, np.zeros(2))


def test_encoder_shape_and_determinism():
    net = EncoderNet.init(4, 3, np.random.default_rng(0))
    assert [l.n_out for l in net.body.layers] == [8, 7]
    x = np.array([0.0, 1.0, 1.0, 0.0])
    a, b = encode(net, x), encode(net, x)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    assert a[0].shape == (3,)
    with pytest.raises(ValueError):
        encode(net, [0.0, 1.0])


@pytest.mark.parametrize("latent", [1, 2, 5, 8])
def test_encoder_parameter_count_eight_inputs(latent):
    net = EncoderNet.init(8, latent, np.random.default_rng(0))
    assert net.n_params == 8 * 8 + 8 + 8 * 7 + 7 + 2 * (7 * latent + latent)


def test_reparameterize():
    mu, lv = np.array([0.3, -1.0]), np.array([0.5, -0.2])
    np.testing.assert_array_equal(reparameterize(mu, lv, np.zeros(2)), mu)
    eps = np.array([0.7, -0.4])
    np.testing.assert_array_equal(reparameterize(np.zeros(2), np.zeros(2), eps), eps)
    rng = np.random.default_rng(0)
    n = 100_000
    z = reparameterize(np.broadcast_to(mu, (n, 2)), np.broadcast_to(lv, (n, 2)),
                       rng.standard_normal((n, 2)))
    sigma = np.exp(lv / 2)
    assert np.all(np.abs(z.mean(axis=0) - mu) < 3 * sigma / np.sqrt(n))
    with pytest.raises(ValueError):
        reparameterize(mu, lv, np.zeros(3))


def test_kl_closed_form_values():
    assert kl_gaussian([0.0], [0.0]) == 0.0
    assert kl_gaussian([1.0], [0.0]) == pytest.approx(0.5)


def test_kl_matches_monte_carlo():
    rng = np.random.default_rng(3)
    mu, lv = np.array([0.4, -0.9, 1.3]), np.array([-0.5, 0.3, 0.1])
    sigma = np.exp(lv / 2)
    z = mu + sigma * rng.standard_normal((1_000_000, 3))
    log_q = -0.5 * (((z - mu) / sigma) ** 2 + lv + np.log(2 * np.pi)).sum(axis=1)
    log_p = -0.5 * (z**2 + np.log(2 * np.pi)).sum(axis=1)
    mc = np.mean(log_q - log_p)
    exact = kl_gaussian(mu, lv)
    assert abs(mc - exact) < 0.01 * exact


@settings(max_examples=200, deadline=None)
@given(mu=arrays(float, 3, elements=st.floats(-5, 5)),
       lv=arrays(float, 3, elements=st.floats(-5, 5)))
def test_kl_nonnegative_and_zero_only_at_prior(mu, lv):
    kl = kl_gaussian(mu, lv)
    assert kl >= 0
    if max(np.abs(mu).max(), np.abs(lv).max()) > 1e-3:
        assert kl > 0
    assert kl_gaussian(np.zeros(3), np.zeros(3)) == 0


def test_kl_gradient_matches_differences():
    mu, lv = np.array([0.4, -0.9]), np.array([-0.5, 0.3])
    gm, gl = kl_gaussian_grad(mu, lv)
    h = 1e-6
    for j in range(2):
        e = np.eye(2)[j] * h
        assert gm[j] == pytest.approx((kl_gaussian(mu + e, lv) - kl_gaussian(mu - e, lv)) / (2 * h), rel=1e-7)
        assert gl[j] == pytest.approx((kl_gaussian(mu, lv + e) - kl_gaussian(mu, lv - e)) / (2 * h), rel=1e-7)


def _encoder_loss(net, x, w_mu, w_lv):
    mu, lv, cache = net.forward(x)
    return float((w_mu * mu).sum() + (w_lv * np.tanh(lv)).sum()), mu, lv, cache


@pytest.mark.parametrize("seed", range(20))
def test_encoder_backward_matches_differences(seed):
    rng = np.random.default_rng(seed)
    n, latent = int(rng.integers(2, 6)), int(rng.integers(1, 4))
    net = EncoderNet.init(n, latent, rng)
    x = rng.integers(0, 2, (5, n)).astype(float)
    w_mu, w_lv = rng.normal(size=(5, latent)), rng.normal(size=(5, latent))
    _, mu, lv, cache = _encoder_loss(net, x, w_mu, w_lv)
    grads = net.backward(cache, w_mu, w_lv * (1 - np.tanh(lv) ** 2))
    h = 1e-5
    for key, p in net.params().items():
        flat = p.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = _encoder_loss(net, x, w_mu, w_lv)[0]
            flat[i] = old - h
            dn = _encoder_loss(net, x, w_mu, w_lv)[0]
            flat[i] = old
            num = (up - dn) / (2 * h)
            got = grads[key].reshape(-1)[i]
            assert abs(got - num) <= 1e-5 * max(1.0, abs(num)), key


def test_mlp_backward_zero_upstream_and_linearity():
    rng = np.random.default_rng(1)
    mlp = MLP.init((3, 5, 2), rng)
    x = rng.normal(size=(4, 3))
    out, cache = mlp.forward(x)
    _, zero = mlp.backward(cache, np.zeros_like(out))
    assert all(np.all(dW == 0) and np.all(db == 0) for dW, db in zero)
    g = rng.normal(size=out.shape)
    _, one = mlp.backward(cache, g)
    _, two = mlp.backward(cache, 2 * g)
    for (a, b), (c, d) in zip(one, two):
        np.testing.assert_allclose(c, 2 * a, rtol=1e-15)
        np.testing.assert_allclose(d, 2 * b, rtol=1e-15)


def test_adam_first_step():
    params = {"w": np.array([1.0, -2.0])}
    state = AdamState(lr=0.01)
    adam_step(state, params, {"w": np.array([0.5, 0.5])})
    np.testing.assert_allclose(params["w"], [1.0 - 0.01, -2.0 - 0.01], atol=1e-9)
    assert state.t == 1


def test_adam_zero_gradient_keeps_params():
    params = {"w": np.array([1.0, -2.0])}
    state = AdamState(lr=0.01)
    for _ in range(5):
        adam_step(state, params, {"w": np.zeros(2)})
    np.testing.assert_array_equal(params["w"], [1.0, -2.0])


def test_adam_deterministic_trajectory():
    def trajectory():
        rng = np.random.default_rng(4)
        params = {"a": rng.normal(size=3)}
        state = AdamState(lr=0.005)
        out = []
        for _ in range(50):
            adam_step(state, params, {"a": 2 * params["a"] + rng.normal(size=3)})
            out.append(params["a"].copy())
        return np.array(out)
    assert np.array_equal(trajectory(), trajectory())


def test_dense_layer_shape_check():
    with pytest.raises(ValueError):
        DenseLayer(np.zeros((3, 2)), np.zeros(2))
