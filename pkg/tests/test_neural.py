import json
import math

import numpy as np
import pytest

from hvacrl.neural import (
    LAYER_NORM_EPS,
    AdamState,
    QNetwork,
    adam_step,
    finite_difference_gradient,
    td_loss,
)


def forward_oracle(net, x):
    """Pure-Python transcription of the forward pass (loops, no numpy)."""
    h = [float(v) for v in x]
    n_layers = len(net.weights)
    for l in range(n_layers):
        W, b = net.weights[l], net.biases[l]
        z = [
            sum(h[i] * W[i, j] for i in range(W.shape[0])) + b[j]
            for j in range(W.shape[1])
        ]
        if l < n_layers - 1:
            mu = sum(z) / len(z)
            var = sum((v - mu) ** 2 for v in z) / len(z)
            inv = 1.0 / math.sqrt(var + LAYER_NORM_EPS)
            g, s = net.ln_gains[l], net.ln_shifts[l]
            u = [g[j] * (z[j] - mu) * inv + s[j] for j in range(len(z))]
            h = [max(0.0, v) for v in u]
        else:
            h = z
    return np.array(h)


# ---------------------------------------------------------------------------
# forward
# ---------------------------------------------------------------------------


def test_zero_final_layer_gives_zero_q():
    net = QNetwork((10, 16, 16, 11), seed=0)
    net.weights[-1][:, :] = 0.0
    net.biases[-1][:] = 0.0
    rng = np.random.default_rng(1)
    for _ in range(5):
        q = net.forward(rng.uniform(0, 1, size=10))
        assert np.all(q == 0.0)


def test_layer_norm_constant_preactivation_returns_shift():
    # Constant dense output has zero variance; the eps term keeps the
    # normalized value at exactly 0, so the sublayer output is the shift.
    net = QNetwork((4, 6, 3), seed=2)
    net.weights[0][:, :] = 0.0
    net.biases[0][:] = 7.5
    shift = np.array([0.3, -0.2, 0.9, 0.0, 1.4, -2.0])
    net.ln_shifts[0][:] = shift
    _, cache = net._forward_cached(np.ones((1, 4)))
    u = cache[0][3][0]
    assert np.allclose(u, shift, atol=1e-15)


def test_forward_matches_matrix_oracle():
    rng = np.random.default_rng(7)
    for seed in range(5):
        net = QNetwork((6, 9, 8, 4), seed=seed)
        # perturb layer-norm parameters away from the identity init
        net.ln_gains[0][:] = rng.uniform(0.5, 1.5, size=9)
        net.ln_shifts[0][:] = rng.normal(0, 0.5, size=9)
        net.ln_gains[1][:] = rng.uniform(0.5, 1.5, size=8)
        net.ln_shifts[1][:] = rng.normal(0, 0.5, size=8)
        for _ in range(5):
            x = rng.normal(0, 1, size=6)
            assert np.allclose(net.forward(x), forward_oracle(net, x), atol=1e-10)


def test_forward_batch_consistent_with_single():
    net = QNetwork((10, 12, 12, 11), seed=3)
    rng = np.random.default_rng(4)
    X = rng.uniform(0, 1, size=(7, 10))
    batch = net.forward_batch(X)
    for i in range(7):
        assert np.allclose(batch[i], net.forward(X[i]), atol=0)


def test_forward_rejects_non_finite():
    net = QNetwork((10, 8, 8, 11), seed=0)
    x = np.zeros(10)
    x[3] = np.nan
    with pytest.raises(ValueError):
        net.forward(x)


def test_forward_is_pure():
    net = QNetwork((10, 8, 8, 11), seed=5)
    theta_before = net.theta.copy()
    x = np.linspace(0, 1, 10)
    q1 = net.forward(x)
    q2 = net.forward(x)
    assert np.array_equal(q1, q2)
    assert np.array_equal(net.theta, theta_before)


def test_layer_norm_statistics():
    # Post-normalization activations (before gain/shift) have mean 0 always
    # and variance exactly var/(var + eps); with eps = 1e-5 that lands
    # within 1e-6 of 1 once the pre-activation variance dominates eps.
    rng = np.random.default_rng(11)
    for seed in range(5):
        net = QNetwork((8, 32, 32, 4), seed=seed)
        x = rng.normal(0, 30.0, size=(3, 8))  # large spread
        q, cache = net._forward_cached(x)
        for l in range(2):
            z = (cache[l][0] @ net.weights[l]) + net.biases[l]
            var = z.var(axis=1)
            xhat = cache[l][1]
            assert np.all(np.abs(xhat.mean(axis=1)) < 1e-9)
            assert np.allclose(xhat.var(axis=1), var / (var + LAYER_NORM_EPS), atol=1e-12)
        # first hidden layer sees the raw large-spread input
        xhat0 = cache[0][1]
        assert np.allclose(xhat0.var(axis=1), 1.0, atol=1e-6)


# ---------------------------------------------------------------------------
# backward
# ---------------------------------------------------------------------------


def test_zero_loss_gives_zero_gradients():
    net = QNetwork((10, 12, 12, 11), seed=9)
    x = np.linspace(0.1, 0.9, 10)
    a = 4
    target = float(net.forward(x)[a])
    grad = net.backward(x, a, target)
    assert np.all(grad == 0.0)


def test_unused_heads_get_no_bias_gradient():
    net = QNetwork((10, 12, 12, 11), seed=10)
    x = np.linspace(0.1, 0.9, 10)
    a = 6
    grad = net.backward(x, a, -1.0)
    from hvacrl.neural import _views

    _, g_biases, _, _ = _views(grad, net.layer_sizes)
    final_bias_grad = g_biases[-1]
    for j in range(11):
        if j != a:
            assert final_bias_grad[j] == 0.0
    assert final_bias_grad[a] != 0.0


def _gradcheck(net, x, a, target, h=1e-5, tol=1e-4):
    analytic = net.backward(x, a, target)
    numeric = finite_difference_gradient(net, x, a, target, h=h)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6)
    rel = np.abs(analytic - numeric) / denom
    return float(rel.max())


def test_gradients_match_finite_differences():
    # The module's flagship check: every parameter, layer norm included,
    # across >= 10 seeded small networks.
    rng = np.random.default_rng(21)
    worst = 0.0
    for seed in range(12):
        net = QNetwork((6, 12, 10, 5), seed=seed)
        x = rng.uniform(0, 1, size=6)
        a = int(rng.integers(0, 5))
        target = float(rng.normal(0, 2))
        worst = max(worst, _gradcheck(net, x, a, target))
    assert worst < 1e-4


def test_batch_gradient_is_mean_of_single_gradients():
    net = QNetwork((6, 8, 8, 4), seed=31)
    rng = np.random.default_rng(32)
    X = rng.uniform(0, 1, size=(5, 6))
    A = rng.integers(0, 4, size=5)
    Y = rng.normal(0, 1, size=5)
    batch_grad = net.backward_batch(X, A, Y)
    mean_grad = np.mean([net.backward(X[i], int(A[i]), float(Y[i])) for i in range(5)], axis=0)
    assert np.allclose(batch_grad, mean_grad, atol=1e-12)


def test_backward_rejects_non_finite_target():
    net = QNetwork((6, 8, 8, 4), seed=0)
    with pytest.raises(ValueError):
        net.backward(np.zeros(6), 0, float("inf"))


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


def test_adam_zero_gradient_no_update():
    params = np.array([1.0, -2.0, 3.0])
    state = AdamState.for_params(3)
    adam_step(params, np.zeros(3), state, lr=0.1)
    assert np.array_equal(params, [1.0, -2.0, 3.0])


def test_adam_first_step_moves_by_lr():
    # Bias correction makes the first step m_hat/sqrt(v_hat) = g/|g|,
    # so a unit gradient moves the parameter by almost exactly lr.
    params = np.array([0.0])
    state = AdamState.for_params(1)
    adam_step(params, np.array([1.0]), state, lr=0.1)
    assert params[0] == pytest.approx(-0.1, rel=1e-6)


def test_adam_deterministic_trajectories():
    rng = np.random.default_rng(50)
    grads = [rng.normal(0, 1, size=20) for _ in range(30)]
    p1, p2 = np.zeros(20), np.zeros(20)
    s1, s2 = AdamState.for_params(20), AdamState.for_params(20)
    for g in grads:
        adam_step(p1, g, s1, lr=0.01)
        adam_step(p2, g, s2, lr=0.01)
    assert np.array_equal(p1, p2)
    assert s1.step == s2.step == 30


def test_adam_descends_on_quadratic():
    # minimize 0.5*(p-3)^2
    params = np.array([0.0])
    state = AdamState.for_params(1)
    for _ in range(2000):
        grad = params - 3.0
        adam_step(params, grad, state, lr=0.01)
    assert params[0] == pytest.approx(3.0, abs=1e-3)


# ---------------------------------------------------------------------------
# copies and checkpoints
# ---------------------------------------------------------------------------


def test_clone_gives_identical_outputs():
    net = QNetwork((10, 16, 16, 11), seed=13)
    copy = net.clone()
    x = np.linspace(0, 1, 10)
    assert np.array_equal(net.forward(x), copy.forward(x))


def test_clone_is_independent():
    net = QNetwork((10, 16, 16, 11), seed=13)
    copy = net.clone()
    copy.theta += 1.0
    x = np.linspace(0, 1, 10)
    assert not np.array_equal(net.forward(x), copy.forward(x))
    assert not np.shares_memory(net.theta, copy.theta)


def test_copy_params_from():
    a = QNetwork((10, 8, 8, 11), seed=1)
    b = QNetwork((10, 8, 8, 11), seed=2)
    b.copy_params_from(a)
    assert np.array_equal(a.theta, b.theta)
    with pytest.raises(ValueError):
        b.copy_params_from(QNetwork((10, 9, 8, 11), seed=3))


def test_serialization_round_trip_bit_exact():
    rng = np.random.default_rng(60)
    for seed in range(5):
        net = QNetwork((10, 16, 16, 11), seed=seed)
        net.theta += rng.normal(0, 0.37, size=net.n_params)  # awkward values
        doc = json.dumps(net.to_json_dict())
        restored = QNetwork.from_json_dict(json.loads(doc))
        assert np.array_equal(net.theta, restored.theta)
        x = rng.uniform(0, 1, size=10)
        assert np.array_equal(net.forward(x), restored.forward(x))


def test_save_load_file(tmp_path):
    net = QNetwork((10, 12, 12, 11), seed=77)
    path = tmp_path / "net.json"
    net.save(path)
    restored = QNetwork.load(path)
    assert np.array_equal(net.theta, restored.theta)


def test_assert_finite():
    net = QNetwork((10, 8, 8, 11), seed=0)
    net.assert_finite()
    net.theta[5] = np.inf
    with pytest.raises(FloatingPointError):
        net.assert_finite()


def test_td_loss_definition():
    net = QNetwork((6, 8, 8, 4), seed=8)
    x = np.linspace(0, 1, 6)
    q = net.forward(x)
    assert td_loss(net, x, 2, float(q[2]) - 3.0) == pytest.approx(4.5)
