import numpy as np
import pytest

from core.errors import ShapeMismatch
from core.nn_core import (
    AdamW, ParameterSet, Tensor, grad_check, layernorm_noaffine, leaky_relu, linear, log_softmax,
    mean, no_grad, softmax,
)


def test_layernorm_uses_population_variance():
    out = layernorm_noaffine(Tensor([1.0, 3.0]))
    np.testing.assert_allclose(out.data, [-1.0, 1.0], atol=1e-4)


def test_softmax_is_symmetric():
    np.testing.assert_allclose(softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])


def test_softmax_survives_large_logits():
    out = log_softmax(Tensor([1000.0, 0.0]))
    assert np.all(np.isfinite(out.data))
    assert out.data[0] == pytest.approx(0.0)


def test_leaky_relu_slope():
    assert leaky_relu(Tensor(-1.0), 0.01).item() == pytest.approx(-0.01)
    assert leaky_relu(Tensor(2.0)).item() == 2.0


def test_linear_gradient_is_the_input_per_row():
    x = Tensor([1.0, 2.0, 3.0])
    W = Tensor(np.ones((3, 2)), requires_grad=True)
    linear(x, W).sum().backward()
    np.testing.assert_allclose(W.grad, [[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])


def test_detached_branch_gets_no_gradient():
    w = Tensor([2.0, -1.0], requires_grad=True)
    loss = (w * w).sum() + (w.detach() * 5.0).sum()
    loss.backward()
    np.testing.assert_allclose(w.grad, 2.0 * w.data)

    w.grad = None
    only_detached = (w.detach() * 3.0).sum()
    assert not only_detached.requires_grad
    assert w.grad is None


def test_no_grad_skips_the_graph():
    w = Tensor([1.0], requires_grad=True)
    with no_grad():
        y = w * 2.0
    assert not y.requires_grad


def test_mlp_gradients_match_finite_differences():
    rng = np.random.default_rng(4)
    params = ParameterSet()
    params.add("W1", rng.normal(size=(5, 8)))
    params.add("b1", rng.normal(size=8))
    params.add("W2", rng.normal(size=(8, 1)))
    x = Tensor(rng.normal(size=(3, 5)))

    def loss():
        hidden = leaky_relu(linear(x, params["W1"], params["b1"]))
        out = layernorm_noaffine(hidden)
        return linear(out, params["W2"]).sum()

    report = grad_check(loss, params, tolerance=1e-4, max_entries=None)
    assert report.passed, report.summary()
    assert set(report.errors) == {"W1", "b1", "W2"}


def test_identity_network_matches_exactly():
    params = ParameterSet()
    params.add("w", np.array([0.5, -2.0]))
    report = grad_check(lambda: params["w"].sum(), params)
    assert report.passed
    assert report.worst_error < 1e-9


def test_frozen_arrays_are_not_checked():
    params = ParameterSet()
    params.add("w", np.array([1.0]))
    params.add("frozen", np.array([3.0]), trainable=False)
    report = grad_check(lambda: (params["w"] * params["frozen"]).sum(), params)
    assert set(report.errors) == {"w"}


def test_segment_sum_and_take_gradients():
    v = Tensor([1.0, 2.0, 3.0, 4.0], requires_grad=True)
    sums = v.segment_sum([0, 1, 0, 1], 2)
    np.testing.assert_allclose(sums.data, [4.0, 6.0])
    (sums * Tensor([1.0, 10.0])).sum().backward()
    np.testing.assert_allclose(v.grad, [1.0, 10.0, 1.0, 10.0])

    m = Tensor(np.arange(6.0).reshape(3, 2), requires_grad=True)
    m.take([2, 2, 0]).sum().backward()
    np.testing.assert_allclose(m.grad, [[1.0, 1.0], [0.0, 0.0], [2.0, 2.0]])


def test_adamw_leaves_parameters_alone_without_gradient():
    params = ParameterSet()
    params.add("w", np.array([1.0, -2.0]))
    params["w"].grad = np.zeros(2)
    opt = AdamW(params, lr=0.1, weight_decay=0.0)
    for _ in range(5):
        opt.step()
    np.testing.assert_array_equal(params["w"].data, [1.0, -2.0])


def test_adamw_first_step_is_lr_times_sign():
    params = ParameterSet()
    params.add("w", np.array([0.0, 0.0]))
    params["w"].grad = np.array([2.0, -0.5])
    AdamW(params, lr=0.1, weight_decay=0.0).step()
    np.testing.assert_allclose(params["w"].data, [-0.1, 0.1], rtol=1e-6)


def test_adamw_decay_skips_flagged_arrays():
    params = ParameterSet()
    params.add("w", np.array([1.0]))
    params.add("alpha", np.array([1.0]), decay=False)
    params["w"].grad = np.zeros(1)
    params["alpha"].grad = np.zeros(1)
    AdamW(params, lr=0.1, weight_decay=0.5).step()
    assert params["w"].data[0] == pytest.approx(0.95)
    assert params["alpha"].data[0] == 1.0


def test_clip_grad_norm():
    params = ParameterSet()
    params.add("w", np.zeros(2))
    params["w"].grad = np.array([3.0, 4.0])
    assert params.clip_grad_norm(1.0) == pytest.approx(5.0)
    assert params.grad_norm() == pytest.approx(1.0)


def test_shape_errors():
    with pytest.raises(ShapeMismatch):
        linear(Tensor(np.ones(3)), Tensor(np.ones((4, 2))))
    with pytest.raises(ShapeMismatch):
        Tensor(np.ones(3)).backward()
    with pytest.raises(ShapeMismatch):
        mean([])
    with pytest.raises(ShapeMismatch):
        mean([Tensor(np.ones(2)), Tensor(np.ones(3))])


def test_load_arrays_checks_shapes():
    params = ParameterSet()
    params.add("w", np.zeros((2, 2)))
    with pytest.raises(ShapeMismatch):
        params.load_arrays({"w": np.zeros(3)})
    with pytest.raises(KeyError):
        params.load_arrays({})
