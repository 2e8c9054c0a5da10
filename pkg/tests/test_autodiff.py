import numpy as np
import pytest

from latentalign.autodiff import ops
from latentalign.autodiff.gradcheck import check_gradient, finite_diff_grad, relative_error
from latentalign.autodiff.nn import init_mlp, mlp
from latentalign.autodiff.optim import OptimizerState, adam_step
from latentalign.autodiff.tensor import GradGraph, Tensor, backward
from latentalign.errors import DegenerateNormError, NonScalarLossError, ShapeMismatchError

from conftest import gradient


def test_primitive_examples():
    assert ops.cosine_similarity([1.0, 0.0], [0.0, 1.0]).item() == 0.0
    np.testing.assert_allclose(ops.l2_normalize([3.0, 4.0]).data, [0.6, 0.8])
    np.testing.assert_array_equal(ops.matmul(np.ones((2, 3)), np.ones((3, 1))).data, [[3.0], [3.0]])


def test_eval_primitive_by_name():
    assert ops.eval_primitive("scale", [np.array([1.0, -2.0])], factor=3.0).data.tolist() == [3.0, -6.0]
    assert ops.eval_primitive("concatenate", [np.ones((2, 1)), np.zeros((2, 2))]).shape == (2, 3)
    with pytest.raises(KeyError):
        ops.eval_primitive("conv2d", [np.ones(2)])


def test_shape_mismatch_and_degenerate_norm():
    with pytest.raises(ShapeMismatchError):
        ops.add(np.ones((2, 3)), np.ones((3, 2)))
    with pytest.raises(ShapeMismatchError):
        ops.matmul(np.ones((2, 3)), np.ones((2, 3)))
    with pytest.raises(DegenerateNormError):
        ops.l2_normalize(np.zeros(4))


def test_cosine_stays_in_range():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(200, 5)), rng.normal(size=(200, 5))
    cos = ops.cosine_similarity(a, b).data
    assert np.all(cos <= 1 + 1e-12) and np.all(cos >= -1 - 1e-12)
    assert ops.cosine_similarity(a[0], -3.0 * a[0]).item() == pytest.approx(-1.0)


def test_backward_of_sum_is_ones():
    np.testing.assert_array_equal(gradient(ops.sum, [1.0, 2.0, 3.0]), [1.0, 1.0, 1.0])


def test_self_similarity_has_zero_gradient():
    grad = gradient(lambda x: ops.cosine_similarity(x, x), [0.3, -1.2, 2.0])
    np.testing.assert_allclose(grad, 0.0, atol=1e-12)


def test_unreachable_root_gets_zero_gradient():
    with GradGraph() as graph:
        x = graph.watch(np.array([1.0, 2.0]))
        unused = graph.watch(np.ones((2, 2)))
        grads = graph.backward(ops.sum(ops.tanh(x)))
    np.testing.assert_array_equal(grads[unused.node_id], np.zeros((2, 2)))


def test_non_scalar_loss_is_rejected():
    with GradGraph() as graph:
        x = graph.watch(np.ones(3))
        with pytest.raises(NonScalarLossError):
            graph.backward(ops.tanh(x))
    with pytest.raises(NonScalarLossError):
        ops.tanh(np.ones(3)).item()
    assert Tensor(np.full((1, 1), 2.5)).item() == 2.5


def test_nothing_is_recorded_without_a_watched_input():
    with GradGraph() as graph:
        out = ops.tanh(np.ones(3))
    assert out.node_id is None
    assert graph.nodes == []
    assert backward(ops.sum(np.ones(3))) == {}


def test_constants_stop_gradients():
    with GradGraph() as graph:
        x = graph.watch(np.array([0.5, -0.5]))
        grads = graph.backward(ops.sum(ops.mul(x.detach(), x)))
    np.testing.assert_allclose(grads[x.node_id], [0.5, -0.5])


def test_evaluation_is_deterministic():
    rng = np.random.default_rng(1)
    weights = {k: Tensor(v) for k, v in init_mlp(rng, "net", [4, 8, 8, 3]).items()}
    x = rng.normal(size=(5, 4))
    assert np.array_equal(mlp(weights, "net", Tensor(x)).data, mlp(weights, "net", Tensor(x)).data)


def test_mlp_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    params = init_mlp(rng, "net", [3, 6, 6, 2])
    params = {k: v + 0.1 * rng.normal(size=v.shape) for k, v in params.items()}
    weights = {k: Tensor(v) for k, v in params.items()}
    x0 = rng.normal(size=(4, 3))

    def loss(x):
        return ops.sum(ops.tanh(mlp(weights, "net", x)))

    grad = gradient(loss, x0)
    assert check_gradient(lambda x: loss(Tensor(x)).item(), x0, grad) <= 1e-5


def _random_graph_loss(rng):
    n, w = int(rng.integers(2, 5)), int(rng.integers(2, 9))
    constants = {
        "w": rng.normal(size=(w, w)) / np.sqrt(w),
        "b": rng.normal(size=(n, w)),
        "m": rng.normal(size=(n, w)),
        "target": rng.normal(size=(n, w)),
        "half": rng.normal(size=(2 * w, w)) / np.sqrt(2 * w),
    }
    unary = [
        lambda h: ops.tanh(h),
        lambda h: ops.softplus(h),
        lambda h: ops.matmul(h, constants["w"]),
        lambda h: ops.add(h, constants["b"]),
        lambda h: ops.sub(h, constants["b"]),
        lambda h: ops.mul(h, constants["m"]),
        lambda h: ops.scale(h, 0.7),
        lambda h: ops.l2_normalize(ops.add(h, constants["b"])),
        lambda h: ops.log_softmax(h),
        lambda h: ops.transpose(ops.transpose(h)),
        lambda h: ops.matmul(ops.concatenate([h, ops.tanh(h)]), constants["half"]),
    ]
    reducers = [
        lambda h: ops.sum(h),
        lambda h: ops.mean(h),
        lambda h: ops.squared_error(h, constants["target"]),
        lambda h: ops.sum(ops.cosine_similarity(ops.add(h, constants["m"]), constants["target"])),
    ]
    chain = [unary[i] for i in rng.integers(0, len(unary), size=int(rng.integers(1, 5)))]
    reducer = reducers[int(rng.integers(0, len(reducers)))]

    def loss(x):
        h = x
        for op in chain:
            h = op(h)
        return reducer(h)

    return loss, rng.normal(size=(n, w))


def test_random_graphs_match_finite_differences():
    rng = np.random.default_rng(33)
    worst = 0.0
    for _ in range(100):
        loss, x0 = _random_graph_loss(rng)
        grad = gradient(loss, x0)
        worst = max(worst, check_gradient(lambda x: loss(Tensor(x)).item(), x0, grad, h=1e-5))
    assert worst <= 1e-5


def test_finite_diff_examples():
    np.testing.assert_allclose(finite_diff_grad(lambda x: float(np.sum(x**2)), np.array([1.0, 2.0])), [2.0, 4.0], rtol=1e-8)
    np.testing.assert_array_equal(finite_diff_grad(lambda x: 3.0, np.array([1.0, 2.0])), [0.0, 0.0])
    with pytest.raises(ValueError):
        finite_diff_grad(lambda x: 0.0, np.ones(2), h=0.0)


def test_relative_error_uses_unit_floor():
    assert relative_error(np.array([1e-3]), np.array([2e-3])) == pytest.approx(1e-3)
    assert relative_error(np.array([100.0]), np.array([101.0])) == pytest.approx(1.0 / 101.0)


def test_adam_zero_gradient_leaves_params():
    params = {"x": np.array([1.0, -2.0])}
    updated, state = adam_step(params, {"x": np.zeros(2)}, OptimizerState(), lr=0.1)
    np.testing.assert_array_equal(updated["x"], params["x"])
    assert state.step == 1


def test_adam_descends_quadratics():
    params = {"x": np.array([1.0])}
    updated, _ = adam_step(params, {"x": 2.0 * params["x"]}, OptimizerState(), lr=0.1)
    assert updated["x"][0] < 1.0

    params, state = {"p": np.array([1.5, -0.8])}, OptimizerState()
    scales = np.array([1.0, 3.0])
    for _ in range(500):
        params, state = adam_step(params, {"p": 2.0 * scales * params["p"]}, state, lr=0.05)
    assert float(np.sum(scales * params["p"] ** 2)) < 1e-6


def test_adam_rejects_bad_inputs():
    with pytest.raises(ShapeMismatchError):
        adam_step({"x": np.ones(2)}, {"x": np.ones(3)}, OptimizerState(), lr=0.1)
    with pytest.raises(ValueError):
        adam_step({"x": np.ones(2)}, {"x": np.ones(2)}, OptimizerState(), lr=0.0)
