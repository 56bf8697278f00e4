import numpy as np
import pytest

from src.autodiff import (
    AdamState,
    adam_step,
    backward,
    constant,
    conv2d,
    conv_transpose2d,
    dense,
    frame_mean,
    grad_check,
    instance_norm2d,
    l1_distance,
    leaky_relu,
    parameter,
    relu,
    square_error,
    stop_gradient,
    total,
)
from src.autodiff import ops
from src.autodiff.gradcheck import relative_error
from src.autodiff.tensor import Function
from src.errors import ConfigError, ContractError, DimensionError, NumericError


def _zeros(n):
    return constant(np.zeros(n))


def _ones(n):
    return constant(np.ones(n))


# --- forward examples ---


def test_conv2d_stride2_dot_product():
    x = constant(np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2))
    out = conv2d(x, constant(np.ones((1, 1, 2, 2))), _zeros(1), stride=2)
    np.testing.assert_array_equal(out.data, [[[[10.0]]]])


def test_conv2d_zero_weight_gives_zero(rng):
    x = constant(rng.standard_normal((2, 3, 4, 6)))
    out = conv2d(x, constant(np.zeros((5, 3, 2, 2))), _zeros(5), stride=2)
    assert out.shape == (2, 5, 2, 3)
    assert not out.data.any()


def test_conv2d_identity_kernel():
    ramp = np.arange(16.0).reshape(1, 1, 4, 4)
    kernel = np.zeros((1, 1, 3, 3))
    kernel[0, 0, 1, 1] = 1.0
    out = conv2d(constant(ramp), constant(kernel), _zeros(1), stride=1, padding=1)
    np.testing.assert_array_equal(out.data, ramp)


def test_conv2d_rejects_channel_mismatch():
    with pytest.raises(DimensionError):
        conv2d(constant(np.zeros((1, 2, 4, 4))), constant(np.zeros((1, 3, 2, 2))), _zeros(1), stride=2)


def test_conv2d_rejects_non_finite_input():
    x = np.zeros((1, 1, 2, 2))
    x[0, 0, 0, 0] = np.nan
    with pytest.raises(NumericError):
        conv2d(constant(x), constant(np.ones((1, 1, 2, 2))), _zeros(1), stride=2)


def test_conv_transpose2d_broadcasts_single_pixel():
    out = conv_transpose2d(constant(np.ones((1, 1, 1, 1))), constant(np.ones((1, 1, 2, 2))), _zeros(1))
    np.testing.assert_array_equal(out.data, np.ones((1, 1, 2, 2)))


def test_conv_transpose2d_zero_input_gives_bias():
    out = conv_transpose2d(constant(np.zeros((1, 2, 3, 3))), constant(np.ones((2, 4, 2, 2))), constant(np.arange(4.0)))
    assert out.shape == (1, 4, 6, 6)
    for c in range(4):
        assert np.all(out.data[0, c] == c)


def test_conv_transpose2d_rejects_other_kernels():
    with pytest.raises(ConfigError):
        conv_transpose2d(constant(np.zeros((1, 1, 2, 2))), constant(np.zeros((1, 1, 3, 3))), _zeros(1))


def test_conv_adjoint_identity(rng):
    x = rng.standard_normal((2, 3, 4, 6))
    w = rng.standard_normal((5, 3, 2, 2))
    y = rng.standard_normal((2, 5, 2, 3))
    lhs = np.sum(conv2d(constant(x), constant(w), _zeros(5), stride=2).data * y)
    rhs = np.sum(x * conv_transpose2d(constant(y), constant(w), _zeros(3)).data)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_instance_norm_examples(rng):
    flat = instance_norm2d(constant(np.full((1, 2, 3, 3), 4.0)), constant(np.ones(2)), constant(np.zeros(2)))
    assert not flat.data.any()

    pair = instance_norm2d(constant(np.array([-1.0, 1.0]).reshape(1, 1, 1, 2)), constant(np.ones(1)),
                           constant(np.zeros(1)), eps=1e-12)
    np.testing.assert_allclose(pair.data.reshape(-1), [-1.0, 1.0], atol=1e-9)

    gained = instance_norm2d(constant(rng.standard_normal((2, 3, 4, 4))), constant(np.zeros(3)),
                             constant(np.full(3, 3.0)))
    np.testing.assert_array_equal(gained.data, np.full((2, 3, 4, 4), 3.0))


def test_instance_norm_output_statistics(rng):
    x = constant(rng.standard_normal((2, 4, 5, 5)) * 3 + 2)
    out = instance_norm2d(x, constant(np.ones(4)), constant(np.zeros(4))).data
    np.testing.assert_allclose(out.mean(axis=(2, 3)), 0.0, atol=1e-12)
    np.testing.assert_allclose(out.var(axis=(2, 3)), 1.0, atol=1e-3)


def test_activations():
    np.testing.assert_array_equal(relu(constant([-1.0, 2.0])).data, [0.0, 2.0])
    np.testing.assert_allclose(leaky_relu(constant([-1.0, 2.0]), 0.2).data, [-0.2, 2.0])
    with pytest.raises(ConfigError):
        leaky_relu(constant([1.0]), 1.0)


def test_dense_examples(rng):
    out = dense(constant([[1.0, 2.0]]), constant([[1.0], [1.0]]), _zeros(1))
    np.testing.assert_array_equal(out.data, [[3.0]])

    x = rng.standard_normal((3, 4))
    np.testing.assert_array_equal(dense(constant(x), constant(np.zeros((4, 2))), constant([1.0, -1.0])).data,
                                  np.tile([1.0, -1.0], (3, 1)))
    np.testing.assert_array_equal(dense(constant(x), constant(np.eye(4)), _zeros(4)).data, x)


def test_reductions(rng):
    x = constant(rng.standard_normal((2, 3)))
    assert l1_distance(x, x).item() == 0.0
    assert square_error(constant([0.5]), 1.0).item() == 0.25

    per_frame = np.array([1.0, -2.0, 3.5])
    patch = np.broadcast_to(per_frame, (2, 1, 32, 3)).copy()
    np.testing.assert_allclose(frame_mean(constant(patch)).data, np.tile(per_frame, (2, 1)))


def test_square_error_rejects_mismatched_weights():
    with pytest.raises(DimensionError):
        square_error(constant([1.0, 2.0]), 0.0, weights=np.ones(3))


# --- backward ---


def test_backward_scalar_leaf():
    x = parameter(3.0)
    assert backward(x)[x] == 1.0


def test_backward_relu_mask():
    x = parameter([-1.0, 2.0])
    grads = backward(total(relu(x)))
    np.testing.assert_array_equal(grads[x], [0.0, 1.0])
    np.testing.assert_array_equal(x.grad, [0.0, 1.0])


def test_backward_leaky_relu_subgradient_at_zero():
    x = parameter([-1.0, 0.0, 2.0])
    grads = backward(total(leaky_relu(x, 0.2)))
    np.testing.assert_allclose(grads[x], [0.2, 0.0, 1.0])


def test_backward_rejects_non_scalar_loss():
    with pytest.raises(ContractError):
        backward(relu(parameter([1.0, 2.0])))


def test_backward_accumulates_shared_inputs():
    x = parameter([1.0, -3.0])
    grads = backward(total(x + x))
    np.testing.assert_array_equal(grads[x], [2.0, 2.0])


def test_stop_gradient_cuts_the_graph():
    x = parameter([1.0, 2.0])
    loss = total(ops.scale(stop_gradient(x), 5.0)) + total(x)
    np.testing.assert_array_equal(backward(loss)[x], [1.0, 1.0])

    y = parameter([1.0])
    detached_only = total(ops.scale(stop_gradient(y), 2.0)) + total(parameter([0.0]))
    assert y not in backward(detached_only)


# --- adam ---


def test_adam_first_step():
    p = parameter([0.0])
    state = adam_step([p], [np.array([1.0])], AdamState.for_params([p]), lr=0.0002)
    assert p.data[0] == pytest.approx(-0.0002 / (1.0 + 1e-8), rel=1e-12)
    assert state.step == 1


def test_adam_zero_gradient_keeps_parameters():
    p = parameter([0.7, -0.3])
    state = adam_step([p], [np.zeros(2)], AdamState.for_params([p]), lr=0.1)
    np.testing.assert_array_equal(p.data, [0.7, -0.3])
    assert state.step == 1


def test_adam_two_steps_decrease_monotonically():
    p = parameter([0.0])
    state = AdamState.for_params([p])
    trajectory = []
    for _ in range(2):
        state = adam_step([p], [np.array([1.0])], state, lr=0.0002)
        trajectory.append(p.data[0])
    assert 0.0 > trajectory[0] > trajectory[1]


def test_adam_leaves_old_state_untouched():
    p = parameter([0.0])
    first = AdamState.for_params([p])
    second = adam_step([p], [np.array([1.0])], first, lr=0.01)
    assert first.step == 0 and not first.m[0].any()
    assert second.m[0][0] == pytest.approx(0.5)


def test_adam_rejects_bad_arguments():
    p = parameter([0.0])
    with pytest.raises(ConfigError):
        adam_step([p], [np.zeros(1)], AdamState.for_params([p]), lr=0.0)
    with pytest.raises(DimensionError):
        adam_step([p], [np.zeros(2)], AdamState.for_params([p]), lr=0.1)


# --- gradient checks ---


def test_grad_check_conv2d(rng):
    report = grad_check(
        lambda x, w, b: conv2d(x, w, b, stride=1, padding=1),
        [rng.standard_normal((1, 2, 4, 6)), rng.standard_normal((3, 2, 3, 3)), rng.standard_normal(3)],
        name="conv2d",
    )
    assert report.passed, report.to_dict()


def test_grad_check_instance_norm(rng):
    report = grad_check(
        instance_norm2d, [rng.standard_normal((1, 3, 4, 4)), rng.standard_normal(3), rng.standard_normal(3)]
    )
    assert report.passed, report.to_dict()


def test_grad_check_dense(rng):
    report = grad_check(dense, [rng.standard_normal((2, 5)), rng.standard_normal((5, 3)), rng.standard_normal(3)])
    assert report.passed, report.to_dict()


def test_grad_check_conv_transpose(rng):
    report = grad_check(
        conv_transpose2d,
        [rng.standard_normal((2, 3, 2, 3)), rng.standard_normal((3, 2, 2, 2)), rng.standard_normal(2)],
    )
    assert report.passed, report.to_dict()


class _WrongDouble(Function):
    tag = "wrong_double"

    def forward(self, a):
        return 2.0 * a

    def backward(self, grad):
        return (grad,)


def test_grad_check_flags_a_wrong_backward(rng):
    report = grad_check(_WrongDouble.apply, [rng.standard_normal(4)], name="wrong")
    assert not report.passed
    assert report.max_error == pytest.approx(0.5, rel=1e-6)


def test_relative_error_floors_vanishing_gradients():
    assert relative_error(np.array([1e-17]), np.array([1e-14])) < 1e-7
    assert relative_error(np.array([1.0, 0.5]), np.array([1.1, 0.5])) == pytest.approx(0.1 / 1.1)


def test_grad_check_passes_on_bias_cancelled_by_instance_norm(rng):
    def conv_then_norm(x, w, b):
        return instance_norm2d(conv2d(x, w, b, stride=1, padding=1), _ones(3), _zeros(3))

    report = grad_check(
        conv_then_norm,
        [rng.standard_normal((1, 2, 6, 6)), rng.standard_normal((3, 2, 3, 3)), rng.standard_normal(3)],
        names=["x", "w", "b"],
    )
    assert report.errors["b"] < 1e-4
    assert report.passed, report.to_dict()
