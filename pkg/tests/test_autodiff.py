import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from jointcycle.autodiff import PRIMITIVES, Tape, Tensor, backward, forward_eval, grad_check, grad_check_fn, no_grad
from jointcycle.autodiff import ops
from jointcycle.errors import NonFiniteError, ShapeError, TapeError

TOL = 1e-3


def _r(seed, *shape):
    return np.random.default_rng(seed).standard_normal(shape)


def _away_from_zero(seed, *shape):
    x = _r(seed, *shape)
    return np.sign(x) * (np.abs(x) + 0.2)


# (inputs, attrs) per primitive; kinks (relu, leaky_relu, l1_norm) are kept >= 0.2 away from 0.
CASES = {
    "add": ([_r(0, 2, 3), _r(1, 2, 3)], {}),
    "sub": ([_r(0, 2, 3), _r(1, 1, 3)], {}),
    "mul": ([_r(0, 2, 3), _r(1, 2, 3)], {}),
    "div": ([_r(0, 2, 3), np.abs(_r(1, 2, 3)) + 0.5], {}),
    "scale": ([_r(0, 3, 2)], {"k": -1.7}),
    "matmul": ([_r(0, 2, 3), _r(1, 3, 4)], {}),
    "conv2d": ([_r(0, 1, 2, 5, 5), _r(1, 3, 2, 3, 3), _r(2, 3)], {"stride": 2, "padding": 1}),
    "upsample_nearest": ([_r(0, 1, 2, 2, 3)], {"factor": 2}),
    "avg_pool2d": ([_r(0, 1, 2, 4, 4)], {"k": 2}),
    "group_norm": ([_r(0, 2, 4, 3, 3), _r(1, 4), _r(2, 4)], {"groups": 2}),
    "film": ([_r(0, 2, 3, 2, 2), _r(1, 2, 3), _r(2, 2, 3)], {}),
    "relu": ([_away_from_zero(0, 3, 4)], {}),
    "leaky_relu": ([_away_from_zero(0, 3, 4)], {"slope": 0.2}),
    "silu": ([_r(0, 3, 4)], {}),
    "tanh": ([_r(0, 3, 4)], {}),
    "softmax": ([_r(0, 3, 5)], {"axis": 1}),
    "logsumexp": ([_r(0, 3, 5)], {"axis": 1}),
    "attention": ([_r(0, 2, 3, 4), _r(1, 2, 3, 4), _r(2, 2, 3, 4)], {"heads": 2}),
    "reshape": ([_r(0, 2, 6)], {"shape": (3, 4)}),
    "transpose": ([_r(0, 2, 3, 4)], {"axes": (2, 0, 1)}),
    "concat": ([_r(0, 2, 3), _r(1, 2, 2)], {"axis": 1}),
    "getitem": ([_r(0, 4, 3)], {"index": (np.array([0, 2, 2]), np.array([1, 0, 1]))}),
    "sum": ([_r(0, 3, 4)], {"axis": 0}),
    "mean": ([_r(0, 3, 4)], {"axis": 1, "keepdims": True}),
    "l1_norm": ([_away_from_zero(0, 3, 4)], {}),
    "l2_norm": ([_r(0, 3, 4)], {"axis": 1}),
}


# Fixed small layouts: 3x3 and 7x7 kernels, attention over two 4-dim tokens.
REFERENCE_CASES = {
    "conv2d 3x3 on 1x4x4": ("conv2d", [_r(0, 1, 1, 4, 4), _r(1, 1, 1, 3, 3), _r(2, 1)], {"stride": 1, "padding": 0}),
    "conv2d 3x3 on 1x4x4 padded": ("conv2d", [_r(0, 1, 1, 4, 4), _r(1, 1, 1, 3, 3), _r(2, 1)], {"stride": 1, "padding": 1}),
    "conv2d 7x7": ("conv2d", [_r(0, 1, 1, 8, 8), _r(1, 2, 1, 7, 7), _r(2, 2)], {"stride": 1, "padding": 3}),
    "attention 2x4 tokens": ("attention", [_r(0, 1, 2, 4), _r(1, 1, 2, 4), _r(2, 1, 2, 4)], {"heads": 2}),
    "attention 2x4 tokens one head": ("attention", [_r(3, 1, 2, 4), _r(4, 1, 2, 4), _r(5, 1, 2, 4)], {"heads": 1}),
}


class TestGradCheck(unittest.TestCase):
    def test_every_primitive_has_a_case(self):
        self.assertEqual(set(CASES), set(PRIMITIVES))

    def test_primitives_match_central_differences(self):
        for name, (inputs, attrs) in CASES.items():
            with self.subTest(primitive=name):
                err = grad_check(name, inputs, attrs=attrs)
                self.assertLessEqual(err, TOL)

    def test_reference_shapes_match_central_differences(self):
        for label, (name, inputs, attrs) in REFERENCE_CASES.items():
            with self.subTest(case=label):
                self.assertLessEqual(grad_check(name, inputs, step=1e-4, attrs=attrs), TOL)

    def test_composite_normalize_and_mse(self):
        a, b = _r(3, 4, 5), _r(4, 4, 5)
        self.assertLessEqual(grad_check_fn(lambda x: ops.normalize(x, axis=1), [a]), TOL)
        self.assertLessEqual(grad_check_fn(ops.mse, [a, b]), TOL)

    def test_rejects_float32_inputs(self):
        with self.assertRaises(ValueError):
            grad_check("tanh", [np.ones((2, 2), dtype=np.float32)])

    def test_rejects_out_of_range_step(self):
        with self.assertRaises(ValueError):
            grad_check("tanh", [_r(0, 2)], step=1e-1)


class TestForwardEval(unittest.TestCase):
    def test_add_broadcasts(self):
        out = forward_eval("add", [np.array([[1.0], [2.0]]), np.array([10.0, 20.0, 30.0])])
        assert_array_equal(out.data, [[11, 21, 31], [12, 22, 32]])

    def test_incompatible_shapes_raise(self):
        with self.assertRaises(ShapeError):
            forward_eval("matmul", [np.ones((2, 3)), np.ones((2, 3))])
        with self.assertRaises(ShapeError):
            forward_eval("conv2d", [np.ones((1, 2, 4, 4)), np.ones((3, 1, 3, 3))])

    def test_unknown_primitive(self):
        with self.assertRaises(ValueError):
            forward_eval("fft", [np.ones(3)])

    def test_non_finite_output_raises(self):
        with self.assertRaises(NonFiniteError):
            ops.div(Tensor([1.0]), Tensor([0.0]))

    def test_conv2d_matches_direct_sum(self):
        x, w = _r(0, 1, 1, 4, 4), _r(1, 1, 1, 3, 3)
        out = ops.conv2d(Tensor(x, dtype=np.float64), Tensor(w, dtype=np.float64)).data
        ref = np.array([[np.sum(x[0, 0, i : i + 3, j : j + 3] * w[0, 0]) for j in range(2)] for i in range(2)])
        assert_allclose(out[0, 0], ref, rtol=1e-12)

    def test_no_grad_records_nothing(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with no_grad():
            y = ops.mul(x, x)
        self.assertFalse(y.requires_grad)
        self.assertIsNone(y.creator)


class TestBackward(unittest.TestCase):
    def test_gradients_accumulate_across_uses(self):
        x = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True, dtype=np.float64)
        y = ops.sum(ops.add(ops.mul(x, x), x))
        backward(y)
        assert_allclose(x.grad, 2 * x.data + 1)

    def test_two_backward_calls_add_into_leaf(self):
        x = Tensor(np.array([2.0]), requires_grad=True, dtype=np.float64)
        backward(ops.sum(ops.scale(x, 3.0)))
        backward(ops.sum(ops.scale(x, 3.0)))
        assert_allclose(x.grad, [6.0])

    def test_reusing_a_consumed_graph_raises(self):
        x = Tensor(np.ones(2), requires_grad=True)
        y = ops.sum(ops.mul(x, x))
        y.backward()
        with self.assertRaises(TapeError):
            y.backward()

    def test_non_scalar_output_needs_explicit_grad(self):
        x = Tensor(np.ones(2), requires_grad=True)
        with self.assertRaises(TapeError):
            backward(ops.mul(x, x))

    def test_tape_records_in_execution_order(self):
        x = Tensor(np.ones((2, 2)), requires_grad=True)
        with Tape() as tape:
            ops.mean(ops.tanh(ops.matmul(x, x)))
        self.assertEqual(tape.primitives(), ["matmul", "tanh", "mean"])

    def test_tensor_data_is_read_only(self):
        x = Tensor(np.zeros(3))
        with self.assertRaises(ValueError):
            x.data[0] = 1.0


if __name__ == "__main__":
    unittest.main()
