"""Tensor core: forward examples, gradient oracles, and shape algebra."""

import numpy as np
import pytest

from dinakan import tensor as T
from dinakan.gradcheck import grad_check
from dinakan.tensor import ShapeError, Tensor


def scalar_loss(t):
    return T.sum_(T.power(t, 2.0))


class TestMatmul:
    def test_identity(self):
        m = Tensor([[2.0, -1.0], [0.5, 3.0]])
        eye = Tensor(np.eye(2))
        np.testing.assert_array_equal(T.matmul(eye, m).data, m.data)

    def test_hand_product(self):
        out = T.matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[5.0], [6.0]]))
        np.testing.assert_array_equal(out.data, [[17.0], [39.0]])

    def test_shape_mismatch_reports_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_gradients_vs_finite_differences(self):
        rng = np.random.default_rng(0)
        a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        b = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
        report = grad_check(lambda u, v: scalar_loss(T.matmul(u, v)), [a, b], tol=1e-6)
        assert report.passed, str(report)

    def test_batched_backward(self):
        rng = np.random.default_rng(1)
        a = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
        b = Tensor(rng.normal(size=(2, 4, 5)), requires_grad=True)
        report = grad_check(lambda u, v: scalar_loss(T.matmul(u, v)), [a, b], n_probes=30)
        assert report.passed, str(report)


class TestConv2d:
    def test_pointwise_identity(self):
        x = Tensor(np.random.default_rng(2).normal(size=(1, 3, 4, 4)))
        w = Tensor(np.eye(3).reshape(3, 3, 1, 1))
        np.testing.assert_allclose(T.conv2d(x, w).data, x.data, atol=0)

    def test_ones_kernel_overlap_counts(self):
        x = Tensor(np.ones((1, 1, 3, 3)))
        w = Tensor(np.ones((1, 1, 3, 3)))
        out = T.conv2d(x, w, stride=1, padding=1).data[0, 0]
        assert out[1, 1] == 9.0
        assert out[0, 0] == out[0, 2] == out[2, 0] == out[2, 2] == 4.0

    def test_depthwise_gradients(self):
        rng = np.random.default_rng(3)
        x = Tensor(rng.normal(size=(1, 2, 5, 5)), requires_grad=True)
        w = Tensor(rng.normal(size=(2, 1, 3, 3)), requires_grad=True)
        report = grad_check(
            lambda u, v: scalar_loss(T.conv2d(u, v, stride=1, padding=1, groups=2)),
            [x, w], tol=1e-6,
        )
        assert report.passed, str(report)

    def test_group_divisibility_error(self):
        with pytest.raises(ShapeError, match="groups"):
            T.conv2d(Tensor(np.ones((1, 3, 4, 4))), Tensor(np.ones((4, 1, 3, 3))), groups=2)

    def test_kernel_larger_than_input_error(self):
        with pytest.raises(ShapeError, match="kernel"):
            T.conv2d(Tensor(np.ones((1, 1, 2, 2)), requires_grad=False),
                     Tensor(np.ones((1, 1, 5, 5))))

    @pytest.mark.parametrize("cin,cout,groups,k,stride,pad", [
        (4, 6, 2, 3, 1, 1), (3, 3, 3, 3, 2, 1), (2, 4, 1, 1, 1, 0),
        (4, 4, 1, 3, 2, 0), (6, 6, 6, 3, 1, 1),
    ])
    def test_against_naive_loop_oracle(self, cin, cout, groups, k, stride, pad):
        rng = np.random.default_rng(cin * 31 + cout)
        x = rng.normal(size=(2, cin, 5, 5))
        w = rng.normal(size=(cout, cin // groups, k, k))
        b = rng.normal(size=cout)
        mine = T.conv2d(Tensor(x), Tensor(w), Tensor(b), stride=stride,
                        padding=pad, groups=groups).data
        np.testing.assert_allclose(mine, _naive_conv(x, w, b, stride, pad, groups),
                                   rtol=0, atol=1e-12)

    def test_output_shape_formula(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            h, w = rng.integers(3, 10, size=2)
            k = int(rng.choice([1, 3]))
            s = int(rng.integers(1, 3))
            p = int(rng.integers(0, 2))
            if k > h + 2 * p or k > w + 2 * p:
                continue
            x = Tensor(rng.normal(size=(1, 2, h, w)))
            wt = Tensor(rng.normal(size=(3, 2, k, k)))
            out = T.conv2d(x, wt, stride=s, padding=p)
            assert out.shape == (1, 3, (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1)


def _naive_conv(x, w, b, stride, pad, groups):
    batch, c_in, h, wd = x.shape
    c_out, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((batch, c_out, ho, wo))
    gs_in, gs_out = c_in // groups, c_out // groups
    for bb in range(batch):
        for co in range(c_out):
            g = co // gs_out
            for i in range(ho):
                for j in range(wo):
                    patch = xp[bb, g * gs_in:(g + 1) * gs_in,
                               i * stride:i * stride + kh, j * stride:j * stride + kw]
                    out[bb, co, i, j] = (patch * w[co]).sum() + b[co]
    return out


class TestAvgPool:
    def test_constant_input(self):
        out = T.avgpool2d(Tensor(np.full((1, 2, 4, 4), 3.5)), 2, 2)
        np.testing.assert_array_equal(out.data, np.full((1, 2, 2, 2), 3.5))

    def test_hand_mean(self):
        out = T.avgpool2d(Tensor([[[[1.0, 2.0], [3.0, 4.0]]]]), 2, 2)
        assert out.data.reshape(()) == 2.5

    def test_window_exceeds_input(self):
        with pytest.raises(ShapeError, match="window"):
            T.avgpool2d(Tensor(np.ones((1, 1, 3, 3))), 4)

    def test_gradients(self):
        x = Tensor(np.random.default_rng(4).normal(size=(1, 1, 4, 4)), requires_grad=True)
        report = grad_check(lambda u: scalar_loss(T.avgpool2d(u, 2, 2)), [x], tol=1e-6)
        assert report.passed, str(report)


class TestActivations:
    def test_relu_values(self):
        out = T.relu(Tensor([-2.0, 0.0, 3.0]))
        np.testing.assert_array_equal(out.data, [0.0, 0.0, 3.0])

    def test_silu_zero(self):
        assert T.silu(Tensor([0.0])).data[0] == 0.0

    def test_silu_one_high_precision(self):
        # 1 / (1 + e^-1), evaluated independently at float64
        expected = 1.0 / (1.0 + np.exp(-1.0))
        np.testing.assert_allclose(T.silu(Tensor([1.0])).data[0], expected, atol=1e-15)
        np.testing.assert_allclose(T.silu(Tensor([1.0])).data[0], 0.7310585786300049, atol=1e-12)

    def test_dispatch(self):
        x = Tensor([0.3])
        for mode in ("relu", "silu", "tanh"):
            assert T.activation(x, mode).shape == (1,)
        with pytest.raises(ValueError, match="unknown activation"):
            T.activation(x, "gelu")

    @pytest.mark.parametrize("fn", [T.relu, T.silu, T.tanh, T.exp])
    def test_gradients_away_from_kinks(self, fn):
        x = Tensor(np.random.default_rng(5).normal(size=7) + 2.0, requires_grad=True)
        report = grad_check(lambda u: scalar_loss(fn(u)), [x], tol=1e-6)
        assert report.passed, str(report)


class TestSoftmax:
    def test_constant_row(self):
        out = T.softmax(Tensor([[1.0, 1.0, 1.0, 1.0]]), axis=-1)
        np.testing.assert_allclose(out.data, 0.25, atol=1e-15)

    def test_closed_form(self):
        out = T.softmax(Tensor([[0.0, np.log(3.0)]]), axis=-1)
        np.testing.assert_allclose(out.data, [[0.25, 0.75]], atol=1e-15)

    def test_rows_sum_to_one_property(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            x = Tensor(rng.normal(scale=rng.uniform(0.1, 50), size=(4, 7)))
            sums = T.softmax(x, axis=-1).data.sum(axis=-1)
            np.testing.assert_allclose(sums, 1.0, atol=1e-12)

    def test_gradients(self):
        x = Tensor(np.random.default_rng(7).normal(size=(1, 5)), requires_grad=True)
        report = grad_check(lambda u: scalar_loss(T.softmax(u, axis=-1)), [x], tol=1e-6)
        assert report.passed, str(report)


class TestConcat:
    def test_channel_concat_shape(self):
        a = Tensor(np.ones((2, 3, 4, 4)))
        b = Tensor(np.ones((2, 1, 4, 4)))
        assert T.concat([a, b], axis=1).shape == (2, 4, 4, 4)

    def test_empty_list_errors(self):
        with pytest.raises(ShapeError, match="empty"):
            T.concat([], axis=0)

    def test_off_axis_mismatch(self):
        with pytest.raises(ShapeError, match="mismatch"):
            T.concat([Tensor(np.ones((2, 3))), Tensor(np.ones((3, 3)))], axis=1)

    def test_gradient_round_trip_through_slices(self):
        rng = np.random.default_rng(8)
        a = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
        b = Tensor(rng.normal(size=(2, 2)), requires_grad=True)
        out = T.concat([a, b], axis=1)
        seed = rng.normal(size=(2, 5))
        out.backward(seed)
        np.testing.assert_array_equal(a.grad, seed[:, :3])
        np.testing.assert_array_equal(b.grad, seed[:, 3:])


class TestBackward:
    def test_identity_gradient(self):
        x = Tensor([4.0], requires_grad=True)
        T.sum_(x).backward()
        np.testing.assert_array_equal(x.grad, [1.0])

    def test_product_rule(self):
        x = Tensor([2.0], requires_grad=True)
        y = Tensor([3.0], requires_grad=True)
        T.sum_(x * y).backward()
        assert x.grad[0] == 3.0 and y.grad[0] == 2.0

    def test_non_scalar_output_rejected(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ShapeError, match="scalar"):
            (x * x).backward()

    def test_detached_graph_rejected(self):
        x = Tensor([1.0], requires_grad=False)
        with pytest.raises(ValueError, match="detached"):
            T.sum_(x * x).backward()

    def test_accumulation_doubles_gradient(self):
        # f(x) + f(x) must give exactly twice the gradient of f(x)
        rng = np.random.default_rng(10)
        base = rng.normal(size=4)

        def f(t):
            return T.sum_(T.silu(t) * t)

        x1 = Tensor(base, requires_grad=True)
        f(x1).backward()
        single = x1.grad.copy()
        x2 = Tensor(base, requires_grad=True)
        (f(x2) + f(x2)).backward()
        np.testing.assert_array_equal(x2.grad, 2.0 * single)

    def test_shared_buffer_not_corrupted(self):
        # two parents fed by the same upstream gradient stay independent
        x = Tensor([1.0, 2.0], requires_grad=True)
        y = Tensor([3.0, 4.0], requires_grad=True)
        z = x + y
        loss = T.sum_(z * z) + T.sum_(x * x)
        loss.backward()
        np.testing.assert_array_equal(y.grad, 2.0 * (x.data + y.data))
        np.testing.assert_array_equal(x.grad, 2.0 * (x.data + y.data) + 2.0 * x.data)


class TestGradCheckHarness:
    def test_linear_function_exact(self):
        x = Tensor(np.arange(4.0), requires_grad=True)
        report = grad_check(lambda u: T.sum_(u * 3.0), [x], tol=1e-10)
        assert report.passed and report.max_rel_error < 1e-9

    def test_quadratic_error_scales_with_step(self):
        x = Tensor(np.array([1.5]), requires_grad=True)
        loose = grad_check(lambda u: T.sum_(T.power(u, 3.0)), [x], step=1e-2, tol=1.0)
        tight = grad_check(lambda u: T.sum_(T.power(u, 3.0)), [x], step=1e-4, tol=1.0)
        assert tight.max_rel_error < loose.max_rel_error

    def test_failures_are_listed(self):
        # a coarse step on a cubic leaves O(h^2) truncation error, which a
        # tight-enough tolerance must flag rather than swallow
        x = Tensor(np.array([1.5, -0.7]), requires_grad=True)
        report = grad_check(lambda u: T.sum_(T.power(u, 3.0)), [x], step=1e-2, tol=1e-10)
        assert not report.passed
        assert len(report.failures) == 2
        assert report.max_rel_error > 1e-10


class TestShapeAlgebra:
    def test_reshape_transpose_round_trip_gradients(self):
        rng = np.random.default_rng(11)
        x = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
        report = grad_check(
            lambda u: scalar_loss(T.transpose(T.reshape(u, (6, 4)), (1, 0))), [x],
            n_probes=16, tol=1e-6,
        )
        assert report.passed, str(report)

    def test_take_accumulates_duplicates(self):
        x = Tensor(np.arange(3.0), requires_grad=True)
        out = T.take(x, np.array([0, 0, 2]), axis=0)
        T.sum_(out).backward()
        np.testing.assert_array_equal(x.grad, [2.0, 0.0, 1.0])

    def test_slice_scatter_gradient(self):
        x = Tensor(np.arange(9.0).reshape(3, 3), requires_grad=True)
        T.sum_(x[1]).backward()
        expected = np.zeros((3, 3))
        expected[1] = 1.0
        np.testing.assert_array_equal(x.grad, expected)

    def test_broadcast_add_unbroadcasts(self):
        a = Tensor(np.ones((2, 3)), requires_grad=True)
        b = Tensor(np.ones(3), requires_grad=True)
        T.sum_(a + b).backward()
        np.testing.assert_array_equal(b.grad, [2.0, 2.0, 2.0])


class TestShapeFormulas:
    def test_randomized_shape_algebra(self):
        # declared output-shape formulas hold on randomized operand shapes
        rng = np.random.default_rng(30)
        for _ in range(40):
            m, k, n = rng.integers(1, 7, size=3)
            assert T.matmul(Tensor(np.zeros((m, k))), Tensor(np.zeros((k, n)))).shape == (m, n)

            h, w = rng.integers(2, 9, size=2)
            window = int(rng.integers(1, min(h, w) + 1))
            stride = int(rng.integers(1, window + 1))
            out = T.avgpool2d(Tensor(np.zeros((1, 2, h, w))), window, stride)
            assert out.shape == (1, 2, (h - window) // stride + 1, (w - window) // stride + 1)

            parts = [Tensor(np.zeros((2, int(c), 3))) for c in rng.integers(1, 5, size=3)]
            cat = T.concat(parts, axis=1)
            assert cat.shape == (2, sum(p.shape[1] for p in parts), 3)

            rows = rng.integers(0, m, size=(2, 2))
            taken = T.take(Tensor(np.zeros((m, 4))), rows, axis=0)
            assert taken.shape == (2, 2, 4)

            soft = T.softmax(Tensor(np.zeros((m, n))), axis=-1)
            assert soft.shape == (m, n)


class TestNormalizeLayers:
    def test_dispatcher_routes_both_kinds(self):
        from dinakan.nn import BatchNorm2d, LayerNorm, normalize

        x4 = Tensor(np.random.default_rng(20).normal(size=(2, 3, 4, 4)))
        out = normalize(x4, "batchnorm2d", BatchNorm2d(3))
        assert out.shape == x4.shape
        x2 = Tensor(np.random.default_rng(21).normal(size=(2, 5)))
        assert normalize(x2, "layernorm", LayerNorm(5)).shape == x2.shape
        with pytest.raises(ValueError, match="unknown normalization"):
            normalize(x2, "groupnorm", LayerNorm(5))
        with pytest.raises(ValueError, match="needs"):
            normalize(x4, "batchnorm2d", LayerNorm(3))

    def test_batchnorm_normalizes_per_channel(self):
        from dinakan.nn import BatchNorm2d

        rng = np.random.default_rng(22)
        x = Tensor(rng.normal(loc=5.0, scale=2.0, size=(4, 3, 6, 6)))
        out = BatchNorm2d(3)(x).data
        np.testing.assert_allclose(out.mean(axis=(0, 2, 3)), 0.0, atol=1e-12)
        np.testing.assert_allclose(out.var(axis=(0, 2, 3)), 1.0, atol=1e-2)

    def test_batchnorm_constant_input_shifts_to_beta(self):
        from dinakan.nn import BatchNorm2d

        bn = BatchNorm2d(2)
        bn.beta.data[:] = 3.0
        out = bn(Tensor(np.full((2, 2, 3, 3), 0.7))).data
        np.testing.assert_allclose(out, 3.0, atol=1e-2)  # epsilon-regularized zero variance

    def test_batchnorm_training_batch_of_one_rejected(self):
        from dinakan.nn import BatchNorm2d

        bn = BatchNorm2d(2)
        with pytest.raises(ValueError, match="degenerate"):
            bn(Tensor(np.zeros((1, 2, 3, 3))))
        bn.eval()
        assert bn(Tensor(np.zeros((1, 2, 3, 3)))).shape == (1, 2, 3, 3)

    def test_softmax_finite_on_extreme_logits(self):
        x = Tensor(np.array([[1e4, -1e4, 0.0], [-1e4, -1e4, -1e4]]))
        out = T.softmax(x, axis=-1).data
        assert np.all(np.isfinite(out))
        np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-12)

    def test_frozen_parameter_not_updated(self):
        from dinakan.nn import Parameter
        from dinakan.optim import AdamW, TrainConfig

        frozen = Parameter(np.ones(3), trainable=False)
        live = Parameter(np.ones(3))
        opt = AdamW([("frozen", frozen), ("live", live)],
                    TrainConfig(epochs=2, decay_epochs=()))
        live.grad = np.ones(3)
        frozen.grad = np.ones(3)
        opt.step(1e-2)
        np.testing.assert_array_equal(frozen.data, 1.0)
        assert np.all(live.data < 1.0)


class TestFusedNorm:
    def test_affine_norm_matches_definition(self):
        rng = np.random.default_rng(12)
        x = Tensor(rng.normal(loc=5.0, scale=2.0, size=(4, 6)))
        gamma = Tensor(np.ones(6))
        beta = Tensor(np.zeros(6))
        out, _, _ = T.affine_norm(x, gamma, beta, (1,), 1, eps=1e-5)
        np.testing.assert_allclose(out.data.mean(axis=1), 0.0, atol=1e-12)
        np.testing.assert_allclose(out.data.var(axis=1), 1.0, atol=1e-3)

    def test_affine_norm_gradients(self):
        rng = np.random.default_rng(13)
        x = Tensor(rng.normal(size=(2, 4)), requires_grad=True)
        g = Tensor(rng.normal(size=4), requires_grad=True)
        b = Tensor(rng.normal(size=4), requires_grad=True)
        report = grad_check(
            lambda u, gg, bb: scalar_loss(T.affine_norm(u, gg, bb, (1,), 1)[0]),
            [x, g, b], tol=1e-6,
        )
        assert report.passed, str(report)
