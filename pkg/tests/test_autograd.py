"""Primitive operations: exact values, contracts, and gradient soundness."""

import math

import numpy as np
import pytest

from nbestslu import autograd as ag
from nbestslu.autograd import Tensor
from nbestslu.errors import DomainError, GraphStateError, ShapeMismatchError

from _gradcheck import max_rel_error, weighted_sum


class TestAffine:
    def test_identity(self):
        out = ag.affine(Tensor([1.0, 2.0]), Tensor([[1.0, 0.0], [0.0, 1.0]]), Tensor([0.0, 0.0]))
        np.testing.assert_array_equal(out.data, [1.0, 2.0])

    def test_hand_multiplication(self):
        out = ag.affine(Tensor([1.0, 1.0]), Tensor([[2.0, 3.0]]), Tensor([1.0]))
        np.testing.assert_array_equal(out.data, [6.0])

    def test_zero_input_returns_bias(self):
        out = ag.affine(Tensor([0.0, 0.0]), Tensor([[4.0, -2.0], [1.0, 9.0]]), Tensor([5.0, -1.0]))
        np.testing.assert_array_equal(out.data, [5.0, -1.0])

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeMismatchError) as err:
            ag.affine(Tensor([1.0, 2.0, 3.0]), Tensor([[1.0, 0.0], [0.0, 1.0]]), Tensor([0.0, 0.0]))
        assert "(2, 2)" in str(err.value) and "(3,)" in str(err.value)


class TestActivations:
    def test_tanh_zero(self):
        np.testing.assert_array_equal(ag.tanh(Tensor([0.0])).data, [0.0])

    def test_sigmoid_zero(self):
        np.testing.assert_array_equal(ag.sigmoid(Tensor([0.0])).data, [0.5])

    def test_tanh_one_matches_reference(self):
        assert ag.tanh(Tensor([1.0])).data[0] == pytest.approx(math.tanh(1.0), abs=1e-15)

    def test_ranges(self):
        # Beyond |x| ~ 19, tanh rounds to exactly +/-1 in float64; stay inside.
        rng = np.random.default_rng(0)
        x = rng.uniform(-15, 15, size=1000)
        t = ag.tanh(Tensor(x)).data
        s = ag.sigmoid(Tensor(x)).data
        assert np.all(t > -1) and np.all(t < 1)
        assert np.all(s > 0) and np.all(s < 1)

    def test_sigmoid_large_inputs_do_not_overflow(self):
        out = ag.sigmoid(Tensor([800.0, -800.0])).data
        assert out[0] == pytest.approx(1.0) and out[1] == pytest.approx(0.0)


class TestSoftmax:
    def test_symmetry(self):
        np.testing.assert_allclose(ag.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5], atol=1e-15)

    def test_closed_form(self):
        out = ag.softmax(Tensor([math.log(2.0), 0.0])).data
        np.testing.assert_allclose(out, [2.0 / 3.0, 1.0 / 3.0], atol=1e-15)

    def test_large_logits_stable(self):
        out = ag.softmax(Tensor([1000.0, 0.0])).data
        assert np.all(np.isfinite(out))
        assert out[0] == pytest.approx(1.0) and out[1] == pytest.approx(0.0, abs=1e-300)

    def test_sums_to_one_and_preserves_argmax(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            logits = rng.uniform(-50, 50, size=int(rng.integers(1, 12)))
            probs = ag.softmax(Tensor(logits)).data
            assert abs(probs.sum() - 1.0) < 1e-12
            assert int(np.argmax(probs)) == int(np.argmax(logits))

    def test_empty_input_rejected(self):
        with pytest.raises(DomainError):
            ag.softmax(Tensor(np.zeros(0)))


class TestNllLoss:
    def test_certain_prediction_costs_nothing(self):
        assert ag.nll_loss(Tensor([1.0, 0.0]), 0).item() == 0.0

    def test_half_probability(self):
        assert ag.nll_loss(Tensor([0.5, 0.5]), 1).item() == pytest.approx(-math.log(0.5), abs=1e-12)

    def test_third_probability(self):
        assert ag.nll_loss(Tensor([2.0 / 3.0, 1.0 / 3.0]), 1).item() == pytest.approx(
            -math.log(1.0 / 3.0), abs=1e-12
        )

    def test_target_out_of_range(self):
        with pytest.raises(DomainError):
            ag.nll_loss(Tensor([0.5, 0.5]), 2)
        with pytest.raises(DomainError):
            ag.nll_loss(Tensor([0.5, 0.5]), -1)


class TestMaxPool:
    def test_value_and_index(self):
        out, idx = ag.max_pool(Tensor([0.1, 0.9, 0.3]))
        assert out.item() == 0.9 and idx == 1

    def test_singleton(self):
        out, idx = ag.max_pool(Tensor([5.0]))
        assert out.item() == 5.0 and idx == 0

    def test_all_negative(self):
        out, idx = ag.max_pool(Tensor([-1.0, -2.0]))
        assert out.item() == -1.0 and idx == 0

    def test_empty_rejected(self):
        with pytest.raises(DomainError):
            ag.max_pool(Tensor(np.zeros(0)))

    def test_gradient_routes_to_argmax_only(self):
        x = Tensor([0.1, 0.9, 0.3], requires_grad=True)
        out, idx = ag.max_pool(x)
        out.backward()
        np.testing.assert_array_equal(x.grad, [0.0, 1.0, 0.0])


class TestBackwardContracts:
    def test_tanh_derivative_at_zero_is_one(self):
        x = Tensor([0.0], requires_grad=True)
        ag.tanh(x).backward(np.ones(1))
        np.testing.assert_array_equal(x.grad, [1.0])

    def test_softmax_nll_gradient_is_probs_minus_onehot(self):
        logits = Tensor([0.0, 0.0], requires_grad=True)
        ag.nll_loss(ag.softmax(logits), 0).backward()
        np.testing.assert_allclose(logits.grad, [-0.5, 0.5], atol=1e-15)

    def test_backward_before_any_forward_is_a_state_error(self):
        leaf = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(GraphStateError):
            leaf.backward(np.ones(2))

    def test_second_backward_on_consumed_graph_is_a_state_error(self):
        x = Tensor([1.0], requires_grad=True)
        y = ag.tanh(x)
        y.backward(np.ones(1))
        with pytest.raises(GraphStateError):
            y.backward(np.ones(1))

    def test_implicit_upstream_needs_scalar(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        y = ag.tanh(x)
        with pytest.raises(DomainError):
            y.backward()

    def test_gradients_accumulate_across_graphs_until_zeroed(self):
        x = Tensor([0.0], requires_grad=True)
        ag.tanh(x).backward(np.ones(1))
        ag.tanh(x).backward(np.ones(1))
        np.testing.assert_array_equal(x.grad, [2.0])
        x.zero_grad()
        assert x.grad is None

    def test_shared_subexpression_gets_both_contributions(self):
        # y = x * x built by sharing the same node twice.
        x = Tensor([3.0], requires_grad=True)
        ag.mul(x, x).backward(np.ones(1))
        np.testing.assert_allclose(x.grad, [6.0])


class TestFiniteDifferences:
    """Analytic gradients of every primitive vs the central-difference oracle."""

    def test_primitives(self):
        rng = np.random.default_rng(42)
        worst = 0.0
        for point in range(20):
            n, m = 5, 4
            x = Tensor(rng.uniform(-1, 1, n), requires_grad=True)
            w = Tensor(rng.uniform(-1, 1, (m, n)), requires_grad=True)
            b = Tensor(rng.uniform(-1, 1, m), requires_grad=True)
            mat = Tensor(rng.uniform(-1, 1, (3, m)), requires_grad=True)
            contract = rng.uniform(0.5, 1.5, m)
            target = int(rng.integers(m))

            def loss_fn():
                hidden = ag.tanh(ag.affine(x, w, b))
                gates = ag.mul(ag.sigmoid(hidden), ag.tanh(ag.add(hidden, b)))
                pooled = ag.columnwise_max(ag.add_bias_rows(mat, gates))
                merged = ag.concat1d([pooled, ag.scale(gates, 0.7)])
                probs = ag.softmax(merged)
                pick = ag.nll_loss(probs, target)
                rest = weighted_sum(pooled, contract)
                return ag.add_n([pick, ag.max_pool(rest)[0]])

            worst = max(worst, max_rel_error(loss_fn, [x, w, b, mat]))
        assert worst < 1e-4, f"max relative error {worst}"

    def test_embedding_row_gradient(self):
        rng = np.random.default_rng(3)
        table = Tensor(rng.uniform(-1, 1, (6, 4)), requires_grad=True)
        contract = rng.uniform(0.5, 1.5, 4)

        def loss_fn():
            row = ag.embedding_row(table, 2)
            return weighted_sum(ag.tanh(row), contract)

        assert max_rel_error(loss_fn, [table]) < 1e-4
        loss_fn().backward()
        assert np.all(table.grad[[0, 1, 3, 4, 5]] == 0.0)
        assert np.any(table.grad[2] != 0.0)


class TestDropout:
    def test_infer_mode_is_identity(self):
        v = Tensor([1.0, -2.0, 3.0])
        out = ag.dropout_apply(v, 0.5, ag.INFER)
        np.testing.assert_array_equal(out.data, v.data)

    def test_rate_zero_in_train_mode_is_identity(self):
        v = Tensor([1.0, -2.0, 3.0])
        out = ag.dropout_apply(v, 0.0, ag.TRAIN, np.random.default_rng(0))
        np.testing.assert_array_equal(out.data, v.data)

    def test_rate_at_or_above_one_rejected(self):
        v = Tensor([1.0])
        for rate in (1.0, 1.5, -0.1):
            with pytest.raises(DomainError):
                ag.dropout_apply(v, rate, ag.TRAIN, np.random.default_rng(0))

    def test_inverted_scaling_preserves_expectation(self):
        # Monte-Carlo estimate of E[dropout(v)] over 10,000 masks.
        rng = np.random.default_rng(123)
        v = Tensor(np.full(50, 2.0))
        total = np.zeros(50)
        trials = 10_000
        for _ in range(trials):
            total += ag.dropout_apply(v, 0.5, ag.TRAIN, rng).data
        np.testing.assert_allclose(total / trials, v.data, rtol=0.05)

    def test_backward_reuses_forward_mask(self):
        rng = np.random.default_rng(7)
        v = Tensor(np.ones(32), requires_grad=True)
        out = ag.dropout_apply(v, 0.5, ag.TRAIN, rng)
        mask = out.data.copy()  # v is all ones, so the output is the scaled mask
        out.backward(np.ones(32))
        np.testing.assert_array_equal(v.grad, mask)

    def test_mask_is_bernoulli_keep_rate(self):
        rng = np.random.default_rng(11)
        v = Tensor(np.ones(20_000))
        out = ag.dropout_apply(v, 0.3, ag.TRAIN, rng).data
        kept = np.count_nonzero(out)
        assert kept / v.size == pytest.approx(0.7, abs=0.02)
        np.testing.assert_allclose(out[out != 0], 1.0 / 0.7)
