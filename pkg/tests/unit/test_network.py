"""
Unit tests for the classifier, its Jacobians and the assumption-constant estimators.
"""
import numpy as np
import pytest
from pydantic import ValidationError
from scipy.special import expit

from src.composite_opt.core.dataset import Dataset
from src.composite_opt.core.errors import ContractViolation, NonFiniteError
from src.composite_opt.core.network import (
    Activation,
    AssumptionEstimates,
    LayerParams,
    MlpSpec,
    devectorize,
    estimate_constants,
    forward,
    hessian_spectral_norm,
    init_inverse_sqrt_eps,
    init_weights,
    jacobian,
    jacobian_bound,
    jacobian_stack,
    taylor_residual,
    vectorize,
)

pytestmark = pytest.mark.unit

ALL_ACTIVATIONS = list(Activation)


def fd_jacobian(spec, w, x, step=1e-5):
    cols = []
    for k in range(w.size):
        e = np.zeros_like(w)
        e[k] = step
        cols.append((forward(spec, w + e, x) - forward(spec, w - e, x)) / (2 * step))
    return np.stack(cols, axis=1)


def two_layer_linear(hidden=1):
    return MlpSpec(layer_sizes=[2, hidden, 2], activations=[Activation.IDENTITY], seed=0, use_bias=False)


class TestMlpSpec:
    def test_parameter_count(self):
        spec = MlpSpec(layer_sizes=[2, 1, 2], activations=["tanh"], seed=0)
        assert spec.num_params == 7

    def test_parameter_count_without_bias(self):
        assert two_layer_linear(3).num_params == 12

    def test_activation_count_must_match_hidden_layers(self):
        with pytest.raises(ValidationError):
            MlpSpec(layer_sizes=[2, 3, 2], activations=[], seed=0)

    def test_zero_width_layer_rejected(self):
        with pytest.raises(ValidationError):
            MlpSpec(layer_sizes=[2, 0, 2], activations=["tanh"], seed=0)

    def test_seed_is_required(self):
        with pytest.raises(ValidationError):
            MlpSpec(layer_sizes=[2, 2])


class TestVectorize:
    def test_smallest_layer_layout(self):
        params = [LayerParams(weight=np.array([[3.0]]), bias=np.array([4.0]))]
        np.testing.assert_array_equal(vectorize(params), [3.0, 4.0])

    def test_column_major_layout(self):
        weight = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
        np.testing.assert_array_equal(vectorize([LayerParams(weight, np.array([7.0, 8.0]))]), [1, 3, 5, 2, 4, 6, 7, 8])

    def test_round_trip_is_bit_exact(self):
        spec = MlpSpec(layer_sizes=[4, 6, 5, 3], activations=["sigmoid", "softplus"], seed=11)
        w = np.random.default_rng(5).standard_normal(spec.num_params)
        again = vectorize(devectorize(spec, w))
        assert again.tobytes() == w.tobytes()

    def test_wrong_length_raises(self):
        spec = MlpSpec(layer_sizes=[2, 2], seed=0)
        with pytest.raises(ContractViolation):
            devectorize(spec, np.zeros(5))


class TestInit:
    def test_seeded_and_reproducible(self):
        spec = MlpSpec(layer_sizes=[3, 8, 2], activations=["tanh"], seed=42)
        np.testing.assert_array_equal(init_weights(spec), init_weights(spec))

    def test_biases_start_at_zero(self):
        spec = MlpSpec(layer_sizes=[3, 8, 2], activations=["tanh"], seed=42)
        for layer in devectorize(spec, init_weights(spec)):
            np.testing.assert_array_equal(layer.bias, 0.0)

    def test_inverse_sqrt_eps_scales_base_weights(self):
        spec = MlpSpec(layer_sizes=[3, 4, 2], activations=["sigmoid"], seed=1)
        np.testing.assert_allclose(init_inverse_sqrt_eps(spec, 0.04), init_weights(spec) * 5.0)


class TestForward:
    def test_identity_layer(self):
        spec = MlpSpec(layer_sizes=[2, 2], seed=0)
        w = vectorize([LayerParams(np.eye(2), np.zeros(2))])
        np.testing.assert_array_equal(forward(spec, w, [1.0, 2.0]), [1.0, 2.0])

    def test_zero_weights_give_zero_output(self):
        spec = MlpSpec(layer_sizes=[3, 4, 4, 2], activations=["identity", "identity"], seed=0)
        np.testing.assert_array_equal(forward(spec, np.zeros(spec.num_params), [1.0, -2.0, 3.0]), [0.0, 0.0])

    def test_two_layer_linear_net(self):
        w1, w2, w3, w4 = 0.5, -1.5, 2.0, 0.25
        x = np.array([1.2, -0.7])
        z = w1 * x[0] + w2 * x[1]
        np.testing.assert_allclose(forward(two_layer_linear(), [w1, w2, w3, w4], x), [w3 * z, w4 * z])

    def test_wrong_input_dimension(self):
        spec = MlpSpec(layer_sizes=[2, 2], seed=0)
        with pytest.raises(ContractViolation):
            forward(spec, np.zeros(spec.num_params), [1.0, 2.0, 3.0])

    def test_non_finite_weights(self):
        spec = MlpSpec(layer_sizes=[2, 2], seed=0)
        w = np.zeros(spec.num_params)
        w[1] = np.nan
        with pytest.raises(NonFiniteError):
            forward(spec, w, [1.0, 2.0])


class TestJacobian:
    def test_single_linear_layer(self):
        spec = MlpSpec(layer_sizes=[3, 2], seed=0)
        x = np.array([0.5, -1.0, 2.0])
        jac = jacobian(spec, np.random.default_rng(0).standard_normal(spec.num_params), x)
        expected = np.zeros((2, 8))
        for a in range(2):
            # W entry (b, a) sits at column a * 3 + b
            expected[a, a * 3: a * 3 + 3] = x
            expected[a, 6 + a] = 1.0
        np.testing.assert_array_equal(jac, expected)

    def test_two_point_q_rows(self):
        w1, w2, w3, w4 = 0.3, 0.9, -1.1, 0.6
        for x1, x2 in [(1.0, 0.0), (0.4, 2.0)]:
            z = w1 * x1 + w2 * x2
            jac = jacobian(two_layer_linear(), [w1, w2, w3, w4], [x1, x2])
            np.testing.assert_allclose(jac, [[w3 * x1, w3 * x2, z, 0.0], [w4 * x1, w4 * x2, 0.0, z]])

    def test_sigmoid_net_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        spec = MlpSpec(layer_sizes=[3, 5, 2], activations=["sigmoid"], seed=0)
        w = rng.standard_normal(spec.num_params)
        x = rng.standard_normal(3)
        assert np.max(np.abs(jacobian(spec, w, x) - fd_jacobian(spec, w, x))) < 1e-5

    def test_randomized_networks_match_finite_differences(self):
        """20 random specs, every activation, up to [10, 16, 8, 4]."""
        rng = np.random.default_rng(2024)
        for trial in range(20):
            depth = int(rng.integers(1, 3))
            sizes = [int(rng.integers(1, 11))] + [int(rng.integers(1, 17)), int(rng.integers(1, 9))][:depth]
            sizes.append(int(rng.integers(1, 5)))
            acts = [ALL_ACTIVATIONS[(trial + k) % len(ALL_ACTIVATIONS)] for k in range(len(sizes) - 2)]
            spec = MlpSpec(layer_sizes=sizes, activations=acts, seed=trial)
            w = rng.standard_normal(spec.num_params) * 0.8
            x = rng.standard_normal(sizes[0])
            analytic = jacobian(spec, w, x)
            numeric = fd_jacobian(spec, w, x)
            scale = max(1.0, np.max(np.abs(analytic)))
            assert np.max(np.abs(analytic - numeric)) / scale < 1e-5, (sizes, acts)

    def test_stack_preserves_sample_order(self):
        rng = np.random.default_rng(1)
        spec = MlpSpec(layer_sizes=[2, 4, 3], activations=["tanh"], seed=0)
        w = rng.standard_normal(spec.num_params)
        inputs = rng.standard_normal((6, 2))
        stack = jacobian_stack(spec, w, inputs)
        assert stack.per_sample.shape == (6, 3, spec.num_params)
        for i, x in enumerate(inputs):
            np.testing.assert_array_equal(stack.per_sample[i], jacobian(spec, w, x))


class TestTaylorResidual:
    def test_zero_on_affine_network(self):
        rng = np.random.default_rng(0)
        spec = MlpSpec(layer_sizes=[3, 2], seed=0)
        w, v = rng.standard_normal((2, spec.num_params))
        residual = taylor_residual(spec, w, v, 0.7, rng.standard_normal(3))
        np.testing.assert_allclose(residual, 0.0, atol=1e-12)

    def test_zero_step(self):
        rng = np.random.default_rng(1)
        spec = MlpSpec(layer_sizes=[3, 4, 2], activations=["sigmoid"], seed=0)
        w, v = rng.standard_normal((2, spec.num_params))
        np.testing.assert_array_equal(taylor_residual(spec, w, v, 0.0, rng.standard_normal(3)), 0.0)

    def test_residual_scales_quadratically(self):
        rng = np.random.default_rng(2)
        spec = MlpSpec(layer_sizes=[3, 6, 3], activations=["tanh"], seed=0)
        w, v = rng.standard_normal((2, spec.num_params))
        x = rng.standard_normal(3)
        small = np.linalg.norm(taylor_residual(spec, w, v, 1e-3, x))
        large = np.linalg.norm(taylor_residual(spec, w, v, 2e-3, x))
        assert 3.5 <= large / small <= 4.5

    def test_bounded_by_estimated_hessian(self):
        """|eps_j| <= 1/2 eta^2 ||v||^2 G_est on 100 random sigmoid-net triples."""
        rng = np.random.default_rng(3)
        spec = MlpSpec(layer_sizes=[3, 4, 2], activations=["sigmoid"], seed=0)
        for _ in range(100):
            w = rng.standard_normal(spec.num_params)
            v = rng.standard_normal(spec.num_params)
            eta = rng.uniform(0.01, 0.1)
            x = rng.standard_normal(3)
            probes = [w - s * eta * v for s in np.linspace(0.0, 1.0, 9)]
            dataset = Dataset.regression(x[None, :], np.zeros((1, 2)))
            g_est = estimate_constants(spec, probes, dataset, 0.1, max_probes=9).hessian_bound_G
            residual = taylor_residual(spec, w, v, eta, x)
            assert np.all(np.abs(residual) <= 0.5 * eta**2 * (v @ v) * g_est + 1e-9)


class TestEstimates:
    def test_affine_network_has_zero_hessian_bound(self):
        spec = MlpSpec(layer_sizes=[3, 2], seed=0)
        rng = np.random.default_rng(0)
        dataset = Dataset.regression(rng.standard_normal((4, 3)), rng.standard_normal((4, 2)))
        estimates = estimate_constants(spec, [rng.standard_normal(spec.num_params)], dataset, 0.1)
        assert estimates.hessian_bound_G == 0.0
        assert estimates.hessian_estimated

    def test_single_sigmoid_neuron(self):
        x = np.array([1.0, 0.0])

        def grad_fn(w):
            s = expit(w @ x)
            return s * (1.0 - s) * x

        assert hessian_spectral_norm(grad_fn, np.zeros(2)) < 1e-9
        w1 = 1.3
        s = expit(w1)
        second = s * (1.0 - s) * (1.0 - 2.0 * s)
        assert hessian_spectral_norm(grad_fn, np.array([w1, 0.4])) == pytest.approx(abs(second), rel=1e-5)

    @pytest.mark.parametrize("seed", range(10))
    def test_default_estimate_matches_dense_eigenvalues(self, seed):
        rng = np.random.default_rng(seed)
        spec = MlpSpec(layer_sizes=[3, 6, 2], activations=["tanh"], seed=seed)
        assert spec.num_params <= 50
        w = rng.standard_normal(spec.num_params)
        x = rng.standard_normal(3)
        step = 1e-5
        for j in range(2):
            columns = []
            for k in range(spec.num_params):
                e = np.zeros_like(w)
                e[k] = step
                columns.append((jacobian(spec, w + e, x)[j] - jacobian(spec, w - e, x)[j]) / (2 * step))
            dense = np.stack(columns, axis=1)
            oracle = np.max(np.abs(np.linalg.eigvalsh(0.5 * (dense + dense.T))))
            estimate = hessian_spectral_norm(lambda u: jacobian(spec, u, x)[j], w)
            assert estimate == pytest.approx(oracle, rel=1e-3)

    def test_jacobian_bound_of_linear_layer(self):
        spec = MlpSpec(layer_sizes=[3, 2], seed=0, use_bias=False)
        inputs = np.array([[1.0, 2.0, 2.0], [0.0, 1.0, 0.0]])
        stack = jacobian_stack(spec, np.ones(spec.num_params), inputs)
        # ||H_i|| = ||x_i|| for a bias-free linear layer
        assert jacobian_bound(stack, 0.25) == pytest.approx(0.5 * 3.0)

    def test_estimates_reject_negative_values(self):
        with pytest.raises(ContractViolation):
            AssumptionEstimates(hessian_bound_G=-1.0)

    def test_merge_takes_maxima(self):
        merged = AssumptionEstimates(1.0, 5.0, 0.0).merge(AssumptionEstimates(2.0, 3.0, 4.0, True))
        assert (merged.hessian_bound_G, merged.jacobian_bound_H, merged.direction_bound_V) == (2.0, 5.0, 4.0)
        assert merged.hessian_estimated
