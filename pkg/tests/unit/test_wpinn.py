"""
Unit tests for the weak PINN test space, kernel extraction and solution families.
"""

import numpy as np
import pytest

from deep_ritz import OptimizerBudget
from net_core import ArchitectureMismatchError, MlpNetwork, constant_network, random_network
from wpinn import (
    BoundaryTrialMap,
    LinearDependenceError,
    TestSpace,
    TrialSum,
    WeakForm,
    assemble_T,
    exact_bilinear_column,
    homogeneous_kernel,
    kernel_from_random_trials,
    quadrature_null_direction,
    quadrature_sensitivity,
    solution_family,
    weak_residual,
    wpinn_fit,
)


def _identity_net(activation="tanh"):
    """u(z) = z as a depth-1 network."""
    return MlpNetwork((np.array([[1.0]]),), (np.array([0.0]),), activation)


class TestTestSpace:
    """Test cases for P1 hats and the composite Gauss rule."""

    def test_uniform_space(self):
        """Test dimension, masses and quadrature weights of the uniform mesh."""
        space = TestSpace.uniform(1.0, 4)
        assert space.dim == 4
        assert space.T == 1.0
        assert space.hat_mass(0) == pytest.approx(0.2)
        _, weights = space.quadrature()
        assert weights.sum() == pytest.approx(1.0, abs=1e-14)

    def test_hat_values_and_slopes(self):
        """Test the first hat on [0, 0.4]."""
        space = TestSpace.uniform(1.0, 4)
        np.testing.assert_allclose(space.hat(0, [0.1, 0.2, 0.3, 0.5]), [0.5, 1.0, 0.5, 0.0])
        np.testing.assert_allclose(space.hat_slope(0, [0.1, 0.3, 0.2]), [5.0, -5.0, 0.0])

    def test_value_matrix_integrates_hats(self):
        """Test that the rule integrates each hat exactly."""
        space = TestSpace.uniform(1.0, 4, 2)
        np.testing.assert_allclose(space.value_matrix().sum(axis=1), [0.2] * 4, atol=1e-14)

    def test_invalid_mesh(self):
        """Test mesh validation."""
        with pytest.raises(ValueError):
            TestSpace((0.0, 0.5, 0.5, 1.0))
        with pytest.raises(ValueError):
            TestSpace.uniform(1.0, 2, 0)

    def test_hat_index_range(self):
        """Test hat indexing."""
        with pytest.raises(IndexError):
            TestSpace.uniform(1.0, 2).hat(2, 0.5)

    def test_from_dict(self):
        """Test construction from config dictionaries."""
        space = TestSpace.from_dict({"T": 2.0, "n": 3, "quadrature_order": 5})
        assert space.dim == 3
        assert space.quadrature_order == 5
        assert TestSpace.from_dict(space.to_dict()) == space


class TestWeakResidual:
    """Test cases for the Poisson weak form."""

    def test_identity_is_weakly_harmonic(self):
        """Test a(z, hat_i) = 0."""
        space = TestSpace.uniform(1.0, 4)
        np.testing.assert_allclose(WeakForm().bilinear_column(_identity_net(), space), 0.0, atol=1e-14)

    def test_zero_trial_against_unit_source(self):
        """Test residual -F(hat_i) = -hat mass for u = 0 and f = 1."""
        space = TestSpace.uniform(1.0, 4)
        residual = weak_residual(constant_network(1, 0.0, "tanh"), space, WeakForm.constant(1.0))
        np.testing.assert_allclose(residual, [-0.2] * 4, atol=1e-14)

    def test_zero_source_has_zero_load(self):
        """Test the load vector of f = 0."""
        form = WeakForm.constant(0.0)
        assert form.source is None
        np.testing.assert_array_equal(form.load_vector(TestSpace.uniform(1.0, 3)), np.zeros(3))

    def test_exact_column_matches_quadrature(self, tanh_net_1d):
        """Test the node-difference formula against Gauss quadrature."""
        space = TestSpace.uniform(1.0, 4)
        np.testing.assert_allclose(
            WeakForm().bilinear_column(tanh_net_1d, space),
            exact_bilinear_column(tanh_net_1d, space),
            atol=1e-9,
        )

    def test_boundary_map_solves_constant_source(self):
        """Test that c z (1 - z) / 2 is a weak solution of -u'' = c."""
        space = TestSpace.uniform(1.0, 4)
        trial = BoundaryTrialMap(constant_network(1, 1.5, "tanh"), 1.0, 0.0, 0.0)
        residual = weak_residual(trial, space, WeakForm.constant(3.0))
        assert np.max(np.abs(residual)) <= 1e-12
        values, _ = trial.values_and_slopes([0.0, 0.5, 1.0])
        np.testing.assert_allclose(values, [0.0, 0.375, 0.0], atol=1e-15)

    def test_trial_sum(self):
        """Test function-level sums of trials."""
        total = TrialSum([(2.0, _identity_net()), (-1.0, constant_network(1, 1.0, "tanh"))])
        np.testing.assert_allclose(total.values([0.0, 0.5]), [-1.0, 0.0])


class TestKernel:
    """Test cases for kernel extraction."""

    def test_homogeneous_kernel(self):
        """Test T c = 0 for n + 1 random tanh trials."""
        space = TestSpace.uniform(1.0, 4)
        rng = np.random.default_rng(3)
        nets = [random_network([1, 6, 1], "tanh", rng) for _ in range(5)]
        result = homogeneous_kernel(nets, space, WeakForm())
        assert result.t_matrix.shape == (4, 5)
        assert np.linalg.norm(result.coeffs) == pytest.approx(1.0)
        assert result.passed
        assert assemble_T(nets, space, WeakForm()).shape == (4, 5)

    def test_too_few_trials(self):
        """Test that n + 1 trials are required."""
        space = TestSpace.uniform(1.0, 4)
        rng = np.random.default_rng(3)
        with pytest.raises(ValueError, match="at least 5"):
            homogeneous_kernel([random_network([1, 3, 1], "tanh", rng)] * 2, space, WeakForm())

    def test_dependent_trials(self):
        """Test rejection of repeated trial networks."""
        space = TestSpace.uniform(1.0, 1)
        net = random_network([1, 3, 1], "tanh", np.random.default_rng(4))
        with pytest.raises(LinearDependenceError):
            homogeneous_kernel([net, net], space, WeakForm())

    def test_mixed_architectures(self):
        """Test that trials share depth and activation."""
        space = TestSpace.uniform(1.0, 1)
        rng = np.random.default_rng(5)
        nets = [random_network([1, 3, 1], "tanh", rng), random_network([1, 3, 1], "sigmoid", rng)]
        with pytest.raises(ArchitectureMismatchError):
            homogeneous_kernel(nets, space, WeakForm())

    def test_random_trials(self):
        """Test the seeded sampling loop."""
        result = kernel_from_random_trials(TestSpace.uniform(1.0, 3), WeakForm(), seed=2)
        assert result.passed
        assert result.l2_norm >= 1e-4
        assert result.attempts >= 1


class TestSolutionFamily:
    """Test cases for inhomogeneous solution families."""

    def test_family_residuals_and_distances(self):
        """Test that adding kernel multiples keeps the weak residual small."""
        space = TestSpace.uniform(1.0, 3)
        form = WeakForm.constant(2.0)
        u_star = BoundaryTrialMap(constant_network(1, 1.0, "tanh"), 1.0, 0.0, 0.0)
        kernel = kernel_from_random_trials(space, WeakForm(), seed=1)
        cert = solution_family(u_star, kernel.phi, [-10.0, 1.0, 100.0], space, form)
        assert cert.passed
        assert cert.star_residual <= 1e-12
        distances = {row.lam: row.distance for row in cert.rows}
        assert distances[100.0] == pytest.approx(100.0 * cert.null_norm, rel=1e-9)
        assert distances[-10.0] == pytest.approx(10.0 * cert.null_norm, rel=1e-9)
        assert len(cert.sweep_rows()) == 3

    def test_non_solution_fails(self):
        """Test that a wrong base solution is reported."""
        space = TestSpace.uniform(1.0, 3)
        cert = solution_family(
            constant_network(1, 0.0, "tanh"),
            _identity_net(),
            [1.0],
            space,
            WeakForm.constant(1.0),
        )
        assert "base_residual" in cert.failures()


class TestWeakFit:
    """Test cases for the boundary-built-in weak fit."""

    def test_affine_lift_fits_zero_source(self):
        """Test that the initial lift already solves -u'' = 0."""
        space = TestSpace.uniform(1.0, 4)
        fit = wpinn_fit(space, WeakForm(), u0=0.0, uT=1.0, budget=OptimizerBudget(step=0.05, max_iterations=50))
        assert fit.converged
        assert fit.iterations == 1
        assert fit.residual <= 1e-12
        assert fit.trial.values([0.0, 1.0]) == pytest.approx([0.0, 1.0])

    @pytest.mark.parametrize("seed", [0, 1, 2, 3])
    def test_unit_source_reaches_target(self, seed):
        """Test f = 1 with four hats on [0, 1] against the 1e-6 residual target."""
        space = TestSpace.uniform(1.0, 4)
        fit = wpinn_fit(space, WeakForm.constant(1.0), seed=seed)
        assert fit.converged
        assert fit.residual <= 1e-6
        assert not fit.warnings
        assert fit.trial.values([0.0, 1.0]) == pytest.approx([0.0, 1.0])

    def test_zero_budget_returns_lift(self):
        """Test that a zero budget returns the initial affine lift with its residual."""
        space = TestSpace.uniform(1.0, 4)
        fit = wpinn_fit(space, WeakForm.constant(1.0), budget=OptimizerBudget(step=0.05, max_iterations=0))
        assert fit.iterations == 0
        z = np.linspace(0.0, 1.0, 5)
        np.testing.assert_allclose(fit.trial.values(z), z, atol=1e-15)
        assert fit.residual == pytest.approx(0.25)
        assert not fit.converged

    def test_short_budget_warns(self):
        """Test the warning when the residual target is not met."""
        space = TestSpace.uniform(1.0, 16)
        spike = WeakForm(lambda z: 1.0 / (z + 0.01) ** 2, "spike")
        fit = wpinn_fit(space, spike, width=1, budget=OptimizerBudget(step=0.01, max_iterations=1))
        assert not fit.converged
        assert fit.warnings


class TestQuadrature:
    """Test cases for quadrature sensitivity."""

    def test_low_orders_are_flagged(self):
        """Test the certified floor and exactness on affine trials."""
        space = TestSpace.uniform(1.0, 4)
        report = quadrature_sensitivity(_identity_net(), space, WeakForm(), [8, 1, 2])
        assert report.flagged_orders == [1, 2]
        assert [row.order for row in report.rows] == [1, 2, 8]
        assert max(row.exact_deviation for row in report.rows) <= 1e-14
        assert len(report.warnings) == 2

    def test_needs_an_order(self):
        """Test the empty order list."""
        with pytest.raises(ValueError):
            quadrature_sensitivity(_identity_net(), TestSpace.uniform(1.0, 2), WeakForm(), [])

    def test_quadrature_only_null(self):
        """Test a plateau function invisible to the rule but not to the exact form."""
        space = TestSpace.uniform(1.0, 4, 2)
        null = quadrature_null_direction(space)
        assert null.witness[0] == pytest.approx(0.4)
        assert null.quadrature_residual == 0.0
        assert null.exact_residual > 0.0
        assert null.quadrature_only
        assert set(null.finer_residuals) == {16, 32}

    def test_witness_on_abscissa(self):
        """Test rejection of a witness the rule samples."""
        space = TestSpace.uniform(1.0, 2, 2)
        points, _ = space.quadrature()
        with pytest.raises(ValueError, match="abscissa"):
            quadrature_null_direction(space, witness=float(points[0]))
