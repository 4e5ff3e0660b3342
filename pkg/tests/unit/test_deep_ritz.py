"""
Unit tests for the Deep Ritz loss and its counterexamples.
"""

import math

import numpy as np
import pytest

from deep_ritz import (
    AdmissibilityError,
    DeepRitzConfig,
    LocalIntegrand,
    OptimizerBudget,
    TanhTrial,
    affine_loss_1d,
    affine_loss_gradient_1d,
    affine_minimizer_1d,
    affine_network,
    certify_dr_nonuniqueness,
    collocation_agreement_check,
    constant_shift_check,
    dr_loss,
    hard_constraint_residual,
    non_coercive_sequence,
    one_neuron_zero_loss,
    tanh_trial_loss,
)
from net_core import forward
from null_forge import ForgeFamily


class TestLocalIntegrand:
    """Test cases for integrand construction and evaluation."""

    def test_unknown_kind(self):
        """Test rejection of unsupported integrands."""
        with pytest.raises(ValueError, match="Unknown integrand"):
            LocalIntegrand("p_laplace")

    def test_strict_convexity_needs_mu(self):
        """Test that mu must be positive."""
        with pytest.raises(ValueError):
            LocalIntegrand.strictly_convex_poisson([1.0], 0.0)
        assert LocalIntegrand.strictly_convex_poisson([1.0], 0.5).strictly_convex
        assert not LocalIntegrand.poisson([1.0]).strictly_convex

    def test_evaluate(self):
        """Test L(xi, s, z) for each kind."""
        grads = np.array([[2.0], [0.0]])
        values = np.array([1.0, 3.0])
        zeta = np.array([0.5, -1.0])
        np.testing.assert_allclose(
            LocalIntegrand.poisson(zeta).evaluate(grads, values, zeta), [1.5, 3.0]
        )
        np.testing.assert_allclose(
            LocalIntegrand.strictly_convex_poisson(zeta, 2.0).evaluate(grads, values, zeta),
            [2.5, 12.0],
        )
        np.testing.assert_allclose(
            LocalIntegrand.dirichlet_energy().evaluate(grads, values, zeta), [2.0, 0.0]
        )

    def test_source_length(self):
        """Test that the source must have one sample per interior point."""
        with pytest.raises(ValueError):
            LocalIntegrand.poisson([1.0, 2.0]).source(3)
        np.testing.assert_array_equal(LocalIntegrand.dirichlet_energy().source(2), [0.0, 0.0])


class TestDeepRitzConfig:
    """Test cases for collocation configuration."""

    def test_example_defaults(self, dr_example):
        """Test the 1D example layout."""
        assert dr_example.interior == ((0.2,), (0.5,), (0.8,))
        assert dr_example.boundary == ((0.0,), (1.0,))
        assert dr_example.interior_weights == pytest.approx((1 / 3, 1 / 3, 1 / 3))
        assert dr_example.boundary_weights == (1.0, 1.0)
        assert dr_example.measurement_spec().size == 8

    def test_hard_enforcement_has_no_penalty(self):
        """Test that hard enforcement forbids a boundary penalty."""
        with pytest.raises(ValueError, match="alpha_b = 0"):
            DeepRitzConfig(((0.5,),), ((0.0,),), alpha_b=1.0, enforcement="hard_at_points")
        assert DeepRitzConfig.example_1d(enforcement="hard_at_points").alpha_b == 0.0

    def test_invalid_weights(self):
        """Test positivity and length of quadrature weights."""
        with pytest.raises(ValueError, match="weights"):
            DeepRitzConfig(((0.2,), (0.5,)), interior_weights=(1.0, -1.0))
        with pytest.raises(ValueError, match="weights"):
            DeepRitzConfig(((0.2,), (0.5,)), interior_weights=(1.0,))

    def test_dict_round_trip(self, dr_example):
        """Test config serialization."""
        again = DeepRitzConfig.from_dict(dr_example.to_dict())
        assert again.to_dict() == dr_example.to_dict()


class TestAffineMinimizer:
    """Test cases for the closed-form affine minimizer."""

    def test_reference_values(self):
        """Test T = 1, u0 = 0, uT = 1 at several penalties."""
        assert affine_minimizer_1d(1.0, 0.0, 1.0, 1.0) == pytest.approx((0.5, 0.25))
        assert affine_minimizer_1d(1.0, 0.0, 1.0, 0.0) == pytest.approx((0.0, 0.5))
        assert affine_minimizer_1d(1.0, 0.0, 1.0, math.inf) == pytest.approx((1.0, 0.0))

    def test_stationarity(self, rng):
        """Test that the gradient vanishes at random admissible parameters."""
        for _ in range(20):
            T = rng.uniform(0.5, 2.0)
            u0, uT = rng.uniform(-1.0, 1.0, 2)
            alpha = rng.uniform(0.1, 10.0)
            slope, intercept = affine_minimizer_1d(T, u0, uT, alpha)
            grad = affine_loss_gradient_1d(slope, intercept, T, u0, uT, alpha)
            assert np.max(np.abs(grad)) <= 1e-10

    def test_network_loss_matches_closed_form(self, dr_example, zero_source):
        """Test the measurement loss of the affine network."""
        net = affine_network(0.5, 0.25)
        assert dr_loss(net, zero_source, dr_example) == pytest.approx(0.25, abs=1e-14)
        assert affine_loss_1d(0.5, 0.25, 1.0, 0.0, 1.0, 1.0) == pytest.approx(0.25)

    def test_invalid_arguments(self):
        """Test parameter validation."""
        with pytest.raises(ValueError):
            affine_minimizer_1d(0.0, 0.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            affine_minimizer_1d(1.0, 0.0, 1.0, -1.0)

    def test_hard_constraint_residual(self, dr_example):
        """Test boundary residuals of the exact solution and of the minimizer."""
        assert hard_constraint_residual(affine_network(1.0, 0.0), dr_example) == 0.0
        assert hard_constraint_residual(affine_network(0.5, 0.25), dr_example) == pytest.approx(0.25)


class TestZeroLossFamily:
    """Test cases for the one-neuron zero-loss networks."""

    def test_zero_loss_and_boundary_values(self, dr_example, zero_source):
        """Test that admissible shifts give zero loss and match the boundary data."""
        for b in (-0.95, -0.9, -0.85):
            net = one_neuron_zero_loss(b, 1.0, 0.0, 1.0, (0.2, 0.5, 0.8))
            assert dr_loss(net, zero_source, dr_example) == pytest.approx(0.0, abs=1e-14)
            assert forward(net, [1.0]) == pytest.approx(1.0)
            assert forward(net, [0.0]) == 0.0

    def test_distinct_minimizers(self):
        """Test that different shifts give different functions."""
        a = one_neuron_zero_loss(-0.95, 1.0, 0.0, 1.0, (0.2, 0.5, 0.8))
        b = one_neuron_zero_loss(-0.85, 1.0, 0.0, 1.0, (0.2, 0.5, 0.8))
        assert abs(forward(a, [0.9]) - forward(b, [0.9])) > 0.1

    def test_admissibility(self):
        """Test the admissible range of the shift."""
        with pytest.raises(AdmissibilityError):
            one_neuron_zero_loss(-0.5, 1.0, 0.0, 1.0, (0.2, 0.5, 0.8))
        with pytest.raises(AdmissibilityError):
            one_neuron_zero_loss(-1.0, 1.0, 0.0, 1.0, (0.2, 0.5, 0.8))


class TestNonCoercive:
    """Test cases for the non-coercive plateau sequence."""

    @pytest.mark.parametrize("k", [1.0, 10.0, 1000.0])
    def test_loss_decreases_linearly(self, dr_example, k):
        """Test loss -k w |zeta| for a unit source."""
        step = non_coercive_sequence(k, dr_example, LocalIntegrand.poisson([1.0, 1.0, 1.0]))
        assert step.decay_constant == pytest.approx(1.0 / 3.0)
        assert step.loss == pytest.approx(-k / 3.0, rel=1e-10)
        assert step.node == (0.2,)

    def test_picks_strongest_source(self, dr_example):
        """Test that the node with the largest weighted source is used."""
        step = non_coercive_sequence(2.0, dr_example, LocalIntegrand.poisson([0.5, -3.0, 1.0]))
        assert step.node == (0.5,)
        assert forward(step.network, [0.5]) == pytest.approx(-2.0)
        assert step.loss == pytest.approx(-2.0, rel=1e-10)

    def test_zero_source_rejected(self, dr_example, zero_source):
        """Test that a vanishing source has no descent direction."""
        with pytest.raises(AdmissibilityError):
            non_coercive_sequence(1.0, dr_example, zero_source)


class TestNonUniqueness:
    """Test cases for Deep Ritz non-uniqueness certificates."""

    def test_relu_penalty_certificate(self, dr_example, zero_source):
        """Test a flat loss along a forged ReLU direction."""
        cert = certify_dr_nonuniqueness(
            dr_example,
            zero_source,
            affine_network(0.5, 0.25),
            ForgeFamily.parse("relu"),
            depth=2,
            z0=[0.35],
            reference=affine_network(1.0, 0.0),
            resolution=1024,
        )
        assert cert.passed
        assert cert.base_loss == pytest.approx(0.25)
        assert cert.null_residual == 0.0
        assert cert.escape_bound_holds
        assert cert.distance_at(100.0) > 10.0 * cert.reference_distance
        assert cert.distance_at(100.0) >= 50.0 * cert.distance_at(1.0)

    def test_relu_hard_constraint_certificate(self, zero_source):
        """Test that forged directions keep hard boundary constraints exact."""
        config = DeepRitzConfig.example_1d(enforcement="hard_at_points")
        cert = certify_dr_nonuniqueness(
            config,
            zero_source,
            affine_network(1.0, 0.0),
            ForgeFamily.parse("relu"),
            depth=3,
            z0=[0.65],
        )
        assert cert.passed
        assert cert.constraint_residuals is not None
        assert max(cert.constraint_residuals) <= 1e-12


class TestTanhTrial:
    """Test cases for the gradient-descent trial networks."""

    def test_loss_matches_measurement_loss(self, dr_example, rng):
        """Test the optimizer loss against the measurement-based loss."""
        integrand = LocalIntegrand.strictly_convex_poisson([1.0, -1.0, 0.5], 1.0)
        trial = TanhTrial.random(1, 4, rng)
        loss, _ = tanh_trial_loss(trial, integrand, dr_example)
        assert loss == pytest.approx(
            dr_loss(trial.to_network(), integrand, dr_example), rel=1e-12, abs=1e-13
        )

    def test_gradient_against_finite_differences(self, dr_example, rng):
        """Test parameter gradients entrywise."""
        integrand = LocalIntegrand.strictly_convex_poisson([1.0, -1.0, 0.5], 1.0)
        trial = TanhTrial.random(1, 3, rng)
        _, grad = tanh_trial_loss(trial, integrand, dr_example)
        h = 1e-6

        def loss_with(W=None, a=None, c=None, c0=None):
            moved = TanhTrial(
                trial.W if W is None else W,
                trial.a if a is None else a,
                trial.c if c is None else c,
                trial.c0 if c0 is None else c0,
            )
            return tanh_trial_loss(moved, integrand, dr_example)[0]

        def bump(array, index, delta):
            out = array.copy()
            out[index] += delta
            return out

        checks = [
            (grad.W[2, 0], lambda s: loss_with(W=bump(trial.W, (2, 0), s))),
            (grad.a[1], lambda s: loss_with(a=bump(trial.a, 1, s))),
            (grad.c[0], lambda s: loss_with(c=bump(trial.c, 0, s))),
            (grad.c0, lambda s: loss_with(c0=trial.c0 + s)),
        ]
        for analytic, f in checks:
            numeric = (f(h) - f(-h)) / (2 * h)
            assert analytic == pytest.approx(numeric, rel=1e-5, abs=1e-7)


class TestCollocationAgreement:
    """Test cases for the empirical agreement check."""

    def test_report_shape(self, dr_example):
        """Test report fields for a short strictly convex run."""
        integrand = LocalIntegrand.strictly_convex_poisson([1.0, 1.0, 1.0], 1.0)
        budget = OptimizerBudget(step=0.05, max_iterations=50, window=10, min_decrease=0.0)
        report = collocation_agreement_check(integrand, dr_example, 3, budget, width=4, seed=5)
        assert report.applicable
        assert report.trials == 3
        assert len(report.losses) == 3
        assert report.best_loss == min(report.losses)
        assert report.qualifying
        assert report.to_dict()["tolerance"] == 1e-3

    def test_poisson_not_applicable(self, dr_example, zero_source):
        """Test the warning for integrands that are not strictly convex."""
        budget = OptimizerBudget(max_iterations=5)
        report = collocation_agreement_check(zero_source, dr_example, 1, budget, width=2)
        assert not report.applicable
        assert any("not strictly convex" in w for w in report.warnings)

    def test_needs_a_trial(self, dr_example, zero_source):
        """Test the trial count."""
        with pytest.raises(ValueError):
            collocation_agreement_check(zero_source, dr_example, 0)


class TestConstantShift:
    """Test cases for the Dirichlet-energy shift control."""

    def test_shift_invariance(self, tanh_net_1d):
        """Test that constant shifts leave the energy fixed and move the values."""
        config = DeepRitzConfig(((0.2,), (0.5,), (0.8,)))
        report = constant_shift_check(LocalIntegrand.dirichlet_energy(), config, tanh_net_1d)
        assert report.invariant
        assert report.value_changes == pytest.approx([0.0, 10.0, 1.0, 1.0, 10.0])
