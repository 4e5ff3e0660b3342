"""
Integration tests for the certification workflows.

These chain the solvers, null-direction forging and loss sweeps the way
the experiments do, without going through the CLI.
"""

import numpy as np
import pytest

from deep_ritz import (
    affine_loss_1d,
    affine_minimizer_1d,
    affine_network,
    certify_dr_nonuniqueness,
    dr_loss,
)
from experiments import EXPERIMENTS, load_config, run_experiment
from measurement import lp_distance
from net_core import constant_network
from null_forge import ForgeFamily
from regularization import (
    certify_fd_nonuniqueness,
    fd_reference_solve,
    reg_fd_loss,
    stencil_agreement,
    zero_loss_interpolant,
)
from wpinn import (
    BoundaryTrialMap,
    TestSpace,
    WeakForm,
    kernel_from_random_trials,
    solution_family,
)

RELU = ForgeFamily.parse("relu")


class TestDeepRitzWorkflow:
    """Affine minimizer through null-direction certificate"""

    def test_minimizer_is_degenerate(self, dr_example, zero_source):
        """Test that the affine minimizer sits on a flat line of minimizers far from the solution."""
        slope, intercept = affine_minimizer_1d(1.0, 0.0, 1.0, 1.0)
        base = affine_network(slope, intercept)
        assert dr_loss(base, zero_source, dr_example) == pytest.approx(
            affine_loss_1d(slope, intercept, 1.0, 0.0, 1.0, 1.0), abs=1e-12
        )

        exact = affine_network(1.0, 0.0)
        cert = certify_dr_nonuniqueness(
            dr_example, zero_source, base, RELU, depth=2, z0=[0.65], reference=exact, resolution=1024
        )
        assert cert.passed, cert.failures()
        assert max(abs(v - cert.base_loss) for v in cert.loss_values) <= 1e-12
        assert cert.reference_distance == pytest.approx(
            lp_distance(base, exact, 2.0, dr_example.domain, 1024)
        )
        assert cert.distance_at(100.0) > cert.distance_at(10.0) > cert.reference_distance


class TestFiniteDifferenceWorkflow:
    """FD reference solve through stencil agreement and FD certificate"""

    def test_fd_minimizer_has_many_network_representatives(self, fd_instance):
        """Test that networks matching the FD minimizer on the grid form a flat family."""
        grid, fid, reg = fd_instance
        solution = fd_reference_solve(reg, fid, grid)

        report = stencil_agreement(solution, grid, reg, fid, RELU, 2, z0_list=[0.5])
        assert report.passed, report.failures()
        assert report.fd_loss == pytest.approx(solution.objective, abs=1e-12)

        base = zero_loss_interpolant(grid, solution.field, 0, RELU, 2)
        assert reg_fd_loss(base, reg, fid, grid) == pytest.approx(solution.objective, abs=1e-12)
        cert = certify_fd_nonuniqueness(grid, reg, fid, RELU, 2, [1.5], base=base)
        assert cert.passed, cert.failures()
        assert cert.base_loss == pytest.approx(2.0 / 3.0, abs=1e-6)


class TestWeakPinnWorkflow:
    """Kernel extraction through the affine solution family"""

    def test_kernel_generates_solution_family(self):
        """Test that a random-trial kernel shifts an exact weak solution without changing residuals."""
        space = TestSpace.uniform(1.0, 4)
        kernel = kernel_from_random_trials(space, WeakForm(), seed=5)
        assert kernel.passed

        u_star = BoundaryTrialMap(constant_network(1, 1.0, "tanh"), 1.0, 0.0, 0.0)
        cert = solution_family(u_star, kernel.phi, [1.0, 10.0, 100.0], space, WeakForm.constant(2.0))
        assert cert.passed, cert.failures()
        distances = [row.distance for row in cert.rows]
        assert distances == sorted(distances)
        assert np.isclose(distances[-1], 100.0 * cert.null_norm, rtol=1e-9)


class TestBundledExperiments:
    """Bundled configs through the experiment runner"""

    @pytest.mark.parametrize("name", ["dr-affine", "dr-zero-loss-family", "dr-noncoercive"])
    def test_fast_experiments_pass(self, name):
        """Test the closed-form Deep Ritz experiments."""
        result = run_experiment(name, load_config(name))
        assert result.passed, result.failing
        assert result.sweep_rows

    @pytest.mark.slow
    @pytest.mark.parametrize("name", sorted(EXPERIMENTS))
    def test_every_experiment_passes(self, name):
        """Test each registered experiment with its bundled config."""
        result = run_experiment(name, load_config(name))
        assert result.passed, result.failing
        assert result.checks
