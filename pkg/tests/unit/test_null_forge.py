"""
Unit tests for plateau and Hermite interpolants and null-direction forging.
"""

import numpy as np
import pytest

from measurement import Box, WitnessError, build_measurement_spec, value_spec, verify_null
from net_core import DepthExtensionError, forward, jet_forward
from null_forge import (
    ForgeFamily,
    NodeSpacingError,
    SeparationError,
    UnsupportedDimensionError,
    cross_evaluation_matrix,
    default_plateau_radius,
    fit_smooth_hermite,
    null_direction,
    null_family,
    projections_separated,
    relu_hermite_interpolant,
    separating_direction,
)


class TestForgeFamily:
    """Test cases for family parsing and validation."""

    @pytest.mark.parametrize(
        "text,kind,activation",
        [
            ("relu", "relu", "relu"),
            ("smooth:tanh", "smooth", "tanh"),
            ("smooth", "smooth", "tanh"),
            ("Sigmoid", "smooth", "sigmoid"),
        ],
    )
    def test_parse(self, text, kind, activation):
        """Test the accepted spellings."""
        family = ForgeFamily.parse(text)
        assert family.kind == kind
        assert family.activation == activation

    def test_label(self):
        """Test display labels."""
        assert ForgeFamily.parse("relu").label == "relu"
        assert ForgeFamily.parse("tanh").label == "smooth:tanh"

    def test_mismatched_activation(self):
        """Test that families and activations must agree."""
        with pytest.raises(ValueError):
            ForgeFamily("relu", "tanh")
        with pytest.raises(ValueError):
            ForgeFamily("smooth", "relu")


class TestSeparation:
    """Test cases for separating directions."""

    def test_one_dimensional(self):
        """Test that d = 1 always uses the unit direction."""
        np.testing.assert_array_equal(separating_direction([0.1, 0.7]), [1.0])

    def test_duplicate_points_in_1d(self):
        """Test that coincident nodes cannot be separated."""
        with pytest.raises(SeparationError):
            separating_direction([0.3, 0.3])

    def test_two_dimensional(self):
        """Test that the drawn direction separates a grid of points."""
        points = [(x, y) for x in (0.2, 0.5, 0.8) for y in (0.2, 0.5, 0.8)]
        v = separating_direction(points, rng_seed=3)
        assert np.linalg.norm(v) == pytest.approx(1.0)
        assert projections_separated(points, v)

    def test_axis_direction_not_separating(self):
        """Test that an axis fails for points sharing a coordinate."""
        assert not projections_separated([(0.2, 0.1), (0.2, 0.9)], [1.0, 0.0])


class TestPlateauInterpolant:
    """Test cases for ReLU plateau interpolants."""

    def test_default_radius(self):
        """Test a quarter of the node gap and of the boundary distance."""
        assert default_plateau_radius([0.2, 0.5, 0.8]) == pytest.approx(0.075)
        assert default_plateau_radius([0.2, 0.5, 0.8], Box.unit(1)) == pytest.approx(0.05)

    def test_coincident_nodes(self):
        """Test the radius for coincident nodes."""
        with pytest.raises(NodeSpacingError):
            default_plateau_radius([0.3, 0.3])

    def test_values_and_flat_jets_1d(self):
        """Test data values with vanishing derivatives at every node."""
        net = relu_hermite_interpolant([0.2, 0.5, 0.8], [0.0, 1.0, -2.0], 2)
        for node, value in zip((0.2, 0.5, 0.8), (0.0, 1.0, -2.0)):
            bundle = jet_forward(net, [node], 2)
            assert bundle.value == pytest.approx(value, abs=1e-12)
            assert bundle.partial((1,)) == pytest.approx(0.0, abs=1e-12)
            assert bundle.partial((2,)) == pytest.approx(0.0, abs=1e-12)

    def test_deeper_network_keeps_values(self):
        """Test identity extension of the plateau interpolant."""
        shallow = relu_hermite_interpolant([0.2, 0.5], [1.0, 0.5], 2)
        deep = relu_hermite_interpolant([0.2, 0.5], [1.0, 0.5], 4)
        assert deep.depth == 4
        for z in np.linspace(0.0, 1.0, 21):
            assert forward(deep, [z]) == pytest.approx(forward(shallow, [z]), abs=1e-13)

    def test_deep_null_data_has_jets_at_every_node(self):
        """Test that zero-valued nodes of a deep interpolant stay away from ReLU kinks."""
        nodes = [0.2, 0.5, 0.8]
        net = relu_hermite_interpolant(nodes, [0.0, 1.0, 0.0], 4, domain=Box.unit(1))
        for node, value in zip(nodes, (0.0, 1.0, 0.0)):
            bundle = jet_forward(net, [node], 2)
            assert bundle.value == pytest.approx(value, abs=1e-14)
            assert bundle.partial((1,)) == 0.0
            assert bundle.partial((2,)) == 0.0
        assert forward(net, [0.2]) == 0.0

    def test_spacing_of_exactly_four_radii(self):
        """Test the default radius, where neighbours sit exactly four radii apart."""
        assert default_plateau_radius([0.25, 0.75]) == 0.125
        net = relu_hermite_interpolant([0.25, 0.75], [1.0, -2.0], 2)
        assert forward(net, [0.25]) == 1.0
        assert forward(net, [0.75]) == -2.0
        for node in (0.25, 0.75):
            assert jet_forward(net, [node], 1).partial((1,)) == 0.0
        with pytest.raises(NodeSpacingError):
            relu_hermite_interpolant([0.25, 0.75], [1.0, -2.0], 2, plateau_radius=0.126)

    def test_two_dimensional_gadget(self):
        """Test the depth-3 product-of-trapezoids construction in d = 2."""
        net = relu_hermite_interpolant([(0.25, 0.25), (0.75, 0.75)], [1.0, 0.0], 3)
        assert net.depth == 3
        assert forward(net, [0.25, 0.25]) == pytest.approx(1.0, abs=1e-12)
        assert forward(net, [0.75, 0.75]) == 0.0
        bundle = jet_forward(net, [0.25, 0.25], 1)
        assert bundle.partial((1, 0)) == pytest.approx(0.0, abs=1e-12)
        assert bundle.partial((0, 1)) == pytest.approx(0.0, abs=1e-12)

    def test_depth_too_small(self):
        """Test the minimal depth per dimension."""
        with pytest.raises(DepthExtensionError):
            relu_hermite_interpolant([0.2], [1.0], 1)
        with pytest.raises(DepthExtensionError):
            relu_hermite_interpolant([(0.2, 0.2)], [1.0], 2)

    def test_radius_too_large(self):
        """Test overlapping plateaus."""
        with pytest.raises(NodeSpacingError):
            relu_hermite_interpolant([0.2, 0.5], [1.0, 0.0], 2, plateau_radius=0.2)

    def test_three_dimensions_unsupported(self):
        """Test the dimension limit."""
        with pytest.raises(UnsupportedDimensionError):
            relu_hermite_interpolant([(0.1, 0.1, 0.1)], [1.0], 3)


class TestSmoothHermite:
    """Test cases for smooth Hermite interpolation."""

    def test_order_one_fit(self):
        """Test values and vanishing first derivatives at three nodes."""
        fit = fit_smooth_hermite([0.2, 0.5, 0.8], [0.0, 0.0, 1.0], 1, "tanh")
        assert fit.certified
        assert fit.residual <= 2e-8
        assert forward(fit.network, [0.8]) == pytest.approx(1.0, abs=1e-7)
        assert jet_forward(fit.network, [0.5], 1).partial((1,)) == pytest.approx(0.0, abs=1e-7)
        assert fit.to_dict()["certified"] is True

    def test_order_two_fit(self):
        """Test all nine value, slope and curvature conditions at three nodes."""
        nodes = [0.2, 0.5, 0.8]
        values = [0.0, 0.0, 1.0]
        fit = fit_smooth_hermite(nodes, values, 2, "tanh")
        assert fit.certified
        assert fit.residual <= 1e-8
        for node, value in zip(nodes, values):
            bundle = jet_forward(fit.network, [node], 2)
            assert abs(bundle.value - value) <= 1e-8
            assert abs(bundle.partial((1,))) <= 1e-8
            assert abs(bundle.partial((2,))) <= 1e-8

    def test_nonsmooth_activation_rejected(self):
        """Test that ReLU cannot be used for smooth interpolation."""
        with pytest.raises(ValueError):
            fit_smooth_hermite([0.2, 0.5], [0.0, 1.0], 1, "relu")

    def test_depth_one_rejected(self):
        """Test the minimal depth."""
        with pytest.raises(DepthExtensionError):
            fit_smooth_hermite([0.2, 0.5], [0.0, 1.0], 1, "tanh", depth=1)


class TestNullDirection:
    """Test cases for normalized null directions."""

    def test_relu_null_direction(self):
        """Test a plateau null direction for value probes on the unit interval."""
        spec = value_spec([0.2, 0.5], domain=Box.unit(1))
        phi = null_direction(spec, [0.8], ForgeFamily.parse("relu"), 2)
        assert forward(phi, [0.8]) == pytest.approx(1.0, abs=1e-14)
        assert verify_null(phi, spec, [0.8], tol=1e-12).passed

    def test_smooth_null_direction(self):
        """Test a tanh null direction for value and slope probes."""
        spec = build_measurement_spec([0.25, 0.5], 1)
        phi = null_direction(spec, [0.75], ForgeFamily.parse("smooth:tanh"), 2)
        assert forward(phi, [0.75]) == pytest.approx(1.0, abs=1e-12)
        assert verify_null(phi, spec, [0.75], tol=1e-7).passed

    def test_witness_on_probe(self):
        """Test that the witness must avoid probe points."""
        with pytest.raises(WitnessError):
            null_direction(value_spec([0.2, 0.5]), [0.5], ForgeFamily.parse("relu"), 2)

    def test_family_is_pairwise_distinct(self):
        """Test one null direction per witness with an identity cross matrix."""
        spec = value_spec([0.2, 0.5])
        nulls = null_family(spec, [0.65, 0.9], ForgeFamily.parse("relu"), 2)
        assert len(nulls) == 2
        cross = cross_evaluation_matrix(nulls, [0.65, 0.9])
        np.testing.assert_allclose(cross, np.eye(2), atol=1e-14)

    def test_duplicate_witnesses(self):
        """Test that witnesses must be distinct."""
        with pytest.raises(ValueError, match="distinct"):
            null_family(value_spec([0.2]), [0.7, 0.7], ForgeFamily.parse("relu"), 2)
