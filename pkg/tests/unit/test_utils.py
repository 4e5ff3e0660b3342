"""
Unit tests for utilities module.
"""

import json
import math

import numpy as np
import pytest

from utils import (
    canonical_json,
    format_duration,
    format_float,
    format_sig,
    is_version_compatible,
    parse_version,
    sanitize_filename,
    to_jsonable,
)


class TestVersionUtils:
    """Test cases for schema-version utilities."""

    def test_parse_version_valid(self):
        """Test parsing valid version strings."""
        assert parse_version("1.0") == (1, 0, 0)
        assert parse_version("2.3.4") == (2, 3, 4)
        assert parse_version("3") == (3, 0, 0)

    def test_parse_version_invalid(self):
        """Test parsing invalid version strings."""
        assert parse_version("invalid") == (0, 0, 0)
        assert parse_version("") == (0, 0, 0)

    def test_is_version_compatible_exact(self):
        """Test exact version compatibility."""
        assert is_version_compatible("1.0", "1.0.0", "exact") is True
        assert is_version_compatible("1.0", "1.1", "exact") is False

    def test_is_version_compatible_minor(self):
        """Test that older minor versions remain readable."""
        assert is_version_compatible("1.2", "1.0", "minor") is True
        assert is_version_compatible("1.2", "1.3", "minor") is False
        assert is_version_compatible("1.2", "2.0", "minor") is False

    def test_is_version_compatible_major(self):
        """Test major version compatibility."""
        assert is_version_compatible("1.0", "1.9", "major") is True
        assert is_version_compatible("1.0", "2.0", "major") is False

    def test_is_version_compatible_edge_cases(self):
        """Test missing versions and unknown modes."""
        assert is_version_compatible("", "1.0") is False
        assert is_version_compatible("1.0", None) is False
        assert is_version_compatible("1.0", "1.0", "fuzzy") is False


class TestFormatting:
    """Test cases for float formatting."""

    def test_format_float_round_trips(self):
        """Test shortest round-trip representation."""
        for value in (0.1, 1 / 3, -2.5e-17, 1e300):
            assert float(format_float(value)) == value

    def test_format_float_special_values(self):
        """Test non-finite values and None."""
        assert format_float(math.inf) == "inf"
        assert format_float(-math.inf) == "-inf"
        assert format_float(math.nan) == "nan"
        assert format_float(None) == ""

    def test_format_sig(self):
        """Test fixed significant digits."""
        assert format_sig(0.1) == "0.10000000000000001"
        assert format_sig(2.0) == "2"
        assert format_sig(1 / 3, 4) == "0.3333"
        assert format_sig(math.inf) == "inf"

    def test_format_duration(self):
        """Test runtime labels."""
        assert format_duration(0.2) == "< 1 s"
        assert format_duration(12) == "~12 s"
        assert format_duration(150) == "~2.5 min"


class TestJson:
    """Test cases for JSON coercion."""

    def test_numpy_values(self):
        """Test conversion of numpy scalars, arrays and tuples."""
        data = {"a": np.float64(1.5), "b": np.arange(3), "c": (np.bool_(True), 2), 4: np.int64(7)}
        assert to_jsonable(data) == {"a": 1.5, "b": [0, 1, 2], "c": [True, 2], "4": 7}

    def test_non_finite_floats_become_strings(self):
        """Test that JSON never receives NaN or infinity."""
        assert to_jsonable([math.inf, math.nan]) == ["inf", "nan"]

    def test_objects_with_to_dict(self):
        """Test objects exposing to_dict."""

        class Record:
            def to_dict(self):
                return {"value": np.float64(0.25)}

        assert to_jsonable([Record()]) == [{"value": 0.25}]

    def test_canonical_json_is_deterministic(self):
        """Test sorted keys, indentation and trailing newline."""
        text = canonical_json({"b": 1, "a": [1.0, 2.5]})
        assert text.endswith("\n")
        assert text.index('"a"') < text.index('"b"')
        assert json.loads(text) == {"a": [1.0, 2.5], "b": 1}
        assert canonical_json({"a": [1.0, 2.5], "b": 1}) == text


class TestFileUtils:
    """Test cases for file-related utilities."""

    @pytest.mark.parametrize(
        "name,expected",
        [
            ("sweep.csv", "sweep.csv"),
            ("t matrix/n4.csv", "t_matrix_n4.csv"),
            ("...", "unnamed"),
        ],
    )
    def test_sanitize_filename(self, name, expected):
        """Test filename sanitization."""
        assert sanitize_filename(name) == expected

    def test_sanitize_filename_length(self):
        """Test truncation of long names."""
        assert len(sanitize_filename("x" * 300)) == 255
