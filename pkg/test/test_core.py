#!/usr/bin/env python3
"""
Test core utilities: seed streams, error rendering, performance spans and version info
"""

import numpy as np
import pytest

from app.core.error_handling import (
    ConfigurationError,
    CubeFormatError,
    LabErrorHandler,
    ReportWriteError,
    SpecLabError,
    TruncatedPayloadError,
)
from app.core.performance import PerformanceMonitor
from app.core.seeding import Stream, branch_generators, child_seeds, derive_seed, make_rng
from app.core.version import get_version, get_version_info


class TestSeeding:
    """Test seed derivation"""

    def test_same_path_same_stream(self):
        """Test a path always addresses the same stream"""
        a = derive_seed(5, Stream.SHUFFLE, 3).generate_state(4)
        b = derive_seed(5, Stream.SHUFFLE, 3).generate_state(4)
        np.testing.assert_array_equal(a, b)

    def test_paths_are_independent(self):
        """Test neighbouring paths and seeds differ"""
        base = derive_seed(5, Stream.SHUFFLE, 3).generate_state(4)
        assert not np.array_equal(base, derive_seed(5, Stream.SHUFFLE, 4).generate_state(4))
        assert not np.array_equal(base, derive_seed(6, Stream.SHUFFLE, 3).generate_state(4))

    def test_nested_derivation(self):
        """Test deriving twice equals deriving the joined path"""
        nested = derive_seed(derive_seed(9, 1), 2).generate_state(4)
        np.testing.assert_array_equal(nested, derive_seed(9, 1, 2).generate_state(4))

    def test_child_seeds_repeatable(self):
        """Test children are stable across calls"""
        first = [c.generate_state(2) for c in child_seeds(7, 3)]
        second = [c.generate_state(2) for c in child_seeds(7, 3)]
        np.testing.assert_array_equal(first, second)
        np.testing.assert_array_equal(first[1], derive_seed(7, 1).generate_state(2))

    def test_make_rng(self):
        """Test generators from one path draw identically"""
        assert make_rng(3, Stream.INIT).random() == make_rng(3, Stream.INIT).random()

    def test_branch_generators_differ(self):
        """Test the two augmentation branches draw different values"""
        first, second = branch_generators(4)
        assert first.random() != second.random()


class TestErrorHandling:
    """Test error classes and rendering"""

    def test_error_codes(self):
        """Test subclasses carry their own codes"""
        assert ConfigurationError("x").error_code == "CONFIGURATION_ERROR"
        assert isinstance(TruncatedPayloadError("x"), CubeFormatError)
        assert TruncatedPayloadError("x").error_code == "TRUNCATED_PAYLOAD"

    def test_message_with_details(self):
        """Test details are appended to the string form"""
        error = SpecLabError("bad cube", details=[{"path": "a.hsc", "bands": 3}])
        assert str(error) == "bad cube (path=a.hsc, bands=3)"
        assert str(SpecLabError("plain")) == "plain"

    def test_response_layout(self):
        """Test rendered lab errors"""
        response = LabErrorHandler.create_error_response(
            ConfigurationError("nope", details=[{"location": "seeds"}])
        )
        assert response["message"] == "nope"
        assert response["error_code"] == "CONFIGURATION_ERROR"
        assert response["details"] == [{"location": "seeds"}]
        assert response["severity"] == "error"
        assert "timestamp" in response

    def test_foreign_exception(self):
        """Test exceptions from outside the lab render as internal errors"""
        response = LabErrorHandler.create_error_response(KeyError("k"), severity="warning")
        assert response["error_code"] == "INTERNAL_ERROR"
        assert response["details"] == [{"exception": "KeyError"}]
        assert response["severity"] == "warning"

    def test_wrap_io_error(self, tmp_path):
        """Test OSError wrapping names the action and path"""
        wrapped = LabErrorHandler.wrap_io_error(
            PermissionError("denied"), tmp_path / "x.csv", "write"
        )
        assert isinstance(wrapped, ReportWriteError)
        assert wrapped.message == f"Failed to write {tmp_path / 'x.csv'}"

    def test_log_error_returns_response(self):
        """Test logging returns the rendered response"""
        response = LabErrorHandler.log_error(CubeFormatError("bad magic"), path="a.hsc")
        assert response["error_code"] == "CUBE_FORMAT"


class TestPerformanceMonitor:
    """Test performance spans"""

    def test_measure_and_summary(self):
        """Test spans aggregate by name"""
        monitor = PerformanceMonitor()
        for _ in range(2):
            with monitor.measure("epoch", seed=0):
                pass
        with monitor.measure("cell"):
            pass
        summary = monitor.summary()
        assert summary["epoch"]["count"] == 2
        assert summary["cell"]["count"] == 1
        assert summary["epoch"]["total_s"] >= 0.0
        assert summary["cell"]["max_rss_mb"] > 0.0
        assert monitor.metrics[0].labels == {"seed": 0}

    def test_measure_records_on_error(self):
        """Test a failing block is still measured"""
        monitor = PerformanceMonitor()
        with pytest.raises(RuntimeError):
            with monitor.measure("cell"):
                raise RuntimeError("boom")
        assert monitor.summary()["cell"]["count"] == 1
        monitor.reset()
        assert monitor.summary() == {}


class TestVersion:
    """Test version information"""

    def test_version_info(self):
        """Test format versions embedded in reports"""
        info = get_version_info()
        assert info["version"] == get_version() == "1.0.0"
        assert info["cube_format"] == 1
        assert info["checkpoint_format"] == 1
        assert info["config_schema"] == 1
        assert info["report_schema"] == 1
