"""Shared pytest fixtures for all tests."""

import pytest
from pathlib import Path

from metrics_collector import metrics


@pytest.fixture
def test_config_path():
    """Return path to test configuration."""
    return 'tests/fixtures/config_test.yaml'


@pytest.fixture
def out_dir(tmp_path):
    """Provide a clean temporary artifact directory for tests."""
    out = tmp_path / "results"
    out.mkdir()
    return out


@pytest.fixture
def isolated_metrics(tmp_path):
    """Point the metrics singleton at a temporary file."""
    metrics.configure(str(tmp_path / "monitoring" / "metrics.json"))
    metrics.reset()
    return metrics


@pytest.fixture(autouse=True)
def reset_singletons():
    """Reset singleton state between tests."""
    metrics.reset()
    yield
    metrics.reset()


@pytest.fixture
def write_spec(tmp_path):
    """Write a job spec dict to a JSON file and return its path."""
    import json

    def _write(spec, name="job.json"):
        path = Path(tmp_path) / name
        path.write_text(json.dumps(spec))
        return str(path)

    return _write
