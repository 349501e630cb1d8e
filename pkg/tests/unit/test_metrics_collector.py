"""
Unit tests for metrics_collector.py
"""

import json
import threading

import pytest

from metrics_collector import MetricsCollector, metrics


@pytest.mark.unit
class TestMetricsCollector:
    """Counters, gauges and duration histograms"""

    def test_singleton(self):
        assert MetricsCollector() is metrics

    def test_counters_and_gauges(self):
        metrics.increment("jobs_total")
        metrics.increment("jobs_total", 2)
        metrics.set_gauge("last_distance", 1e-6)
        snapshot = metrics.snapshot()
        assert snapshot["jobs_total"] == 3
        assert snapshot["last_distance"] == 1e-6

    def test_duration_summary(self):
        for value in range(1, 101):
            metrics.record_duration("job_seconds", float(value))
        snapshot = metrics.snapshot()
        assert snapshot["job_seconds_avg"] == pytest.approx(50.5)
        assert snapshot["job_seconds_max"] == 100.0
        assert snapshot["job_seconds_p95"] == 96.0

    def test_histogram_keeps_last_1000(self):
        for value in range(1200):
            metrics.record_duration("d", float(value))
        assert len(metrics.histograms["d"]) == 1000
        assert metrics.histograms["d"][0] == 200.0

    def test_thread_safe_increments(self):
        def work():
            for _ in range(500):
                metrics.increment("renormalizations_total")

        threads = [threading.Thread(target=work) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert metrics.snapshot()["renormalizations_total"] == 4000


@pytest.mark.unit
class TestPersistence:
    """Flushing and reloading counters"""

    def test_flush_and_reload(self, isolated_metrics):
        metrics.increment("jobs_total", 4)
        metrics.increment("jobs_failed")
        metrics.set_gauge("gauge", 2.0)
        metrics.flush()
        data = json.loads(isolated_metrics.metrics_file.read_text())
        assert data["jobs_total"] == 4

        metrics.reset()
        metrics.configure(str(isolated_metrics.metrics_file))
        snapshot = metrics.snapshot()
        assert snapshot["jobs_total"] == 4
        assert snapshot["jobs_failed"] == 1
        assert "gauge" not in snapshot

    def test_corrupted_file_starts_fresh(self, tmp_path):
        path = tmp_path / "metrics.json"
        path.write_text("{broken")
        metrics.configure(str(path))
        assert metrics.snapshot() == {}
