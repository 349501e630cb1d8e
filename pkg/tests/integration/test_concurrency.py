"""Integration tests for concurrency control."""

import json
import threading

import pytest

from artifact_lock import ArtifactLockManager
from lorenz_lab import JobSpec, LorenzLab


@pytest.mark.integration
def test_artifact_lock_serializes_writers(out_dir):
    """Two writers on the same directory never hold the lock together."""
    active = []
    overlaps = []

    def writer(name):
        with ArtifactLockManager(str(out_dir), timeout=10).acquire():
            active.append(name)
            if len(active) > 1:
                overlaps.append(tuple(active))
            threading.Event().wait(0.05)
            active.remove(name)

    threads = [threading.Thread(target=writer, args=(f"job{i}",)) for i in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert overlaps == []


@pytest.mark.integration
def test_lock_timeout(out_dir):
    holder = ArtifactLockManager(str(out_dir), timeout=1)
    waiter = ArtifactLockManager(str(out_dir), timeout=0.1)
    with holder.acquire():
        assert holder.is_locked()
        with pytest.raises(RuntimeError, match="Could not acquire artifact lock"):
            with waiter.acquire():
                pass
    assert not holder.is_locked()


@pytest.mark.integration
def test_concurrent_jobs_on_one_directory(test_config_path, out_dir):
    """Concurrent jobs into one directory each leave a complete artifact."""
    lab = LorenzLab(config_path=test_config_path)
    maps = [{"u": u, "v": 0.8, "c": 0.5, "rho": 2.0} for u in (0.7, 0.8, 0.9)]
    codes = []

    def job(i):
        spec = JobSpec.from_dict({"command": "eval", "map": maps[i], "x": [0.25]})
        codes.append(lab.run(spec, out_dir=str(out_dir / f"job{i}")))

    threads = [threading.Thread(target=job, args=(i,)) for i in range(3)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert codes == [0, 0, 0]
    for i in range(3):
        assert (out_dir / f"job{i}" / "eval.csv").exists()


@pytest.mark.integration
def test_lock_blocks_job_until_released(test_config_path, out_dir):
    lab = LorenzLab(config_path=test_config_path)
    lab.config["output"]["lock_timeout"] = 0.2
    spec = JobSpec.from_dict({"command": "eval", "map": {"u": 0.9, "v": 0.8, "c": 0.5, "rho": 2.0}, "x": [0.25]})
    with ArtifactLockManager(str(out_dir)).acquire():
        code = lab.run(spec, out_dir=str(out_dir))
    assert code == 1
    assert not (out_dir / "eval.csv").exists()
    assert not (out_dir / "error.json").exists()
