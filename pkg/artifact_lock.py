"""Output directory locking for artifact writes."""

import logging
from contextlib import contextmanager
from pathlib import Path

from filelock import FileLock, Timeout

logger = logging.getLogger(__name__)

LOCK_NAME = ".lorenz_lab.lock"


class ArtifactLockManager:
    """
    File-based lock on an output directory.

    Two jobs pointed at the same directory write their artifacts one after the
    other instead of interleaving temp files and renames.

    Usage:
        with ArtifactLockManager("results").acquire():
            writer.write_json("detect.json", payload)
    """

    def __init__(self, out_dir: str = "results", timeout: float = 30):
        """
        Args:
            out_dir: Directory whose artifacts the lock guards (created if missing)
            timeout: Seconds to wait for the lock before giving up
        """
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.lock_file_path = self.out_dir / LOCK_NAME
        self.timeout = timeout
        self.lock = FileLock(self.lock_file_path, timeout=self.timeout)
        logger.debug(f"ArtifactLockManager initialized: {self.lock_file_path}")

    @contextmanager
    def acquire(self):
        """
        Hold the lock for the duration of the block.

        Raises:
            RuntimeError: lock not obtained within the timeout
        """
        try:
            with self.lock.acquire(timeout=self.timeout):
                logger.debug("✓ Artifact lock acquired")
                yield
                logger.debug("Artifact lock released")
        except Timeout:
            logger.error(f"Failed to acquire artifact lock after {self.timeout}s")
            raise RuntimeError(
                f"Could not acquire artifact lock on {self.out_dir} after {self.timeout} seconds. "
                f"Another job may be writing to the same directory."
            )

    def is_locked(self) -> bool:
        """Point-in-time check whether this handle holds the lock."""
        return self.lock.is_locked
