"""Atomic JSON and CSV artifacts for Lorenz Lab jobs."""

import io
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, List

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)


def _default(value: Any):
    """JSON fallback for numpy scalars and arrays."""
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def dumps(payload: Any) -> str:
    """Canonical JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(payload, indent=2, sort_keys=True, default=_default) + "\n"


class ArtifactWriter:
    """
    Writes the artifacts of one job into an output directory.

    Every artifact embeds the resolved configuration: JSON files under a
    ``config`` key, CSV files as a leading ``# config: {...}`` comment line.
    Files are written to a temp file, fsynced and renamed into place, and
    carry no timestamps, so re-running a job reproduces them byte for byte.
    """

    def __init__(self, out_dir: str, config: Dict[str, Any]):
        """
        Args:
            out_dir: Directory for artifacts (created if missing)
            config: Resolved configuration embedded into every artifact
        """
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.config = config
        self.written: List[Path] = []

    def write_json(self, name: str, payload: Dict[str, Any]) -> Path:
        """Write payload plus the embedded config as canonical JSON."""
        document = dict(payload)
        document["config"] = self.config
        return self._write(name, dumps(document))

    def write_csv(self, name: str, frame: pd.DataFrame) -> Path:
        """Write a table preceded by the config comment line."""
        header = "# config: " + json.dumps(self.config, sort_keys=True, separators=(",", ":"), default=_default)
        buffer = io.StringIO()
        frame.to_csv(buffer, index=False, float_format="%.17g", lineterminator="\n")
        return self._write(name, header + "\n" + buffer.getvalue())

    def _write(self, name: str, text: str) -> Path:
        target = self.out_dir / name
        temp_file = self.out_dir / f".{name}.tmp"
        with open(temp_file, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
            f.flush()
            os.fsync(f.fileno())
        temp_file.replace(target)
        self.written.append(target)
        logger.info(f"✓ Artifact written: {target}")
        return target


def read_csv(path) -> pd.DataFrame:
    """Read a CSV artifact, skipping the config comment line."""
    return pd.read_csv(path, comment="#")


def read_config_line(path) -> Dict[str, Any]:
    """The config embedded in a CSV artifact."""
    with open(path, "r", encoding="utf-8") as f:
        first = f.readline()
    prefix = "# config: "
    if not first.startswith(prefix):
        raise ValueError(f"{path} has no config line")
    return json.loads(first[len(prefix):])
