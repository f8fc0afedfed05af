"""
Run directory persistence: metrics CSV, JSON reports, binary outputs and the
manifest that inventories them with SHA-256 digests.
"""
import csv
import hashlib
import json
import logging
import os
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional

import numpy as np

logger = logging.getLogger(__name__)

TOOL_NAME = "thermal-qrng-sim"
TOOL_VERSION = "0.1.0"
MANIFEST_NAME = "manifest.json"


def file_digest(path: str, chunk_size: int = 1 << 20) -> str:
    """SHA-256 hex digest of a file."""
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(chunk_size), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _format_cell(value: Any) -> Any:
    # repr gives the shortest round-trip form with '.' as decimal separator
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return int(value)
    return value


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class RunStore:
    """
    Owns every file of one run directory.

    Each output is written exactly once and registered for the manifest;
    run.log is never registered since its timestamps differ between runs.
    """

    def __init__(self, run_dir: str):
        self.run_dir = run_dir
        os.makedirs(run_dir, exist_ok=True)
        self.outputs: Dict[str, str] = {}
        logger.info(f"📁 Run directory: {run_dir}")

    def path(self, name: str) -> str:
        return os.path.join(self.run_dir, name)

    def _register(self, name: str, kind: str) -> str:
        if name in self.outputs:
            raise ValueError(f"output {name} written twice")
        self.outputs[name] = kind
        return self.path(name)

    def write_csv(self, name: str, headers: List[str], rows: List[Dict[str, Any]]) -> str:
        """
        Write rows under a fixed header row.

        Args:
            name: File name inside the run directory
            headers: Column order
            rows: One mapping per line; missing cells stay empty

        Returns:
            str: Full path of the written file
        """
        path = self._register(name, "csv")
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.DictWriter(handle, fieldnames=headers, lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow({k: _format_cell(v) for k, v in row.items()})
        logger.info(f"✅ Wrote {len(rows)} rows to {name}")
        return path

    def write_json(self, name: str, data: Any) -> str:
        path = self._register(name, "json")
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(data, handle, indent=2, sort_keys=True)
            handle.write("\n")
        return path

    def write_bytes(self, name: str, data: np.ndarray, kind: str = "binary") -> str:
        """Raw little-endian dump of an array."""
        path = self._register(name, kind)
        with open(path, "wb") as handle:
            handle.write(np.ascontiguousarray(data).tobytes())
        logger.info(f"✅ Wrote {os.path.getsize(path)} bytes to {name}")
        return path

    def inventory(self) -> List[Dict[str, Any]]:
        """Digest and size of every registered output, in name order."""
        entries = []
        for name in sorted(self.outputs):
            path = self.path(name)
            entries.append({
                "name": name,
                "kind": self.outputs[name],
                "sha256": file_digest(path),
                "bytes": os.path.getsize(path),
            })
        return entries

    def write_manifest(self, command: str, config: Dict[str, Any], scenarios: List[Dict[str, Any]],
                       started_at: str, extra: Optional[Dict[str, Any]] = None) -> str:
        manifest = {
            "tool": TOOL_NAME,
            "tool_version": TOOL_VERSION,
            "command": command,
            "config": config,
            "seed": config.get("seed"),
            "shots": config.get("shots"),
            "scenarios": scenarios,
            "started_at": started_at,
            "finished_at": utc_now(),
            "outputs": self.inventory(),
        }
        if extra:
            manifest.update(extra)
        path = self.path(MANIFEST_NAME)
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(manifest, handle, indent=2, sort_keys=True)
            handle.write("\n")
        logger.info(f"✅ Manifest lists {len(manifest['outputs'])} outputs")
        return path


def load_manifest(path: str) -> Dict[str, Any]:
    """Read a manifest; accepts the file or its run directory."""
    if os.path.isdir(path):
        path = os.path.join(path, MANIFEST_NAME)
    with open(path, "r", encoding="utf-8") as handle:
        manifest = json.load(handle)
    for key in ("command", "config", "outputs"):
        if key not in manifest:
            raise ValueError(f"manifest {path} lacks '{key}'")
    return manifest


def verify_outputs(manifest: Dict[str, Any], run_dir: str) -> List[str]:
    """
    Names of the listed outputs that are missing or whose digest differs.

    Args:
        manifest: Loaded manifest
        run_dir: Directory holding the outputs

    Returns:
        List of divergent file names (empty when everything matches)
    """
    divergent = []
    for entry in manifest["outputs"]:
        path = os.path.join(run_dir, entry["name"])
        if not os.path.exists(path):
            logger.warning(f"❌ Missing output {entry['name']}")
            divergent.append(entry["name"])
        elif file_digest(path) != entry["sha256"]:
            logger.warning(f"❌ Digest mismatch for {entry['name']}")
            divergent.append(entry["name"])
    return divergent


def compare_inventories(expected: List[Dict[str, Any]], actual: List[Dict[str, Any]]) -> List[str]:
    """Names whose digests differ between two inventories, or that appear in only one."""
    left = {e["name"]: e["sha256"] for e in expected}
    right = {e["name"]: e["sha256"] for e in actual}
    return sorted(name for name in set(left) | set(right) if left.get(name) != right.get(name))
