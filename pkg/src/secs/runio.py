"""Atomic file writes and run manifests.

Outputs are written to a temp file in the target directory and renamed into
place, so a crashed run leaves no partial files. Manifests are JSON sidecars
named <output>.manifest.json; timestamps live only there, keeping the data
files byte-reproducible.
"""

from __future__ import annotations

import json
import os
import tempfile
import time
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path


@contextmanager
def atomic_path(path: str | Path):
    """Yield a temp path that is renamed onto `path` on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        yield Path(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    with atomic_path(path) as tmp:
        tmp.write_text(text, encoding="utf-8")


def manifest_path(output: str | Path) -> Path:
    output = Path(output)
    return output.with_name(output.name + ".manifest.json")


def write_manifest(
    output: str | Path,
    verb: str,
    options: dict,
    inputs: dict[str, str],
    wall_seconds: float,
    extra: dict | None = None,
) -> Path:
    from . import __version__

    payload = {
        "verb": verb,
        "package_version": __version__,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "wall_seconds": wall_seconds,
        "inputs": inputs,
        "options": options,
        "output": str(output),
    }
    if extra:
        payload.update(extra)
    path = manifest_path(output)
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n")
    return path


class Stopwatch:
    def __init__(self) -> None:
        self.start = time.perf_counter()

    def elapsed(self) -> float:
        return time.perf_counter() - self.start
