"""Content-addressed artifact cache.

Entries live under ``<root>/<stage>/<key>/``. An entry is written to a
temporary sibling directory and renamed into place, so a reader never sees a
half-written entry.
"""
from __future__ import annotations

import os
import shutil
import tempfile
from pathlib import Path

CACHE_ENV = "HICON_CACHE"


def default_cache_dir(explicit: str | None = None) -> Path:
    """``$HICON_CACHE`` wins over the config value; fall back to ``.hicon-cache``."""
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    return Path(explicit) if explicit else Path(".hicon-cache")


class ArtifactStore:
    def __init__(self, root):
        self.root = Path(root)

    def path(self, stage: str, key: str) -> Path:
        return self.root / stage / key

    def has(self, stage: str, key: str) -> bool:
        return (self.path(stage, key) / ".complete").is_file()

    def get(self, stage: str, key: str) -> Path | None:
        return self.path(stage, key) if self.has(stage, key) else None

    def put(self, stage: str, key: str, files: dict[str, Path]) -> Path:
        """Copy ``files`` (name -> source path) into a new entry and return its directory."""
        final = self.path(stage, key)
        final.parent.mkdir(parents=True, exist_ok=True)
        tmp = Path(tempfile.mkdtemp(prefix=f".{key}-", dir=final.parent))
        try:
            for name, src in files.items():
                shutil.copyfile(src, tmp / name)
            (tmp / ".complete").write_text("")
            if final.exists():
                shutil.rmtree(final)
            os.replace(tmp, final)
        except BaseException:
            shutil.rmtree(tmp, ignore_errors=True)
            raise
        return final

    def invalidate(self, stage: str, key: str | None = None) -> None:
        target = self.root / stage if key is None else self.path(stage, key)
        shutil.rmtree(target, ignore_errors=True)
