"""JSON manifest persisted next to sweep artefacts."""

import json
import logging
import os
import tempfile
from pathlib import Path
from threading import Lock
from typing import Any

logger = logging.getLogger(__name__)

MANIFEST_FILENAME = "manifest.json"


class ManifestStore:
    """
    Keyed run records saved atomically after every update.

    The file holds {"meta": {...}, "entries": {key: record}}.
    """

    def __init__(self, path: Path):
        self.path = Path(path)
        self._lock = Lock()
        self._meta: dict[str, Any] = {}
        self._entries: dict[str, dict[str, Any]] = {}
        self._load()

    def _load(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)

        if not self.path.exists():
            logger.info(f"No existing manifest at {self.path}, starting fresh")
            return

        try:
            with open(self.path, "r", encoding="utf-8") as f:
                data = json.load(f)
            self._meta = dict(data.get("meta", {}))
            self._entries = {str(k): dict(v) for k, v in data.get("entries", {}).items()}
            logger.info(f"Loaded {len(self._entries)} manifest entries from {self.path}")
        except (json.JSONDecodeError, AttributeError, TypeError) as e:
            # Keep the unreadable file for inspection and start over
            backup_path = self.path.with_suffix(".json.bak")
            try:
                os.replace(self.path, backup_path)
                logger.warning(f"Manifest corrupted, backed up to {backup_path}: {e}")
            except OSError as backup_err:
                logger.error(f"Failed to back up corrupted manifest: {backup_err}")
            self._meta = {}
            self._entries = {}

    def _save(self) -> None:
        """Write to a temp file in the same directory, then rename over the manifest."""
        fd, tmp_path = tempfile.mkstemp(dir=self.path.parent, prefix=".manifest_", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as f:
                json.dump(
                    {"meta": self._meta, "entries": self._entries},
                    f,
                    indent=2,
                    sort_keys=True,
                    ensure_ascii=False,
                )
            os.replace(tmp_path, self.path)
        except Exception:
            try:
                os.unlink(tmp_path)
            except OSError:
                pass
            raise

    def set_meta(self, **values: Any) -> None:
        with self._lock:
            self._meta.update(values)
            self._save()

    def get_meta(self, key: str | None = None, default=None):
        with self._lock:
            if key is None:
                return dict(self._meta)
            return self._meta.get(key, default)

    def put(self, key: str, record: dict[str, Any]) -> None:
        """Replace the record stored under key and save."""
        with self._lock:
            self._entries[key] = dict(record)
            self._save()

    def update(self, key: str, **fields: Any) -> None:
        with self._lock:
            self._entries.setdefault(key, {}).update(fields)
            self._save()

    def get(self, key: str, default=None) -> dict[str, Any] | None:
        with self._lock:
            record = self._entries.get(key)
            return dict(record) if record is not None else default

    def get_all(self) -> dict[str, dict[str, Any]]:
        with self._lock:
            return {k: dict(v) for k, v in self._entries.items()}

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)
