"""
Artifact store for experiment outputs
Atomic JSON and CSV writes under one output directory, so reruns with the
same seed overwrite byte-identical files and a crash never leaves half a file
"""

import json
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd

from app.utils.logging_setup import get_logger

logger = get_logger(__name__)

CSV_FLOAT_FORMAT = "%.17g"


def _json_default(value: Any) -> Any:
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"cannot serialise {type(value).__name__}")


class ArtifactStore:
    """
    Writer for one output directory.

    Every file goes to a temporary sibling first and is moved into place with
    os.replace; `written` keeps the paths in write order.
    """

    def __init__(self, output_dir: Union[str, Path]):
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.written: List[Path] = []

    def path(self, name: str) -> Path:
        return self.output_dir / name

    def _atomic_write(self, name: str, text: str) -> Path:
        target = self.path(name)
        target.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
                handle.write(text)
            os.replace(tmp, target)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        self.written.append(target)
        logger.info(f"Wrote {target}")
        return target

    def save_json(self, name: str, data: Dict[str, Any]) -> Path:
        return self._atomic_write(name, json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n")

    def save_frame(self, name: str, frame: pd.DataFrame, index: bool = False) -> Path:
        """CSV with 17 significant digits so every float round-trips."""
        return self._atomic_write(name, frame.to_csv(index=index, float_format=CSV_FLOAT_FORMAT, lineterminator="\n"))

    def load_json(self, name: str) -> Optional[Dict[str, Any]]:
        target = self.path(name)
        if not target.exists():
            return None
        return json.loads(target.read_text(encoding="utf-8"))

    def load_frame(self, name: str) -> Optional[pd.DataFrame]:
        target = self.path(name)
        if not target.exists():
            return None
        return pd.read_csv(target, float_precision="round_trip")

    def delete(self, name: str) -> bool:
        target = self.path(name)
        if target.exists():
            target.unlink()
            return True
        return False

    def get_stats(self) -> Dict[str, Any]:
        files = [p for p in self.written if p.exists()]
        return {
            "output_dir": str(self.output_dir),
            "files_written": len(files),
            "bytes_written": sum(p.stat().st_size for p in files),
        }


_artifact_store: Optional[ArtifactStore] = None


def get_artifact_store(output_dir: Union[str, Path]) -> ArtifactStore:
    """Shared store for the process, replaced when the output directory changes."""
    global _artifact_store
    if _artifact_store is None or _artifact_store.output_dir != Path(output_dir):
        _artifact_store = ArtifactStore(output_dir)
    return _artifact_store
