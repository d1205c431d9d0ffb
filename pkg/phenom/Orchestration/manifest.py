"""
Run manifests: one ``manifest.json`` per command invocation recording what
ran, with which config and seed, from which code version, and when.
"""

import json
import subprocess
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Optional

from phenom import __version__
from phenom.core.logger import PhenomLogger

logger = PhenomLogger.get_logger(__name__)

MANIFEST_NAME = "manifest.json"


def code_version() -> str:
    """``git describe`` of the source tree, or the package version outside a checkout."""
    try:
        result = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
    except (OSError, subprocess.SubprocessError):
        return __version__
    described = result.stdout.strip()
    return described if result.returncode == 0 and described else __version__


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    command: str
    config_path: Optional[str]
    seed: int
    output_dir: str
    version: str = field(default_factory=code_version)
    started_at: str = field(default_factory=_now)
    finished_at: Optional[str] = None
    status: str = "running"
    outputs: Dict[str, str] = field(default_factory=dict)
    parameters: Dict[str, Any] = field(default_factory=dict)

    def finish(self, status: str = "ok") -> None:
        self.status = status
        self.finished_at = _now()

    def write(self) -> Path:
        path = Path(self.output_dir) / MANIFEST_NAME
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
        logger.debug(f"Wrote manifest {path}")
        return path

    @classmethod
    def read(cls, path: Path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))
