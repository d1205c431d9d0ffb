"""
Relationship DB pair lists.

Format: first line ``# database: <name>``, then a CSV with header
``perturbation_a,perturbation_b`` and one unordered pair per row.
"""

import re
from io import StringIO
from pathlib import Path

import pandas as pd

from phenom.benchmarks.relationships import RelationshipDB
from phenom.core.exceptions import FormatError
from phenom.core.logger import PhenomLogger

logger = PhenomLogger.get_logger(__name__)

_NAME_LINE = re.compile(r"^#\s*database:\s*(?P<name>.+?)\s*$")


class RelationshipDAO:
    """Reads and writes relationship DB pair lists."""

    @staticmethod
    def write(db: RelationshipDB, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame = pd.DataFrame(sorted(db.pairs), columns=["perturbation_a", "perturbation_b"])
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(f"# database: {db.name}\n")
            frame.to_csv(f, index=False, lineterminator="\n")
        logger.info(f"Wrote {len(db)} pairs of '{db.name}' to {path}")
        return path

    @staticmethod
    def read(path: Path) -> RelationshipDB:
        path = Path(path)
        with open(path, "r", encoding="utf-8") as f:
            first, rest = f.readline(), f.read()
        match = _NAME_LINE.match(first)
        if not match:
            raise FormatError(f"{path}: first line must be '# database: <name>'")
        frame = pd.read_csv(StringIO(rest), dtype=str, keep_default_na=False)
        if list(frame.columns[:2]) != ["perturbation_a", "perturbation_b"]:
            raise FormatError(f"{path}: expected columns perturbation_a,perturbation_b")
        pairs = set(zip(frame["perturbation_a"], frame["perturbation_b"]))
        return RelationshipDB(name=match.group("name"), pairs=pairs)
