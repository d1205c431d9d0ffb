"""
Benchmark report: JSON for machines, markdown tables for people.

Recall is keyed by transform pipeline then relationship database.
Retrieval entries carry optional (cell_type, modality, time_point) keys.
"""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from phenom.core.exceptions import FormatError

REPORT_SCHEMA = "phenom.report/v1"


@dataclass
class RetrievalEntry:
    task: str
    pipeline: str
    fraction_retrieved: float
    n_queries: int
    cell_type: Optional[str] = None
    modality: Optional[str] = None
    time_point: Optional[str] = None


@dataclass
class BenchmarkReport:
    recall: Dict[str, Dict[str, float]] = field(default_factory=dict)
    retrieval: List[RetrievalEntry] = field(default_factory=list)
    feature_regression: Dict[str, Dict[str, float]] = field(default_factory=dict)
    embedding: Optional[str] = None
    tail_pct: float = 5.0

    def add_recall(self, pipeline: str, database: str, value: float) -> None:
        self.recall.setdefault(pipeline, {})[database] = float(value)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema": REPORT_SCHEMA,
            "embedding": self.embedding,
            "tail_pct": self.tail_pct,
            "recall": self.recall,
            "retrieval": [asdict(e) for e in self.retrieval],
            "feature_regression": self.feature_regression,
        }

    def write_json(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    @classmethod
    def read_json(cls, path: Path) -> "BenchmarkReport":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if data.get("schema") != REPORT_SCHEMA:
            raise FormatError(f"{path} is not a {REPORT_SCHEMA} report")
        return cls(
            recall=data.get("recall", {}),
            retrieval=[RetrievalEntry(**e) for e in data.get("retrieval", [])],
            feature_regression=data.get("feature_regression", {}),
            embedding=data.get("embedding"),
            tail_pct=data.get("tail_pct", 5.0),
        )

    def to_markdown(self) -> str:
        lines: List[str] = []
        title = f"# Benchmark report{f' ({self.embedding})' if self.embedding else ''}"
        lines += [title, ""]

        if self.recall:
            databases = sorted({db for row in self.recall.values() for db in row})
            lines += [f"## Known-relationship recall (top/bottom {self.tail_pct:g}%)", ""]
            lines.append("| Transformation | " + " | ".join(databases) + " |")
            lines.append("|---|" + "---|" * len(databases))
            for pipeline in sorted(self.recall):
                cells = [_fmt(self.recall[pipeline].get(db)) for db in databases]
                lines.append(f"| {pipeline} | " + " | ".join(cells) + " |")
            lines.append("")

        if self.retrieval:
            lines += ["## Retrieval (fraction with q < 0.05)", ""]
            lines.append("| Task | Transformation | Cell type | Modality | Time point | Retrieved | Queries |")
            lines.append("|---|---|---|---|---|---|---|")
            for e in self.retrieval:
                lines.append(
                    f"| {e.task} | {e.pipeline} | {e.cell_type or '-'} | {e.modality or '-'} | "
                    f"{e.time_point or '-'} | {_fmt(e.fraction_retrieved)} | {e.n_queries} |"
                )
            lines.append("")

        if self.feature_regression:
            lines += ["## Feature regression (test R², median ± MAD)", ""]
            lines.append("| Category | R² |")
            lines.append("|---|---|")
            for category in sorted(self.feature_regression):
                s = self.feature_regression[category]
                lines.append(f"| {category} | {s['median']:.3f} ± {s['mad']:.3f} |")
            lines.append("")
        return "\n".join(lines)


def _fmt(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.3f}"
