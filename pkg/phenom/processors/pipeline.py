"""
Named transform pipelines over embedding tables.

A pipeline is a comma-separated list of ops applied left to right, e.g.
``"pca,standardize_by:plate"`` or ``"center_by:plate,tvn"``. Each op is
``name`` or ``name:arg``. Extra ops (for example a post-TVN correction)
can be added with ``register_transform``.
"""

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Union

from phenom.core.exceptions import InvalidConfigError, UnknownOperationError
from phenom.core.logger import PhenomLogger
from phenom.processors.aggregation import shift_origin_to_controls
from phenom.processors.embeddings import EmbeddingTable
from phenom.processors.normalizer import center_by, pca_transform, standardize_by
from phenom.processors.tvn import tvn_on_controls

logger = PhenomLogger.get_logger(__name__)

Transform = Callable[[EmbeddingTable, Optional[str]], EmbeddingTable]

_REGISTRY: Dict[str, Transform] = {}


def register_transform(name: str) -> Callable[[Transform], Transform]:
    """Decorator adding ``fn(table, arg) -> table`` under ``name``."""

    def decorator(fn: Transform) -> Transform:
        if name in _REGISTRY:
            raise InvalidConfigError(f"Transform {name!r} is already registered")
        _REGISTRY[name] = fn
        return fn

    return decorator


def available_ops() -> List[str]:
    return sorted(_REGISTRY)


def _require_arg(name: str, arg: Optional[str]) -> str:
    if not arg:
        raise InvalidConfigError(f"Op {name!r} needs an argument, e.g. {name}:plate")
    return arg


@register_transform("none")
def _identity(table: EmbeddingTable, arg: Optional[str]) -> EmbeddingTable:
    return table


@register_transform("center_by")
def _center(table: EmbeddingTable, arg: Optional[str]) -> EmbeddingTable:
    return center_by(table, _require_arg("center_by", arg))


@register_transform("standardize_by")
def _standardize(table: EmbeddingTable, arg: Optional[str]) -> EmbeddingTable:
    return standardize_by(table, _require_arg("standardize_by", arg))


@register_transform("pca")
def _pca(table: EmbeddingTable, arg: Optional[str]) -> EmbeddingTable:
    if arg is None:
        return pca_transform(table)
    try:
        k = int(arg)
    except ValueError as e:
        raise InvalidConfigError(f"pca takes an integer component count, got {arg!r}") from e
    return pca_transform(table, k)


@register_transform("tvn")
def _tvn(table: EmbeddingTable, arg: Optional[str]) -> EmbeddingTable:
    if arg not in (None, "ridge"):
        raise InvalidConfigError(f"tvn takes no argument or 'ridge', got {arg!r}")
    return tvn_on_controls(table, ridge=arg == "ridge")


@register_transform("shift_to_controls")
def _shift(table: EmbeddingTable, arg: Optional[str]) -> EmbeddingTable:
    return shift_origin_to_controls(table)


@dataclass(frozen=True)
class PipelineStep:
    name: str
    arg: Optional[str] = None

    def __str__(self) -> str:
        return self.name if self.arg is None else f"{self.name}:{self.arg}"


def parse_pipeline(spec: Union[str, Sequence[str]]) -> List[PipelineStep]:
    """Parse and validate op names; raises UnknownOperationError listing valid ops."""
    tokens = spec.split(",") if isinstance(spec, str) else list(spec)
    steps = []
    for token in (t.strip() for t in tokens):
        if not token:
            continue
        name, _, arg = token.partition(":")
        if name not in _REGISTRY:
            raise UnknownOperationError(f"Unknown transform {name!r}; valid ops: {', '.join(available_ops())}")
        steps.append(PipelineStep(name, arg or None))
    return steps


def run_pipeline(table: EmbeddingTable, spec: Union[str, Sequence[str]]) -> EmbeddingTable:
    steps = parse_pipeline(spec)
    for step in steps:
        table = _REGISTRY[step.name](table, step.arg)
        logger.debug(f"Applied {step}: {len(table)} x {table.dim}")
    logger.info(f"Ran pipeline [{', '.join(map(str, steps)) or 'none'}] on {len(table)} records")
    return table
