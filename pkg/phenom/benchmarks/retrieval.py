"""
Perturbation and sibling retrieval with average precision, permutation
p-values and Benjamini-Hochberg q-values.

PERTURBATION: each replicate of a perturbation in turn queries the pool
made of the perturbation's other replicates (positives) and every
negative-control well; the perturbation's score is the mean AP over its
replicates.

SIBLINGS: the spherical mean of a perturbation's replicates queries the
pool made of its siblings' spherical means (positives) and every
negative-control well.

Candidates are ranked by cosine similarity to the query, ties broken by
record index. The null scores random placements of the same number of
positives among the same pool; when the number of distinct placements is
at most ``n_permutations`` they are enumerated exhaustively and p is the
exact fraction of placements scoring at least the observed value,
otherwise p = (1 + #{null >= observed}) / (1 + n_permutations).
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations, product
from math import comb, prod
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from statsmodels.stats.multitest import multipletests

from phenom.benchmarks.relationships import RelationshipDB
from phenom.core.exceptions import DimensionMismatchError, EmptyInputError, InvalidConfigError
from phenom.core.logger import PhenomLogger
from phenom.processors.aggregation import spherical_mean
from phenom.processors.embeddings import EmbeddingTable

logger = PhenomLogger.get_logger(__name__)

# Slack for comparing null scores against the observed score
AP_TOL = 1e-12


class RetrievalKind(str, Enum):
    PERTURBATION = "PERTURBATION"
    SIBLINGS = "SIBLINGS"


@dataclass
class RetrievalTask:
    """
    ``groups`` maps each perturbation to its replicate rows; for SIBLINGS,
    ``siblings`` maps each queried perturbation to the other members of its
    sibling set.

    Raises DimensionMismatchError when a sibling set (query plus members)
    has fewer than 2 perturbations.
    """

    task: RetrievalKind
    groups: Dict[str, List[int]]
    negatives: List[int]
    siblings: Dict[str, List[str]] = field(default_factory=dict)
    q_threshold: float = 0.05
    n_permutations: int = 1000

    def __post_init__(self):
        self.task = RetrievalKind(self.task)
        if self.n_permutations < 100:
            raise InvalidConfigError(f"n_permutations must be >= 100, got {self.n_permutations}")
        if not 0.0 < self.q_threshold < 1.0:
            raise InvalidConfigError(f"q_threshold must be in (0, 1), got {self.q_threshold}")
        replicate_rows = {i for rows in self.groups.values() for i in rows}
        overlap = replicate_rows & set(self.negatives)
        if overlap:
            raise InvalidConfigError(f"Rows {sorted(overlap)[:10]} are both replicates and negatives")
        unknown = ({p for p in self.siblings} | {s for v in self.siblings.values() for s in v}) - set(self.groups)
        if unknown:
            raise InvalidConfigError(f"Sibling sets name perturbations without replicates: {sorted(unknown)[:10]}")
        lonely = sorted(p for p, members in self.siblings.items() if len(set(members) | {p}) < 2)
        if lonely:
            raise DimensionMismatchError(f"Sibling sets with fewer than 2 members: {lonely[:10]}")

    @property
    def queries(self) -> List[str]:
        if self.task is RetrievalKind.SIBLINGS:
            return sorted(self.siblings)
        return sorted(self.groups)


@dataclass
class RetrievalResult:
    fraction_retrieved: float
    q_values: Dict[str, float]
    p_values: Dict[str, float]
    average_precision: Dict[str, float]
    q_threshold: float

    @property
    def retrieved(self) -> List[str]:
        return sorted(p for p, q in self.q_values.items() if q < self.q_threshold)


def average_precision(ranked_relevance: Sequence[bool]) -> float:
    """Mean over positive ranks k of (positives in the top k) / k."""
    relevance = np.asarray(ranked_relevance, dtype=bool)
    positions = np.flatnonzero(relevance)
    if positions.size == 0:
        raise EmptyInputError("Average precision needs at least one positive")
    hits = np.arange(1, positions.size + 1)
    return float(np.mean(hits / (positions + 1)))


def _ap_of_positions(positions: np.ndarray) -> np.ndarray:
    """AP for rows of sorted 0-based positive positions, shape (R, k)."""
    hits = np.arange(1, positions.shape[1] + 1)
    return np.mean(hits / (positions + 1), axis=1)


def _null_scores(pools: List[Tuple[int, int]], n_permutations: int, rng: np.random.Generator) -> Tuple[np.ndarray, bool]:
    """
    Null mean-AP over independent queries, each (pool size n, positives k).
    Returns the scores and whether they are an exhaustive enumeration.
    """
    total = prod(comb(n, k) for n, k in pools)
    if total <= n_permutations:
        per_query = [
            _ap_of_positions(np.array(list(combinations(range(n), k))))
            for n, k in pools
        ]
        scores = np.array([np.mean(c) for c in product(*per_query)])
        return scores, True

    samples = np.zeros(n_permutations)
    for n, k in pools:
        positions = np.sort(rng.random((n_permutations, n)).argsort(axis=1)[:, :k], axis=1)
        samples += _ap_of_positions(positions)
    return samples / len(pools), False


def _cosine_to(query: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(candidates, axis=1) * np.linalg.norm(query)
    if np.any(norms == 0.0):
        raise DimensionMismatchError("Cosine similarity is undefined for zero vectors")
    return candidates @ query / norms


def _ranked_relevance(query: np.ndarray, candidates: np.ndarray, is_positive: np.ndarray,
                      tie_index: np.ndarray) -> np.ndarray:
    scores = _cosine_to(query, candidates)
    order = np.lexsort((tie_index, -scores))
    return is_positive[order]


def _score_perturbation(
    pid: str,
    vectors: np.ndarray,
    task: RetrievalTask,
    aggregates: Dict[str, np.ndarray],
    seed: int,
    ordinal: int,
) -> Tuple[float, float]:
    """Mean AP of one query and its p-value: exceed / len(null) when the null is
    enumerated exhaustively, (1 + exceed) / (1 + n_permutations) when sampled."""
    negatives = np.asarray(task.negatives)
    rankings: List[np.ndarray] = []
    if task.task is RetrievalKind.PERTURBATION:
        rows = sorted(task.groups[pid])
        for r in rows:
            others = np.array([o for o in rows if o != r])
            pool = np.concatenate([others, negatives])
            is_pos = np.concatenate([np.ones(len(others), bool), np.zeros(len(negatives), bool)])
            rankings.append(_ranked_relevance(vectors[r], vectors[pool], is_pos, pool))
    else:
        sibs = task.siblings[pid]
        sib_vectors = np.stack([aggregates[s] for s in sibs])
        sib_index = np.array([min(task.groups[s]) for s in sibs])
        candidates = np.vstack([sib_vectors, vectors[negatives]])
        tie_index = np.concatenate([sib_index, negatives])
        is_pos = np.concatenate([np.ones(len(sibs), bool), np.zeros(len(negatives), bool)])
        rankings.append(_ranked_relevance(aggregates[pid], candidates, is_pos, tie_index))

    observed = float(np.mean([average_precision(r) for r in rankings]))
    pools = [(len(r), int(r.sum())) for r in rankings]
    rng = np.random.default_rng([seed, ordinal])
    null, exhaustive = _null_scores(pools, task.n_permutations, rng)
    exceed = int(np.sum(null >= observed - AP_TOL))
    p_value = exceed / len(null) if exhaustive else (1 + exceed) / (1 + task.n_permutations)
    return observed, p_value


def retrieval_benchmark(
    vectors: np.ndarray,
    task: RetrievalTask,
    seed: int = 0,
    workers: int = 1,
) -> RetrievalResult:
    """
    Args:
        vectors: Record embeddings (rows indexed by the task), typically TVN-normalized
        task: Groups, negatives and thresholds
        seed: Null sampling seed
        workers: Threads across perturbations; results do not depend on it

    Raises:
        EmptyInputError: no negatives or nothing to query
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    if not task.negatives:
        raise EmptyInputError("Retrieval needs negative-control records")
    queries = task.queries
    if not queries:
        raise EmptyInputError("Retrieval task has no perturbations to query")

    aggregates: Dict[str, np.ndarray] = {}
    if task.task is RetrievalKind.SIBLINGS:
        needed = set(queries) | {s for pid in queries for s in task.siblings[pid]}
        aggregates = {p: spherical_mean(list(vectors[task.groups[p]])) for p in sorted(needed)}
    else:
        small = [p for p in queries if len(task.groups[p]) < 2]
        if small:
            logger.warning(f"Skipping {len(small)} perturbations with fewer than 2 replicates")
            queries = [p for p in queries if p not in small]
            if not queries:
                raise EmptyInputError("No perturbation has at least 2 replicates")

    def run(item):
        ordinal, pid = item
        return _score_perturbation(pid, vectors, task, aggregates, seed, ordinal)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        scored = list(pool.map(run, enumerate(queries)))

    aps = np.array([s[0] for s in scored])
    pvals = np.array([s[1] for s in scored])
    qvals = multipletests(pvals, alpha=task.q_threshold, method="fdr_bh")[1]
    fraction = float(np.mean(qvals < task.q_threshold))
    logger.info(f"{task.task.value} retrieval: {int(np.sum(qvals < task.q_threshold))}/{len(queries)} "
                f"retrieved at q < {task.q_threshold} (mean AP {aps.mean():.3f})")
    return RetrievalResult(
        fraction_retrieved=fraction,
        q_values=dict(zip(queries, qvals.tolist())),
        p_values=dict(zip(queries, pvals.tolist())),
        average_precision=dict(zip(queries, aps.tolist())),
        q_threshold=task.q_threshold,
    )


def build_retrieval_task(
    table: EmbeddingTable,
    kind: RetrievalKind = RetrievalKind.PERTURBATION,
    sibling_db: Optional[RelationshipDB] = None,
    n_permutations: int = 1000,
    q_threshold: float = 0.05,
) -> RetrievalTask:
    """
    Groups are the table's perturbations, negatives its control wells
    (pooled across plates). SIBLINGS queries every perturbation with at
    least one sibling in ``sibling_db``.
    """
    kind = RetrievalKind(kind)
    controls = table.control_mask
    treated_rows = np.flatnonzero(~controls)
    # groupby positions are relative to the treated subset
    positions = table.metadata[~controls].groupby("perturbation_id").indices
    groups = {pid: sorted(treated_rows[rows].tolist()) for pid, rows in positions.items()}
    negatives = np.flatnonzero(controls).tolist()

    siblings: Dict[str, List[str]] = {}
    if kind is RetrievalKind.SIBLINGS:
        if sibling_db is None:
            raise InvalidConfigError("SIBLINGS retrieval needs a relationship DB defining sibling sets")
        restricted = sibling_db.restrict_to(groups)
        for a, b in sorted(restricted.pairs):
            siblings.setdefault(a, []).append(b)
            siblings.setdefault(b, []).append(a)
        siblings = {p: sorted(s) for p, s in siblings.items()}
    return RetrievalTask(task=kind, groups=groups, negatives=negatives, siblings=siblings,
                         q_threshold=q_threshold, n_permutations=n_permutations)
