"""
Known-relationship recall from cosine similarities.

Of all M(M-1)/2 off-diagonal similarities, the bottom and top ``tail_pct``
percent (linear-interpolation percentiles) form the tails; recall is the
fraction of database pairs falling in either tail. For unrelated random
embeddings that is 2 * tail_pct / 100.
"""

from typing import Dict, Optional

import numpy as np
from sklearn.metrics.pairwise import cosine_similarity

from phenom.benchmarks.relationships import RelationshipDB
from phenom.core.exceptions import DimensionMismatchError, EmptyInputError
from phenom.core.logger import PhenomLogger

logger = PhenomLogger.get_logger(__name__)


def cosine_similarity_matrix(vectors: np.ndarray) -> np.ndarray:
    """Symmetric M x M cosine similarities with unit diagonal."""
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2:
        raise DimensionMismatchError(f"Expected an M x D matrix, got shape {vectors.shape}")
    zero_rows = np.flatnonzero(np.linalg.norm(vectors, axis=1) == 0.0)
    if zero_rows.size:
        raise DimensionMismatchError(f"Cosine similarity is undefined for zero rows {zero_rows.tolist()}")
    sims = np.clip(cosine_similarity(vectors), -1.0, 1.0)
    sims = (sims + sims.T) / 2.0
    np.fill_diagonal(sims, 1.0)
    return sims


def recall_known_pairs(
    sims: np.ndarray,
    db: RelationshipDB,
    id_index: Dict[str, int],
    tail_pct: float = 5.0,
) -> float:
    """
    Args:
        sims: M x M similarity matrix
        db: Known relationships; pairs with an id outside ``id_index`` are dropped
        id_index: Perturbation id -> row of ``sims``
        tail_pct: Percent of similarities in each tail

    Raises:
        EmptyInputError: no known pair survives the restriction
    """
    if not 0.0 < tail_pct < 50.0:
        raise DimensionMismatchError(f"tail_pct must be in (0, 50), got {tail_pct}")
    restricted = db.restrict_to(id_index.keys())
    if len(restricted) == 0:
        raise EmptyInputError(f"No pairs of database {db.name!r} are present in the embedding index")

    upper = sims[np.triu_indices(sims.shape[0], k=1)]
    low, high = np.percentile(upper, [tail_pct, 100.0 - tail_pct])
    known = np.array([sims[id_index[a], id_index[b]] for a, b in sorted(restricted.pairs)])
    hits = int(np.sum((known <= low) | (known >= high)))
    recall = hits / len(known)
    logger.info(f"Recall on {db.name}: {hits}/{len(known)} = {recall:.3f} "
                f"(tails {low:.3f} / {high:.3f})")
    return recall


def random_embeddings(n: int, dim: int = 1024, seed: int = 0) -> np.ndarray:
    """Standard-normal baseline embeddings."""
    return np.random.default_rng(seed).standard_normal((n, dim))


def recall_for_matrix(
    vectors: np.ndarray,
    ids,
    db: RelationshipDB,
    tail_pct: float = 5.0,
    id_index: Optional[Dict[str, int]] = None,
) -> float:
    index = id_index or {pid: i for i, pid in enumerate(ids)}
    return recall_known_pairs(cosine_similarity_matrix(vectors), db, index, tail_pct)
