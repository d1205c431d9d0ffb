"""Known biological relationships as unordered perturbation pairs."""

from dataclasses import dataclass, field
from itertools import combinations
from typing import FrozenSet, Iterable, Set, Tuple

Pair = Tuple[str, str]


def canonical_pair(a: str, b: str) -> Pair:
    """Order a pair so (a, b) and (b, a) compare equal."""
    return (a, b) if a <= b else (b, a)


@dataclass
class RelationshipDB:
    """
    A named set of unordered perturbation pairs with distinct endpoints.
    """

    name: str
    pairs: Set[Pair] = field(default_factory=set)

    def __post_init__(self):
        cleaned = set()
        for a, b in self.pairs:
            a, b = str(a), str(b)
            if a == b:
                raise ValueError(f"Self-pair ({a}, {b}) in relationship DB {self.name}")
            cleaned.add(canonical_pair(a, b))
        self.pairs = cleaned

    @classmethod
    def from_groups(cls, name: str, groups: Iterable[Iterable[str]]) -> "RelationshipDB":
        """All within-group pairs of each group."""
        pairs = set()
        for group in groups:
            for a, b in combinations(sorted(set(group)), 2):
                pairs.add((a, b))
        return cls(name=name, pairs=pairs)

    def __len__(self) -> int:
        return len(self.pairs)

    def __contains__(self, pair: Pair) -> bool:
        return canonical_pair(*pair) in self.pairs

    def restrict_to(self, ids: Iterable[str]) -> "RelationshipDB":
        """Keep only pairs whose endpoints are both in ``ids``."""
        present: FrozenSet[str] = frozenset(ids)
        kept = {p for p in self.pairs if p[0] in present and p[1] in present}
        return RelationshipDB(name=self.name, pairs=kept)
