"""Situations, weighted situation similarity and critical-situation tests."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .taxonomy import Dimension, Taxonomy, TaxonomyError, UnknownConceptError


class Situation(NamedTuple):
    location: str
    time: str
    social: str

    def __str__(self) -> str:
        return f"({self.location}, {self.time}, {self.social})"


class ContextTaxonomies(NamedTuple):
    location: Taxonomy
    time: Taxonomy
    social: Taxonomy

    def validate(self, s: Situation) -> None:
        for tax, concept in zip(self, s):
            if concept not in tax:
                raise UnknownConceptError(concept, tax.dimension)


@dataclass(frozen=True)
class SimilarityWeights:
    location: float = 1.0
    time: float = 1.0
    social: float = 1.0

    def __post_init__(self):
        values = (self.location, self.time, self.social)
        if any(not np.isfinite(v) or v < 0 for v in values):
            raise ValueError(f"similarity weights must be finite and >= 0, got {values}")
        if not any(v > 0 for v in values):
            raise ValueError("at least one similarity weight must be > 0")

    @property
    def total(self) -> float:
        return self.location + self.time + self.social

    def scaled(self, k: float) -> "SimilarityWeights":
        return SimilarityWeights(self.location * k, self.time * k, self.social * k)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.location, self.time, self.social)


UNIT_WEIGHTS = SimilarityWeights()


def situation_sim(a: Situation, b: Situation, w: SimilarityWeights,
                  taxonomies: ContextTaxonomies) -> float:
    """Weighted sum of per-dimension concept similarities."""
    total = 0.0
    for alpha, tax, x, y in zip(w.as_tuple(), taxonomies, a, b):
        total += alpha * tax.similarity(x, y)
    return total


class SituationIndex:
    """Growable table of situations with vectorised similarity queries.

    Scores are the same floating-point sums ``situation_sim`` produces:
    per-dimension values come from the taxonomies' similarity matrices and
    are accumulated in location, time, social order.
    """

    def __init__(self, w: SimilarityWeights, taxonomies: ContextTaxonomies,
                 situations: Iterable[Situation] = ()):
        self.weights = w
        self.taxonomies = taxonomies
        self._mats = [t.similarity_matrix for t in taxonomies]
        self._index = [t.index for t in taxonomies]
        self._codes = np.empty((3, 16), dtype=np.intp)
        self._n = 0
        self._best: dict[Situation, tuple[int, int, float]] = {}
        self.situations: list[Situation] = []
        for s in situations:
            self.append(s)

    def __len__(self) -> int:
        return self._n

    def encode(self, s: Situation) -> tuple[int, int, int]:
        try:
            return tuple(idx[c] for idx, c in zip(self._index, s))
        except KeyError:
            self.taxonomies.validate(s)
            raise

    def append(self, s: Situation) -> None:
        code = self.encode(s)
        if self._n == self._codes.shape[1]:
            grown = np.empty((3, 2 * self._n), dtype=np.intp)
            grown[:, :self._n] = self._codes[:, :self._n]
            self._codes = grown
        self._codes[:, self._n] = code
        self._n += 1
        self.situations.append(s)

    def scores(self, s: Situation) -> np.ndarray:
        code = self.encode(s)
        n = self._n
        a_loc, a_time, a_soc = self.weights.as_tuple()
        out = 0.0 + a_loc * self._mats[0][code[0], self._codes[0, :n]]
        out += a_time * self._mats[1][code[1], self._codes[1, :n]]
        out += a_soc * self._mats[2][code[2], self._codes[2, :n]]
        return out

    def best(self, s: Situation) -> tuple[int, float]:
        """Index and score of the most similar entry; earliest wins ties.

        The running argmax is cached per query situation and only entries
        appended since the last query are scored.
        """
        n = self._n
        if n == 0:
            raise ValueError("no situations to compare against")
        cached = self._best.get(s)
        if cached is not None and cached[0] == n:
            return cached[1], cached[2]
        start = 0 if cached is None else cached[0]
        code = self.encode(s)
        cols = self._codes[:, start:n]
        a_loc, a_time, a_soc = self.weights.as_tuple()
        tail = 0.0 + a_loc * self._mats[0][code[0], cols[0]]
        tail += a_time * self._mats[1][code[1], cols[1]]
        tail += a_soc * self._mats[2][code[2], cols[2]]
        j = int(np.argmax(tail))  # first maximal index
        if cached is None or tail[j] > cached[2]:
            i, val = start + j, float(tail[j])
        else:
            i, val = cached[1], cached[2]
        self._best[s] = (n, i, val)
        return i, val


def nearest_past_situation(current: Situation, past: Sequence[Situation],
                           w: SimilarityWeights, taxonomies: ContextTaxonomies
                           ) -> tuple[int, Situation, float]:
    if not past:
        raise ValueError("past situation list is empty")
    i, sim = SituationIndex(w, taxonomies, past).best(current)
    return i, past[i], sim


def exploration_epsilon(similarity: float, threshold_b: float) -> float:
    """``1 - similarity / B`` below the threshold, 0 at or above it."""
    if threshold_b <= 0:
        raise ValueError("threshold_b must be > 0")
    if similarity >= threshold_b:
        return 0.0
    return min(1.0, max(0.0, 1.0 - similarity / threshold_b))


class Criticality(NamedTuple):
    is_critical: bool
    epsilon: float
    nearest_critical_sim: float


@dataclass
class CriticalSituationSet:
    """Expert-seeded set of critical situations plus the threshold B."""

    members: list[Situation] = field(default_factory=list)
    threshold_b: float = 2.4

    def __post_init__(self):
        if not (self.threshold_b > 0 and np.isfinite(self.threshold_b)):
            raise ValueError(f"threshold_b must be > 0, got {self.threshold_b}")
        unique = list(dict.fromkeys(Situation(*m) for m in self.members))
        self.members = unique
        self._set = set(unique)
        self._indexes: dict[tuple, SituationIndex] = {}

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, s: object) -> bool:
        return s in self._set

    def add(self, s: Situation) -> bool:
        s = Situation(*s)
        if s in self._set:
            return False
        self.members.append(s)
        self._set.add(s)
        for index in self._indexes.values():
            index.append(s)
        return True

    def check_threshold(self, w: SimilarityWeights) -> None:
        if self.threshold_b > w.total:
            raise ValueError(
                f"threshold_b={self.threshold_b} exceeds the weight total {w.total}")

    def index_for(self, w: SimilarityWeights, taxonomies: ContextTaxonomies) -> SituationIndex:
        key = (w, taxonomies)
        index = self._indexes.get(key)
        if index is None:
            index = self._indexes[key] = SituationIndex(w, taxonomies, self.members)
        return index


def criticality(current: Situation, sc: CriticalSituationSet, w: SimilarityWeights,
                taxonomies: ContextTaxonomies) -> Criticality:
    if not sc.members:
        raise ValueError("critical situation set is empty")
    sc.check_threshold(w)
    _, m = sc.index_for(w, taxonomies).best(current)
    if m >= sc.threshold_b:
        return Criticality(True, 0.0, m)
    return Criticality(False, exploration_epsilon(m, sc.threshold_b), m)


def register_critical(sc: CriticalSituationSet, s: Situation) -> CriticalSituationSet:
    sc.add(s)
    return sc


def parse_critical_situations(text: str, taxonomies: ContextTaxonomies | None = None
                              ) -> list[Situation]:
    """Parse ``location<TAB>time<TAB>social`` lines."""
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        fields = [f.strip() for f in raw.split("\t")]
        if len(fields) != 3 or not all(fields):
            raise TaxonomyError("expected 'location<TAB>time<TAB>social'", lineno)
        s = Situation(*fields)
        if taxonomies is not None:
            try:
                taxonomies.validate(s)
            except UnknownConceptError as exc:
                raise TaxonomyError(str(exc), lineno) from None
        out.append(s)
    return out


def format_critical_situations(members: Iterable[Situation]) -> str:
    return "".join("\t".join(s) + "\n" for s in members)


__all__ = [
    "Situation", "ContextTaxonomies", "SimilarityWeights", "UNIT_WEIGHTS",
    "situation_sim", "SituationIndex", "nearest_past_situation",
    "exploration_epsilon", "Criticality", "CriticalSituationSet",
    "criticality", "register_critical", "parse_critical_situations",
    "format_critical_situations", "Dimension",
]
