"""Concept trees for the location, time and social context dimensions.

A taxonomy is a rooted tree. Depth counts nodes on the path to the root,
so the root has depth 1, and concept similarity is the Wu-Palmer style
ratio ``2 * depth(lcs) / (depth(a) + depth(b))``.
"""

from __future__ import annotations

import enum
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np

ROOT_MARKER = "-"


class Dimension(str, enum.Enum):
    LOCATION = "location"
    TIME = "time"
    SOCIAL = "social"


class TaxonomyError(ValueError):
    """Malformed taxonomy file or tree structure."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnknownConceptError(KeyError):
    def __init__(self, concept: str, dimension: Dimension):
        self.concept = concept
        self.dimension = dimension
        super().__init__(f"unknown {dimension.value} concept {concept!r}")

    def __str__(self) -> str:
        return self.args[0]


def _check_concept_id(concept: str, line: int | None = None) -> None:
    if not concept or any(ch.isspace() for ch in concept):
        raise TaxonomyError(f"invalid concept id {concept!r}", line)


class Taxonomy:
    """Immutable rooted concept tree for one context dimension.

    ``parents`` maps every concept to its parent; the root maps to ``None``.
    """

    def __init__(self, dimension: Dimension, parents: Mapping[str, str | None]):
        self.dimension = Dimension(dimension)
        self._parents = dict(parents)
        roots = [c for c, p in self._parents.items() if p is None]
        if len(roots) != 1:
            raise TaxonomyError(f"expected exactly one root, found {len(roots)}")
        self.root = roots[0]
        for concept, parent in self._parents.items():
            _check_concept_id(concept)
            if parent is not None and parent not in self._parents:
                raise TaxonomyError(f"unknown parent {parent!r} of {concept!r}")

        # Root paths, ordered concept -> root. Built iteratively so deep
        # chains don't hit the recursion limit.
        self._paths: dict[str, tuple[str, ...]] = {self.root: (self.root,)}
        for concept in self._parents:
            chain = []
            node = concept
            seen = set()
            while node not in self._paths:
                if node in seen:
                    raise TaxonomyError(f"cycle detected through {concept!r}")
                seen.add(node)
                chain.append(node)
                node = self._parents[node]
                if node is None:
                    # a second root can only appear through a None parent
                    raise TaxonomyError(f"{concept!r} is not connected to the root")
            tail = self._paths[node]
            for member in reversed(chain):
                tail = (member,) + tail
                self._paths[member] = tail

    def __repr__(self) -> str:
        return f"Taxonomy({self.dimension.value}, {len(self)} concepts, root={self.root!r})"

    def __len__(self) -> int:
        return len(self._parents)

    def __contains__(self, concept: object) -> bool:
        return concept in self._parents

    def __iter__(self):
        return iter(self._parents)

    @property
    def concepts(self) -> list[str]:
        return list(self._parents)

    def parent(self, concept: str) -> str | None:
        self._require(concept)
        return self._parents[concept]

    def children(self, concept: str) -> list[str]:
        self._require(concept)
        return [c for c, p in self._parents.items() if p == concept]

    def leaves_under(self, concept: str) -> list[str]:
        """Leaf concepts in the subtree rooted at ``concept`` (inclusive)."""
        self._require(concept)
        parents = set(p for p in self._parents.values() if p is not None)
        return [c for c in self._parents
                if c not in parents and concept in self._paths[c]]

    def path_to_root(self, concept: str) -> tuple[str, ...]:
        self._require(concept)
        return self._paths[concept]

    def depth(self, concept: str) -> int:
        self._require(concept)
        return len(self._paths[concept])

    def lcs(self, a: str, b: str) -> str:
        """Deepest concept lying on both root paths."""
        self._require(a)
        self._require(b)
        pa, pb = self._paths[a], self._paths[b]
        # Align on depth, then walk up together.
        da, db = len(pa), len(pb)
        if da > db:
            pa = pa[da - db:]
        elif db > da:
            pb = pb[db - da:]
        for x, y in zip(pa, pb):
            if x == y:
                return x
        raise AssertionError("root paths must meet at the root")

    def similarity(self, a: str, b: str) -> float:
        if a == b:
            self._require(a)
            return 1.0
        return 2.0 * self.depth(self.lcs(a, b)) / (self.depth(a) + self.depth(b))

    @cached_property
    def index(self) -> dict[str, int]:
        return {c: i for i, c in enumerate(self._parents)}

    @cached_property
    def similarity_matrix(self) -> np.ndarray:
        """Pairwise ``similarity`` over ``concepts``; read-only."""
        names = self.concepts
        n = len(names)
        mat = np.empty((n, n))
        for i, a in enumerate(names):
            mat[i, i] = 1.0
            for j in range(i + 1, n):
                mat[i, j] = mat[j, i] = self.similarity(a, names[j])
        mat.setflags(write=False)
        return mat

    def _require(self, concept: str) -> None:
        if concept not in self._parents:
            raise UnknownConceptError(concept, self.dimension)

    def to_text(self) -> str:
        lines = [f"# {self.dimension.value} taxonomy"]
        for concept in sorted(self._parents, key=lambda c: (self.depth(c), c)):
            parent = self._parents[concept]
            lines.append(f"{concept}\t{parent if parent is not None else ROOT_MARKER}")
        return "\n".join(lines) + "\n"


def load_taxonomy(text: str, dimension: Dimension | str) -> Taxonomy:
    """Parse ``concept<TAB>parent`` lines into a validated taxonomy.

    Errors carry the offending line number.
    """
    dimension = Dimension(dimension)
    parents: dict[str, str | None] = {}
    lines: dict[str, int] = {}
    root_line = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise TaxonomyError("expected 'concept<TAB>parent'", lineno)
        concept, parent = fields[0].strip(), fields[1].strip()
        _check_concept_id(concept, lineno)
        if concept in parents:
            raise TaxonomyError(
                f"duplicate concept id {concept!r} (first defined on line {lines[concept]})",
                lineno)
        if parent == ROOT_MARKER:
            if root_line is not None:
                raise TaxonomyError(f"multiple roots (first root on line {root_line})", lineno)
            root_line = lineno
            parents[concept] = None
        else:
            _check_concept_id(parent, lineno)
            parents[concept] = parent
        lines[concept] = lineno
    if root_line is None:
        raise TaxonomyError("no root line (parent '-')")

    for concept, parent in parents.items():
        if parent is not None and parent not in parents:
            raise TaxonomyError(f"unknown parent id {parent!r}", lines[concept])
    # Walk each chain; anything not reaching the root is on a cycle.
    for concept in parents:
        seen = {concept}
        node = parents[concept]
        while node is not None:
            if node in seen:
                raise TaxonomyError(f"cycle detected involving {concept!r}", lines[concept])
            seen.add(node)
            node = parents[node]
    return Taxonomy(dimension, parents)


def taxonomy_from_edges(dimension: Dimension | str, edges: Iterable[tuple[str, str | None]]) -> Taxonomy:
    return Taxonomy(Dimension(dimension), dict(edges))


def depth(t: Taxonomy, c: str) -> int:
    return t.depth(c)


def lcs(t: Taxonomy, a: str, b: str) -> str:
    return t.lcs(a, b)


def concept_sim(t: Taxonomy, a: str, b: str) -> float:
    """Wu-Palmer similarity of two concepts of the same taxonomy, in (0, 1]."""
    return t.similarity(a, b)


def generate_taxonomy(dimension: Dimension | str, branching: Iterable[int], prefix: str | None = None) -> Taxonomy:
    """Balanced tree with ``branching[k]`` children per node at level ``k+1``.

    Concept ids are ``<prefix>``, ``<prefix>.1``, ``<prefix>.1.2`` and so on.
    """
    dimension = Dimension(dimension)
    prefix = prefix or dimension.value[:3]
    parents: dict[str, str | None] = {prefix: None}
    level = [prefix]
    for fanout in branching:
        if fanout < 1:
            raise TaxonomyError("branching factors must be >= 1")
        nxt = []
        for node in level:
            for k in range(1, fanout + 1):
                child = f"{node}.{k}"
                parents[child] = node
                nxt.append(child)
        level = nxt
    return Taxonomy(dimension, parents)
