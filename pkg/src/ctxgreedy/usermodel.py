"""Case base of past situations and their per-document statistics."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Iterator

from .situation import Situation

CSV_HEADER = ["situation_loc", "situation_time", "situation_social",
              "doc_id", "clicks", "recommendations", "reading_time"]


@dataclass(slots=True)
class DocumentStats:
    clicks: int = 0
    recommendations: int = 0
    reading_time: float = 0.0

    def __post_init__(self):
        if self.clicks < 0 or self.recommendations < 0 or self.reading_time < 0:
            raise ValueError("document statistics must be non-negative")
        if self.clicks > self.recommendations:
            raise ValueError(
                f"clicks ({self.clicks}) exceed recommendations ({self.recommendations})")

    @property
    def ctr(self) -> float:
        return self.clicks / self.recommendations if self.recommendations else 0.0


def get_ctr(s: DocumentStats) -> float:
    """Clicks over recommendations; 0 for a never-recommended document."""
    return s.ctr


class CaseBase:
    """The user model: ordered map of situation -> {doc_id: DocumentStats}."""

    def __init__(self, entries: Iterable[tuple[Situation, dict[str, DocumentStats]]] = ()):
        self._entries: dict[Situation, dict[str, DocumentStats]] = {}
        for situation, docs in entries:
            situation = Situation(*situation)
            if situation in self._entries:
                raise ValueError(f"duplicate case-base situation {situation}")
            self._entries[situation] = dict(docs)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, s: object) -> bool:
        return s in self._entries

    def __iter__(self) -> Iterator[Situation]:
        return iter(self._entries)

    @property
    def situations(self) -> list[Situation]:
        return list(self._entries)

    def items(self):
        return self._entries.items()

    def add_situation(self, s: Situation, documents: Iterable[str] = ()) -> dict[str, DocumentStats]:
        """Create an entry whose documents start at zero counts."""
        s = Situation(*s)
        if s in self._entries:
            raise ValueError(f"situation {s} already in case base")
        docs = self._entries[s] = {d: DocumentStats() for d in documents}
        return docs

    def seed_from(self, current: Situation, nearest: Situation) -> bool:
        """Give ``current`` its own entry with ``nearest``'s documents at zero counts.

        Returns True when a new entry was created.
        """
        if current in self._entries:
            return False
        self.add_situation(current, self.candidate_documents(nearest))
        return True

    def candidate_documents(self, nearest: Situation) -> dict[str, DocumentStats]:
        try:
            return self._entries[nearest]
        except KeyError:
            raise KeyError(f"situation {nearest} is not in the case base") from None

    def record_feedback(self, situation: Situation, doc: str, clicked: bool,
                        reading_time: float = 0.0) -> "CaseBase":
        docs = self._entries.get(situation)
        if docs is None:
            docs = self._entries[Situation(*situation)] = {}
        stats = docs.get(doc)
        if stats is None:
            stats = docs[doc] = DocumentStats()
        stats.recommendations += 1
        if clicked:
            stats.clicks += 1
        if reading_time:
            if reading_time < 0:
                raise ValueError("reading_time must be >= 0")
            stats.reading_time += reading_time
        return self

    def totals(self) -> tuple[int, int]:
        clicks = recs = 0
        for docs in self._entries.values():
            for st in docs.values():
                clicks += st.clicks
                recs += st.recommendations
        return clicks, recs

    def copy(self) -> "CaseBase":
        return CaseBase(
            (s, {d: DocumentStats(st.clicks, st.recommendations, st.reading_time)
                 for d, st in docs.items()})
            for s, docs in self._entries.items())

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for s, docs in self._entries.items():
            for doc_id, st in docs.items():
                writer.writerow([*s, doc_id, st.clicks, st.recommendations, repr(float(st.reading_time))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "CaseBase":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header != CSV_HEADER:
            raise ValueError(f"unexpected case-base header {header}")
        cb = cls()
        for row in reader:
            if not row:
                continue
            loc, time, social, doc_id, clicks, recs, reading = row
            s = Situation(loc, time, social)
            docs = cb._entries.setdefault(s, {})
            docs[doc_id] = DocumentStats(int(clicks), int(recs), float(reading))
        return cb


def candidate_documents(cb: CaseBase, nearest: Situation) -> dict[str, DocumentStats]:
    return cb.candidate_documents(nearest)


def record_feedback(cb: CaseBase, situation: Situation, doc: str, clicked: bool) -> CaseBase:
    return cb.record_feedback(situation, doc, clicked)
