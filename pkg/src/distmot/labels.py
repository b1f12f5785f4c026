"""Track labels: ordered (birth step, index) pairs and canonical label sets."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator


class DuplicateLabelError(ValueError):
    """A label set was constructed from a list containing duplicates."""


@dataclass(frozen=True, order=True)
class Label:
    """Ordered pair (birth step k, per-step index i); total order is lexicographic."""

    birth_time: int
    index: int

    def __post_init__(self):
        if self.birth_time < 0:
            raise ValueError(f"birth_time must be non-negative, got {self.birth_time}")
        if self.index < 1:
            raise ValueError(f"index must be positive, got {self.index}")

    def as_pair(self) -> tuple[int, int]:
        return (self.birth_time, self.index)

    def __repr__(self):
        return f"({self.birth_time},{self.index})"


@dataclass(frozen=True)
class LabelSet:
    """Sorted, duplicate-free tuple of labels; equality is set equality."""

    labels: tuple[Label, ...]

    def __post_init__(self):
        labs = tuple(sorted(self.labels))
        if len(set(labs)) != len(labs):
            raise DuplicateLabelError(f"duplicate labels in {labs}")
        object.__setattr__(self, "labels", labs)

    @classmethod
    def of(cls, labels: Iterable[Label]) -> "LabelSet":
        return cls(tuple(labels))

    def __iter__(self) -> Iterator[Label]:
        return iter(self.labels)

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, label: Label) -> bool:
        return label in self.labels

    def __lt__(self, other: "LabelSet") -> bool:
        return self.labels < other.labels

    def union(self, other: "LabelSet") -> "LabelSet":
        return LabelSet(tuple(set(self.labels) | set(other.labels)))

    def intersection(self, other: "LabelSet") -> "LabelSet":
        return LabelSet(tuple(set(self.labels) & set(other.labels)))

    def difference(self, other: "LabelSet") -> "LabelSet":
        return LabelSet(tuple(set(self.labels) - set(other.labels)))

    def is_subset(self, other: "LabelSet") -> bool:
        return set(self.labels) <= set(other.labels)

    def __repr__(self):
        return "{" + ",".join(repr(l) for l in self.labels) + "}"


EMPTY_LABEL_SET = LabelSet(())
