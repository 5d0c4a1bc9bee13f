"""Act, slot and value inventories derived from training annotations.

A turn's annotation may carry several dialogue acts.  The classifier emits
a single label, so labels are *act patterns*: the sorted, de-duplicated
act names of a turn joined by ``|`` (a turn with no acts gets ``null``).
The inventory keeps the most frequent patterns; rarer patterns fall back
to their highest-priority member act, where priority is global act-name
frequency in the training data.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import DomainError

PATTERN_SEPARATOR = "|"
NULL_PATTERN = "null"


def act_pattern(names: Iterable[str]) -> str:
    """Canonical label for a bag of act names."""
    unique = sorted({n.strip().lower() for n in names if n.strip()})
    return PATTERN_SEPARATOR.join(unique) if unique else NULL_PATTERN


@dataclass(frozen=True, eq=True)
class Ontology:
    """Closed inventories the decoder predicts over."""

    acts: tuple[str, ...]
    act_priority: tuple[str, ...]
    slots: tuple[str, ...]
    values: Mapping[str, tuple[str, ...]]
    max_patterns: int = 14
    _act_index: Mapping[str, int] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_act_index", {a: i for i, a in enumerate(self.acts)})

    @classmethod
    def derive(cls, turns: Sequence, max_patterns: int = 14) -> "Ontology":
        """Build inventories from a dataset's reference frames."""
        if max_patterns < 1:
            raise DomainError(f"need at least one act pattern, got {max_patterns}")
        pattern_counts: Counter[str] = Counter()
        name_counts: Counter[str] = Counter()
        slot_values: dict[str, Counter] = {}
        for turn in turns:
            ref = turn.reference
            pattern_counts[ref.act_pattern] += 1
            for name in ref.act_pattern.split(PATTERN_SEPARATOR):
                name_counts[name] += 1
            for slot, value in ref.pairs:
                slot_values.setdefault(slot, Counter())[value] += 1
        if not pattern_counts:
            raise DomainError("cannot derive an ontology from an empty dataset")
        ranked = sorted(pattern_counts.items(), key=lambda kv: (-kv[1], kv[0]))
        acts = tuple(p for p, _ in ranked[:max_patterns])
        priority = tuple(n for n, _ in sorted(name_counts.items(), key=lambda kv: (-kv[1], kv[0])))
        slots = tuple(sorted(slot_values))
        values = {slot: tuple(sorted(counter)) for slot, counter in slot_values.items()}
        return cls(acts=acts, act_priority=priority, slots=slots, values=values, max_patterns=max_patterns)

    def act_label(self, pattern: str) -> str:
        """Map a raw pattern to an inventory label.

        Patterns outside the inventory map to their highest-priority member
        act when that act is itself in the inventory, otherwise to the most
        frequent pattern overall.
        """
        if pattern in self._act_index:
            return pattern
        members = set(pattern.split(PATTERN_SEPARATOR))
        for name in self.act_priority:
            if name in members and name in self._act_index:
                return name
        return self.acts[0]

    def act_index(self, label: str) -> int:
        try:
            return self._act_index[label]
        except KeyError:
            raise DomainError(f"unknown act label {label!r}") from None

    def slot_values(self, slot: str) -> tuple[str, ...]:
        try:
            return self.values[slot]
        except KeyError:
            raise DomainError(f"unknown slot {slot!r}") from None

    def to_json_dict(self) -> dict:
        return {
            "acts": list(self.acts),
            "act_priority": list(self.act_priority),
            "slots": list(self.slots),
            "values": {s: list(v) for s, v in self.values.items()},
            "max_patterns": self.max_patterns,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "Ontology":
        return cls(
            acts=tuple(doc["acts"]),
            act_priority=tuple(doc["act_priority"]),
            slots=tuple(doc["slots"]),
            values={s: tuple(v) for s, v in doc["values"].items()},
            max_patterns=int(doc.get("max_patterns", 14)),
        )

    def canonical_hash(self) -> str:
        payload = json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()
