"""Anti-collision singulation: framed slotted Aloha and a binary prefix-tree walk.

Both protocols assume ideal collision detection: the reader can tell an
empty slot / probe from a single responder from a collision.
"""

from __future__ import annotations

import random
from bisect import bisect_left
from dataclasses import dataclass, field
from enum import Enum

from .frame_codec import TagId

TAG_BITS = 40


@dataclass(frozen=True)
class TagField:
    """A set of distinct tags in reader range plus the randomness seed."""

    tags: frozenset[TagId]
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "tags", frozenset(self.tags))


@dataclass(frozen=True)
class AlohaParams:
    frame_size: int  # slots per round
    max_rounds: int

    def __post_init__(self):
        if self.frame_size < 1 or self.max_rounds < 1:
            raise ValueError("frame_size and max_rounds must be >= 1")


class SlotKind(Enum):
    EMPTY = "empty"
    SINGLE = "single"
    COLLISION = "collision"


@dataclass(frozen=True)
class SlotOutcome:
    kind: SlotKind
    tag: TagId | None = None  # set for SINGLE
    count: int = 0  # responders in the slot


@dataclass(frozen=True)
class AlohaRoundLog:
    slots: tuple[SlotOutcome, ...]
    reads_completed: frozenset[TagId]


def aloha_singulate(
    field: TagField, params: AlohaParams
) -> tuple[list[AlohaRoundLog], set[TagId]]:
    """Framed slotted Aloha with muting: read tags stop responding.

    Each round every unread tag picks one of frame_size slots uniformly
    (seeded, so identical inputs give identical logs). Slots with exactly
    one responder yield a read. Stops when all tags are read or max_rounds
    is exhausted; an incomplete read set is a valid outcome.
    """
    rng = random.Random(field.rng_seed)
    unread = sorted(field.tags)  # fixed order so the seed fully determines picks
    read: set[TagId] = set()
    logs: list[AlohaRoundLog] = []
    for _ in range(params.max_rounds):
        if not unread:
            break
        slots: list[list[TagId]] = [[] for _ in range(params.frame_size)]
        for tag in unread:
            slots[rng.randrange(params.frame_size)].append(tag)
        outcomes = []
        for occupants in slots:
            if not occupants:
                outcomes.append(SlotOutcome(SlotKind.EMPTY))
            elif len(occupants) == 1:
                read.add(occupants[0])
                outcomes.append(SlotOutcome(SlotKind.SINGLE, occupants[0], 1))
            else:
                outcomes.append(SlotOutcome(SlotKind.COLLISION, None, len(occupants)))
        logs.append(AlohaRoundLog(tuple(outcomes), frozenset(read)))
        unread = [t for t in unread if t not in read]
    return logs, read


def tree_singulate(field: TagField) -> tuple[list[TagId], int]:
    """Depth-first binary prefix walk over the 40-bit tag values, MSB first.

    Each probe extends the current prefix by one bit; tags whose ID starts
    with the prefix respond. An empty probe prunes, a single responder is a
    read, multiple responders recurse on both extensions. Returns tags in
    ascending numeric order plus the number of probes issued.
    """
    values = sorted(t.value for t in field.tags)
    by_value = {t.value: t for t in field.tags}
    found: list[TagId] = []
    queries = 0

    def count_in(lo: int, hi: int) -> int:
        return bisect_left(values, hi) - bisect_left(values, lo)

    def walk(prefix: int, depth: int):
        nonlocal queries
        queries += 1
        lo = prefix << (TAG_BITS - depth)
        hi = (prefix + 1) << (TAG_BITS - depth)
        n = count_in(lo, hi)
        if n == 0:
            return
        if n == 1:
            idx = bisect_left(values, lo)
            found.append(by_value[values[idx]])
            return
        walk(prefix << 1, depth + 1)
        walk((prefix << 1) | 1, depth + 1)

    walk(0, 0)
    return found, queries
