"""Decompositions of the coordinate indices {1,...,n} into disjoint groups.

Indices are 1-based everywhere in this module; `Partition.indices` converts
one group to 0-based array indices for numpy code.
"""
import json
import logging
from functools import lru_cache
from typing import Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from dcc_framework.exceptions import RejectedInputError

logger = logging.getLogger(__name__)

MAX_COUNT_DIMENSION = 64
MAX_ENUMERATION_DIMENSION = 10

Group = Tuple[int, ...]


def _canonical(groups: Iterable[Iterable[int]]) -> Tuple[Group, ...]:
    normalized = [tuple(sorted(int(i) for i in g)) for g in groups]
    return tuple(sorted(normalized, key=lambda g: (g[0] if g else 0, g)))


class Partition(BaseModel):
    """An immutable decomposition p = {g1,...,gm} of {1,...,n}.

    Groups are kept in canonical order (each group sorted, groups sorted by
    their least element), so two partitions that differ only in ordering
    compare equal.
    """
    model_config = ConfigDict(frozen=True)

    n: int = Field(ge=1)
    groups: Tuple[Group, ...]

    def __init__(self, n: int, groups: Iterable[Iterable[int]]):
        super().__init__(n=n, groups=_canonical(groups))

    @property
    def m(self) -> int:
        return len(self.groups)

    @property
    def is_trivial(self) -> bool:
        return self.m == 1

    def indices(self, group_index: int) -> np.ndarray:
        """0-based indices of one group."""
        return np.array(self.groups[group_index], dtype=int) - 1

    def group_sizes(self) -> List[int]:
        return [len(g) for g in self.groups]

    def as_lists(self) -> List[List[int]]:
        return [list(g) for g in self.groups]

    def __str__(self) -> str:
        return format_partition(self)


class ValidationReport(BaseModel):
    """Result of `validate`; `diagnostics` names the first violated clause."""
    valid: bool
    diagnostics: str = ""
    trivial: bool = False

    def __bool__(self) -> bool:
        return self.valid


def validate(p: Partition) -> ValidationReport:
    """
    Check that the groups of p are nonempty, disjoint and cover {1,...,n}.

    The trivial one-group partition is valid but flagged.

    Args:
        p: Partition to check

    Returns:
        ValidationReport (never raises)
    """
    seen = set()
    for position, group in enumerate(p.groups):
        if not group:
            return ValidationReport(valid=False, diagnostics=f"group {position} is empty")
        out_of_range = [i for i in group if not 1 <= i <= p.n]
        if out_of_range:
            return ValidationReport(
                valid=False, diagnostics=f"indices {out_of_range} outside 1..{p.n}")
        if len(set(group)) != len(group):
            return ValidationReport(
                valid=False, diagnostics=f"group {position} repeats an index")
        shared = seen.intersection(group)
        if shared:
            return ValidationReport(
                valid=False, diagnostics=f"groups overlap on indices {sorted(shared)}")
        seen.update(group)

    missing = sorted(set(range(1, p.n + 1)) - seen)
    if missing:
        return ValidationReport(valid=False, diagnostics=f"indices {missing} not covered")
    if p.is_trivial:
        return ValidationReport(valid=True, trivial=True,
                                diagnostics="trivial partition (m = 1)")
    return ValidationReport(valid=True)


def require_valid(p: Partition, allow_trivial: bool = False):
    """Raise RejectedInputError unless p is a usable decomposition."""
    report = validate(p)
    if not report.valid:
        raise RejectedInputError(f"invalid partition: {report.diagnostics}")
    if report.trivial and not allow_trivial:
        raise RejectedInputError("a CC decomposition needs at least two groups")


@lru_cache(maxsize=None)
def bell_number(n: int) -> int:
    """Bell(n) computed exactly with the Bell triangle."""
    row = [1]
    for _ in range(n - 1):
        next_row = [row[-1]]
        for value in row:
            next_row.append(next_row[-1] + value)
        row = next_row
    return row[-1]


def count_partitions(n: int) -> int:
    """
    Number of partitions of {1,...,n} with at least two groups.

    Args:
        n: Dimension, 1 <= n <= 64

    Returns:
        Bell(n) - 1 as an exact integer
    """
    if not 1 <= n <= MAX_COUNT_DIMENSION:
        raise RejectedInputError(f"n must be in 1..{MAX_COUNT_DIMENSION}, got {n}")
    return bell_number(n) - 1


def refine(p: Partition, group_index: int, split: Sequence[Iterable[int]]) -> Partition:
    """
    Divide one group of p into two.

    Args:
        p: Partition to refine
        group_index: Position of the group in `p.groups`
        split: Two disjoint nonempty subsets covering that group

    Returns:
        Partition with one more group
    """
    if not 0 <= group_index < p.m:
        raise RejectedInputError(f"group index {group_index} out of range 0..{p.m - 1}")
    parts = [set(part) for part in split]
    if len(parts) != 2 or not all(parts):
        raise RejectedInputError("split must consist of two nonempty subsets")
    if parts[0] & parts[1]:
        raise RejectedInputError(f"split subsets overlap on {sorted(parts[0] & parts[1])}")
    target = set(p.groups[group_index])
    if parts[0] | parts[1] != target:
        raise RejectedInputError(f"split does not cover group {sorted(target)}")

    groups = [g for i, g in enumerate(p.groups) if i != group_index] + [tuple(x) for x in parts]
    return Partition(p.n, groups)


def is_refinement(fine: Partition, coarse: Partition) -> bool:
    """True if every group of `fine` lies inside some group of `coarse`."""
    if fine.n != coarse.n:
        return False
    owner = {}
    for position, group in enumerate(coarse.groups):
        for i in group:
            owner[i] = position
    return all(len({owner.get(i) for i in group}) == 1 and owner.get(group[0]) is not None
               for group in fine.groups)


def refinement_chain(p: Partition) -> List[Partition]:
    """
    Refine p one split at a time down to all singletons.

    The largest group (lowest index on ties) is halved at each step, which
    gives the hierarchy p, p', ..., {{1},...,{n}}.

    Args:
        p: Starting partition

    Returns:
        List of partitions starting with p, each with one more group
    """
    chain = [p]
    current = p
    while current.m < current.n:
        sizes = current.group_sizes()
        position = int(np.argmax(sizes))
        group = current.groups[position]
        half = len(group) // 2
        current = refine(current, position, (group[:half], group[half:]))
        chain.append(current)
    return chain


def singletons(n: int) -> Partition:
    return Partition(n, [[i] for i in range(1, n + 1)])


def _restricted_growth_strings(n: int) -> Iterator[List[int]]:
    labels = [0] * n

    def extend(position: int, largest: int):
        if position == n:
            yield list(labels)
            return
        for label in range(largest + 2):
            labels[position] = label
            yield from extend(position + 1, max(largest, label))

    if n == 0:
        return
    yield from extend(1, 0)


def enumerate_all(n: int) -> List[Partition]:
    """
    Every partition of {1,...,n} with m >= 2, each exactly once.

    Args:
        n: Dimension, at most 10

    Returns:
        Canonically ordered partitions
    """
    if not 1 <= n <= MAX_ENUMERATION_DIMENSION:
        raise RejectedInputError(
            f"enumeration is limited to 1 <= n <= {MAX_ENUMERATION_DIMENSION}, got {n}")
    partitions = []
    for labels in _restricted_growth_strings(n):
        m = max(labels) + 1
        if m < 2:
            continue
        groups = [[] for _ in range(m)]
        for index, label in enumerate(labels, start=1):
            groups[label].append(index)
        partitions.append(Partition(n, groups))
    partitions.sort(key=lambda p: (p.m, p.groups))
    return partitions


def default_decompose(n: int, k: int, seed: Optional[int] = None,
                      rng: Optional[np.random.Generator] = None) -> Partition:
    """
    Cut a seeded random permutation of {1,...,n} into k near-equal blocks.

    Args:
        n: Dimension
        k: Number of groups, 2 <= k <= n
        seed: Seed used when no generator is given
        rng: Generator to draw the permutation from

    Returns:
        Partition whose group sizes differ by at most one
    """
    if not 2 <= k <= n:
        raise RejectedInputError(f"need 2 <= k <= n, got k={k}, n={n}")
    rng = rng if rng is not None else np.random.default_rng(seed)
    permutation = rng.permutation(n) + 1
    blocks = np.array_split(permutation, k)
    return Partition(n, [block.tolist() for block in blocks])


def parse_partition(literal: str, n: Optional[int] = None) -> Partition:
    """
    Parse a literal such as ``[[1,2],[3]]`` (1-based indices).

    Args:
        literal: Partition literal
        n: Dimension; the largest index is used when omitted

    Returns:
        Partition (not validated)
    """
    try:
        groups = json.loads(literal)
    except json.JSONDecodeError as e:
        raise RejectedInputError(f"malformed partition literal {literal!r}: {e}") from e
    if (not isinstance(groups, list) or not groups
            or not all(isinstance(g, list) and all(isinstance(i, int) for i in g) for g in groups)):
        raise RejectedInputError(f"partition literal must be a list of integer lists: {literal!r}")
    if n is None:
        n = max((i for g in groups for i in g), default=0)
    if n < 1:
        raise RejectedInputError(f"partition literal has no indices: {literal!r}")
    return Partition(n, groups)


def format_partition(p: Partition) -> str:
    return json.dumps(p.as_lists(), separators=(",", ":"))
