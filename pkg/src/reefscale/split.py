"""Temporal multilabel stratified train/val/test splitting.

Each temporal group (e.g. survey year) is split on its own with iterative
stratification, first into train vs. the rest and then the rest into
validation vs. test; the per-group parts are concatenated.
"""

from __future__ import annotations

import zlib
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from reefscale.errors import EmptyInput

TRAIN, VAL, TEST = "train", "val", "test"
SUBSETS = (TRAIN, VAL, TEST)
DEFAULT_RATIOS = (0.6, 0.2, 0.2)


@dataclass(frozen=True)
class SampleLabels:
    sample_id: str
    group_key: str
    label_set: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "label_set", frozenset(self.label_set))


def _check_ratios(ratios: Sequence[float], n: int) -> None:
    if len(ratios) != n or any(r <= 0 for r in ratios):
        raise ValueError(f"expected {n} positive ratios, got {tuple(ratios)}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")


def iterative_stratify(
    samples: Sequence[SampleLabels], ratios: Sequence[float], seed: int = 0
) -> tuple[list[SampleLabels], list[SampleLabels]]:
    """Split samples in two, keeping every label's proportions near ``ratios``.

    Repeatedly takes the label with the fewest unassigned samples and sends
    each of its samples to the subset that still wants the most of that
    label. Subsets that have reached their size are skipped while any other
    subset still has room. Ties go to the subset with more room overall,
    then to a seeded coin. Samples without labels fill the remaining room
    at the end.
    """
    _check_ratios(ratios, 2)
    if not samples:
        raise EmptyInput("no samples to split")
    rng = np.random.default_rng(seed)
    n = len(samples)
    ratios = np.asarray(ratios, dtype=float)
    capacity = ratios * n
    label_totals = Counter(lab for s in samples for lab in s.label_set)
    wanted = {lab: ratios * cnt for lab, cnt in label_totals.items()}

    pending: dict[str, list[int]] = defaultdict(list)
    for i, s in enumerate(samples):
        for lab in s.label_set:
            pending[lab].append(i)
    assigned = np.full(n, -1, dtype=int)

    def pick(scores: np.ndarray) -> int:
        # full subsets only compete once every subset is full
        open_ = capacity > 0
        if open_.any():
            scores = np.where(open_, scores, -np.inf)
        best = np.flatnonzero(scores == scores.max())
        if len(best) == 1:
            return int(best[0])
        room = capacity[best]
        best = best[room == room.max()]
        return int(best[0]) if len(best) == 1 else int(rng.choice(best))

    def place(i: int, subset: int) -> None:
        assigned[i] = subset
        capacity[subset] -= 1
        for lab in samples[i].label_set:
            wanted[lab][subset] -= 1

    while True:
        remaining = {lab: [i for i in idx if assigned[i] < 0] for lab, idx in pending.items()}
        remaining = {lab: idx for lab, idx in remaining.items() if idx}
        if not remaining:
            break
        label = min(remaining, key=lambda lab: (len(remaining[lab]), lab))
        for i in remaining[label]:
            place(i, pick(wanted[label]))
        del pending[label]

    for i in np.flatnonzero(assigned < 0):
        place(int(i), pick(capacity.copy()))

    first = [s for s, a in zip(samples, assigned) if a == 0]
    second = [s for s, a in zip(samples, assigned) if a == 1]
    return first, second


def group_seed(seed: int, group_key: str) -> int:
    """Per-group seed that does not depend on the order groups are visited."""
    return int(np.random.SeedSequence([seed, zlib.crc32(str(group_key).encode())]).generate_state(1)[0])


def temporal_split(
    samples: Sequence[SampleLabels], ratios: Sequence[float] = DEFAULT_RATIOS, seed: int = 0
) -> dict[str, str]:
    """Assign every sample to train, val or test, stratifying each group.

    Returns:
        Mapping sample_id -> subset name.
    """
    _check_ratios(ratios, 3)
    if not samples:
        raise EmptyInput("no samples to split")
    r_tr, r_val, r_te = ratios
    groups: dict[str, list[SampleLabels]] = defaultdict(list)
    for s in samples:
        groups[s.group_key].append(s)
    assignment: dict[str, str] = {}
    for key in sorted(groups):
        gseed = group_seed(seed, key)
        train, rest = iterative_stratify(groups[key], (r_tr, r_val + r_te), gseed)
        val, test = [], []
        if rest:
            val, test = iterative_stratify(rest, (r_val / (r_val + r_te), r_te / (r_val + r_te)), gseed + 1)
        for subset, members in ((TRAIN, train), (VAL, val), (TEST, test)):
            for s in members:
                if s.sample_id in assignment:
                    raise ValueError(f"duplicate sample_id {s.sample_id!r}")
                assignment[s.sample_id] = subset
    return assignment


def split_report(assignment: dict[str, str], samples: Iterable[SampleLabels]) -> dict[str, tuple[float, float, float, int]]:
    """Per class: (train, val, test) frequency and total count.

    Classes that no sample carries are omitted.
    """
    counts: dict[str, Counter] = defaultdict(Counter)
    for s in samples:
        subset = assignment[s.sample_id]
        for lab in s.label_set:
            counts[lab][subset] += 1
    report = {}
    for lab in sorted(counts):
        total = sum(counts[lab].values())
        report[lab] = tuple(counts[lab][k] / total for k in SUBSETS) + (total,)
    return report
