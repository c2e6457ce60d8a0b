"""Turn per-image teacher outputs into per-tile presence labels.

For a tile ``t`` with images ``X(t)`` every aggregate has the form

    P_c(t) = 1 - prod_{x in X(t)} (1 - w_x * v_c(x))

where ``v_c`` is either a 0/1 prediction or a teacher probability and
``w_x`` is either 1 or the share of the image footprint inside the tile.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from reefscale.errors import NoImages, ProbabilityOutOfRange, RatioOutOfRange, UnknownClass

HARD = "hard"
WEIGHTED = "weighted"
DISTILLED = "distilled"
METHODS = (HARD, WEIGHTED, DISTILLED)

DEFAULT_BINARIZE_THRESHOLD = 0.5
DEFAULT_PRESENCE_THRESHOLD = 0.5
DEFAULT_MIN_COUNT = 200

AERIAL_CLASSES = (
    "Acropore_branched",
    "Acropore_digitised",
    "Acropore_tabular",
    "Dead_coral",
    "No_acropore_encrusting",
    "No_acropore_massive",
    "Millepore",
    "No_acropore_sub_massive",
    "Rock",
    "Rubble",
    "Sand",
    "Algae",
)
ALGAE_SOURCES = ("Algae_assembly", "Algae_drawn_up", "Algae_limestone", "Algae_sodding")
DROPPED_TEACHER_CLASSES = ("Blurred", "Homo", "Fish", "Sea_cucumber", "Sea_urchins")


@dataclass(frozen=True)
class ClassCatalog:
    """Mapping from teacher classes onto the aerial class set.

    Aerial classes without an explicit merge rule take the teacher class of
    the same name.
    """

    aerial_classes: tuple[str, ...]
    merge_rules: Mapping[str, frozenset[str]] = field(default_factory=dict)
    drop_list: frozenset[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "aerial_classes", tuple(self.aerial_classes))
        rules = {a: frozenset(self.merge_rules.get(a, (a,))) for a in self.aerial_classes}
        unknown = set(self.merge_rules) - set(self.aerial_classes)
        if unknown:
            raise ValueError(f"merge rules for classes outside the aerial set: {sorted(unknown)}")
        object.__setattr__(self, "merge_rules", rules)
        object.__setattr__(self, "drop_list", frozenset(self.drop_list))
        seen: dict[str, str] = {}
        for aerial, sources in rules.items():
            if not sources:
                raise ValueError(f"aerial class {aerial} has no teacher source")
            for s in sources:
                if s in seen:
                    raise ValueError(f"teacher class {s} merged into both {seen[s]} and {aerial}")
                seen[s] = aerial
        clash = self.drop_list & set(seen)
        if clash:
            raise ValueError(f"classes both dropped and merged: {sorted(clash)}")
        object.__setattr__(self, "_source_of", seen)

    def target_of(self, teacher_class: str) -> str | None:
        """Aerial class fed by ``teacher_class``; None when it is dropped."""
        if teacher_class in self.drop_list:
            return None
        try:
            return self._source_of[teacher_class]
        except KeyError:
            raise UnknownClass(f"teacher class {teacher_class!r} is not in the class catalog") from None

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ClassCatalog":
        return cls(
            aerial_classes=tuple(doc["aerial_classes"]),
            merge_rules={k: frozenset(v) for k, v in doc.get("merge_rules", {}).items()},
            drop_list=frozenset(doc.get("drop_list", ())),
        )

    def to_dict(self) -> dict:
        return {
            "aerial_classes": list(self.aerial_classes),
            "merge_rules": {k: sorted(v) for k, v in self.merge_rules.items()},
            "drop_list": sorted(self.drop_list),
        }


def default_catalog() -> ClassCatalog:
    return ClassCatalog(
        aerial_classes=AERIAL_CLASSES,
        merge_rules={"Algae": frozenset(ALGAE_SOURCES)},
        drop_list=frozenset(DROPPED_TEACHER_CLASSES),
    )


@dataclass
class SoftLabelSet:
    classes: tuple[str, ...]
    labels: dict[str, dict[str, float]]
    method: str = DISTILLED

    def count_present(self, cls: str, presence_threshold: float = DEFAULT_PRESENCE_THRESHOLD) -> int:
        return sum(1 for row in self.labels.values() if row.get(cls, 0.0) >= presence_threshold)


def remap_classes(probs: Mapping[str, float], catalog: ClassCatalog) -> dict[str, float]:
    """Fold teacher probabilities onto aerial classes.

    Merged classes take the maximum over their sources, dropped classes
    vanish, and aerial classes with no reported source are omitted.
    """
    out: dict[str, float] = {}
    for cls, p in probs.items():
        target = catalog.target_of(cls)
        if target is None:
            continue
        out[target] = max(out.get(target, 0.0), float(p))
    return {c: out[c] for c in catalog.aerial_classes if c in out}


def binarize(probs: Mapping[str, float], threshold: float = DEFAULT_BINARIZE_THRESHOLD) -> dict[str, int]:
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    return {c: int(p >= threshold) for c, p in probs.items()}


def presence_from_factors(factors: Iterable[float]) -> float:
    """``1 - prod(1 - a)`` for factors ``a`` in [0, 1].

    Accumulated as a sum of ``log1p(-a)`` so that many small factors do
    not lose precision to cancellation.
    """
    log_absent = 0.0
    for a in factors:
        if a >= 1.0:
            return 1.0
        log_absent += math.log1p(-a)
    return min(1.0, max(0.0, -math.expm1(log_absent)))


def _class_union(maps: Iterable[Mapping[str, float]], classes: Sequence[str] | None) -> list[str]:
    if classes is not None:
        return list(classes)
    seen: dict[str, None] = {}
    for m in maps:
        for c in m:
            seen.setdefault(c, None)
    return list(seen)


def aggregate_hard(images: Sequence[Mapping[str, int]], classes: Sequence[str] | None = None) -> dict[str, int]:
    """Class present on the tile iff at least one image predicts it."""
    if not images:
        raise NoImages("tile has no assigned images")
    return {c: int(any(h.get(c, 0) for h in images)) for c in _class_union(images, classes)}


def _check_ratio(r: float) -> float:
    if not 0.0 <= r <= 1.0:
        raise RatioOutOfRange(f"overlap ratio {r} outside [0, 1]")
    return float(r)


def aggregate_weighted(
    images: Sequence[tuple[Mapping[str, int], float]], classes: Sequence[str] | None = None
) -> dict[str, float]:
    """Presence from binary predictions, each weighted by its overlap ratio."""
    if not images:
        raise NoImages("tile has no assigned images")
    pairs = [(h, _check_ratio(r)) for h, r in images]
    return {
        c: presence_from_factors(r * h.get(c, 0) for h, r in pairs)
        for c in _class_union((h for h, _ in pairs), classes)
    }


def aggregate_distilled(
    images: Sequence[tuple[Mapping[str, float], float]], classes: Sequence[str] | None = None
) -> dict[str, float]:
    """Soft label from teacher probabilities weighted by overlap ratio."""
    if not images:
        raise NoImages("tile has no assigned images")
    pairs = []
    for p, r in images:
        for c, v in p.items():
            if not 0.0 <= v <= 1.0:
                raise ProbabilityOutOfRange(f"probability {v} for class {c} outside [0, 1]")
        pairs.append((p, _check_ratio(r)))
    return {
        c: presence_from_factors(r * p.get(c, 0.0) for p, r in pairs)
        for c in _class_union((p for p, _ in pairs), classes)
    }


def aggregate(
    method: str,
    images: Sequence[tuple[Mapping[str, float], float]],
    classes: Sequence[str] | None = None,
    threshold: float = DEFAULT_BINARIZE_THRESHOLD,
) -> dict[str, float]:
    """Dispatch on ``method`` given (remapped probabilities, overlap ratio) pairs."""
    if method == HARD:
        return {c: float(v) for c, v in aggregate_hard([binarize(p, threshold) for p, _ in images], classes).items()}
    if method == WEIGHTED:
        return aggregate_weighted([(binarize(p, threshold), r) for p, r in images], classes)
    if method == DISTILLED:
        return aggregate_distilled(images, classes)
    raise ValueError(f"unknown aggregation method {method!r}; expected one of {METHODS}")


def prune_rare_classes(
    labels: SoftLabelSet,
    min_count: int = DEFAULT_MIN_COUNT,
    presence_threshold: float = DEFAULT_PRESENCE_THRESHOLD,
) -> SoftLabelSet:
    """Drop classes present (label >= threshold) on fewer than ``min_count`` tiles."""
    if min_count < 0:
        raise ValueError(f"min_count must be >= 0, got {min_count}")
    keep = tuple(c for c in labels.classes if labels.count_present(c, presence_threshold) >= min_count)
    return SoftLabelSet(
        classes=keep,
        labels={t: {c: row[c] for c in keep if c in row} for t, row in labels.labels.items()},
        method=labels.method,
    )
