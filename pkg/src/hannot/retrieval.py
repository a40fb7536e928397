"""Similarity ranking, keyword voting, annotation propagation, and the
leave-one-out evaluation harness.

Candidates are pre-filtered by specialty/class, scored with a
Hausdorff-family distance, gated by the user-preset acceptance threshold,
and returned in deterministic (distance, image_id) order. Accepted
results vote on keywords with weight 1/(1+distance).

Distances run on the exact grid-accelerated path; grids are sized to the
largest frame in play so every lookup stays in bounds, which leaves the
values identical to the brute-force definitions.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime
from enum import Enum

from .errors import EmptyCorpusError, FingerprintMismatchError, InsufficientDataError, InvalidRecordError
from .geometry import (
    DistanceGrid,
    NormKind,
    build_distance_grid,
    directed_hausdorff_fast,
    modified_directed_hausdorff_fast,
)
from .image import FeatureDescriptor
from .store import AnnotationRecord, CorpusFilter, ImageEntry, Store, utc_now

__all__ = [
    "DistanceVariant",
    "RetrievalConfig",
    "QueryResult",
    "KeywordVote",
    "ClassAccuracy",
    "EvaluationReport",
    "descriptor_distance",
    "query_similar",
    "vote_keywords",
    "propagate_annotation",
    "evaluate_leave_one_out",
]


class DistanceVariant(Enum):
    HAUSDORFF = "h"
    MODIFIED_HAUSDORFF = "mh"

    @classmethod
    def from_token(cls, token: str) -> "DistanceVariant":
        try:
            return cls(token)
        except ValueError:
            raise ValueError(f"variant must be 'mh' or 'h', got {token!r}") from None


@dataclass(frozen=True)
class RetrievalConfig:
    """Similarity settings; the defaults are the single source of truth
    for the CLI and the API alike."""

    variant: DistanceVariant = DistanceVariant.MODIFIED_HAUSDORFF
    norm: NormKind = NormKind.EUCLIDEAN
    top_k: int = 5
    acceptance_threshold: float = 8.0

    def __post_init__(self):
        if self.top_k < 1:
            raise ValueError("top_k must be at least 1")
        if self.acceptance_threshold < 0:
            raise ValueError("acceptance_threshold must be non-negative")


@dataclass(frozen=True)
class QueryResult:
    image_id: str
    distance: float
    accepted: bool
    annotations: tuple[AnnotationRecord, ...]

    def to_wire(self) -> dict:
        return {
            "image_id": self.image_id,
            "distance": self.distance,
            "accepted": self.accepted,
            "annotations": [r.to_wire() for r in self.annotations],
        }


@dataclass(frozen=True)
class KeywordVote:
    keyword: str
    score: float
    supporters: tuple[str, ...]

    def to_wire(self) -> dict:
        return {
            "keyword": self.keyword,
            "score": self.score,
            "supporters": list(self.supporters),
        }


class _GridCache:
    """Per-run cache of distance grids, all sized to one shared frame."""

    def __init__(self, width: int, height: int, norm: NormKind):
        self.width = width
        self.height = height
        self.norm = norm
        self._grids: dict[str, DistanceGrid] = {}

    def grid(self, key: str, descriptor: FeatureDescriptor) -> DistanceGrid:
        g = self._grids.get(key)
        if g is None:
            g = build_distance_grid(descriptor.points, self.width, self.height, self.norm)
            self._grids[key] = g
        return g


def _pair_distance(
    a: FeatureDescriptor,
    grid_of_a: DistanceGrid,
    b: FeatureDescriptor,
    grid_of_b: DistanceGrid,
    variant: DistanceVariant,
) -> float:
    if variant is DistanceVariant.HAUSDORFF:
        return max(
            directed_hausdorff_fast(a.points, grid_of_b),
            directed_hausdorff_fast(b.points, grid_of_a),
        )
    return max(
        modified_directed_hausdorff_fast(a.points, grid_of_b),
        modified_directed_hausdorff_fast(b.points, grid_of_a),
    )


def descriptor_distance(
    a: FeatureDescriptor,
    b: FeatureDescriptor,
    variant: DistanceVariant = DistanceVariant.MODIFIED_HAUSDORFF,
    norm: NormKind = NormKind.EUCLIDEAN,
) -> float:
    """Configured distance between two descriptors (symmetric)."""
    width = max(a.source_width, b.source_width)
    height = max(a.source_height, b.source_height)
    ga = build_distance_grid(a.points, width, height, norm)
    gb = build_distance_grid(b.points, width, height, norm)
    return _pair_distance(a, ga, b, gb, variant)


def query_similar(
    query: FeatureDescriptor,
    filt: CorpusFilter,
    store: Store,
    config: RetrievalConfig = RetrievalConfig(),
    exclude_image_id: str | None = None,
) -> list[QueryResult]:
    """Rank filtered candidates against the query descriptor.

    Returns the ``top_k`` nearest, each flagged accepted when its distance
    is within the threshold; ties order by image_id. ``exclude_image_id``
    supports leave-one-out evaluation.
    """
    if query.params_fingerprint != store.params.fingerprint:
        raise FingerprintMismatchError(
            "query descriptor was extracted with different parameters than the corpus"
        )
    candidates = [
        (entry, records)
        for entry, records in store.query_candidates(filt)
        if entry.image_id != exclude_image_id
    ]
    if not candidates:
        raise EmptyCorpusError("no corpus image matches the filter")

    width = max([query.source_width] + [e.descriptor.source_width for e, _ in candidates])
    height = max([query.source_height] + [e.descriptor.source_height for e, _ in candidates])
    cache = _GridCache(width, height, config.norm)
    query_grid = cache.grid("\x00query", query)

    scored = []
    for entry, records in candidates:
        grid = cache.grid(entry.image_id, entry.descriptor)
        d = _pair_distance(query, query_grid, entry.descriptor, grid, config.variant)
        scored.append((d, entry.image_id, records))
    scored.sort(key=lambda item: (item[0], item[1]))

    return [
        QueryResult(
            image_id=image_id,
            distance=d,
            accepted=d <= config.acceptance_threshold,
            annotations=tuple(records),
        )
        for d, image_id, records in scored[: config.top_k]
    ]


def vote_keywords(
    results: list[QueryResult], config: RetrievalConfig = RetrievalConfig()
) -> list[KeywordVote]:
    """Aggregate keyword suggestions from the accepted results.

    Each accepted image contributes weight 1/(1+distance) to every distinct
    keyword it carries, counted once per image even when several physicians
    repeat it. Sorted by score descending, then keyword.
    """
    scores: dict[str, float] = {}
    supporters: dict[str, list[str]] = {}
    for result in results:
        if not result.accepted:
            continue
        weight = 1.0 / (1.0 + result.distance)
        seen: set[str] = set()
        for record in result.annotations:
            for keyword in record.keywords:
                if keyword in seen:
                    continue
                seen.add(keyword)
                scores[keyword] = scores.get(keyword, 0.0) + weight
                supporters.setdefault(keyword, []).append(result.image_id)
    votes = [
        KeywordVote(keyword=k, score=scores[k], supporters=tuple(supporters[k]))
        for k in scores
    ]
    votes.sort(key=lambda v: (-v.score, v.keyword))
    return votes


def _latest_record(records: list[AnnotationRecord]) -> AnnotationRecord:
    return max(records, key=lambda r: (r.created_at, r.physician_id))


def propagate_annotation(
    selected_image_id: str,
    new_image: ImageEntry,
    physician_id: str,
    store: Store,
    edited_keywords: list[str] | None = None,
    now: datetime | None = None,
) -> AnnotationRecord:
    """Assign the selected image's annotations to the new image.

    The new image is registered if needed (duplicates resolve to the prior
    id). Classification comes from the selected image's most recent record;
    keywords are the deduplicated union of its records unless the physician
    supplies an edited list.
    """
    source_records = store.records_for(selected_image_id)
    if not source_records:
        raise InvalidRecordError(
            "selected_image_id", f"image {selected_image_id!r} has no annotations to propagate"
        )
    target_id = store.register_image(new_image).image_id

    latest = _latest_record(source_records)
    if edited_keywords is not None:
        keywords = tuple(edited_keywords)
    else:
        keywords = []
        for record in source_records:
            for keyword in record.keywords:
                if keyword not in keywords:
                    keywords.append(keyword)
        keywords = tuple(keywords)

    record = AnnotationRecord(
        image_id=target_id,
        specialty=latest.specialty,
        class_name=latest.class_name,
        sub_class=latest.sub_class,
        keywords=keywords,
        physician_id=physician_id,
        created_at=now or utc_now(),
    )
    return store.add_annotation(record)


@dataclass(frozen=True)
class ClassAccuracy:
    specialty: str
    class_name: str
    correct: int
    total: int

    @property
    def percent(self) -> float:
        return 100.0 * self.correct / self.total

    def to_wire(self) -> dict:
        return {
            "specialty": self.specialty,
            "class_name": self.class_name,
            "correct": self.correct,
            "total": self.total,
            "percent": self.percent,
        }


@dataclass(frozen=True)
class EvaluationReport:
    classes: tuple[ClassAccuracy, ...]
    correct: int
    total: int

    @property
    def percent(self) -> float:
        return 100.0 * self.correct / self.total

    def to_wire(self) -> dict:
        return {
            "classes": [c.to_wire() for c in self.classes],
            "correct": self.correct,
            "total": self.total,
            "percent": self.percent,
        }


def _canon(text: str) -> str:
    return text.strip().casefold()


def evaluate_leave_one_out(
    store: Store, config: RetrievalConfig = RetrievalConfig()
) -> EvaluationReport:
    """Hold out each annotated image, re-query it, and score class recovery.

    An image counts as correctly annotated when its top accepted result
    carries a record with the same (class_name, sub_class). Images are
    labelled by their most recent record. Every (specialty, class) group
    needs at least two images.
    """
    labels: dict[str, AnnotationRecord] = {}
    for image_id in store.image_ids():
        records = store.records_for(image_id)
        if records:
            labels[image_id] = _latest_record(records)

    groups: dict[tuple[str, str], list[str]] = {}
    for image_id, label in labels.items():
        groups.setdefault((_canon(label.specialty), _canon(label.class_name)), []).append(image_id)
    for (spec, cls), members in sorted(groups.items()):
        if len(members) < 2:
            raise InsufficientDataError(
                f"class {spec!r}/{cls!r} has only {len(members)} image(s); need at least 2"
            )

    counts: dict[tuple[str, str], list[int]] = {key: [0, 0] for key in groups}
    display: dict[tuple[str, str], tuple[str, str]] = {}
    for key, members in groups.items():
        label = labels[min(members)]
        display[key] = (label.specialty.strip(), label.class_name.strip())

    for image_id in sorted(labels):
        label = labels[image_id]
        results = query_similar(
            store.entry(image_id).descriptor,
            CorpusFilter(specialty=label.specialty),
            store,
            config,
            exclude_image_id=image_id,
        )
        top_accepted = next((r for r in results if r.accepted), None)
        correct = top_accepted is not None and any(
            _canon(r.class_name) == _canon(label.class_name)
            and _canon(r.sub_class) == _canon(label.sub_class)
            for r in top_accepted.annotations
        )
        key = (_canon(label.specialty), _canon(label.class_name))
        counts[key][1] += 1
        counts[key][0] += int(correct)

    classes = []
    for key in sorted(counts):
        spec_name, class_name = display[key]
        correct, total = counts[key]
        classes.append(
            ClassAccuracy(specialty=spec_name, class_name=class_name, correct=correct, total=total)
        )
    overall_correct = sum(c.correct for c in classes)
    overall_total = sum(c.total for c in classes)
    return EvaluationReport(classes=tuple(classes), correct=overall_correct, total=overall_total)
