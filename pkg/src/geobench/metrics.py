"""Span alignment and the eight evaluation metrics.

Recognition quality is scored with precision/recall/F1 (or accuracy alone
for partially annotated corpora); resolution quality with mean and median
great-circle error, the fraction of errors within a threshold, and a
log-scaled normalized area under the distance error curve. All functions
here are pure and safe for concurrent use.

Degenerate denominators never raise: they yield 0 (or an absent value) and
append a machine-readable note to the caller's warning list, so that long
benchmark runs always complete.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import fmean, median
from typing import NamedTuple

from .corpus import GeoPoint

EARTH_RADIUS_KM = 6371.0088
DEFAULT_THRESHOLD_KM = 161.0
DEFAULT_D_MAX_KM = 20039.0

MATCH_MODES = ("exact", "overlap")


@dataclass(frozen=True, slots=True)
class MetricsConfig:
    match_mode: str = "exact"
    threshold_km: float = DEFAULT_THRESHOLD_KM
    d_max_km: float = DEFAULT_D_MAX_KM
    earth_radius_km: float = EARTH_RADIUS_KM

    def __post_init__(self):
        if self.match_mode not in MATCH_MODES:
            raise ValueError(f"match_mode must be one of {MATCH_MODES}, got {self.match_mode!r}")
        if not self.threshold_km > 0:
            raise ValueError("threshold_km must be > 0")
        if not self.d_max_km > self.threshold_km:
            raise ValueError("d_max_km must be > threshold_km")
        if not self.earth_radius_km > 0:
            raise ValueError("earth_radius_km must be > 0")


@dataclass(frozen=True, slots=True)
class Matching:
    """One-to-one alignment between gold and predicted span indices."""

    pairs: tuple[tuple[int, int], ...]
    unmatched_gold: tuple[int, ...]
    unmatched_pred: tuple[int, ...]

    @property
    def gold_count(self) -> int:
        return len(self.pairs) + len(self.unmatched_gold)

    @property
    def pred_count(self) -> int:
        return len(self.pairs) + len(self.unmatched_pred)


class DistanceErrors(NamedTuple):
    distances: list[float]
    unresolved_matched: int
    missing_gold_points: int


def _check_sorted(spans, side: str) -> None:
    prev = None
    for s in spans:
        key = (s.start, s.end)
        if prev is not None and key < prev:
            raise ValueError(f"{side} spans not sorted ascending by (start, end)")
        prev = key


def _spans_overlap(a, b) -> bool:
    return a.start < b.end and b.start < a.end


def _matching_size(adj, n_gold, banned_gold, banned_pred) -> int:
    # Kuhn's augmenting-path matching over the gold side.
    match_of_pred: dict[int, int] = {}

    def try_assign(g, visited):
        for p in adj[g]:
            if p in banned_pred or p in visited:
                continue
            visited.add(p)
            if p not in match_of_pred or try_assign(match_of_pred[p], visited):
                match_of_pred[p] = g
                return True
        return False

    size = 0
    for g in range(n_gold):
        if g in banned_gold:
            continue
        if try_assign(g, set()):
            size += 1
    return size


def _align_overlap(gold, pred) -> list[tuple[int, int]]:
    # Maximum-cardinality one-to-one matching of intersecting intervals;
    # among maximum matchings, the lexicographically smallest pair list.
    adj = [[j for j, p in enumerate(pred) if _spans_overlap(g, p)] for g in gold]
    total = _matching_size(adj, len(gold), banned_gold=set(), banned_pred=set())
    pairs: list[tuple[int, int]] = []
    used_pred: set[int] = set()
    decided_gold: set[int] = set()
    for g in range(len(gold)):
        chosen = None
        for p in adj[g]:
            if p in used_pred:
                continue
            rest = _matching_size(adj, len(gold), decided_gold | {g}, used_pred | {p})
            if len(pairs) + 1 + rest == total:
                chosen = p
                break
        decided_gold.add(g)
        if chosen is not None:
            pairs.append((g, chosen))
            used_pred.add(chosen)
    return pairs


def align(gold, pred, mode: str = "exact") -> Matching:
    """Align gold and predicted spans one-to-one.

    Exact mode pairs spans with identical (start, end). Overlap mode finds
    a maximum-cardinality matching between intersecting spans, choosing the
    lexicographically smallest pair list for determinism. Both sides must
    be sorted ascending by (start, end).
    """
    if mode not in MATCH_MODES:
        raise ValueError(f"unknown match mode {mode!r}")
    _check_sorted(gold, "gold")
    _check_sorted(pred, "pred")
    if mode == "exact":
        by_span: dict[tuple[int, int], list[int]] = {}
        for j, p in enumerate(pred):
            by_span.setdefault((p.start, p.end), []).append(j)
        pairs = []
        for i, g in enumerate(gold):
            slot = by_span.get((g.start, g.end))
            if slot:
                pairs.append((i, slot.pop(0)))
    else:
        pairs = _align_overlap(gold, pred)
    matched_gold = {i for i, _ in pairs}
    matched_pred = {j for _, j in pairs}
    return Matching(
        pairs=tuple(pairs),
        unmatched_gold=tuple(i for i in range(len(gold)) if i not in matched_gold),
        unmatched_pred=tuple(j for j in range(len(pred)) if j not in matched_pred),
    )


def precision_recall_f1(m: Matching, warnings: list[str] | None = None) -> tuple[float, float, float]:
    """Micro precision/recall/F1 of a matching; degenerate cases give 0 plus a warning."""
    matched = len(m.pairs)
    if m.pred_count:
        precision = matched / m.pred_count
    else:
        precision = 0.0
        if warnings is not None:
            warnings.append("precision: no predicted toponyms")
    if m.gold_count:
        recall = matched / m.gold_count
    else:
        recall = 0.0
        if warnings is not None:
            warnings.append("recall: no gold toponyms")
    f_score = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f_score


def recognition_accuracy(m: Matching, warnings: list[str] | None = None) -> float:
    """Fraction of annotated toponyms that were recognized (matched)."""
    if not m.gold_count:
        if warnings is not None:
            warnings.append("accuracy: no gold toponyms")
        return 0.0
    return len(m.pairs) / m.gold_count


def geodesic_distance(a: GeoPoint, b: GeoPoint, radius_km: float = EARTH_RADIUS_KM) -> float:
    """Haversine great-circle distance in kilometers on a sphere."""
    lat1 = math.radians(a.lat)
    lat2 = math.radians(b.lat)
    dlat = math.radians(b.lat - a.lat)
    dlon = math.radians(b.lon - a.lon)
    h = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2) ** 2
    return 2 * radius_km * math.asin(min(1.0, math.sqrt(h)))


def distance_errors(
    matching: Matching,
    gold,
    pred,
    radius_km: float = EARTH_RADIUS_KM,
    warnings: list[str] | None = None,
) -> DistanceErrors:
    """Per-pair great-circle errors over the matched toponyms.

    Pairs whose prediction carries no point count as unresolved; pairs
    whose gold annotation carries no point cannot be scored and are
    skipped with a warning.
    """
    distances: list[float] = []
    unresolved = 0
    missing_gold = 0
    for gi, pi in matching.pairs:
        p_point = pred[pi].point
        if p_point is None:
            unresolved += 1
            continue
        g_point = gold[gi].point
        if g_point is None:
            missing_gold += 1
            continue
        distances.append(geodesic_distance(g_point, p_point, radius_km))
    if missing_gold and warnings is not None:
        warnings.append(f"distance: {missing_gold} matched pairs skipped (gold annotation has no coordinates)")
    return DistanceErrors(distances, unresolved, missing_gold)


def mean_median(distances: list[float], warnings: list[str] | None = None) -> tuple[float | None, float | None]:
    """Arithmetic mean and median of the error distances; absent when empty."""
    if not distances:
        if warnings is not None:
            warnings.append("mean/median: no resolved pairs to score")
        return None, None
    return fmean(distances), median(distances)


def accuracy_at_threshold(distances: list[float], threshold_km: float = DEFAULT_THRESHOLD_KM) -> float | None:
    """Fraction of error distances within the threshold (inclusive); absent when empty."""
    if not threshold_km > 0:
        raise ValueError("threshold_km must be > 0")
    if not distances:
        return None
    return sum(1 for d in distances if d <= threshold_km) / len(distances)


def auc_distance(
    distances: list[float], d_max_km: float = DEFAULT_D_MAX_KM, warnings: list[str] | None = None
) -> float | None:
    """Normalized area under the log-scaled distance error curve.

    mean of ln(1 + d) / ln(1 + d_max): 0 when every error is zero, 1 when
    every error reaches d_max. Distances above d_max are clamped with a
    warning. Absent when the list is empty.
    """
    if not distances:
        return None
    clamped = 0
    total = 0.0
    for d in distances:
        if d > d_max_km:
            d = d_max_km
            clamped += 1
        total += math.log1p(d)
    if clamped and warnings is not None:
        warnings.append(f"auc: {clamped} distances above d_max clamped")
    return total / (len(distances) * math.log1p(d_max_km))


@dataclass(slots=True)
class EvalReport:
    """The eight metrics plus counts for one (geoparser, corpus) run.

    Recognition ratios are None when suppressed (precision-based metrics on
    a partially annotated corpus); distance metrics are None when no
    matched pair could be scored.
    """

    precision: float | None
    recall: float | None
    f_score: float | None
    accuracy: float | None
    mean_km: float | None
    median_km: float | None
    acc_at_161: float | None
    auc: float | None
    gold: int
    predicted: int
    matched: int
    resolved: int
    unresolved_matched: int
    warnings: list[str]
    geoparser: str = ""
    corpus: str = ""
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f_score": self.f_score,
            "accuracy": self.accuracy,
            "mean": self.mean_km,
            "median": self.median_km,
            "acc_at_161": self.acc_at_161,
            "auc": self.auc,
            "counts": {
                "gold": self.gold,
                "predicted": self.predicted,
                "matched": self.matched,
                "resolved": self.resolved,
                "unresolved_matched": self.unresolved_matched,
            },
            "warnings": list(self.warnings),
            "geoparser": self.geoparser,
            "corpus": self.corpus,
            "config": dict(self.config),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "EvalReport":
        counts = raw.get("counts", {})
        return cls(
            precision=raw.get("precision"),
            recall=raw.get("recall"),
            f_score=raw.get("f_score"),
            accuracy=raw.get("accuracy"),
            mean_km=raw.get("mean"),
            median_km=raw.get("median"),
            acc_at_161=raw.get("acc_at_161"),
            auc=raw.get("auc"),
            gold=counts.get("gold", 0),
            predicted=counts.get("predicted", 0),
            matched=counts.get("matched", 0),
            resolved=counts.get("resolved", 0),
            unresolved_matched=counts.get("unresolved_matched", 0),
            warnings=list(raw.get("warnings", [])),
            geoparser=raw.get("geoparser", ""),
            corpus=raw.get("corpus", ""),
            config=dict(raw.get("config", {})),
        )


def build_report(
    *,
    gold_count: int,
    pred_count: int,
    matched: int,
    unresolved_matched: int,
    distances: list[float],
    config: MetricsConfig | None = None,
    completeness: str = "complete",
    warnings: list[str] | None = None,
    geoparser: str = "",
    corpus: str = "",
) -> EvalReport:
    """Assemble an EvalReport from pooled (micro-averaged) counts and distances.

    On a partially annotated corpus, precision, recall, and F1 are
    suppressed and only accuracy is reported; on a complete corpus all
    four recognition metrics appear.
    """
    config = config or MetricsConfig()
    notes = list(warnings) if warnings else []

    def ratio(num, den, label):
        if den:
            return num / den
        notes.append(f"{label}: denominator is zero")
        return 0.0

    accuracy = ratio(matched, gold_count, "accuracy")
    if completeness == "partial":
        precision = recall = f_score = None
    else:
        precision = ratio(matched, pred_count, "precision")
        recall = ratio(matched, gold_count, "recall")
        f_score = 2 * precision * recall / (precision + recall) if precision + recall else 0.0

    mean_km, median_km = mean_median(distances, notes)
    acc_at = accuracy_at_threshold(distances, config.threshold_km)
    auc = auc_distance(distances, config.d_max_km, notes)
    # recorded so numbers are only compared within one formula choice
    config_note = {
        "match_mode": config.match_mode,
        "threshold_km": config.threshold_km,
        "d_max_km": config.d_max_km,
        "earth_radius_km": config.earth_radius_km,
        "auc_formula": "mean of ln(1+d)/ln(1+d_max)",
        "aggregation": "micro",
    }
    return EvalReport(
        precision=precision,
        recall=recall,
        f_score=f_score,
        accuracy=accuracy,
        mean_km=mean_km,
        median_km=median_km,
        acc_at_161=acc_at,
        auc=auc,
        gold=gold_count,
        predicted=pred_count,
        matched=matched,
        resolved=matched - unresolved_matched,
        unresolved_matched=unresolved_matched,
        warnings=notes,
        geoparser=geoparser,
        corpus=corpus,
        config=config_note,
    )
