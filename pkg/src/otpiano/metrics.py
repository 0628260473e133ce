"""Evaluation: key-press precision/recall/F1, fingering agreement, corpus stats.

Precision measures avoiding inactive keys, recall measures pressing the
active ones; both are micro-averaged over all steps (summed intersection
counts, stable for silent steps).  Corpus statistics cover the pressed-key
histogram, the white-key share, per-piece active-key totals, and the
fraction of pieces above F1 thresholds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .keyboard import KEY_COUNT, is_black

DEFAULT_PRESS_THRESHOLD = 0.5
F1_THRESHOLDS = (0.5, 0.75)


class NoOverlapError(ValueError):
    """Two fingering files share no matching notes."""


@dataclass(frozen=True)
class TraceStep:
    """One step of a rollout: keys actually pressed vs. the goal's active set."""

    pressed: frozenset
    active: frozenset

    def __post_init__(self) -> None:
        for keys in (self.pressed, self.active):
            if any(not 0 <= k < KEY_COUNT for k in keys):
                raise ValueError(f"key index outside [0, {KEY_COUNT})")


@dataclass(frozen=True)
class KeyPressTrace:
    """Per-step pressed/active sets of one rollout."""

    steps: tuple

    def __len__(self) -> int:
        return len(self.steps)


def precision_recall(trace: KeyPressTrace) -> tuple:
    """Micro-averaged precision and recall over all steps.

    With nothing pressed precision is 1 (no wrong press committed); with
    nothing active recall is 1 (nothing was missed).
    """
    if not trace.steps:
        raise ValueError("trace must contain at least one step")
    hits = sum(len(s.pressed & s.active) for s in trace.steps)
    pressed = sum(len(s.pressed) for s in trace.steps)
    active = sum(len(s.active) for s in trace.steps)
    precision = hits / pressed if pressed else 1.0
    recall = hits / active if active else 1.0
    return precision, recall


def f1(precision: float, recall: float) -> float:
    """Harmonic mean; 0 when both inputs are 0."""
    if precision < 0 or recall < 0:
        raise ValueError("precision and recall must be >= 0")
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


# ---------------------------------------------------------------------------
# Fingering agreement
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AgreementResult:
    """Share of matched notes with identical finger labels."""

    agreement: float
    matched: int
    agreeing: int
    unmatched_ours: int
    unmatched_reference: int


def fingering_agreement(ours, reference, onset_tolerance: float = 0.05) -> AgreementResult:
    """Compare two PIG record lists note by note.

    Notes are matched by pitch with onsets within ``onset_tolerance``
    seconds (nearest-first, each note used once); unmatched notes are
    excluded from the ratio but counted.  Labels must be identical tokens
    to agree (substitutions included).
    """
    remaining = {}
    for rec in sorted(reference, key=lambda r: r.onset):
        remaining.setdefault(rec.pitch, []).append(rec)
    matched = 0
    agreeing = 0
    unmatched_ours = 0
    for rec in sorted(ours, key=lambda r: r.onset):
        candidates = remaining.get(rec.pitch, [])
        best = None
        best_gap = None
        for other in candidates:
            gap = abs(other.onset - rec.onset)
            if gap <= onset_tolerance and (best_gap is None or gap < best_gap):
                best = other
                best_gap = gap
        if best is None:
            unmatched_ours += 1
            continue
        candidates.remove(best)
        matched += 1
        if rec.finger == best.finger:
            agreeing += 1
    unmatched_reference = sum(len(v) for v in remaining.values())
    if matched == 0:
        raise NoOverlapError("no notes matched between the two files")
    return AgreementResult(
        agreement=agreeing / matched,
        matched=matched,
        agreeing=agreeing,
        unmatched_ours=unmatched_ours,
        unmatched_reference=unmatched_reference,
    )


# ---------------------------------------------------------------------------
# Dataset statistics
# ---------------------------------------------------------------------------


@dataclass
class DatasetStats:
    """Aggregated corpus statistics; mergeable for parallel workers."""

    key_histogram: list = field(default_factory=lambda: [0] * KEY_COUNT)
    active_key_counts: list = field(default_factory=list)
    f1_scores: list = field(default_factory=list)
    count_mode: str = "onsets"

    @property
    def total_onsets(self) -> int:
        return sum(self.key_histogram)

    @property
    def white_fraction(self) -> float:
        """Share of counted presses on white keys; 0 for an empty corpus."""
        total = self.total_onsets
        if total == 0:
            return 0.0
        white = sum(n for key, n in enumerate(self.key_histogram) if not is_black(key))
        return white / total

    def fraction_f1_above(self, threshold: float) -> float:
        """Share of pieces with F1 >= threshold; 0 with no scores."""
        if not self.f1_scores:
            return 0.0
        return sum(1 for s in self.f1_scores if s >= threshold) / len(self.f1_scores)

    def threshold_fractions(self, thresholds=F1_THRESHOLDS) -> dict:
        return {t: self.fraction_f1_above(t) for t in thresholds}

    def merge(self, other: "DatasetStats") -> "DatasetStats":
        """Associative combination of two partial aggregates."""
        if self.count_mode != other.count_mode:
            raise ValueError("cannot merge stats with different count modes")
        return DatasetStats(
            key_histogram=[a + b for a, b in zip(self.key_histogram, other.key_histogram)],
            active_key_counts=self.active_key_counts + other.active_key_counts,
            f1_scores=self.f1_scores + other.f1_scores,
            count_mode=self.count_mode,
        )


def _piece_steps(source):
    """Normalize a stats source to per-step active-key sets.

    Accepts a GoalSequence or any object exposing ``active_key_steps()``
    (the episode-record adapter hook).
    """
    if hasattr(source, "active_key_steps"):
        return list(source.active_key_steps())
    return [step.active for step in source.steps]


def dataset_stats(sources, f1_scores=None, count_mode: str = "onsets") -> DatasetStats:
    """Aggregate corpus statistics over goal sequences or episode records.

    ``count_mode="onsets"`` counts each key once per activation;
    ``"steps"`` counts per-step occupancy instead.  Optional per-piece F1
    scores feed the threshold fractions.
    """
    if count_mode not in ("onsets", "steps"):
        raise ValueError("count_mode must be 'onsets' or 'steps'")
    stats = DatasetStats(count_mode=count_mode)
    n_sources = 0
    for source in sources:
        n_sources += 1
        steps = _piece_steps(source)
        piece_onsets = 0
        prev = frozenset()
        for active in steps:
            if count_mode == "onsets":
                new_keys = active - prev
            else:
                new_keys = active
            for key in new_keys:
                stats.key_histogram[key] += 1
            piece_onsets += len(new_keys)
            prev = active
        stats.active_key_counts.append(piece_onsets)
    if n_sources == 0:
        raise ValueError("at least one source is required")
    if f1_scores is not None:
        stats.f1_scores.extend(float(s) for s in f1_scores)
    return stats
