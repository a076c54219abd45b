"""Alignment of claimed mentions to fact sets and all event-level metrics.

A fact counts as recalled when any mention is compatible with it: same vital
(or the BP group for a BP fact), abnormal polarity whose direction matches or
is unspecified, and, for duration facts, a duration-type claim. On top of
that existential test, a greedy one-to-one pairing selects which mention's
claimed value and time window feed the fidelity diagnostics; wrong magnitude
or timing never revokes a match. Abnormal mentions compatible with no fact at
all are hallucinations, and a normality claim about a vital with an
abnormality fact raises a misclassification flag.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import date as Date
from datetime import datetime, time
from pathlib import Path

from .errors import RtmEvalError
from .facts import ClinicalFact, FactSet, FactType
from .ingest import Pipeline, Summary
from .mentions import (
    ClaimedMention,
    ClaimType,
    Lexicon,
    Modality,
    extract_coverage_statements,
    extract_mentions,
)

_BP_VITALS = (Modality.SYSTOLIC_BP, Modality.DIASTOLIC_BP)


class KeyMismatch(RtmEvalError):
    pass


class EmptyInput(RtmEvalError):
    pass


def vital_compatible(fact: ClinicalFact, mention: ClaimedMention) -> bool:
    if mention.bp_group:
        return fact.vital in _BP_VITALS
    return mention.vital is fact.vital


def compatible(fact: ClinicalFact, mention: ClaimedMention) -> bool:
    """Whether a mention can witness a fact under the conservative policy."""
    if not mention.is_abnormal:
        return False
    if not vital_compatible(fact, mention):
        return False
    if mention.polarity.value != "abnormal_unspecified":
        if mention.polarity.value != f"abnormal_{fact.direction.value}":
            return False
    if fact.fact_type is FactType.DURATION and mention.claim_type is not ClaimType.DURATION:
        return False
    return True


def contradicts(fact: ClinicalFact, mention: ClaimedMention) -> bool:
    """A normality claim about the fact's vital (data-availability sentinels excluded)."""
    return (
        fact.fact_type is FactType.ABNORMALITY
        and mention.polarity.value == "normal"
        and mention.claim_type is not ClaimType.COVERAGE_STATEMENT
        and vital_compatible(fact, mention)
    )


def interval_overlap(fact: ClinicalFact, claimed: tuple[time, time], day: Date) -> float:
    """Fraction of the fact's episode covered by the claimed window.

    A zero-length fact interval scores 1.0 when the claimed window contains
    its instant, else 0.0.
    """
    start = datetime.combine(day, claimed[0])
    end = datetime.combine(day, claimed[1])
    if end < start:
        start, end = end, start
    span = (fact.end - fact.start).total_seconds()
    if span == 0:
        return 1.0 if start <= fact.start <= end else 0.0
    overlap = (min(end, fact.end) - max(start, fact.start)).total_seconds()
    return max(0.0, overlap) / span


def _claimed_magnitude(fact: ClinicalFact, mention: ClaimedMention) -> float | None:
    if fact.fact_type is FactType.DURATION:
        return mention.duration_minutes
    return mention.value


def _pair_rank(fact: ClinicalFact, mention: ClaimedMention) -> tuple:
    preferred = ClaimType.DURATION if fact.fact_type is FactType.DURATION else ClaimType.POINT
    return (
        0 if mention.vital is fact.vital else 1,
        0 if mention.polarity.value == f"abnormal_{fact.direction.value}" else 1,
        0 if mention.claim_type is preferred else 1,
        mention.sentence_index,
    )


@dataclass(frozen=True)
class MatchResult:
    matched: bool
    mention: ClaimedMention | None
    value_error: float | None
    interval_overlap: float | None


def match_fact(
    fact: ClinicalFact, mentions: list[ClaimedMention], day: Date | None = None
) -> MatchResult:
    """Existential match plus fidelity diagnostics from the best compatible mention."""
    witnesses = [m for m in mentions if compatible(fact, m)]
    if not witnesses:
        return MatchResult(False, None, None, None)
    best = min(witnesses, key=lambda m: _pair_rank(fact, m))
    claimed = _claimed_magnitude(fact, best)
    value_error = abs(claimed - fact.value) if claimed is not None else None
    overlap = None
    if best.interval is not None:
        overlap = interval_overlap(fact, best.interval, day or fact.start.date())
    return MatchResult(True, best, value_error, overlap)


@dataclass(frozen=True)
class DayEvaluation:
    """Per-day alignment outcome for one (patient, date, pipeline)."""

    patient_id: str
    date: Date
    pipeline: Pipeline
    matched: tuple[tuple[ClinicalFact, ClaimedMention | None], ...]
    missed: tuple[ClinicalFact, ...]
    hallucinated: tuple[ClaimedMention, ...]
    misclassified: tuple[tuple[ClinicalFact, ClaimedMention], ...]
    value_errors: tuple[tuple[ClinicalFact, float, float], ...]
    interval_errors: tuple[tuple[ClinicalFact, tuple[time, time], float], ...]
    abnormality_recall: float | None
    duration_recall: float | None
    coverage: float
    acknowledged: tuple[Modality, ...]
    available: tuple[Modality, ...]
    abn_total: int
    abn_matched: int
    dur_total: int
    dur_matched: int

    @property
    def coverage_counts(self) -> tuple[int, int]:
        hits = len(set(self.acknowledged) & set(self.available))
        return hits, len(self.available)

    def to_record(self) -> dict:
        cov_num, cov_den = self.coverage_counts
        return {
            "patient_id": self.patient_id,
            "date": self.date.isoformat(),
            "pipeline": self.pipeline.value,
            "abn_total": self.abn_total,
            "abn_matched": self.abn_matched,
            "dur_total": self.dur_total,
            "dur_matched": self.dur_matched,
            "abnormality_recall": self.abnormality_recall,
            "duration_recall": self.duration_recall,
            "coverage": self.coverage,
            "coverage_num": cov_num,
            "coverage_den": cov_den,
            "hallucinations": len(self.hallucinated),
            "misclassifications": len(self.misclassified),
            "matched": [
                {
                    "fact": fact.to_record(),
                    "mention": mention.to_record() if mention else None,
                }
                for fact, mention in self.matched
            ],
            "missed": [fact.to_record() for fact in self.missed],
            "hallucinated": [m.to_record() for m in self.hallucinated],
            "misclassified": [
                {"fact": fact.to_record(), "mention": mention.to_record()}
                for fact, mention in self.misclassified
            ],
            "value_errors": [
                {"fact": fact.to_record(), "claimed": claimed, "abs_error": err}
                for fact, claimed, err in self.value_errors
            ],
            "interval_errors": [
                {
                    "fact": fact.to_record(),
                    "claimed": [t.strftime("%H:%M") for t in claimed],
                    "overlap": overlap,
                }
                for fact, claimed, overlap in self.interval_errors
            ],
        }


def evaluate_day(
    facts: FactSet, summary: Summary, lex: Lexicon | None = None
) -> DayEvaluation:
    """Align one summary to its day's fact set and compute every metric."""
    if (facts.patient_id, facts.date) != (summary.patient_id, summary.date):
        raise KeyMismatch(
            f"facts are for {facts.patient_id}/{facts.date}, "
            f"summary for {summary.patient_id}/{summary.date}"
        )
    mentions = extract_mentions(summary, lex)
    acknowledged = extract_coverage_statements(summary, lex)

    matched_facts: list[ClinicalFact] = []
    missed: list[ClinicalFact] = []
    for fact in facts.facts:
        if any(compatible(fact, m) for m in mentions):
            matched_facts.append(fact)
        else:
            missed.append(fact)

    # Greedy one-to-one pairing, for diagnostics only: each mention feeds at
    # most one fact's value/interval fidelity numbers.
    used: set[int] = set()
    pairs: list[tuple[ClinicalFact, ClaimedMention | None]] = []
    value_errors = []
    interval_errors = []
    for fact in matched_facts:
        candidates = [
            (i, m) for i, m in enumerate(mentions) if i not in used and compatible(fact, m)
        ]
        if not candidates:
            pairs.append((fact, None))
            continue
        idx, best = min(candidates, key=lambda im: _pair_rank(fact, im[1]))
        used.add(idx)
        pairs.append((fact, best))
        claimed = _claimed_magnitude(fact, best)
        if claimed is not None:
            value_errors.append((fact, claimed, abs(claimed - fact.value)))
        if best.interval is not None:
            interval_errors.append(
                (fact, best.interval, interval_overlap(fact, best.interval, facts.date))
            )

    hallucinated = tuple(
        m
        for m in mentions
        if m.is_abnormal and not any(compatible(f, m) for f in facts.facts)
    )
    misclassified = []
    for fact in facts.of_type(FactType.ABNORMALITY):
        contradicting = [m for m in mentions if contradicts(fact, m)]
        if contradicting:
            misclassified.append(
                (fact, min(contradicting, key=lambda m: m.sentence_index))
            )

    abn_facts = facts.of_type(FactType.ABNORMALITY)
    dur_facts = facts.of_type(FactType.DURATION)
    abn_matched = sum(1 for f in matched_facts if f.fact_type is FactType.ABNORMALITY)
    dur_matched = sum(1 for f in matched_facts if f.fact_type is FactType.DURATION)
    available = set(facts.available_modalities)
    coverage = len(acknowledged & available) / len(available) if available else 0.0

    return DayEvaluation(
        patient_id=facts.patient_id,
        date=facts.date,
        pipeline=summary.pipeline,
        matched=tuple(pairs),
        missed=tuple(missed),
        hallucinated=hallucinated,
        misclassified=tuple(misclassified),
        value_errors=tuple(value_errors),
        interval_errors=tuple(interval_errors),
        abnormality_recall=abn_matched / len(abn_facts) if abn_facts else None,
        duration_recall=dur_matched / len(dur_facts) if dur_facts else None,
        coverage=coverage,
        acknowledged=tuple(sorted(acknowledged, key=lambda m: m.order)),
        available=facts.available_modalities,
        abn_total=len(abn_facts),
        abn_matched=abn_matched,
        dur_total=len(dur_facts),
        dur_matched=dur_matched,
    )


@dataclass(frozen=True)
class PipelineMetrics:
    """Aggregated scores for one pipeline across its evaluated days."""

    pipeline: str
    days: int
    abn_total: int
    abn_matched: int
    dur_total: int
    dur_matched: int
    abnormality_recall: float | None
    duration_recall: float | None
    coverage: float
    hallucinations: int
    hallucination_rate: float
    misclassifications: int

    def to_record(self) -> dict:
        return {
            "pipeline": self.pipeline,
            "days": self.days,
            "abn_total": self.abn_total,
            "abn_matched": self.abn_matched,
            "dur_total": self.dur_total,
            "dur_matched": self.dur_matched,
            "abnormality_recall_pct": _pct(self.abnormality_recall),
            "duration_recall_pct": _pct(self.duration_recall),
            "coverage_pct": _pct(self.coverage),
            "hallucinations": self.hallucinations,
            "hallucination_rate_per_day": round(self.hallucination_rate, 4),
            "misclassifications": self.misclassifications,
        }


def _pct(fraction: float | None) -> float | None:
    return None if fraction is None else round(fraction * 100.0, 1)


@dataclass(frozen=True)
class CorpusReport:
    """Per-pipeline aggregate metrics plus the per-day table they derive from."""

    mode: str
    pipelines: tuple[PipelineMetrics, ...]
    per_day: tuple[dict, ...]

    def to_record(self) -> dict:
        return {
            "mode": self.mode,
            "pipelines": [p.to_record() for p in self.pipelines],
            "per_day": list(self.per_day),
        }

    def to_table(self) -> str:
        header = (
            f"{'Pipeline':<12} {'Days':>5} {'Abnormality':>12} {'Duration':>9} "
            f"{'Coverage':>9} {'Halluc.':>8} {'Misclass.':>10}"
        )
        lines = [f"Event-level metrics ({self.mode}-averaged, %)", header, "-" * len(header)]
        for metrics in self.pipelines:
            lines.append(
                f"{metrics.pipeline:<12} {metrics.days:>5} "
                f"{_fmt_pct(metrics.abnormality_recall):>12} "
                f"{_fmt_pct(metrics.duration_recall):>9} "
                f"{_fmt_pct(metrics.coverage):>9} "
                f"{metrics.hallucinations:>8} {metrics.misclassifications:>10}"
            )
        return "\n".join(lines) + "\n"


def _fmt_pct(fraction: float | None) -> str:
    return "n/a" if fraction is None else f"{fraction * 100.0:.1f}"


_PIPELINE_ORDER = {p.value: i for i, p in enumerate(Pipeline)}


@dataclass(frozen=True)
class DayCounts:
    """The per-day numbers aggregation runs on, detached from detail lists."""

    patient_id: str
    date: str
    pipeline: str
    abn_total: int
    abn_matched: int
    dur_total: int
    dur_matched: int
    coverage_num: int
    coverage_den: int
    coverage: float
    abnormality_recall: float | None
    duration_recall: float | None
    hallucinations: int
    misclassifications: int

    @classmethod
    def from_evaluation(cls, evaluation: DayEvaluation) -> "DayCounts":
        cov_num, cov_den = evaluation.coverage_counts
        return cls(
            patient_id=evaluation.patient_id,
            date=evaluation.date.isoformat(),
            pipeline=evaluation.pipeline.value,
            abn_total=evaluation.abn_total,
            abn_matched=evaluation.abn_matched,
            dur_total=evaluation.dur_total,
            dur_matched=evaluation.dur_matched,
            coverage_num=cov_num,
            coverage_den=cov_den,
            coverage=evaluation.coverage,
            abnormality_recall=evaluation.abnormality_recall,
            duration_recall=evaluation.duration_recall,
            hallucinations=len(evaluation.hallucinated),
            misclassifications=len(evaluation.misclassified),
        )

    @classmethod
    def from_record(cls, record: dict) -> "DayCounts":
        return cls(
            patient_id=record["patient_id"],
            date=record["date"],
            pipeline=record["pipeline"],
            abn_total=int(record["abn_total"]),
            abn_matched=int(record["abn_matched"]),
            dur_total=int(record["dur_total"]),
            dur_matched=int(record["dur_matched"]),
            coverage_num=int(record["coverage_num"]),
            coverage_den=int(record["coverage_den"]),
            coverage=float(record["coverage"]),
            abnormality_recall=record["abnormality_recall"],
            duration_recall=record["duration_recall"],
            hallucinations=int(record["hallucinations"]),
            misclassifications=int(record["misclassifications"]),
        )


def aggregate_counts(counts: list[DayCounts], mode: str = "micro") -> CorpusReport:
    """Pool per-day counts into a corpus report.

    micro: pooled numerators/denominators; days with zero facts of a type do
    not contribute to that recall. macro: unweighted mean of per-day values,
    again over days where the metric is defined.
    """
    if not counts:
        raise EmptyInput("no day evaluations to aggregate")
    if mode not in ("micro", "macro"):
        raise RtmEvalError(f"unknown aggregation mode {mode!r}")

    grouped: dict[str, list[DayCounts]] = {}
    for day in counts:
        grouped.setdefault(day.pipeline, []).append(day)

    pipelines = []
    for name in sorted(grouped, key=lambda n: (_PIPELINE_ORDER.get(n, 99), n)):
        rows = grouped[name]
        abn_total = sum(d.abn_total for d in rows)
        abn_matched = sum(d.abn_matched for d in rows)
        dur_total = sum(d.dur_total for d in rows)
        dur_matched = sum(d.dur_matched for d in rows)
        hallucinations = sum(d.hallucinations for d in rows)
        misclassifications = sum(d.misclassifications for d in rows)
        if mode == "micro":
            abn_recall = abn_matched / abn_total if abn_total else None
            dur_recall = dur_matched / dur_total if dur_total else None
            cov_num = sum(d.coverage_num for d in rows)
            cov_den = sum(d.coverage_den for d in rows)
            coverage = cov_num / cov_den if cov_den else 0.0
        else:
            abn_defined = [d.abnormality_recall for d in rows if d.abnormality_recall is not None]
            dur_defined = [d.duration_recall for d in rows if d.duration_recall is not None]
            abn_recall = sum(abn_defined) / len(abn_defined) if abn_defined else None
            dur_recall = sum(dur_defined) / len(dur_defined) if dur_defined else None
            coverage = sum(d.coverage for d in rows) / len(rows)
        pipelines.append(
            PipelineMetrics(
                pipeline=name,
                days=len(rows),
                abn_total=abn_total,
                abn_matched=abn_matched,
                dur_total=dur_total,
                dur_matched=dur_matched,
                abnormality_recall=abn_recall,
                duration_recall=dur_recall,
                coverage=coverage,
                hallucinations=hallucinations,
                hallucination_rate=hallucinations / len(rows),
                misclassifications=misclassifications,
            )
        )

    per_day = tuple(
        {
            "patient_id": d.patient_id,
            "date": d.date,
            "pipeline": d.pipeline,
            "abnormality_recall": d.abnormality_recall,
            "duration_recall": d.duration_recall,
            "coverage": d.coverage,
            "hallucinations": d.hallucinations,
            "misclassifications": d.misclassifications,
        }
        for d in sorted(counts, key=lambda d: (d.pipeline, d.patient_id, d.date))
    )
    return CorpusReport(mode=mode, pipelines=tuple(pipelines), per_day=per_day)


def aggregate(evaluations: list[DayEvaluation], mode: str = "micro") -> CorpusReport:
    if not evaluations:
        raise EmptyInput("no day evaluations to aggregate")
    return aggregate_counts([DayCounts.from_evaluation(e) for e in evaluations], mode=mode)


def aggregate_records(records: list[dict], mode: str = "micro") -> CorpusReport:
    """Aggregate previously serialized day evaluations (the `report` path)."""
    if not records:
        raise EmptyInput("no day evaluations to aggregate")
    return aggregate_counts([DayCounts.from_record(r) for r in records], mode=mode)


def write_day_evaluations(evaluations: list[DayEvaluation], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for evaluation in evaluations:
            handle.write(json.dumps(evaluation.to_record(), sort_keys=True) + "\n")


def load_day_records(path: str | Path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                records.append(json.loads(line))
    return records
