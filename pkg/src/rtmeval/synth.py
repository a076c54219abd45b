"""Synthetic patient-days with planted abnormalities and bookkept oracle summaries.

Signals are piecewise-constant baselines with step episodes planted at least
five units beyond the bounds, so boundary semantics can never flip a plant.
The generator computes the expected fact sets and evaluation counts from its
own construction records, never by running the extractor or evaluator, which
makes every downstream metric checkable with zero tolerance.

Summary corruption draws one category per fact sentence from the plan's
fractions: omit drops the sentence, misstate-value and misstate-time perturb
it without breaking the match, deny-with-normal-claim replaces it with a
contradicting normality statement, and hallucinate keeps it while appending
an unsupported claim about a fact-free vital.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from datetime import date as Date
from datetime import datetime, time, timedelta
from pathlib import Path

from .errors import RtmEvalError
from .evaluate import CorpusReport, DayCounts, PipelineMetrics, aggregate_counts
from .facts import ClinicalFact, FactSet, FactType
from .ingest import Pipeline, Summary
from .model import (
    VITALS,
    Direction,
    Modality,
    Observation,
    PatientDay,
    ThresholdConfig,
    format_reading,
)

EPISODE_MARGIN = 5.0

_ACTIVITY_LABELS = ("lounge", "kitchen", "bedroom", "bathroom", "hallway")
_SLEEP_STAGES = ("awake", "light", "deep", "rem")


class InvalidSpec(RtmEvalError):
    pass


@dataclass(frozen=True)
class CorruptionPlan:
    omit: float = 0.0
    misstate_value: float = 0.0
    misstate_time: float = 0.0
    hallucinate: float = 0.0
    deny_with_normal_claim: float = 0.0

    def validate(self) -> None:
        fractions = (
            self.omit,
            self.misstate_value,
            self.misstate_time,
            self.hallucinate,
            self.deny_with_normal_claim,
        )
        for fraction in fractions:
            if not 0.0 <= fraction <= 1.0:
                raise InvalidSpec(f"corruption fraction {fraction} outside [0, 1]")
        if sum(fractions) > 1.0 + 1e-12:
            raise InvalidSpec(f"corruption fractions sum to {sum(fractions)} > 1")


@dataclass(frozen=True)
class ScenarioSpec:
    seed: int
    n_days: int
    n_patients: int = 3
    abnormality_probability: float | dict = 0.5
    episode_minutes: tuple[int, int] = (20, 120)
    cadence_minutes: int = 10
    missing_modality_probability: float = 0.1
    corruption: CorruptionPlan = field(default_factory=CorruptionPlan)

    def validate(self) -> None:
        if self.n_days <= 0:
            raise InvalidSpec("n_days must be positive")
        if self.n_patients <= 0:
            raise InvalidSpec("n_patients must be positive")
        if self.cadence_minutes <= 0:
            raise InvalidSpec("cadence_minutes must be positive")
        lo, hi = self.episode_minutes
        if not (0 < lo <= hi):
            raise InvalidSpec(f"bad episode_minutes range {self.episode_minutes}")
        for probability in self._abnormality_probabilities().values():
            if not 0.0 <= probability <= 1.0:
                raise InvalidSpec(f"abnormality probability {probability} outside [0, 1]")
        if not 0.0 <= self.missing_modality_probability <= 1.0:
            raise InvalidSpec("missing_modality_probability outside [0, 1]")
        self.corruption.validate()

    def _abnormality_probabilities(self) -> dict[Modality, float]:
        if isinstance(self.abnormality_probability, dict):
            by_name = {m.value: m for m in VITALS}
            result = {m: 0.0 for m in VITALS}
            for name, probability in self.abnormality_probability.items():
                if name not in by_name:
                    raise InvalidSpec(f"unknown vital {name!r} in abnormality_probability")
                result[by_name[name]] = float(probability)
            return result
        return {m: float(self.abnormality_probability) for m in VITALS}

    @classmethod
    def from_file(cls, path: str | Path) -> "ScenarioSpec":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InvalidSpec(f"{path}: invalid JSON ({exc.msg})") from None
        if not isinstance(raw, dict):
            raise InvalidSpec(f"{path}: expected a JSON object")
        corruption = CorruptionPlan(**raw.pop("corruption", {}))
        episode = raw.pop("episode_minutes", (20, 120))
        try:
            spec = cls(corruption=corruption, episode_minutes=tuple(episode), **raw)
        except TypeError as exc:
            raise InvalidSpec(f"{path}: {exc}") from None
        spec.validate()
        return spec


@dataclass(frozen=True)
class ExpectedCounts:
    """Corpus-level oracle numbers derived purely from generation bookkeeping."""

    days: int
    abn_total: int
    abn_matched: int
    dur_total: int
    dur_matched: int
    coverage_num: int
    coverage_den: int
    hallucinations: int
    misclassifications: int

    def abnormality_recall(self) -> float | None:
        return self.abn_matched / self.abn_total if self.abn_total else None

    def duration_recall(self) -> float | None:
        return self.dur_matched / self.dur_total if self.dur_total else None

    def coverage(self) -> float:
        return self.coverage_num / self.coverage_den if self.coverage_den else 0.0

    def to_report(self, pipeline: str = Pipeline.EXTERNAL.value) -> CorpusReport:
        metrics = PipelineMetrics(
            pipeline=pipeline,
            days=self.days,
            abn_total=self.abn_total,
            abn_matched=self.abn_matched,
            dur_total=self.dur_total,
            dur_matched=self.dur_matched,
            abnormality_recall=self.abnormality_recall(),
            duration_recall=self.duration_recall(),
            coverage=self.coverage(),
            hallucinations=self.hallucinations,
            hallucination_rate=self.hallucinations / self.days,
            misclassifications=self.misclassifications,
        )
        return CorpusReport(mode="micro", pipelines=(metrics,), per_day=())


@dataclass(frozen=True)
class SyntheticCorpus:
    days: list[PatientDay]
    fact_sets: list[FactSet]
    summaries: list[Summary]
    expected: ExpectedCounts
    expected_per_day: list[DayCounts]


@dataclass
class _Plant:
    """Construction record for one planted episode."""

    vital: Modality
    direction: Direction
    values: list[float]
    start: datetime
    end: datetime
    has_duration_fact: bool
    span_minutes: float


@dataclass
class _Sentence:
    text: str
    names: set[Modality]


def _direction_word(direction: Direction) -> str:
    return "High" if direction is Direction.HIGH else "Low"


def _point_sentence(vital: Modality, direction: Direction, value: float) -> _Sentence:
    return _Sentence(
        f"{vital.display} was Abnormally {_direction_word(direction)} (value: {value:.1f}).",
        {vital},
    )


def _duration_sentence(
    vital: Modality, direction: Direction, minutes: float, start: datetime, end: datetime
) -> _Sentence:
    return _Sentence(
        f"{vital.display} was Abnormally {_direction_word(direction)} for "
        f"{minutes:g} minutes from {start.strftime('%H:%M')} to {end.strftime('%H:%M')}.",
        {vital},
    )


def _normal_sentence(vital: Modality) -> _Sentence:
    return _Sentence(f"{vital.display} was within normal range.", {vital})


def _deny_sentence(vital: Modality) -> _Sentence:
    return _Sentence(f"{vital.display} remained within normal limits.", {vital})


def _no_data_sentence(modality: Modality) -> _Sentence:
    return _Sentence(f"No data available for {modality.display}.", {modality})


def _plant_value(vital: Modality, direction: Direction, cfg: ThresholdConfig, rng: random.Random) -> float:
    lower, upper = cfg.bounds[vital]
    if vital is Modality.BODY_TEMPERATURE:
        jitter = rng.randint(0, 9) / 10.0
    else:
        jitter = float(rng.randint(0, 9))
    if direction is Direction.HIGH:
        return round(upper + EPISODE_MARGIN + jitter, 1)
    return round(lower - EPISODE_MARGIN - jitter, 1)


def _baseline_value(vital: Modality, cfg: ThresholdConfig, rng: random.Random) -> float:
    lower, upper = cfg.bounds[vital]
    mid = (lower + upper) / 2.0
    if vital is Modality.BODY_TEMPERATURE:
        return round(mid + rng.randint(-2, 2) / 10.0, 1)
    return float(round(mid) + rng.randint(-2, 2))


def generate_corpus(spec: ScenarioSpec, cfg: ThresholdConfig) -> SyntheticCorpus:
    """Deterministic corpus plus the oracle numbers it was built to satisfy."""
    spec.validate()
    rng = random.Random(spec.seed)
    probabilities = spec._abnormality_probabilities()
    plan = spec.corruption
    cumulative = (
        plan.omit,
        plan.omit + plan.misstate_value,
        plan.omit + plan.misstate_value + plan.misstate_time,
        plan.omit + plan.misstate_value + plan.misstate_time + plan.hallucinate,
        plan.omit
        + plan.misstate_value
        + plan.misstate_time
        + plan.hallucinate
        + plan.deny_with_normal_claim,
    )

    days: list[PatientDay] = []
    fact_sets: list[FactSet] = []
    summaries: list[Summary] = []
    per_day: list[DayCounts] = []

    for day_index in range(spec.n_days):
        patient_id = f"p{day_index % spec.n_patients:02d}"
        day = Date(2021, 3, 1) + timedelta(days=day_index // spec.n_patients)

        missing = {
            m for m in Modality if rng.random() < spec.missing_modality_probability
        }
        if missing >= set(Modality):
            missing.discard(Modality.HEART_RATE)

        grid = []
        cursor = datetime.combine(day, time(8, 0))
        end_of_grid = datetime.combine(day, time(20, 0))
        while cursor <= end_of_grid:
            grid.append(cursor)
            cursor += timedelta(minutes=spec.cadence_minutes)

        observations: dict[Modality, tuple[Observation, ...]] = {}
        plants: list[_Plant] = []
        for vital in VITALS:
            if vital in missing:
                continue
            values = [_baseline_value(vital, cfg, rng) for _ in grid]
            if rng.random() < probabilities[vital]:
                direction = rng.choice((Direction.HIGH, Direction.LOW))
                episode_len = rng.randint(*spec.episode_minutes)
                n_block = min(episode_len // spec.cadence_minutes + 1, len(grid))
                start_idx = rng.randrange(0, len(grid) - n_block + 1)
                block_values = [
                    _plant_value(vital, direction, cfg, rng) for _ in range(n_block)
                ]
                values[start_idx : start_idx + n_block] = block_values
                span = (n_block - 1) * spec.cadence_minutes
                plants.append(
                    _Plant(
                        vital=vital,
                        direction=direction,
                        values=block_values,
                        start=grid[start_idx],
                        end=grid[start_idx + n_block - 1],
                        has_duration_fact=(
                            n_block >= 2
                            and spec.cadence_minutes <= cfg.max_gap_minutes
                            and span >= cfg.persistence_minutes
                        ),
                        span_minutes=float(span),
                    )
                )
            observations[vital] = tuple(
                Observation(ts, vital, value) for ts, value in zip(grid, values)
            )
        if Modality.ACTIVITY not in missing:
            observations[Modality.ACTIVITY] = tuple(
                Observation(
                    datetime.combine(day, time(hour, 0)),
                    Modality.ACTIVITY,
                    rng.choice(_ACTIVITY_LABELS),
                )
                for hour in range(9, 19)
            )
        if Modality.SLEEP not in missing:
            observations[Modality.SLEEP] = tuple(
                Observation(
                    datetime.combine(day, time(21, 0)) + timedelta(minutes=30 * k),
                    Modality.SLEEP,
                    rng.choice(_SLEEP_STAGES),
                )
                for k in range(6)
            )

        patient_day = PatientDay(patient_id, day, observations)
        available = patient_day.modalities
        days.append(patient_day)

        # Analytic fact set, in the extractor's deterministic order.
        facts: list[ClinicalFact] = []
        for plant in sorted(plants, key=lambda p: p.vital.order):
            extreme = (
                max(plant.values)
                if plant.direction is Direction.HIGH
                else min(plant.values)
            )
            facts.append(
                ClinicalFact(
                    vital=plant.vital,
                    fact_type=FactType.ABNORMALITY,
                    direction=plant.direction,
                    value=extreme,
                    start=plant.start,
                    end=plant.end,
                    source_count=len(plant.values),
                )
            )
            if plant.has_duration_fact:
                facts.append(
                    ClinicalFact(
                        vital=plant.vital,
                        fact_type=FactType.DURATION,
                        direction=plant.direction,
                        value=plant.span_minutes,
                        start=plant.start,
                        end=plant.end,
                        source_count=len(plant.values),
                    )
                )
        fact_sets.append(FactSet(patient_id, day, tuple(facts), available))

        summary_text, day_counts = _build_summary(
            patient_id, day, plants, available, missing, cumulative, rng
        )
        summaries.append(Summary(patient_id, day, Pipeline.EXTERNAL, summary_text))
        per_day.append(day_counts)

    expected = ExpectedCounts(
        days=spec.n_days,
        abn_total=sum(d.abn_total for d in per_day),
        abn_matched=sum(d.abn_matched for d in per_day),
        dur_total=sum(d.dur_total for d in per_day),
        dur_matched=sum(d.dur_matched for d in per_day),
        coverage_num=sum(d.coverage_num for d in per_day),
        coverage_den=sum(d.coverage_den for d in per_day),
        hallucinations=sum(d.hallucinations for d in per_day),
        misclassifications=sum(d.misclassifications for d in per_day),
    )
    return SyntheticCorpus(days, fact_sets, summaries, expected, per_day)


def _build_summary(
    patient_id: str,
    day: Date,
    plants: list[_Plant],
    available: tuple[Modality, ...],
    missing: set[Modality],
    cumulative: tuple[float, float, float, float, float],
    rng: random.Random,
) -> tuple[str, DayCounts]:
    planted_vitals = {p.vital for p in plants}
    sentences: list[_Sentence] = []
    point_survives: dict[Modality, bool] = {}
    duration_survives: dict[Modality, bool] = {}
    denied_vitals: set[Modality] = set()
    hallucination_requests = 0

    def corrupt(kind_hint: str) -> str:
        u = rng.random()
        if u < cumulative[0]:
            return "omit"
        if u < cumulative[1]:
            return "misstate_value"
        if u < cumulative[2]:
            return "misstate_time" if kind_hint == "duration" else "none"
        if u < cumulative[3]:
            return "hallucinate"
        if u < cumulative[4]:
            return "deny"
        return "none"

    for plant in sorted(plants, key=lambda p: p.vital.order):
        extreme = (
            max(plant.values) if plant.direction is Direction.HIGH else min(plant.values)
        )
        action = corrupt("point")
        if action == "omit":
            point_survives[plant.vital] = False
        elif action == "deny":
            point_survives[plant.vital] = False
            denied_vitals.add(plant.vital)
            sentences.append(_deny_sentence(plant.vital))
        else:
            point_survives[plant.vital] = True
            value = extreme
            if action == "misstate_value":
                value = extreme + rng.choice((-1.0, 1.0)) * rng.randint(5, 20)
            sentences.append(_point_sentence(plant.vital, plant.direction, value))
            if action == "hallucinate":
                hallucination_requests += 1

        if plant.has_duration_fact:
            action = corrupt("duration")
            if action == "omit":
                duration_survives[plant.vital] = False
            elif action == "deny":
                duration_survives[plant.vital] = False
                denied_vitals.add(plant.vital)
                sentences.append(_deny_sentence(plant.vital))
            else:
                duration_survives[plant.vital] = True
                start, end = plant.start, plant.end
                if action == "misstate_time":
                    shift = timedelta(
                        minutes=rng.choice((-1, 1)) * rng.randint(60, 180)
                    )
                    if (start + shift).date() == day and (end + shift).date() == day:
                        start, end = start + shift, end + shift
                minutes = plant.span_minutes
                if action == "misstate_value":
                    minutes = minutes + rng.randint(5, 20)
                sentences.append(
                    _duration_sentence(plant.vital, plant.direction, minutes, start, end)
                )
                if action == "hallucinate":
                    hallucination_requests += 1

    for vital in VITALS:
        if vital in available and vital not in planted_vitals:
            sentences.append(_normal_sentence(vital))
    if Modality.ACTIVITY in available:
        sentences.append(
            _Sentence("Activity: regular movement recorded across the day.", {Modality.ACTIVITY})
        )
    if Modality.SLEEP in available:
        sentences.append(
            _Sentence("Sleep stages were recorded overnight.", {Modality.SLEEP})
        )
    for modality in Modality:
        if modality in missing:
            sentences.append(_no_data_sentence(modality))

    # Unsupported claims go to fact-free vitals; when every vital carries a
    # fact, claim the opposite direction, which can witness nothing either.
    hallucinations = 0
    for _ in range(hallucination_requests):
        target = next(
            (v for v in VITALS if v in available and v not in planted_vitals), None
        )
        if target is not None:
            direction = rng.choice((Direction.HIGH, Direction.LOW))
        else:
            plant = next((p for p in plants), None)
            if plant is None:
                continue
            target = plant.vital
            direction = (
                Direction.LOW if plant.direction is Direction.HIGH else Direction.HIGH
            )
        value = 999.0 if direction is Direction.HIGH else 1.0
        sentences.append(_point_sentence(target, direction, value))
        hallucinations += 1

    acknowledged: set[Modality] = set()
    for sentence in sentences:
        acknowledged.update(sentence.names)

    abn_total = len(plants)
    abn_matched = sum(
        1
        for p in plants
        if point_survives.get(p.vital)
        or (p.has_duration_fact and duration_survives.get(p.vital))
    )
    dur_total = sum(1 for p in plants if p.has_duration_fact)
    dur_matched = sum(
        1 for p in plants if p.has_duration_fact and duration_survives.get(p.vital)
    )
    misclassifications = sum(1 for p in plants if p.vital in denied_vitals)
    coverage_num = len(acknowledged & set(available))
    coverage_den = len(available)

    text = "\n".join(f"- {s.text}" for s in sentences) or "Reviewed."
    counts = DayCounts(
        patient_id=patient_id,
        date=day.isoformat(),
        pipeline=Pipeline.EXTERNAL.value,
        abn_total=abn_total,
        abn_matched=abn_matched,
        dur_total=dur_total,
        dur_matched=dur_matched,
        coverage_num=coverage_num,
        coverage_den=coverage_den,
        coverage=coverage_num / coverage_den if coverage_den else 0.0,
        abnormality_recall=abn_matched / abn_total if abn_total else None,
        duration_recall=dur_matched / dur_total if dur_total else None,
        hallucinations=hallucinations,
        misclassifications=misclassifications,
    )
    return text, counts


def expected_report(corpus: SyntheticCorpus, mode: str = "micro") -> CorpusReport:
    """Oracle corpus report assembled from the per-day bookkeeping."""
    return aggregate_counts(corpus.expected_per_day, mode=mode)
