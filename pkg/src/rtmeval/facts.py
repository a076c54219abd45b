"""Rule-based derivation of the ground-truth clinical event set for a patient-day.

Two fact families are produced per vital: an abnormality fact whenever any
reading is strictly out of range (one per direction, valued at the most
extreme reading), and a duration fact for every maximal sustained episode.
An episode is a run of consecutive same-direction out-of-range readings whose
inter-reading gaps stay within the configured maximum and whose wall-clock
span reaches the persistence threshold. An in-range reading, a direction
flip, or an oversized gap all end the run.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import date as Date
from datetime import datetime, time
from enum import Enum
from pathlib import Path

from .model import (
    VITALS,
    Direction,
    Modality,
    Observation,
    PatientDay,
    ThresholdConfig,
)


class FactType(Enum):
    ABNORMALITY = "abnormality"
    DURATION = "duration"


@dataclass(frozen=True)
class ClinicalFact:
    """One rule-derived clinical event.

    For abnormality facts ``value`` is the most extreme offending reading;
    for duration facts it is the episode length in minutes. The interval
    spans the first to last supporting reading.
    """

    vital: Modality
    fact_type: FactType
    direction: Direction
    value: float
    start: datetime
    end: datetime
    source_count: int

    @property
    def span_minutes(self) -> float:
        return (self.end - self.start).total_seconds() / 60.0

    def to_record(self) -> dict:
        return {
            "vital": self.vital.value,
            "fact_type": self.fact_type.value,
            "direction": self.direction.value,
            "value": self.value,
            "start": self.start.strftime("%H:%M"),
            "end": self.end.strftime("%H:%M"),
            "source_count": self.source_count,
        }

    @classmethod
    def from_record(cls, record: dict, day: Date) -> "ClinicalFact":
        return cls(
            vital=Modality(record["vital"]),
            fact_type=FactType(record["fact_type"]),
            direction=Direction(record["direction"]),
            value=float(record["value"]),
            start=datetime.combine(day, time.fromisoformat(record["start"])),
            end=datetime.combine(day, time.fromisoformat(record["end"])),
            source_count=int(record["source_count"]),
        )


@dataclass(frozen=True)
class FactSet:
    """All facts for one patient-day plus a record of which modalities had data."""

    patient_id: str
    date: Date
    facts: tuple[ClinicalFact, ...]
    available_modalities: tuple[Modality, ...]

    def of_type(self, fact_type: FactType) -> tuple[ClinicalFact, ...]:
        return tuple(f for f in self.facts if f.fact_type is fact_type)

    def to_record(self) -> dict:
        return {
            "patient_id": self.patient_id,
            "date": self.date.isoformat(),
            "available_modalities": [m.value for m in self.available_modalities],
            "facts": [f.to_record() for f in self.facts],
        }

    @classmethod
    def from_record(cls, record: dict) -> "FactSet":
        day = Date.fromisoformat(record["date"])
        return cls(
            patient_id=record["patient_id"],
            date=day,
            facts=tuple(ClinicalFact.from_record(f, day) for f in record["facts"]),
            available_modalities=tuple(
                Modality(m) for m in record["available_modalities"]
            ),
        )


def _numeric_readings(day: PatientDay, vital: Modality) -> list[Observation]:
    return [o for o in day.readings(vital) if isinstance(o.value, (int, float))]


def extract_abnormality_facts(day: PatientDay, cfg: ThresholdConfig) -> list[ClinicalFact]:
    """One fact per (vital, direction) with at least one strictly out-of-range reading."""
    facts = []
    for vital in VITALS:
        offending: dict[Direction, list[Observation]] = {}
        for obs in _numeric_readings(day, vital):
            direction = cfg.classify(vital, obs.value)
            if direction is not None:
                offending.setdefault(direction, []).append(obs)
        for direction in Direction:
            hits = offending.get(direction)
            if not hits:
                continue
            values = [float(o.value) for o in hits]
            extreme = max(values) if direction is Direction.HIGH else min(values)
            facts.append(
                ClinicalFact(
                    vital=vital,
                    fact_type=FactType.ABNORMALITY,
                    direction=direction,
                    value=extreme,
                    start=hits[0].timestamp,
                    end=hits[-1].timestamp,
                    source_count=len(hits),
                )
            )
    return facts


def extract_duration_facts(day: PatientDay, cfg: ThresholdConfig) -> list[ClinicalFact]:
    """One fact per maximal sustained out-of-range episode (see module docstring)."""
    facts = []
    max_gap = cfg.max_gap_minutes
    for vital in VITALS:
        run: list[Observation] = []
        run_direction: Direction | None = None

        def close_run() -> None:
            if len(run) < 2:
                return
            span = (run[-1].timestamp - run[0].timestamp).total_seconds() / 60.0
            if span >= cfg.persistence_minutes:
                facts.append(
                    ClinicalFact(
                        vital=vital,
                        fact_type=FactType.DURATION,
                        direction=run_direction,
                        value=span,
                        start=run[0].timestamp,
                        end=run[-1].timestamp,
                        source_count=len(run),
                    )
                )

        for obs in _numeric_readings(day, vital):
            direction = cfg.classify(vital, obs.value)
            if direction is None:
                close_run()
                run, run_direction = [], None
                continue
            gap_ok = (
                run
                and (obs.timestamp - run[-1].timestamp).total_seconds() / 60.0 <= max_gap
            )
            if run and direction is run_direction and gap_ok:
                run.append(obs)
            else:
                close_run()
                run, run_direction = [obs], direction
        close_run()
    return facts


def build_fact_set(day: PatientDay, cfg: ThresholdConfig) -> FactSet:
    """Union of abnormality and duration facts in deterministic order."""
    facts = extract_abnormality_facts(day, cfg) + extract_duration_facts(day, cfg)
    facts.sort(key=lambda f: (f.vital.order, f.fact_type.value, f.start, f.direction.value))
    return FactSet(
        patient_id=day.patient_id,
        date=day.date,
        facts=tuple(facts),
        available_modalities=day.modalities,
    )


def write_fact_sets(fact_sets: list[FactSet], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for fact_set in fact_sets:
            handle.write(json.dumps(fact_set.to_record(), sort_keys=True) + "\n")


def load_fact_sets(path: str | Path) -> list[FactSet]:
    fact_sets = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                fact_sets.append(FactSet.from_record(json.loads(line)))
    return fact_sets
