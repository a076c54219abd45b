"""Core domain types: modalities, observations, patient-days, and clinical thresholds.

All types are immutable after validation and safe to share across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date as Date
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Mapping

from .errors import RtmEvalError


class Modality(Enum):
    """A monitored data stream. Declaration order is the canonical display order."""

    HEART_RATE = "heart_rate"
    SYSTOLIC_BP = "systolic_bp"
    DIASTOLIC_BP = "diastolic_bp"
    BODY_TEMPERATURE = "body_temperature"
    ACTIVITY = "activity"
    SLEEP = "sleep"

    @property
    def unit(self) -> str:
        return _UNITS[self]

    @property
    def display(self) -> str:
        return _DISPLAY[self]

    @property
    def is_vital(self) -> bool:
        return self in VITALS

    @property
    def order(self) -> int:
        return _ORDER[self]


_UNITS = {
    Modality.HEART_RATE: "bpm",
    Modality.SYSTOLIC_BP: "mmHg",
    Modality.DIASTOLIC_BP: "mmHg",
    Modality.BODY_TEMPERATURE: "°C",
    Modality.ACTIVITY: "event-count",
    Modality.SLEEP: "stage-label",
}

_DISPLAY = {
    Modality.HEART_RATE: "Heart Rate",
    Modality.SYSTOLIC_BP: "Systolic BP",
    Modality.DIASTOLIC_BP: "Diastolic BP",
    Modality.BODY_TEMPERATURE: "Temperature",
    Modality.ACTIVITY: "Activity",
    Modality.SLEEP: "Sleep",
}

_ORDER = {m: i for i, m in enumerate(Modality)}

#: The four numeric vital streams, in canonical order.
VITALS: tuple[Modality, ...] = (
    Modality.HEART_RATE,
    Modality.SYSTOLIC_BP,
    Modality.DIASTOLIC_BP,
    Modality.BODY_TEMPERATURE,
)


class Direction(Enum):
    """Side of the reference range a reading falls on."""

    HIGH = "high"
    LOW = "low"


class PatientDayError(RtmEvalError):
    """A patient-day violated a structural invariant; message lists every violation."""


class EmptyDay(PatientDayError):
    pass


class TimestampOutOfDate(PatientDayError):
    pass


class NonFiniteValue(PatientDayError):
    pass


class ConfigError(RtmEvalError):
    """Threshold configuration file is malformed or inconsistent."""


@dataclass(frozen=True)
class Observation:
    """One timestamped reading. Numeric for vitals, label or count otherwise."""

    timestamp: datetime
    modality: Modality
    value: float | str


@dataclass(frozen=True)
class PatientDay:
    """All observations for one patient on one calendar date, grouped by modality.

    ``observations`` maps each observed modality to its readings; treat it as
    immutable. Use :func:`validate_patient_day` to obtain a record whose
    per-modality readings are guaranteed sorted.
    """

    patient_id: str
    date: Date
    observations: Mapping[Modality, tuple[Observation, ...]]

    @property
    def modalities(self) -> tuple[Modality, ...]:
        """Observed modalities in canonical order."""
        return tuple(m for m in Modality if self.observations.get(m))

    def readings(self, modality: Modality) -> tuple[Observation, ...]:
        return self.observations.get(modality, ())

    @property
    def total_observations(self) -> int:
        return sum(len(obs) for obs in self.observations.values())


def validate_patient_day(day: PatientDay) -> PatientDay:
    """Check all PatientDay invariants and return the day with sorted readings.

    Raises the error class of the first violation kind found, with a message
    listing every violation. Idempotent: validating a valid day returns an
    equal record.
    """
    if day.total_observations == 0:
        raise EmptyDay(f"patient-day {day.patient_id} {day.date}: no observations")

    violations: list[tuple[type[PatientDayError], str]] = []
    sorted_obs: dict[Modality, tuple[Observation, ...]] = {}
    for modality in Modality:
        readings = day.observations.get(modality)
        if not readings:
            continue
        for obs in readings:
            if obs.modality is not modality:
                violations.append(
                    (PatientDayError, f"{modality.value}: reading tagged {obs.modality.value}")
                )
            if obs.timestamp.date() != day.date:
                violations.append(
                    (
                        TimestampOutOfDate,
                        f"{modality.value}: {obs.timestamp} outside {day.date}",
                    )
                )
            if modality.is_vital:
                if not isinstance(obs.value, (int, float)) or not math.isfinite(obs.value):
                    violations.append(
                        (NonFiniteValue, f"{modality.value}: non-finite value {obs.value!r}")
                    )
            elif isinstance(obs.value, str):
                if not obs.value.strip():
                    violations.append((NonFiniteValue, f"{modality.value}: empty label"))
            elif not math.isfinite(obs.value):
                violations.append(
                    (NonFiniteValue, f"{modality.value}: non-finite value {obs.value!r}")
                )
        sorted_obs[modality] = tuple(sorted(readings, key=lambda o: o.timestamp))

    if violations:
        kind = violations[0][0]
        detail = "; ".join(msg for _, msg in violations)
        raise kind(f"patient-day {day.patient_id} {day.date}: {detail}")
    return PatientDay(day.patient_id, day.date, sorted_obs)


#: Published reference bounds: a reading is abnormal iff strictly outside them.
DEFAULT_BOUNDS: dict[Modality, tuple[float, float]] = {
    Modality.HEART_RATE: (50.0, 90.0),
    Modality.SYSTOLIC_BP: (90.0, 140.0),
    Modality.DIASTOLIC_BP: (60.0, 90.0),
    Modality.BODY_TEMPERATURE: (35.0, 37.5),
}

DEFAULT_PERSISTENCE_MINUTES = 30
DEFAULT_MAX_GAP_MINUTES = 15


@dataclass(frozen=True)
class ThresholdConfig:
    """Per-vital reference bounds plus sustained-episode parameters.

    ``persistence_minutes`` is the minimum wall-clock span a run of
    out-of-range readings must cover to count as sustained;
    ``max_gap_minutes`` bounds the gap allowed between consecutive readings
    inside one run.
    """

    bounds: Mapping[Modality, tuple[float, float]] = field(
        default_factory=lambda: dict(DEFAULT_BOUNDS)
    )
    persistence_minutes: int = DEFAULT_PERSISTENCE_MINUTES
    max_gap_minutes: int = DEFAULT_MAX_GAP_MINUTES

    def __post_init__(self) -> None:
        for vital in VITALS:
            if vital not in self.bounds:
                raise ConfigError(f"missing bounds for {vital.value}")
            lower, upper = self.bounds[vital]
            if not (lower < upper):
                raise ConfigError(f"{vital.value}: lower bound {lower} must be < upper {upper}")
        if self.persistence_minutes <= 0:
            raise ConfigError("persistence_minutes must be positive")
        if self.max_gap_minutes <= 0:
            raise ConfigError("max_gap_minutes must be positive")

    def classify(self, vital: Modality, value: float) -> Direction | None:
        """Direction of a strictly out-of-range reading, or None when in range.

        A value exactly equal to a bound is normal.
        """
        lower, upper = self.bounds[vital]
        if value > upper:
            return Direction.HIGH
        if value < lower:
            return Direction.LOW
        return None

    @classmethod
    def from_file(cls, path: str | Path) -> "ThresholdConfig":
        """Load from a plain-text key-value file; missing keys keep defaults.

        Recognized keys: ``<vital>.lower``, ``<vital>.upper``,
        ``persistence_minutes``, ``max_gap_minutes``. Lines are ``key = value``;
        blank lines and ``#`` comments are ignored.
        """
        bounds = {v: list(b) for v, b in DEFAULT_BOUNDS.items()}
        persistence = DEFAULT_PERSISTENCE_MINUTES
        max_gap = DEFAULT_MAX_GAP_MINUTES
        by_name = {m.value: m for m in VITALS}

        text = Path(path).read_text(encoding="utf-8")
        for line_no, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{line_no}: expected 'key = value', got {raw!r}")
            key, _, value = (part.strip() for part in line.partition("="))
            try:
                if key == "persistence_minutes":
                    persistence = int(value)
                elif key == "max_gap_minutes":
                    max_gap = int(value)
                elif "." in key:
                    name, _, side = key.partition(".")
                    if name not in by_name or side not in ("lower", "upper"):
                        raise ConfigError(f"{path}:{line_no}: unknown key {key!r}")
                    bounds[by_name[name]][0 if side == "lower" else 1] = float(value)
                else:
                    raise ConfigError(f"{path}:{line_no}: unknown key {key!r}")
            except ValueError as exc:
                raise ConfigError(f"{path}:{line_no}: bad value {value!r} ({exc})") from None
        return cls(
            bounds={v: (b[0], b[1]) for v, b in bounds.items()},
            persistence_minutes=persistence,
            max_gap_minutes=max_gap,
        )

    def config_lines(self) -> list[str]:
        """Canonical `key = value` serialization, used for config hashing."""
        lines = []
        for vital in VITALS:
            lower, upper = self.bounds[vital]
            lines.append(f"{vital.value}.lower = {lower!r}")
            lines.append(f"{vital.value}.upper = {upper!r}")
        lines.append(f"persistence_minutes = {self.persistence_minutes}")
        lines.append(f"max_gap_minutes = {self.max_gap_minutes}")
        return lines


def format_reading(modality: Modality, value: float | str) -> str:
    """Clinical-convention value formatting: integers for HR/BP, one decimal for temperature."""
    if isinstance(value, str):
        return value
    if modality is Modality.BODY_TEMPERATURE:
        return f"{value:.1f}"
    if modality.is_vital:
        return f"{value:.0f}"
    if float(value).is_integer():
        return str(int(value))
    return f"{value:g}"


def reference_range_lines(cfg: ThresholdConfig) -> list[str]:
    """Reference ranges as printed in the prompt templates, e.g. ``Heart Rate: 50-90 bpm``."""
    lines = []
    for vital in VITALS:
        lower, upper = cfg.bounds[vital]
        lo = format_reading(vital, lower)
        hi = format_reading(vital, upper)
        lines.append(f"{vital.display}: {lo}-{hi} {vital.unit}")
    return lines
