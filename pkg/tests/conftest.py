from __future__ import annotations

from datetime import date, datetime

import pytest

from rtmeval.model import Modality, Observation, PatientDay, ThresholdConfig


def make_day(
    patient_id: str,
    day: date,
    readings: dict[Modality, list[tuple[str, float | str]]],
) -> PatientDay:
    """Build a PatientDay from {modality: [("HH:MM", value), ...]}."""
    observations = {}
    for modality, series in readings.items():
        obs = []
        for clock, value in series:
            hh, mm = clock.split(":")
            obs.append(
                Observation(
                    datetime(day.year, day.month, day.day, int(hh), int(mm)),
                    modality,
                    value,
                )
            )
        observations[modality] = tuple(obs)
    return PatientDay(patient_id, day, observations)


D7A46_SYSTOLIC = [
    ("14:36", 188.0),
    ("17:18", 183.0),
    ("17:41", 181.0),
    ("17:42", 177.0),
    ("17:42", 173.0),
    ("17:45", 174.0),
    ("17:55", 178.0),
]


@pytest.fixture
def cfg() -> ThresholdConfig:
    return ThresholdConfig()


@pytest.fixture
def d7a46_day() -> PatientDay:
    """The mischaracterization case-study day: seven elevated systolic readings."""
    return make_day(
        "d7a46", date(2019, 6, 11), {Modality.SYSTOLIC_BP: list(D7A46_SYSTOLIC)}
    )


@pytest.fixture
def case_a_day() -> PatientDay:
    """The omission case-study day: one systolic reading of 177 plus in-range context."""
    return make_day(
        "8a835",
        date(2019, 4, 20),
        {
            Modality.SYSTOLIC_BP: [("10:15", 177.0)],
            Modality.HEART_RATE: [("09:00", 72.0), ("15:00", 75.0)],
            Modality.BODY_TEMPERATURE: [("09:00", 36.5)],
        },
    )
