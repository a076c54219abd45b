from __future__ import annotations

from datetime import date, datetime

import pytest

from rtmeval.model import (
    DEFAULT_BOUNDS,
    VITALS,
    ConfigError,
    Direction,
    EmptyDay,
    Modality,
    NonFiniteValue,
    Observation,
    PatientDay,
    ThresholdConfig,
    TimestampOutOfDate,
    format_reading,
    reference_range_lines,
    validate_patient_day,
)
from conftest import make_day


def test_validation_sorts_readings():
    day = make_day(
        "a", date(2021, 1, 1), {Modality.HEART_RATE: [("09:00", 70.0), ("08:00", 65.0)]}
    )
    validated = validate_patient_day(day)
    times = [o.timestamp.strftime("%H:%M") for o in validated.readings(Modality.HEART_RATE)]
    assert times == ["08:00", "09:00"]


def test_validation_is_idempotent():
    day = make_day(
        "a",
        date(2021, 1, 1),
        {
            Modality.HEART_RATE: [("09:00", 70.0), ("08:00", 65.0)],
            Modality.SLEEP: [("21:00", "light")],
        },
    )
    once = validate_patient_day(day)
    twice = validate_patient_day(once)
    assert once == twice


def test_empty_day_rejected():
    with pytest.raises(EmptyDay):
        validate_patient_day(PatientDay("a", date(2021, 1, 1), {}))


def test_nan_reading_rejected():
    day = make_day(
        "a", date(2021, 1, 1), {Modality.BODY_TEMPERATURE: [("08:00", float("nan"))]}
    )
    with pytest.raises(NonFiniteValue):
        validate_patient_day(day)


def test_timestamp_outside_date_rejected():
    obs = Observation(datetime(2021, 1, 2, 8, 0), Modality.HEART_RATE, 70.0)
    day = PatientDay("a", date(2021, 1, 1), {Modality.HEART_RATE: (obs,)})
    with pytest.raises(TimestampOutOfDate):
        validate_patient_day(day)


def test_default_bounds_match_published_values():
    cfg = ThresholdConfig()
    assert cfg.bounds[Modality.HEART_RATE] == (50.0, 90.0)
    assert cfg.bounds[Modality.SYSTOLIC_BP] == (90.0, 140.0)
    assert cfg.bounds[Modality.DIASTOLIC_BP] == (60.0, 90.0)
    assert cfg.bounds[Modality.BODY_TEMPERATURE] == (35.0, 37.5)
    assert cfg.persistence_minutes == 30


def test_boundary_values_are_normal():
    cfg = ThresholdConfig()
    for vital in VITALS:
        lower, upper = cfg.bounds[vital]
        assert cfg.classify(vital, lower) is None
        assert cfg.classify(vital, upper) is None
        assert cfg.classify(vital, upper + 0.1) is Direction.HIGH
        assert cfg.classify(vital, lower - 0.1) is Direction.LOW


def test_config_file_overrides_and_fallbacks(tmp_path):
    path = tmp_path / "thresholds.cfg"
    path.write_text(
        "# custom gap policy\n"
        "max_gap_minutes = 25\n"
        "heart_rate.upper = 100\n",
        encoding="utf-8",
    )
    cfg = ThresholdConfig.from_file(path)
    assert cfg.max_gap_minutes == 25
    assert cfg.bounds[Modality.HEART_RATE] == (50.0, 100.0)
    # Untouched keys keep the documented defaults.
    assert cfg.persistence_minutes == 30
    assert cfg.bounds[Modality.SYSTOLIC_BP] == DEFAULT_BOUNDS[Modality.SYSTOLIC_BP]


def test_config_file_rejects_unknown_key(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("pulse.upper = 100\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        ThresholdConfig.from_file(path)


def test_inverted_bounds_rejected():
    bounds = dict(DEFAULT_BOUNDS)
    bounds[Modality.HEART_RATE] = (90.0, 50.0)
    with pytest.raises(ConfigError):
        ThresholdConfig(bounds=bounds)


def test_reading_format_follows_clinical_convention():
    assert format_reading(Modality.HEART_RATE, 70.0) == "70"
    assert format_reading(Modality.BODY_TEMPERATURE, 36.5) == "36.5"
    assert format_reading(Modality.SLEEP, "light") == "light"


def test_reference_ranges_render_as_printed():
    lines = reference_range_lines(ThresholdConfig())
    assert lines == [
        "Heart Rate: 50-90 bpm",
        "Systolic BP: 90-140 mmHg",
        "Diastolic BP: 60-90 mmHg",
        "Temperature: 35.0-37.5 °C",
    ]
