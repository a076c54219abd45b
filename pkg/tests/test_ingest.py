from __future__ import annotations

import json
import random
from datetime import date

import pytest

from rtmeval.ingest import (
    CSV_HEADER,
    InsufficientDays,
    Pipeline,
    Summary,
    load_observations,
    load_summaries,
    split_eval_set,
    write_observations,
    write_summaries,
)
from rtmeval.model import Modality
from conftest import D7A46_SYSTOLIC, make_day


def _write_csv(path, rows):
    lines = [",".join(CSV_HEADER)] + [",".join(str(c) for c in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def test_rows_group_into_one_day(tmp_path):
    path = tmp_path / "obs.csv"
    _write_csv(
        path,
        [
            ("A", "2021-05-01", "2021-05-01T08:00", "heart_rate", 70),
            ("A", "2021-05-01", "2021-05-01T09:00", "heart_rate", 72),
            ("A", "2021-05-01", "2021-05-01T09:30", "body_temperature", 36.4),
        ],
    )
    load = load_observations(path)
    assert len(load.days) == 1
    assert load.days[0].total_observations == 3
    assert not load.rejects


def test_d7a46_readings_load_sorted(tmp_path):
    path = tmp_path / "obs.csv"
    rows = [
        ("d7a46", "2019-06-11", f"2019-06-11T{clock}", "systolic_bp", value)
        for clock, value in reversed(D7A46_SYSTOLIC)
    ]
    _write_csv(path, rows)
    load = load_observations(path)
    assert len(load.days) == 1
    readings = load.days[0].readings(Modality.SYSTOLIC_BP)
    assert len(readings) == 7
    times = [o.timestamp.strftime("%H:%M") for o in readings]
    assert times == sorted(times)
    assert readings[0].value == 188.0


def test_unknown_modality_rejected_with_line_number(tmp_path):
    path = tmp_path / "obs.csv"
    _write_csv(
        path,
        [
            ("A", "2021-05-01", "2021-05-01T08:00", "heart_rate", 70),
            ("A", "2021-05-01", "2021-05-01T08:05", "foo", 1),
        ],
    )
    load = load_observations(path)
    assert len(load.days) == 1
    assert len(load.rejects) == 1
    assert load.rejects[0].line_no == 3
    assert load.rejects[0].reason == "UnknownModality"


def test_no_silent_data_loss(tmp_path):
    rng = random.Random(11)
    rows = []
    for i in range(200):
        kind = rng.random()
        if kind < 0.7:
            rows.append(
                (f"p{i % 4}", "2021-05-01", f"2021-05-01T{8 + i % 10:02d}:00", "heart_rate", 70)
            )
        elif kind < 0.8:
            rows.append((f"p{i % 4}", "2021-05-01", "2021-05-01T08:00", "foo", 1))
        elif kind < 0.9:
            rows.append((f"p{i % 4}", "2021-05-01", "not-a-time", "heart_rate", 70))
        else:
            rows.append((f"p{i % 4}", "2021-05-01", "2021-05-01T08:00", "heart_rate", "abc"))
    path = tmp_path / "obs.csv"
    _write_csv(path, rows)
    load = load_observations(path)
    parsed = sum(d.total_observations for d in load.days)
    assert parsed + len(load.rejects) == load.total_rows == len(rows)


def test_round_trip(tmp_path):
    day = make_day(
        "A",
        date(2021, 5, 1),
        {
            Modality.HEART_RATE: [("08:00", 70.0), ("09:00", 72.5)],
            Modality.SLEEP: [("21:00", "light"), ("22:00", "deep")],
        },
    )
    path = tmp_path / "obs.csv"
    write_observations([day], path)
    load = load_observations(path)
    assert not load.rejects
    assert load.days == [day]


def test_tihm_like_adapter(tmp_path):
    path = tmp_path / "tihm.csv"
    path.write_text(
        "patient_id,datetime,device_type,value\n"
        "A,2021-05-01T08:00,Heart rate,70\n"
        "A,2021-05-01T09:00,Systolic blood pressure,150\n"
        "A,2021-05-01T10:00,Sphygmomanometer,1\n",
        encoding="utf-8",
    )
    load = load_observations(path, schema="tihm_like")
    assert len(load.days) == 1
    assert load.days[0].readings(Modality.HEART_RATE)[0].value == 70.0
    assert load.days[0].readings(Modality.SYSTOLIC_BP)[0].value == 150.0
    assert [r.reason for r in load.rejects] == ["UnknownModality"]


def test_summaries_load(tmp_path):
    path = tmp_path / "summaries.jsonl"
    records = [
        {"patient_id": "A", "date": "2021-05-01", "pipeline": "zero_shot", "text": "Fine day."},
        {"patient_id": "A", "date": "2021-05-01", "pipeline": "stat_based", "text": "Also fine."},
    ]
    path.write_text("\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8")
    load = load_summaries(path)
    assert len(load.summaries) == 2
    assert not load.rejects
    assert load.summaries[0].pipeline is Pipeline.ZERO_SHOT


def test_summary_missing_text_rejected(tmp_path):
    path = tmp_path / "summaries.jsonl"
    path.write_text(
        json.dumps({"patient_id": "A", "date": "2021-05-01", "pipeline": "zero_shot"}) + "\n",
        encoding="utf-8",
    )
    load = load_summaries(path)
    assert not load.summaries
    assert load.rejects[0].reason == "MissingField"
    assert load.rejects[0].line_no == 1


def test_duplicate_summary_key_rejected(tmp_path):
    path = tmp_path / "summaries.jsonl"
    record = {"patient_id": "A", "date": "2021-05-01", "pipeline": "zero_shot", "text": "x"}
    path.write_text(json.dumps(record) + "\n" + json.dumps(record) + "\n", encoding="utf-8")
    load = load_summaries(path)
    assert len(load.summaries) == 1
    assert load.rejects[0].reason == "DuplicateKey"
    assert load.rejects[0].line_no == 2


def test_summary_round_trip(tmp_path):
    # Text with newlines must survive the line-delimited encoding.
    summaries = [Summary("A", date(2021, 5, 1), Pipeline.EXTERNAL, "- Line one.\n- Line two.")]
    path = tmp_path / "s.jsonl"
    write_summaries(summaries, path)
    load = load_summaries(path)
    assert load.summaries == summaries


def _days_for_split():
    days = []
    for p in range(5):
        for k in range(2):
            days.append(
                make_day(
                    f"p{p}", date(2021, 5, 1 + k), {Modality.HEART_RATE: [("08:00", 70.0)]}
                )
            )
    return days


def test_split_is_deterministic_and_stratified():
    days = _days_for_split()
    test1, dev1 = split_eval_set(days, 5, seed=7)
    test2, dev2 = split_eval_set(days, 5, seed=7)
    assert [(d.patient_id, d.date) for d in test1] == [(d.patient_id, d.date) for d in test2]
    assert dev1 == dev2
    assert len(test1) == 5
    assert len({d.patient_id for d in test1}) >= 3
    # Partition: disjoint and exhaustive.
    keys = {(d.patient_id, d.date) for d in test1} | {(d.patient_id, d.date) for d in dev1}
    assert len(keys) == len(days)


def test_split_boundaries():
    days = _days_for_split()
    test, dev = split_eval_set(days, 0, seed=1)
    assert test == [] and len(dev) == len(days)
    test, dev = split_eval_set(days, len(days), seed=1)
    assert len(test) == len(days) and dev == []
    with pytest.raises(InsufficientDays):
        split_eval_set(days, len(days) + 1, seed=1)
