"""Parsing of observation and summary files into validated records.

Canonical observation format is a CSV with the exact header
``patient_id,date,timestamp,modality,value``. Summaries are line-delimited
JSON records with fields patient_id, date, pipeline, text. Bad rows never
abort a load: they are collected with their line numbers so that
``parsed + rejected == input rows`` always holds.
"""

from __future__ import annotations

import csv
import json
import random
from dataclasses import dataclass
from datetime import date as Date
from datetime import datetime
from enum import Enum
from pathlib import Path

from .errors import RtmEvalError
from .model import Modality, Observation, PatientDay, validate_patient_day

CSV_HEADER = ("patient_id", "date", "timestamp", "modality", "value")

#: Labels accepted for the categorical streams; deliberately permissive.
ACTIVITY_LABELS = frozenset(
    {"lounge", "kitchen", "bedroom", "bathroom", "hallway", "front door", "back door"}
)
SLEEP_LABELS = frozenset({"awake", "light", "deep", "rem"})

#: Translation table for TIHM-style exports. This is the single place where
#: the external device vocabulary is mapped onto canonical modalities.
TIHM_DEVICE_TO_MODALITY = {
    "heart rate": Modality.HEART_RATE,
    "systolic blood pressure": Modality.SYSTOLIC_BP,
    "diastolic blood pressure": Modality.DIASTOLIC_BP,
    "body temperature": Modality.BODY_TEMPERATURE,
    "skin temperature": Modality.BODY_TEMPERATURE,
    "movement": Modality.ACTIVITY,
    "activity": Modality.ACTIVITY,
    "sleep": Modality.SLEEP,
    "sleep stage": Modality.SLEEP,
}


class IngestError(RtmEvalError):
    pass


class MalformedRow(IngestError):
    pass


class UnknownModality(IngestError):
    pass


class UnparseableTimestamp(IngestError):
    pass


class DuplicateKey(IngestError):
    pass


class MissingField(IngestError):
    pass


class InsufficientDays(IngestError):
    pass


class Pipeline(Enum):
    ZERO_SHOT = "zero_shot"
    STAT_BASED = "stat_based"
    IMAGE_BASED = "image_based"
    EXTERNAL = "external"


@dataclass(frozen=True)
class Summary:
    """One generated (or reference) narrative for a patient-day."""

    patient_id: str
    date: Date
    pipeline: Pipeline
    text: str

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.patient_id, self.date.isoformat(), self.pipeline.value)

    def to_record(self) -> dict:
        return {
            "patient_id": self.patient_id,
            "date": self.date.isoformat(),
            "pipeline": self.pipeline.value,
            "text": self.text,
        }


@dataclass(frozen=True)
class RejectedRow:
    line_no: int
    reason: str
    detail: str


@dataclass
class ObservationLoad:
    days: list[PatientDay]
    rejects: list[RejectedRow]
    total_rows: int


@dataclass
class SummaryLoad:
    summaries: list[Summary]
    rejects: list[RejectedRow]
    total_rows: int


def _parse_timestamp(raw: str, day: Date) -> datetime:
    raw = raw.strip()
    try:
        if ":" in raw and "-" not in raw and "T" not in raw and " " not in raw:
            # Bare HH:MM[:SS] is interpreted relative to the row's date.
            hh, mm = raw.split(":")[:2]
            ts = datetime(day.year, day.month, day.day, int(hh), int(mm))
        else:
            ts = datetime.fromisoformat(raw)
    except ValueError:
        raise UnparseableTimestamp(f"unparseable timestamp {raw!r}") from None
    return ts.replace(second=0, microsecond=0)


def _parse_value(modality: Modality, raw: str):
    raw = raw.strip()
    if modality.is_vital:
        try:
            value = float(raw)
        except ValueError:
            raise MalformedRow(f"non-numeric value {raw!r} for {modality.value}") from None
        if value != value or value in (float("inf"), float("-inf")):
            raise MalformedRow(f"non-finite value {raw!r} for {modality.value}")
        return value
    try:
        return float(raw)
    except ValueError:
        pass
    if not raw:
        raise MalformedRow(f"empty value for {modality.value}")
    return raw


def _parse_generic_row(row: dict, line_no: int) -> tuple[str, Date, Observation]:
    missing = [k for k in CSV_HEADER if row.get(k) in (None, "")]
    if missing:
        raise MalformedRow(f"missing fields: {', '.join(missing)}")
    patient_id = row["patient_id"].strip()
    try:
        day = Date.fromisoformat(row["date"].strip())
    except ValueError:
        raise MalformedRow(f"bad date {row['date']!r}") from None
    name = row["modality"].strip()
    try:
        modality = Modality(name)
    except ValueError:
        raise UnknownModality(f"unknown modality {name!r}") from None
    ts = _parse_timestamp(row["timestamp"], day)
    if ts.date() != day:
        raise MalformedRow(f"timestamp {ts} outside date {day}")
    value = _parse_value(modality, row["value"])
    return patient_id, day, Observation(ts, modality, value)


def _parse_tihm_row(row: dict, line_no: int) -> tuple[str, Date, Observation]:
    patient_id = (row.get("patient_id") or row.get("id") or "").strip()
    device = (row.get("device_type") or row.get("device") or "").strip()
    raw_ts = (row.get("datetime") or row.get("date") or "").strip()
    raw_value = (row.get("value") or "").strip()
    if not patient_id or not device or not raw_ts or not raw_value:
        raise MalformedRow("missing patient_id, device_type, datetime, or value")
    modality = TIHM_DEVICE_TO_MODALITY.get(device.lower())
    if modality is None:
        raise UnknownModality(f"unknown device type {device!r}")
    try:
        ts = datetime.fromisoformat(raw_ts).replace(second=0, microsecond=0)
    except ValueError:
        raise UnparseableTimestamp(f"unparseable timestamp {raw_ts!r}") from None
    value = _parse_value(modality, raw_value)
    return patient_id, ts.date(), Observation(ts, modality, value)


def load_observations(path: str | Path, schema: str = "generic") -> ObservationLoad:
    """Parse an observation file (or a directory of them for tihm_like exports).

    Returns one PatientDay per distinct (patient_id, date). Every input row is
    either parsed or reported in the rejects list with its line number.
    """
    path = Path(path)
    if schema not in ("generic", "tihm_like"):
        raise IngestError(f"unknown schema {schema!r}")
    files = sorted(path.glob("*.csv")) if path.is_dir() else [path]
    if not files:
        raise IngestError(f"no CSV files in {path}")

    parse = _parse_generic_row if schema == "generic" else _parse_tihm_row
    grouped: dict[tuple[str, Date], dict[Modality, list[Observation]]] = {}
    rejects: list[RejectedRow] = []
    total = 0

    for file in files:
        with open(file, newline="", encoding="utf-8") as handle:
            reader = csv.reader(handle)
            header = next(reader, None)
            if header is None:
                continue
            if schema == "generic" and tuple(h.strip() for h in header) != CSV_HEADER:
                raise MalformedRow(
                    f"{file}: expected header {','.join(CSV_HEADER)}, got {','.join(header)}"
                )
            columns = [h.strip() for h in header]
            for line_no, cells in enumerate(reader, start=2):
                if not cells or all(not c.strip() for c in cells):
                    continue
                total += 1
                row = dict(zip(columns, cells))
                try:
                    patient_id, day, obs = parse(row, line_no)
                except IngestError as exc:
                    rejects.append(RejectedRow(line_no, type(exc).__name__, str(exc)))
                    continue
                grouped.setdefault((patient_id, day), {}).setdefault(obs.modality, []).append(obs)

    days = []
    for (patient_id, day), per_modality in sorted(grouped.items()):
        record = PatientDay(
            patient_id, day, {m: tuple(obs) for m, obs in per_modality.items()}
        )
        days.append(validate_patient_day(record))
    return ObservationLoad(days=days, rejects=rejects, total_rows=total)


def write_observations(days: list[PatientDay], path: str | Path) -> None:
    """Write PatientDays in the canonical CSV format (round-trips with load_observations)."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(CSV_HEADER)
        for day in sorted(days, key=lambda d: (d.patient_id, d.date)):
            for modality in day.modalities:
                for obs in day.readings(modality):
                    value = repr(obs.value) if isinstance(obs.value, float) else obs.value
                    writer.writerow(
                        [
                            day.patient_id,
                            day.date.isoformat(),
                            obs.timestamp.strftime("%Y-%m-%dT%H:%M"),
                            modality.value,
                            value,
                        ]
                    )


def load_summaries(path: str | Path) -> SummaryLoad:
    """Parse line-delimited summary records; one Summary or one reject per line."""
    summaries: list[Summary] = []
    rejects: list[RejectedRow] = []
    seen: set[tuple[str, str, str]] = set()
    total = 0
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            total += 1
            try:
                summary = _parse_summary_line(line)
            except IngestError as exc:
                rejects.append(RejectedRow(line_no, type(exc).__name__, str(exc)))
                continue
            if summary.key in seen:
                rejects.append(
                    RejectedRow(line_no, "DuplicateKey", f"duplicate key {summary.key}")
                )
                continue
            seen.add(summary.key)
            summaries.append(summary)
    return SummaryLoad(summaries=summaries, rejects=rejects, total_rows=total)


def _parse_summary_line(line: str) -> Summary:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedRow(f"invalid JSON: {exc.msg}") from None
    if not isinstance(record, dict):
        raise MalformedRow("record is not an object")
    for fld in ("patient_id", "date", "pipeline", "text"):
        if fld not in record or record[fld] in (None, ""):
            raise MissingField(f"missing field {fld!r}")
    text = str(record["text"])
    if not text.strip():
        raise MissingField("field 'text' is empty")
    try:
        day = Date.fromisoformat(str(record["date"]))
    except ValueError:
        raise MalformedRow(f"bad date {record['date']!r}") from None
    try:
        pipeline = Pipeline(str(record["pipeline"]))
    except ValueError:
        raise MalformedRow(f"unknown pipeline {record['pipeline']!r}") from None
    return Summary(str(record["patient_id"]), day, pipeline, text)


def write_summaries(summaries: list[Summary], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for summary in summaries:
            handle.write(json.dumps(summary.to_record(), sort_keys=True) + "\n")


def write_rejects(rejects: list[RejectedRow], path: str | Path) -> None:
    """Sidecar reject report: tab-separated line number, reason, detail."""
    with open(path, "w", encoding="utf-8") as handle:
        for reject in rejects:
            handle.write(f"{reject.line_no}\t{reject.reason}\t{reject.detail}\n")


def split_eval_set(
    days: list[PatientDay], n: int, seed: int
) -> tuple[list[PatientDay], list[PatientDay]]:
    """Deterministic patient-stratified split into (test, development) sets.

    Test days are drawn round-robin across shuffled patients so no single
    patient dominates the held-out set.
    """
    if n > len(days):
        raise InsufficientDays(f"requested {n} test days from {len(days)} available")
    rng = random.Random(seed)
    ordered = sorted(days, key=lambda d: (d.patient_id, d.date))
    by_patient: dict[str, list[PatientDay]] = {}
    for day in ordered:
        by_patient.setdefault(day.patient_id, []).append(day)
    patients = sorted(by_patient)
    rng.shuffle(patients)
    for patient in patients:
        rng.shuffle(by_patient[patient])

    test: list[PatientDay] = []
    while len(test) < n:
        for patient in patients:
            if len(test) >= n:
                break
            if by_patient[patient]:
                test.append(by_patient[patient].pop())
    test_keys = {(d.patient_id, d.date) for d in test}
    dev = [d for d in ordered if (d.patient_id, d.date) not in test_keys]
    test.sort(key=lambda d: (d.patient_id, d.date))
    return test, dev
