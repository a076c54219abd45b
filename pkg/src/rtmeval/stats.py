"""Per-day descriptive statistics and prompt assembly for the text pipelines.

``compute_stat_summary`` reduces a patient-day to per-vital mean/min/max/std
plus a discrete abnormality indicator; ``render_prompt`` wraps either the raw
serialization or the statistics block in the corresponding instruction
template.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import date as Date
from enum import Enum
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import RtmEvalError
from .model import (
    VITALS,
    Direction,
    Modality,
    PatientDay,
    ThresholdConfig,
    format_reading,
    reference_range_lines,
)

NO_DATA_SENTINEL = "No data available for this category."


class MissingStatSummary(RtmEvalError):
    pass


class AbnormalityIndicator(Enum):
    NORMAL = "normal"
    HIGH = "high"
    LOW = "low"
    MIXED = "mixed"


@dataclass(frozen=True)
class VitalStats:
    count: int
    mean: float
    min: float
    max: float
    std: float
    indicator: AbnormalityIndicator


@dataclass(frozen=True)
class StatSummary:
    """Compact numeric description of one patient-day."""

    patient_id: str
    date: Date
    vitals: Mapping[Modality, VitalStats]
    available: Mapping[Modality, bool]

    def to_record(self) -> dict:
        return {
            "patient_id": self.patient_id,
            "date": self.date.isoformat(),
            "vitals": {
                m.value: {
                    "count": s.count,
                    "mean": s.mean,
                    "min": s.min,
                    "max": s.max,
                    "std": s.std,
                    "indicator": s.indicator.value,
                }
                for m, s in self.vitals.items()
            },
            "available": {m.value: flag for m, flag in self.available.items()},
        }


def compute_stat_summary(
    day: PatientDay, cfg: ThresholdConfig, include_indicators: bool = True
) -> StatSummary:
    """Population statistics per vital plus availability flags for every modality.

    ``include_indicators=False`` reports every observed vital as normal, for
    runs that want the paper-stated statistics without the discrete flags.
    """
    vitals: dict[Modality, VitalStats] = {}
    for vital in VITALS:
        values = np.array(
            [float(o.value) for o in day.readings(vital) if isinstance(o.value, (int, float))]
        )
        if values.size == 0:
            continue
        if include_indicators:
            directions = {cfg.classify(vital, v) for v in values.tolist()} - {None}
            if not directions:
                indicator = AbnormalityIndicator.NORMAL
            elif directions == {Direction.HIGH}:
                indicator = AbnormalityIndicator.HIGH
            elif directions == {Direction.LOW}:
                indicator = AbnormalityIndicator.LOW
            else:
                indicator = AbnormalityIndicator.MIXED
        else:
            indicator = AbnormalityIndicator.NORMAL
        vitals[vital] = VitalStats(
            count=int(values.size),
            mean=float(values.mean()),
            min=float(values.min()),
            max=float(values.max()),
            std=float(values.std()),  # population std: descriptive use
            indicator=indicator,
        )
    available = {m: len(day.readings(m)) > 0 for m in Modality}
    return StatSummary(day.patient_id, day.date, vitals, available)


def serialize_raw(day: PatientDay) -> str:
    """Human-readable transcription of the raw day, grouped by modality.

    Modalities appear in canonical order; vital headings carry units; missing
    modalities get the no-data sentinel.
    """
    blocks = []
    for modality in Modality:
        heading = (
            f"{modality.display} ({modality.unit}):" if modality.is_vital else f"{modality.display}:"
        )
        lines = [heading]
        readings = day.readings(modality)
        if readings:
            for obs in readings:
                lines.append(f"{obs.timestamp.strftime('%H:%M')} {format_reading(modality, obs.value)}")
        else:
            lines.append(NO_DATA_SENTINEL)
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks)


_INDICATOR_TEXT = {
    AbnormalityIndicator.NORMAL: "within normal range",
    AbnormalityIndicator.HIGH: "Abnormally High readings present",
    AbnormalityIndicator.LOW: "Abnormally Low readings present",
    AbnormalityIndicator.MIXED: "Abnormally High and Abnormally Low readings present",
}


def serialize_stat_summary(summary: StatSummary, include_indicators: bool = True) -> str:
    """Statistics block used as the structured patient text of the stat prompt."""
    blocks = []
    for modality in Modality:
        if modality.is_vital:
            stats = summary.vitals.get(modality)
            lines = [f"{modality.display} ({modality.unit}):"]
            if stats is None:
                lines.append(NO_DATA_SENTINEL)
            else:
                fmt = lambda v: format_reading(modality, v)  # noqa: E731
                lines.append(
                    f"count {stats.count}, mean {fmt(stats.mean)}, min {fmt(stats.min)}, "
                    f"max {fmt(stats.max)}, std {stats.std:.1f}"
                )
                if include_indicators:
                    lines.append(f"status: {_INDICATOR_TEXT[stats.indicator]}")
        else:
            lines = [f"{modality.display}:"]
            if summary.available.get(modality):
                lines.append("observations recorded for this category.")
            else:
                lines.append(NO_DATA_SENTINEL)
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks)


ZERO_SHOT_TEMPLATE = """You are a clinical AI assistant specializing in remote monitoring for dementia patients. Your task is to provide a concise, clinically relevant summary of a patient's raw time-series data for a doctor.

PATIENT DATA FOR {target_date}:
---
{structured_patient_text}
---

Instructions: You MUST adhere strictly to the data provided in the "PATIENT DATA" section. Your primary goal is factuality. Based only on the raw time-series data provided, generate a summary that addresses the following:

1. Grounding: Every statement you make MUST be directly supported by a data point in the provided text. Do not infer trends from single data points. Do not add information that is not present.
2. Handling Missing Data: If a category like "Sleep Patterns" is missing from the input, you MUST state: "No data available for this category."
3. Overall Status: Provide a one-sentence overview of the patient's day.
4. Physiological Analysis: Analyze the time-series vitals. Note any trends, stability, or significant spikes/dips throughout the day.
5. Behavioral Analysis: Analyze the activity and sleep logs. Describe the patient's routine (e.g., when they were active, when they slept) and sleep quality.
6. Clinically Significant Events: If a labeled event is present, you MUST highlight it and try to correlate it with the sensor data.

Format the output as a clean, bulleted list. Be specific and refer to times if necessary."""

STAT_TEMPLATE = """You are a clinical summarization assistant trained to generate safe, factual, and structured remote monitoring reports for elderly patients with dementia. You operate under clinical supervision and your outputs will be evaluated by physicians for factual accuracy, actionability, and clarity.

PATIENT DATA FOR {target_date}:
---
{structured_patient_text}
---

Instructions. You MUST only use and infer information explicitly present in the PATIENT DATA section. You are NOT allowed to fabricate, generalize, or assume any patterns without specific supporting data. You must flag any uncertainty or data absence explicitly.

Format your output using the following structure:

OVERALL STATUS
- One-sentence overview of the patient's day.

PHYSIOLOGICAL ANALYSIS

For each vital sign (Heart Rate, Systolic/Diastolic Blood Pressure, Body Temperature), perform:

1. Abnormality Check: Compare average and peak values to the ranges below. If outside range, state as "Abnormally High" or "Abnormally Low" and include specific values:
{reference_ranges}
2. Trend Analysis: Identify any clear increasing or decreasing trends over several hours, supported by multiple timestamps. Flag uncertain or noisy data.
3. Duration Analysis: If abnormalities were sustained over consecutive readings (e.g. >{persistence_minutes} minutes), report duration and time range.

BEHAVIORAL ANALYSIS
- Summarize daily activity patterns and sleep data.
- Include periods of peak movement or long inactivity.
- For sleep, report total duration and breakdown by sleep stage (if available).
- Flag any missing data explicitly (e.g. "No data available for sleep patterns").

CLINICALLY SIGNIFICANT EVENTS
- If labeled events are present (e.g., Agitation, Fall), describe timing and attempt correlation with physiology or behavior.

Ensure all bullet points are supported by timestamped data. Do not infer anything not backed by the provided input."""


def render_prompt(
    kind: str,
    day: PatientDay,
    summary: StatSummary | None = None,
    cfg: ThresholdConfig | None = None,
) -> str:
    """Fill the zero_shot or stat_based instruction template for one day.

    Rendering is deterministic: identical inputs give byte-identical prompts.
    """
    cfg = cfg or ThresholdConfig()
    target_date = day.date.isoformat()
    if kind == "zero_shot":
        return ZERO_SHOT_TEMPLATE.format(
            target_date=target_date,
            structured_patient_text=serialize_raw(day),
        )
    if kind == "stat_based":
        if summary is None:
            raise MissingStatSummary("stat_based prompt requires a StatSummary")
        ranges = "\n".join(f"   - {line}" for line in reference_range_lines(cfg))
        return STAT_TEMPLATE.format(
            target_date=target_date,
            structured_patient_text=serialize_stat_summary(summary),
            reference_ranges=ranges,
            persistence_minutes=cfg.persistence_minutes,
        )
    raise RtmEvalError(f"unknown prompt kind {kind!r}")


def write_stat_summaries(summaries: list[StatSummary], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for summary in summaries:
            handle.write(json.dumps(summary.to_record(), sort_keys=True) + "\n")
