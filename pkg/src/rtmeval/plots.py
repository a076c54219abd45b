"""Per-vital SVG day plots with threshold guides, plus the vision prompt.

SVGs are built by plain string assembly so identical inputs produce
byte-identical files and tests can parse the geometry back out. The plot
group carries ``data-*`` attributes describing both the data domain and the
pixel rectangle, which makes the axis transform invertible without peeking
at renderer internals.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from pathlib import Path

from .errors import RtmEvalError
from .model import (
    VITALS,
    Modality,
    Observation,
    PatientDay,
    ThresholdConfig,
    reference_range_lines,
)

log = logging.getLogger(__name__)

WIDTH, HEIGHT = 800, 420
MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 64, 24, 48, 56

SLEEP_BAND_FILL = {
    "awake": "#f2e8c9",
    "light": "#dce9f5",
    "deep": "#b8cfe8",
    "rem": "#cfe3cf",
}
DEFAULT_BAND_FILL = "#e5e5ef"


class IoFailure(RtmEvalError):
    pass


class NonVitalModality(RtmEvalError):
    pass


def _minutes(ts) -> float:
    return ts.hour * 60.0 + ts.minute


def _fmt(x: float) -> str:
    return f"{x:.3f}"


@dataclass(frozen=True)
class PlotSpec:
    """Everything one vital's plot is built from."""

    vital: Modality
    width: int
    height: int
    band: tuple[float, float]  # threshold guides drawn exactly at these bounds
    series: tuple[Observation, ...]
    title: str
    sleep_context: tuple[Observation, ...] = ()


def plot_spec(day: PatientDay, vital: Modality, cfg: ThresholdConfig) -> PlotSpec:
    if not vital.is_vital:
        raise NonVitalModality(f"{vital.value} has no threshold band to plot")
    sleep = day.readings(Modality.SLEEP) if vital is not Modality.SLEEP else ()
    return PlotSpec(
        vital=vital,
        width=WIDTH,
        height=HEIGHT,
        band=cfg.bounds[vital],
        series=day.readings(vital),
        title=f"{vital.display} - {day.patient_id} {day.date.isoformat()}",
        sleep_context=sleep,
    )


def _svg_for_vital(day: PatientDay, vital: Modality, cfg: ThresholdConfig) -> str:
    spec = plot_spec(day, vital, cfg)
    readings = [o for o in spec.series if isinstance(o.value, (int, float))]
    points = [(_minutes(o.timestamp), float(o.value)) for o in readings]
    lower, upper = spec.band

    x_vals = [p[0] for p in points]
    x0, x1 = min(x_vals) - 15.0, max(x_vals) + 15.0
    if x1 - x0 < 60.0:
        center = (x0 + x1) / 2.0
        x0, x1 = center - 30.0, center + 30.0
    x0, x1 = max(0.0, x0), min(24.0 * 60.0, x1)

    y_vals = [p[1] for p in points] + [lower, upper]
    y_lo, y_hi = min(y_vals), max(y_vals)
    pad = max((y_hi - y_lo) * 0.08, 1.0)
    y0, y1 = y_lo - pad, y_hi + pad

    left, right = float(MARGIN_LEFT), float(WIDTH - MARGIN_RIGHT)
    top, bottom = float(MARGIN_TOP), float(HEIGHT - MARGIN_BOTTOM)

    def px(x: float) -> float:
        return left + (x - x0) / (x1 - x0) * (right - left)

    def py(y: float) -> float:
        return bottom - (y - y0) / (y1 - y0) * (bottom - top)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{spec.width}" height="{spec.height}" '
        f'viewBox="0 0 {spec.width} {spec.height}">',
        '<rect x="0" y="0" width="100%" height="100%" fill="#ffffff"/>',
        f'<text x="{spec.width / 2:.1f}" y="26" text-anchor="middle" font-size="16" '
        f'font-family="sans-serif">{spec.title}</text>',
    ]

    plot_attrs = (
        f'class="plot" data-x0="{_fmt(x0)}" data-x1="{_fmt(x1)}" '
        f'data-y0="{_fmt(y0)}" data-y1="{_fmt(y1)}" '
        f'data-left="{_fmt(left)}" data-right="{_fmt(right)}" '
        f'data-top="{_fmt(top)}" data-bottom="{_fmt(bottom)}"'
    )
    parts.append(f"<g {plot_attrs}>")

    # Sleep-stage context bands, drawn first so the series stays on top.
    sleep = spec.sleep_context
    if sleep:
        idx = 0
        while idx < len(sleep):
            stage = sleep[idx].value
            end_idx = idx
            while end_idx + 1 < len(sleep) and sleep[end_idx + 1].value == stage:
                end_idx += 1
            band_start = max(x0, _minutes(sleep[idx].timestamp))
            band_end = min(x1, _minutes(sleep[end_idx].timestamp))
            if band_end > band_start:
                fill = SLEEP_BAND_FILL.get(str(stage).lower(), DEFAULT_BAND_FILL)
                parts.append(
                    f'<rect class="sleep-band" x="{_fmt(px(band_start))}" y="{_fmt(top)}" '
                    f'width="{_fmt(px(band_end) - px(band_start))}" '
                    f'height="{_fmt(bottom - top)}" fill="{fill}" opacity="0.5"/>'
                )
            idx = end_idx + 1

    parts.append(
        f'<rect x="{_fmt(left)}" y="{_fmt(top)}" width="{_fmt(right - left)}" '
        f'height="{_fmt(bottom - top)}" fill="none" stroke="#333333" stroke-width="1"/>'
    )

    # Exactly two threshold guides, at the configured bounds.
    for bound, label in ((lower, "lower"), (upper, "upper")):
        y_px = py(bound)
        parts.append(
            f'<line class="threshold" data-bound="{label}" data-value="{_fmt(bound)}" '
            f'x1="{_fmt(left)}" y1="{_fmt(y_px)}" x2="{_fmt(right)}" y2="{_fmt(y_px)}" '
            f'stroke="#c0392b" stroke-width="1" stroke-dasharray="6,4"/>'
        )
        parts.append(
            f'<text x="{_fmt(right - 4)}" y="{_fmt(y_px - 4)}" text-anchor="end" '
            f'font-size="10" font-family="sans-serif" fill="#c0392b">{bound:g} {vital.unit}</text>'
        )

    # Hour ticks on a fixed two-hour grid.
    first_tick = int(x0 // 120 + (1 if x0 % 120 else 0)) * 120
    for tick in range(first_tick, int(x1) + 1, 120):
        parts.append(
            f'<line x1="{_fmt(px(tick))}" y1="{_fmt(bottom)}" x2="{_fmt(px(tick))}" '
            f'y2="{_fmt(bottom + 5)}" stroke="#333333" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{_fmt(px(tick))}" y="{_fmt(bottom + 20)}" text-anchor="middle" '
            f'font-size="11" font-family="sans-serif">{tick // 60:02d}:{tick % 60:02d}</text>'
        )
    for i in range(5):
        y_tick = y0 + (y1 - y0) * i / 4.0
        parts.append(
            f'<text x="{_fmt(left - 6)}" y="{_fmt(py(y_tick) + 4)}" text-anchor="end" '
            f'font-size="11" font-family="sans-serif">{y_tick:.1f}</text>'
        )

    polyline = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}" for x, y in points)
    parts.append(
        f'<polyline class="series" fill="none" stroke="#1f77b4" stroke-width="2" '
        f'points="{polyline}"/>'
    )
    for x, y in points:
        parts.append(
            f'<circle class="pt" cx="{_fmt(px(x))}" cy="{_fmt(py(y))}" r="3" fill="#1f77b4"/>'
        )

    parts.append("</g>")
    parts.append(
        f'<text x="{_fmt(left)}" y="{HEIGHT - 12}" font-size="11" font-family="sans-serif" '
        f'fill="#555555">value ({vital.unit}) vs time of day</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts)


def render_day(day: PatientDay, cfg: ThresholdConfig, out_dir: str | Path) -> list[Path]:
    """Write one SVG per vital with at least one reading; returns the paths written.

    Vitals without readings are skipped with a log line. Output bytes are a
    pure function of (day, cfg).
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {out_dir}: {exc}") from exc

    written = []
    for vital in VITALS:
        if not day.readings(vital):
            log.info("skipping %s for %s %s: no readings", vital.value, day.patient_id, day.date)
            continue
        svg = _svg_for_vital(day, vital, cfg)
        path = out_dir / f"{day.patient_id}_{day.date.isoformat()}_{vital.value}.svg"
        tmp = path.with_name(path.name + f".tmp{os.getpid()}")
        try:
            tmp.write_text(svg, encoding="utf-8")
            os.replace(tmp, path)
        except OSError as exc:
            raise IoFailure(f"cannot write {path}: {exc}") from exc
        written.append(path)
    return written


VISION_TEMPLATE = """You are a clinical summarization assistant trained to generate safe, factual, and structured remote monitoring reports for elderly patients with dementia. Your outputs are evaluated for factual accuracy, actionability, and clarity.

The provided image contains a single vital sign time series for {signal}. You must report only what is explicitly visible in the image.

You MUST use only information directly supported by the visual data. Do not fabricate, generalize, or assume patterns without clear supporting evidence. Explicitly state any uncertainty or missing information.

Your response MUST follow this structure exactly:

OVERALL STATUS
Provide a one-sentence overview of the patient's day based only on this {signal} plot.

PHYSIOLOGICAL ANALYSIS
Perform:
- Abnormality check relative to clinical thresholds.
- Trend analysis across multiple timestamps.
- Duration analysis for sustained abnormalities (>{persistence_minutes} minutes).

For abnormality reporting, you MUST include the vital name exactly as written: "{signal}".
You MUST use one of the following exact templates:
- "{signal} was Abnormally High (value: X.X)."
- "{signal} was Abnormally Low (value: X.X)."
- "{signal} was within normal range."

Clinical reference ranges:
{reference_ranges}

BEHAVIORAL ANALYSIS
If activity or sleep context is visible, summarize it. Otherwise state:
"No data available for activity/sleep from this image."

CLINICALLY SIGNIFICANT EVENTS
If labeled events are visible, describe timing and correlation. Otherwise state:
"No labeled events visible."

Every statement must be grounded in timestamped data visible in the image. Do not infer anything not supported by the provided visual evidence."""


def render_vision_prompt(vital: Modality, cfg: ThresholdConfig | None = None) -> str:
    """Vision instruction text for one vital's plot; only vitals are accepted."""
    if not vital.is_vital:
        raise NonVitalModality(f"{vital.value} has no single-vital plot prompt")
    cfg = cfg or ThresholdConfig()
    ranges = "\n".join(f"- {line}" for line in reference_range_lines(cfg))
    return VISION_TEMPLATE.format(
        signal=vital.display,
        persistence_minutes=cfg.persistence_minutes,
        reference_ranges=ranges,
    )
