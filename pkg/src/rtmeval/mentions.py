"""Extraction of claimed clinical events from summary text.

The policy is deliberately conservative: an abnormal claim requires a vital
name and an explicit abnormality indicator in the same sentence. Sentences
naming a vital without any indicator yield nothing, negated indicators
("not elevated", "no abnormalities") force the claim to normal polarity, and
an unqualified "blood pressure" is kept as a single group-level claim that
the evaluator may reconcile with either BP vital.

Claimed values ("value: 177.0", "at 150 mmHg"), durations ("for 40 minutes",
"sustained") and time windows ("from 13:00 to 13:30") are captured so match
fidelity can be diagnosed downstream.

The default lexicon below is version-pinned; scores are only comparable
between runs using the same lexicon version.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from datetime import time
from enum import Enum
from functools import cached_property
from pathlib import Path

from .errors import RtmEvalError
from .ingest import Summary
from .model import VITALS, Modality

LEXICON_VERSION = "1"


class LexiconError(RtmEvalError):
    pass


class Polarity(Enum):
    ABNORMAL_HIGH = "abnormal_high"
    ABNORMAL_LOW = "abnormal_low"
    ABNORMAL_UNSPECIFIED = "abnormal_unspecified"
    NORMAL = "normal"


class ClaimType(Enum):
    POINT = "point"
    DURATION = "duration"
    COVERAGE_STATEMENT = "coverage_statement"


@dataclass(frozen=True)
class ClaimedMention:
    """One normalized claim found in a summary sentence.

    ``vital`` is None only for group-level blood-pressure claims, which set
    ``bp_group`` instead.
    """

    vital: Modality | None
    polarity: Polarity
    claim_type: ClaimType
    sentence_index: int
    surface: str
    bp_group: bool = False
    value: float | None = None
    duration_minutes: float | None = None
    interval: tuple[time, time] | None = None

    @property
    def is_abnormal(self) -> bool:
        return self.polarity in (
            Polarity.ABNORMAL_HIGH,
            Polarity.ABNORMAL_LOW,
            Polarity.ABNORMAL_UNSPECIFIED,
        )

    def to_record(self) -> dict:
        return {
            "vital": self.vital.value if self.vital else None,
            "bp_group": self.bp_group,
            "polarity": self.polarity.value,
            "claim_type": self.claim_type.value,
            "value": self.value,
            "duration_minutes": self.duration_minutes,
            "interval": [t.strftime("%H:%M") for t in self.interval] if self.interval else None,
            "sentence_index": self.sentence_index,
            "surface": self.surface,
        }


_DEFAULT_VITAL_TERMS: dict[Modality, tuple[str, ...]] = {
    Modality.HEART_RATE: ("heart rate", "pulse rate", "pulse", "hr"),
    Modality.SYSTOLIC_BP: (
        "systolic blood pressure",
        "systolic bp",
        "systolic pressure",
        "systolic",
        "sbp",
    ),
    Modality.DIASTOLIC_BP: (
        "diastolic blood pressure",
        "diastolic bp",
        "diastolic pressure",
        "diastolic",
        "dbp",
    ),
    Modality.BODY_TEMPERATURE: ("body temperature", "temperature", "temp"),
    Modality.ACTIVITY: ("activity levels", "activities", "activity", "movement", "motion", "active"),
    Modality.SLEEP: (
        "sleep patterns",
        "sleep pattern",
        "sleep staging",
        "sleep stages",
        "sleep",
        "slept",
        "asleep",
    ),
}

_DEFAULT_BP_GROUP_TERMS = ("blood pressure", "bp")

_DEFAULT_HIGH_TERMS = (
    "abnormally high",
    "elevated",
    "elevation",
    "spiked above",
    "spiked",
    "spike",
    "peaked above",
    "exceeded",
    "hypertensive",
    "high",
    "above",
)
_DEFAULT_LOW_TERMS = (
    "abnormally low",
    "dropped below",
    "dipped",
    "dip",
    "hypotensive",
    "low",
    "below",
)
_DEFAULT_UNSPECIFIED_TERMS = (
    "outside the normal range",
    "outside normal range",
    "out of range",
    "abnormalities",
    "abnormality",
    "abnormal",
    "abnormally",
)
_DEFAULT_NORMALITY_TERMS = (
    "within normal limits",
    "within the normal limits",
    "within normal range",
    "within the normal range",
    "no abnormalities",
    "unremarkable",
    "normal",
)

_NEGATION_PATTERNS = (
    r"\bnot\s+(?:\w+\s+){0,2}?(?:elevated|elevation|high|low|abnormal\w*)\b",
    r"\bno\s+(?:\w+\s+){0,2}?(?:abnormalit\w*|deviations?|spikes?|drops?|dips?)\b",
    r"\bwithout\s+(?:any\s+)?(?:abnormalit\w*|deviations?)\b",
)

_SENTINEL_RE = re.compile(r"\bno data (?:is |was )?available\b")


def _alternation(terms: tuple[str, ...]) -> re.Pattern:
    ordered = sorted(terms, key=len, reverse=True)
    return re.compile(r"\b(?:" + "|".join(re.escape(t) for t in ordered) + r")\b")


@dataclass(eq=False)
class Lexicon:
    """Surface vocabulary driving mention extraction; treat instances as immutable."""

    vital_terms: dict[Modality, tuple[str, ...]] = field(
        default_factory=lambda: dict(_DEFAULT_VITAL_TERMS)
    )
    bp_group_terms: tuple[str, ...] = _DEFAULT_BP_GROUP_TERMS
    high_terms: tuple[str, ...] = _DEFAULT_HIGH_TERMS
    low_terms: tuple[str, ...] = _DEFAULT_LOW_TERMS
    unspecified_terms: tuple[str, ...] = _DEFAULT_UNSPECIFIED_TERMS
    normality_terms: tuple[str, ...] = _DEFAULT_NORMALITY_TERMS
    version: str = LEXICON_VERSION

    @cached_property
    def _vital_index(self) -> list[tuple[str, Modality | None]]:
        # Longest term first so "systolic blood pressure" wins over "blood pressure".
        entries: list[tuple[str, Modality | None]] = []
        for modality, terms in self.vital_terms.items():
            entries.extend((term.lower(), modality) for term in terms)
        entries.extend((term.lower(), None) for term in self.bp_group_terms)
        entries.sort(key=lambda e: len(e[0]), reverse=True)
        return entries

    @cached_property
    def _vital_re(self) -> re.Pattern:
        terms = tuple(term for term, _ in self._vital_index)
        return re.compile(r"\b(?:" + "|".join(re.escape(t) for t in terms) + r")\b")

    @cached_property
    def _term_to_target(self) -> dict[str, Modality | None]:
        return dict(self._vital_index)

    @cached_property
    def _indicator_index(self) -> list[tuple[str, Polarity]]:
        entries = [(t.lower(), Polarity.ABNORMAL_HIGH) for t in self.high_terms]
        entries += [(t.lower(), Polarity.ABNORMAL_LOW) for t in self.low_terms]
        entries += [(t.lower(), Polarity.ABNORMAL_UNSPECIFIED) for t in self.unspecified_terms]
        entries.sort(key=lambda e: len(e[0]), reverse=True)
        return entries

    @cached_property
    def _indicator_re(self) -> re.Pattern:
        return _alternation(tuple(term for term, _ in self._indicator_index))

    @cached_property
    def _indicator_map(self) -> dict[str, Polarity]:
        return dict(self._indicator_index)

    @cached_property
    def _normality_re(self) -> re.Pattern:
        return _alternation(self.normality_terms)

    @cached_property
    def _negation_res(self) -> tuple[re.Pattern, ...]:
        return tuple(re.compile(p) for p in _NEGATION_PATTERNS)

    def find_vitals(self, lowered: str) -> list[Modality | None]:
        """Non-overlapping vital hits in order of first appearance; None = BP group."""
        hits: list[Modality | None] = []
        for match in self._vital_re.finditer(lowered):
            target = self._term_to_target[match.group(0)]
            if target not in hits:
                hits.append(target)
        return hits

    def polarity_set(self, lowered: str) -> set[Polarity]:
        for negation in self._negation_res:
            if negation.search(lowered):
                return {Polarity.NORMAL}
        abnormal = {
            self._indicator_map[m.group(0)] for m in self._indicator_re.finditer(lowered)
        }
        if abnormal:
            return abnormal
        if self._normality_re.search(lowered):
            return {Polarity.NORMAL}
        return set()

    @classmethod
    def from_file(cls, path: str | Path) -> "Lexicon":
        """Override lexicon sections from a stanza file; absent sections keep defaults.

        Format: ``[heart_rate]`` style stanza headers, one term per line,
        ``#`` comments allowed. Recognized stanzas: each modality name,
        ``bp_group``, ``indicators.high``, ``indicators.low``,
        ``indicators.unspecified``, ``normality``.
        """
        sections: dict[str, list[str]] = {}
        current: str | None = None
        for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                current = line[1:-1].strip()
                known = {m.value for m in Modality} | {
                    "bp_group",
                    "indicators.high",
                    "indicators.low",
                    "indicators.unspecified",
                    "normality",
                }
                if current not in known:
                    raise LexiconError(f"{path}:{line_no}: unknown stanza [{current}]")
                sections.setdefault(current, [])
                continue
            if current is None:
                raise LexiconError(f"{path}:{line_no}: term outside any stanza")
            sections[current].append(line.lower())

        lex = cls()
        vital_terms = dict(lex.vital_terms)
        for modality in Modality:
            if modality.value in sections:
                vital_terms[modality] = tuple(sections[modality.value])
        return cls(
            vital_terms=vital_terms,
            bp_group_terms=tuple(sections.get("bp_group", lex.bp_group_terms)),
            high_terms=tuple(sections.get("indicators.high", lex.high_terms)),
            low_terms=tuple(sections.get("indicators.low", lex.low_terms)),
            unspecified_terms=tuple(
                sections.get("indicators.unspecified", lex.unspecified_terms)
            ),
            normality_terms=tuple(sections.get("normality", lex.normality_terms)),
            version=f"{LEXICON_VERSION}+custom",
        )


DEFAULT_LEXICON = Lexicon()

_BULLET_RE = re.compile(r"^\s*(?:[-*•–]+\s+|\(?\d{1,2}[.)]\s+)")
_SENTENCE_END_RE = re.compile(r"[.!?]+(?:\s+|$)")

_VALUE_TEMPLATE_RE = re.compile(r"value:\s*(-?\d+(?:\.\d+)?)")
_VALUE_AT_RE = re.compile(
    r"\b(?:at|of|reaching|peaked at|peaking at)\s+(-?\d+(?:\.\d+)?)(?![\d:])"
)
_VALUE_UNIT_RE = re.compile(r"(-?\d+(?:\.\d+)?)\s*(mmhg|bpm|°c)\b")

_UNIT_TO_VITALS = {
    "mmhg": (Modality.SYSTOLIC_BP, Modality.DIASTOLIC_BP),
    "bpm": (Modality.HEART_RATE,),
    "°c": (Modality.BODY_TEMPERATURE,),
}

_INTERVAL_RE = re.compile(
    r"(\d{1,2}:\d{2})\s*(?:to|until|through|and|[-–])\s*(\d{1,2}:\d{2})"
)
_FOR_MINUTES_RE = re.compile(
    r"\bfor\s+(?:about\s+|approximately\s+|~\s*)?(\d+(?:\.\d+)?)\s*min(?:ute)?s?\b"
)
_FOR_HOURS_RE = re.compile(
    r"\bfor\s+(?:about\s+|approximately\s+|~\s*)?(\d+(?:\.\d+)?)\s*(?:hours?|hrs?)\b"
)
_DURATION_WORD_RE = re.compile(
    r"\b(?:sustained|persisted|persisting|persistent|prolonged|lasting|lasted)\b"
)


def split_sentences(text: str) -> list[str]:
    """Sentence segmentation tuned to bulleted clinical prose.

    Splits on terminal punctuation and line breaks; bullet markers and
    enumerators are stripped; "e.g."/"i.e." do not end a sentence and
    decimal numbers are never split.
    """
    sentences = []
    for raw_line in text.splitlines():
        line = _BULLET_RE.sub("", raw_line).strip()
        if not line:
            continue
        # Same-length masking keeps offsets valid for slicing the original.
        masked = (
            line.replace("e.g.", "e~g~")
            .replace("E.g.", "E~g~")
            .replace("i.e.", "i~e~")
            .replace("I.e.", "I~e~")
        )
        start = 0
        for match in _SENTENCE_END_RE.finditer(masked):
            piece = line[start : match.end()].strip()
            if piece:
                sentences.append(piece)
            start = match.end()
        tail = line[start:].strip()
        if tail:
            sentences.append(tail)
    return sentences


def _time_of(text: str) -> time | None:
    hh, mm = text.split(":")
    hour, minute = int(hh), int(mm)
    if hour > 23 or minute > 59:
        return None
    return time(hour, minute)


def _parse_extent(lowered: str) -> tuple[bool, float | None, tuple[time, time] | None]:
    """(is duration claim, duration minutes, claimed interval) for one sentence."""
    interval = None
    minutes = None
    match = _INTERVAL_RE.search(lowered)
    if match:
        start, end = _time_of(match.group(1)), _time_of(match.group(2))
        if start is not None and end is not None:
            interval = (start, end)
            if end >= start:
                minutes = (end.hour - start.hour) * 60.0 + (end.minute - start.minute)
    match = _FOR_MINUTES_RE.search(lowered)
    if match:
        minutes = float(match.group(1))
    else:
        match = _FOR_HOURS_RE.search(lowered)
        if match:
            minutes = float(match.group(1)) * 60.0
    is_duration = (
        interval is not None
        or minutes is not None
        or _DURATION_WORD_RE.search(lowered) is not None
    )
    return is_duration, minutes, interval


def _value_candidates(lowered: str) -> list[tuple[float, str | None]]:
    candidates: list[tuple[float, str | None]] = []
    for match in _VALUE_TEMPLATE_RE.finditer(lowered):
        candidates.append((float(match.group(1)), None))
    for match in _VALUE_UNIT_RE.finditer(lowered):
        candidates.append((float(match.group(1)), match.group(2)))
    for match in _VALUE_AT_RE.finditer(lowered):
        candidates.append((float(match.group(1)), None))
    return candidates


def _value_for(
    target: Modality | None, candidates: list[tuple[float, str | None]], n_claims: int
) -> float | None:
    for value, unit in candidates:
        if unit is not None:
            allowed = _UNIT_TO_VITALS[unit]
            if target is None and Modality.SYSTOLIC_BP in allowed:
                return value
            if target in allowed:
                return value
    if n_claims == 1:
        for value, _ in candidates:
            return value
    return None


def extract_mentions(summary: Summary, lex: Lexicon | None = None) -> list[ClaimedMention]:
    """All claimed vital events in a summary, one per (sentence, vital, polarity).

    Abnormal and normal claims are extracted for vital modalities (and the BP
    group) only; activity and sleep names participate in coverage, not claims.
    """
    lex = lex or DEFAULT_LEXICON
    mentions: list[ClaimedMention] = []
    for index, sentence in enumerate(split_sentences(summary.text)):
        lowered = sentence.lower()
        hits = lex.find_vitals(lowered)
        if not hits:
            continue

        if _SENTINEL_RE.search(lowered):
            for target in hits:
                named = (
                    (Modality.SYSTOLIC_BP, Modality.DIASTOLIC_BP)
                    if target is None
                    else (target,)
                )
                for modality in named:
                    mentions.append(
                        ClaimedMention(
                            vital=modality,
                            polarity=Polarity.NORMAL,
                            claim_type=ClaimType.COVERAGE_STATEMENT,
                            sentence_index=index,
                            surface=sentence,
                        )
                    )
            continue

        claim_targets = [h for h in hits if h is None or h.is_vital]
        if not claim_targets:
            continue

        polarities = lex.polarity_set(lowered)
        if not polarities:
            continue
        is_duration, minutes, interval = _parse_extent(lowered)
        claim_type = ClaimType.DURATION if is_duration else ClaimType.POINT
        candidates = _value_candidates(lowered)
        for target in claim_targets:
            value = _value_for(target, candidates, len(claim_targets))
            for polarity in sorted(polarities, key=lambda p: p.value):
                mentions.append(
                    ClaimedMention(
                        vital=target if target is not None else None,
                        bp_group=target is None,
                        polarity=polarity,
                        claim_type=claim_type,
                        value=value,
                        duration_minutes=minutes,
                        interval=interval,
                        sentence_index=index,
                        surface=sentence,
                    )
                )
    return mentions


def extract_coverage_statements(summary: Summary, lex: Lexicon | None = None) -> set[Modality]:
    """Modalities acknowledged anywhere in the text, by name or no-data sentinel.

    A group-level "blood pressure" hit acknowledges both BP streams.
    """
    lex = lex or DEFAULT_LEXICON
    acknowledged: set[Modality] = set()
    for target in lex.find_vitals(summary.text.lower()):
        if target is None:
            acknowledged.update((Modality.SYSTOLIC_BP, Modality.DIASTOLIC_BP))
        else:
            acknowledged.add(target)
    return acknowledged
