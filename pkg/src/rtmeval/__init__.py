"""Event-grounded evaluation toolkit for remote-monitoring time-series summaries."""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    VITALS,
    Direction,
    Modality,
    Observation,
    PatientDay,
    ThresholdConfig,
    validate_patient_day,
)
from .facts import ClinicalFact, FactSet, FactType, build_fact_set  # noqa: F401
from .ingest import Pipeline, Summary, load_observations, load_summaries  # noqa: F401
from .mentions import ClaimedMention, ClaimType, Lexicon, Polarity, extract_mentions  # noqa: F401
from .evaluate import CorpusReport, DayEvaluation, aggregate, evaluate_day  # noqa: F401
from .stats import StatSummary, compute_stat_summary, render_prompt, serialize_raw  # noqa: F401
from .synth import ScenarioSpec, generate_corpus  # noqa: F401
