"""Acceptance suite: one test per release criterion, strictest tolerances pinned.

Run with ``pytest tests/test_acceptance.py -v`` to get one pass/fail line per
criterion; each test also prints its own ``[PASS] criterion N`` line.
"""

from __future__ import annotations

import json
import random
import re
import time as timer
from datetime import date

from rtmeval.cli import main
from rtmeval.evaluate import DayCounts, aggregate, aggregate_counts, evaluate_day
from rtmeval.facts import FactType, build_fact_set
from rtmeval.ingest import Pipeline, Summary, load_observations
from rtmeval.mentions import DEFAULT_LEXICON, extract_mentions
from rtmeval.model import Modality, ThresholdConfig
from rtmeval.plots import render_vision_prompt
from rtmeval.stats import compute_stat_summary, render_prompt
from rtmeval.synth import CorruptionPlan, ScenarioSpec, generate_corpus
from conftest import make_day

CASE_A_TEXT = "Blood pressure remained within normal limits."
CASE_B_TEXT = (
    "The systolic blood pressure was abnormally high at 150 mmHg (peak value), "
    "sustained from 13:00 to 13:30."
)


def _summary(day, text):
    return Summary(day.patient_id, day.date, Pipeline.ZERO_SHOT, text)


def test_criterion_01_golden_case_omission_misclassification(case_a_day, cfg):
    started = timer.perf_counter()
    facts = build_fact_set(case_a_day, cfg)
    evaluation = evaluate_day(facts, _summary(case_a_day, CASE_A_TEXT))
    assert evaluation.abnormality_recall == 0.0
    assert len(evaluation.missed) == 1
    assert evaluation.missed[0].vital is Modality.SYSTOLIC_BP
    assert evaluation.missed[0].value == 177.0
    assert len(evaluation.misclassified) == 1
    elapsed = timer.perf_counter() - started
    assert elapsed < 1.0
    print(f"[PASS] criterion 1: omission + misclassification flagged ({elapsed * 1000:.0f} ms)")


def _brute_force_episodes(readings, lower, upper, max_gap, persistence):
    """Independent sustained-episode oracle: exhaustive scan over contiguous runs."""
    episodes = []
    n = len(readings)
    for i in range(n):
        for j in range(i + 1, n):
            window = readings[i : j + 1]
            directions = {
                "high" if value > upper else "low" if value < lower else "in"
                for _, value in window
            }
            if len(directions) != 1 or directions == {"in"}:
                continue
            gaps_ok = all(
                (window[k + 1][0] - window[k][0]).total_seconds() / 60.0 <= max_gap
                for k in range(len(window) - 1)
            )
            span = (window[-1][0] - window[0][0]).total_seconds() / 60.0
            if gaps_ok and span >= persistence:
                episodes.append((window[0][0], window[-1][0], span))
    # Keep maximal episodes only.
    maximal = [
        e
        for e in episodes
        if not any(
            o != e and o[0] <= e[0] and e[1] <= o[1] for o in episodes
        )
    ]
    return sorted(set(maximal))


def test_criterion_02_golden_case_mischaracterization(d7a46_day):
    started = timer.perf_counter()
    cfg = ThresholdConfig(max_gap_minutes=25)
    facts = build_fact_set(d7a46_day, cfg)

    abnormal = [f for f in facts.facts if f.fact_type is FactType.ABNORMALITY]
    assert len(abnormal) == 1
    assert abnormal[0].value == 188.0
    assert abnormal[0].start.strftime("%H:%M") == "14:36"
    assert abnormal[0].end.strftime("%H:%M") == "17:55"

    evaluation = evaluate_day(facts, _summary(d7a46_day, CASE_B_TEXT))
    assert evaluation.abnormality_recall == 1.0  # mentioned, hence a MATCH
    fact, claimed, error = next(
        v for v in evaluation.value_errors if v[0].fact_type is FactType.ABNORMALITY
    )
    assert claimed == 150.0 and error == 38.0
    _, window, overlap = evaluation.interval_errors[0]
    assert overlap == 0.0
    # Mischaracterization, not misclassification: no contradicting normal claim.
    assert evaluation.misclassified == ()

    # Duration-fact presence cross-checked against the exhaustive episode oracle.
    readings = [
        (o.timestamp, float(o.value)) for o in d7a46_day.readings(Modality.SYSTOLIC_BP)
    ]
    lower, upper = cfg.bounds[Modality.SYSTOLIC_BP]
    oracle = _brute_force_episodes(
        readings, lower, upper, cfg.max_gap_minutes, cfg.persistence_minutes
    )
    duration = [f for f in facts.facts if f.fact_type is FactType.DURATION]
    assert [(f.start, f.end, f.value) for f in duration] == oracle
    assert duration[0].value == 37.0

    elapsed = timer.perf_counter() - started
    assert elapsed < 1.0
    print(f"[PASS] criterion 2: mischaracterization diagnostics exact ({elapsed * 1000:.0f} ms)")


def test_criterion_03_oracle_equivalence_1000_seeds(cfg):
    started = timer.perf_counter()
    fact_mismatches = eval_mismatches = 0
    for seed in range(1000):
        spec = ScenarioSpec(
            seed=seed,
            n_days=3,
            abnormality_probability=0.6,
            cadence_minutes=15,
            episode_minutes=(10, 120),
            missing_modality_probability=0.15,
            corruption=CorruptionPlan(
                omit=0.2,
                misstate_value=0.15,
                misstate_time=0.1,
                hallucinate=0.1,
                deny_with_normal_claim=0.15,
            ),
        )
        corpus = generate_corpus(spec, cfg)
        for day, expected_fs in zip(corpus.days, corpus.fact_sets):
            if build_fact_set(day, cfg) != expected_fs:
                fact_mismatches += 1
        evaluations = [
            evaluate_day(fs, s) for fs, s in zip(corpus.fact_sets, corpus.summaries)
        ]
        for evaluation, expected in zip(evaluations, corpus.expected_per_day):
            if DayCounts.from_evaluation(evaluation) != expected:
                eval_mismatches += 1
        if aggregate(evaluations).pipelines != aggregate_counts(corpus.expected_per_day).pipelines:
            eval_mismatches += 1
    elapsed = timer.perf_counter() - started
    assert fact_mismatches == 0
    assert eval_mismatches == 0
    assert elapsed < 60.0
    print(f"[PASS] criterion 3: 1000-seed oracle equivalence, 0 mismatches ({elapsed:.1f} s)")


def _brute_recall(facts, mentions, fact_type):
    """Exhaustive set computation of per-type recall, independent of the evaluator."""
    relevant = [f for f in facts.facts if f.fact_type is fact_type]
    if not relevant:
        return None
    matched = 0
    for fact in relevant:
        witnessed = False
        for mention in mentions:
            if mention.polarity.value not in (
                "abnormal_high",
                "abnormal_low",
                "abnormal_unspecified",
            ):
                continue
            if mention.bp_group:
                if fact.vital.value not in ("systolic_bp", "diastolic_bp"):
                    continue
            elif mention.vital is not fact.vital:
                continue
            if (
                mention.polarity.value != "abnormal_unspecified"
                and mention.polarity.value != f"abnormal_{fact.direction.value}"
            ):
                continue
            if fact.fact_type.value == "duration" and mention.claim_type.value != "duration":
                continue
            witnessed = True
            break
        matched += witnessed
    return matched / len(relevant)


def _brute_coverage(facts, text):
    """Exhaustive acknowledgment scan with an independent BP qualification rule."""
    lowered = text.lower()
    acknowledged = set()
    for modality, terms in DEFAULT_LEXICON.vital_terms.items():
        if any(re.search(rf"\b{re.escape(t)}\b", lowered) for t in terms):
            acknowledged.add(modality)
    unqualified = re.sub(
        r"\b(?:systolic|diastolic)\s+(?:blood pressure|pressure|bp)\b", " ", lowered
    )
    if any(
        re.search(rf"\b{re.escape(t)}\b", unqualified) for t in DEFAULT_LEXICON.bp_group_terms
    ):
        acknowledged.update({Modality.SYSTOLIC_BP, Modality.DIASTOLIC_BP})
    available = set(facts.available_modalities)
    return len(acknowledged & available) / len(available)


def test_criterion_04_recall_and_coverage_match_brute_force(cfg):
    checked = 0
    for seed in range(200):
        spec = ScenarioSpec(
            seed=seed,
            n_days=2,
            abnormality_probability=0.5,
            missing_modality_probability=0.2,
            corruption=CorruptionPlan(
                omit=0.25, misstate_value=0.1, hallucinate=0.15, deny_with_normal_claim=0.15
            ),
        )
        corpus = generate_corpus(spec, cfg)
        for facts, summary in zip(corpus.fact_sets, corpus.summaries):
            if len(facts.facts) > 5:
                continue
            checked += 1
            evaluation = evaluate_day(facts, summary)
            mentions = extract_mentions(summary)
            assert evaluation.abnormality_recall == _brute_recall(
                facts, mentions, FactType.ABNORMALITY
            )
            assert evaluation.duration_recall == _brute_recall(
                facts, mentions, FactType.DURATION
            )
            assert evaluation.coverage == _brute_coverage(facts, summary.text)
    assert checked >= 100
    print(f"[PASS] criterion 4: brute-force recall/coverage equality on {checked} days")


def test_criterion_05_perfect_and_empty_summary_bounds(cfg):
    spec = ScenarioSpec(
        seed=404,
        n_days=100,
        abnormality_probability=0.7,
        episode_minutes=(40, 120),
        missing_modality_probability=0.1,
    )
    corpus = generate_corpus(spec, cfg)
    perfect_evals = [
        evaluate_day(fs, s) for fs, s in zip(corpus.fact_sets, corpus.summaries)
    ]
    report = aggregate(perfect_evals).pipelines[0]
    assert report.dur_total > 0 and report.abn_total > 0
    assert report.to_record()["abnormality_recall_pct"] == 100.0
    assert report.to_record()["duration_recall_pct"] == 100.0
    assert report.to_record()["coverage_pct"] == 100.0
    assert report.hallucinations == 0

    empty_evals = [
        evaluate_day(fs, Summary(fs.patient_id, fs.date, Pipeline.EXTERNAL, "Reviewed."))
        for fs in corpus.fact_sets
    ]
    empty = aggregate(empty_evals).pipelines[0]
    assert empty.abnormality_recall == 0.0
    assert empty.duration_recall == 0.0
    assert empty.coverage == 0.0
    assert empty.hallucinations == 0
    print("[PASS] criterion 5: perfect summaries score 100.0/100.0/100.0, empty score 0")


_TRIAL_SENTENCES = [
    "Heart Rate was Abnormally Low (value: 45.0).",
    "Blood pressure remained within normal limits.",
    "Temperature was abnormally high at 39.9 °C.",
    "No data available for sleep patterns.",
    "Activity: regular movement recorded.",
    "Systolic BP was Abnormally High for 40 minutes from 10:00 to 10:40.",
    "Diastolic BP was within normal range.",
    "Temperature was outside normal range.",
]


def _random_trial(rng, cfg):
    readings = {}
    for vital, value in (
        (Modality.HEART_RATE, 45.0),
        (Modality.SYSTOLIC_BP, 170.0),
        (Modality.BODY_TEMPERATURE, 39.9),
    ):
        if rng.random() < 0.7:
            if rng.random() < 0.5:
                readings[vital] = [("10:00", value), ("10:10", value + 1), ("10:40", value)]
            else:
                readings[vital] = [("10:00", value)]
    if not readings:
        readings[Modality.HEART_RATE] = [("10:00", 70.0)]
    day = make_day("t", date(2021, 2, 1), readings)
    sentences = rng.sample(_TRIAL_SENTENCES, k=rng.randint(1, len(_TRIAL_SENTENCES)))
    return build_fact_set(day, cfg), day, sentences


def test_criterion_06_monotonicity_and_permutation_500_trials(cfg):
    rng = random.Random(606)
    for _ in range(500):
        facts, day, sentences = _random_trial(rng, cfg)
        base = evaluate_day(facts, _summary(day, "\n".join(sentences)))
        if facts.facts:
            fact = rng.choice(facts.facts)
            word = "High" if fact.direction.value == "high" else "Low"
            if fact.fact_type is FactType.DURATION:
                extra = (
                    f"{fact.vital.display} was Abnormally {word} for {fact.value:g} "
                    f"minutes from {fact.start.strftime('%H:%M')} to {fact.end.strftime('%H:%M')}."
                )
            else:
                extra = f"{fact.vital.display} was Abnormally {word} (value: {fact.value:.1f})."
            grown = evaluate_day(facts, _summary(day, "\n".join(sentences + [extra])))
            for before, after in (
                (base.abnormality_recall, grown.abnormality_recall),
                (base.duration_recall, grown.duration_recall),
            ):
                if before is not None:
                    assert after >= before
            assert len(grown.hallucinated) <= len(base.hallucinated)
    rng = random.Random(607)
    for _ in range(500):
        facts, day, sentences = _random_trial(rng, cfg)
        base = evaluate_day(facts, _summary(day, "\n".join(sentences)))
        shuffled = sentences[:]
        rng.shuffle(shuffled)
        other = evaluate_day(facts, _summary(day, "\n".join(shuffled)))
        assert base.abnormality_recall == other.abnormality_recall
        assert base.duration_recall == other.duration_recall
        assert base.coverage == other.coverage
        assert len(base.hallucinated) == len(other.hallucinated)
        assert len(base.misclassified) == len(other.misclassified)
    print("[PASS] criterion 6: monotonicity and permutation invariance, 500 trials each")


def test_criterion_07_prompt_fidelity(case_a_day, cfg):
    zero_shot = render_prompt("zero_shot", case_a_day, cfg=cfg)
    assert "Your primary goal is factuality." in zero_shot
    assert "PATIENT DATA FOR 2019-04-20:" in zero_shot

    stat = render_prompt(
        "stat_based", case_a_day, summary=compute_stat_summary(case_a_day, cfg), cfg=cfg
    )
    assert "Heart Rate: 50-90 bpm" in stat
    assert "Systolic BP: 90-140 mmHg" in stat
    assert "Diastolic BP: 60-90 mmHg" in stat
    assert "Temperature: 35.0-37.5 °C" in stat

    vision = render_vision_prompt(Modality.SYSTOLIC_BP, cfg)
    assert "was Abnormally High (value" in vision
    assert "Systolic BP was Abnormally High (value: X.X)." in vision
    assert "Heart Rate: 50-90 bpm" in vision
    print("[PASS] criterion 7: prompt anchor sentences byte-exact")


def _run_pipeline(tmp_path, tag: str) -> dict[str, bytes]:
    spec = {
        "seed": 808,
        "n_days": 8,
        "abnormality_probability": 0.7,
        "missing_modality_probability": 0.1,
        "corruption": {"omit": 0.25, "deny_with_normal_claim": 0.1, "hallucinate": 0.1},
    }
    root = tmp_path / tag
    root.mkdir()
    spec_path = root / "scenario.json"
    spec_path.write_text(json.dumps(spec), encoding="utf-8")
    synth_dir = root / "synth"
    assert main(["synth", "--spec", str(spec_path), "--out", str(synth_dir)]) == 0
    facts_path = root / "facts.jsonl"
    assert (
        main(
            ["extract-facts", "--in", str(synth_dir / "observations.csv"),
             "--out", str(facts_path)]
        )
        == 0
    )
    eval_dir = root / "evals"
    assert (
        main(
            ["evaluate", "--facts", str(facts_path),
             "--summaries", str(synth_dir / "summaries.jsonl"), "--out", str(eval_dir)]
        )
        == 0
    )
    artifacts = {}
    for path in (
        synth_dir / "observations.csv",
        synth_dir / "summaries.jsonl",
        facts_path,
        eval_dir / "day_evaluations.jsonl",
        eval_dir / "corpus_report.json",
        eval_dir / "corpus_metrics.csv",
        eval_dir / "report.txt",
        eval_dir / "corpus_metrics.svg",
    ):
        artifacts[path.name] = path.read_bytes()
    return artifacts


def test_criterion_08_round_trip_and_end_to_end_determinism(tmp_path, cfg):
    # synth -> ingest round trip.
    corpus = generate_corpus(ScenarioSpec(seed=808, n_days=8), cfg)
    obs_path = tmp_path / "obs.csv"
    from rtmeval.ingest import write_observations

    write_observations(corpus.days, obs_path)
    load = load_observations(obs_path)
    assert not load.rejects
    assert sorted(load.days, key=lambda d: (d.patient_id, d.date)) == sorted(
        corpus.days, key=lambda d: (d.patient_id, d.date)
    )

    # Full pipeline, twice, byte-identical artifacts (manifests excluded: timestamps).
    first = _run_pipeline(tmp_path, "run1")
    second = _run_pipeline(tmp_path, "run2")
    assert first.keys() == second.keys()
    for name in first:
        assert first[name] == second[name], f"{name} differs between runs"
    print(f"[PASS] criterion 8: round trip exact; {len(first)} artifacts byte-identical")


def test_criterion_09_statistics_against_naive_reference(cfg, d7a46_day):
    rng = random.Random(909)
    for _ in range(1000):
        values = [round(rng.uniform(20, 220), 3) for _ in range(rng.randint(1, 60))]
        series = []
        clock = 0
        for value in values:
            series.append((f"{clock // 60:02d}:{clock % 60:02d}", value))
            clock += 1
        day = make_day("s", date(2021, 2, 2), {Modality.SYSTOLIC_BP: series})
        stats = compute_stat_summary(day, cfg).vitals[Modality.SYSTOLIC_BP]
        n = len(values)
        mean = sum(values) / n
        variance = sum((v - mean) ** 2 for v in values) / n
        for got, want in (
            (stats.mean, mean),
            (stats.min, min(values)),
            (stats.max, max(values)),
            (stats.std, variance**0.5),
        ):
            assert abs(got - want) <= 1e-9 * max(abs(want), 1.0)
    d7a46_stats = compute_stat_summary(d7a46_day, cfg).vitals[Modality.SYSTOLIC_BP]
    assert round(d7a46_stats.mean, 2) == 179.14
    assert abs(d7a46_stats.mean - 1254.0 / 7.0) <= 1e-9 * 180.0
    print("[PASS] criterion 9: statistics within 1e-9 of naive reference on 1000 series")
