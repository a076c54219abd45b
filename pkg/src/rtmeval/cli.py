"""Command-line entry point wiring the toolkit into an end-to-end workflow.

Subcommands: synth, extract-facts, featurize, prompt, render, generate,
evaluate, report. Every run writes a manifest next to its outputs recording
the tool version, a hash of the effective threshold configuration, input file
digests, and the flags used. Exit codes: 0 success, 1 input or usage error,
2 internal error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .client import GenerationRequest, SummaryClient
from .errors import RtmEvalError
from .evaluate import (
    aggregate,
    aggregate_records,
    evaluate_day,
    load_day_records,
    write_day_evaluations,
)
from .facts import build_fact_set, load_fact_sets, write_fact_sets
from .ingest import (
    Pipeline,
    Summary,
    load_observations,
    load_summaries,
    write_observations,
    write_rejects,
    write_summaries,
)
from .mentions import Lexicon
from .model import ThresholdConfig
from .plots import render_day, render_vision_prompt
from .report import write_report_files
from .stats import compute_stat_summary, render_prompt, write_stat_summaries
from .synth import ScenarioSpec, expected_report, generate_corpus
from .model import VITALS


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise _UsageError(message)


def atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


@dataclass
class RunManifest:
    version: str
    subcommand: str
    flags: dict
    config_hash: str
    inputs: dict
    started: str
    finished: str

    def write(self, out_dir: Path) -> None:
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "manifest.json"
        atomic_write_text(path, json.dumps(self.__dict__, sort_keys=True, indent=2) + "\n")


def _config_hash(cfg: ThresholdConfig) -> str:
    return hashlib.sha256("\n".join(cfg.config_lines()).encode("utf-8")).hexdigest()


def _digest_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _manifest(args: argparse.Namespace, cfg: ThresholdConfig, started: str, inputs: list[Path]) -> RunManifest:
    flags = {
        k: (str(v) if isinstance(v, Path) else v)
        for k, v in vars(args).items()
        if k != "func" and v is not None
    }
    return RunManifest(
        version=__version__,
        subcommand=args.subcommand,
        flags=flags,
        config_hash=_config_hash(cfg),
        inputs={str(p): _digest_file(p) for p in inputs if p.exists()},
        started=started,
        finished=datetime.now(timezone.utc).isoformat(),
    )


def _load_config(args: argparse.Namespace) -> ThresholdConfig:
    if getattr(args, "config", None):
        return ThresholdConfig.from_file(args.config)
    return ThresholdConfig()


def _load_lexicon(args: argparse.Namespace) -> Lexicon | None:
    if getattr(args, "lexicon", None):
        return Lexicon.from_file(args.lexicon)
    return None


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _map_jobs(fn, items, jobs: int):
    if jobs <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _cmd_synth(args: argparse.Namespace) -> int:
    started = _now()
    cfg = _load_config(args)
    spec = ScenarioSpec.from_file(args.spec)
    corpus = generate_corpus(spec, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    # File outputs use canonical (patient, date) order so they diff cleanly
    # against downstream artifacts.
    write_observations(corpus.days, out / "observations.csv")
    write_summaries(
        sorted(corpus.summaries, key=lambda s: (s.patient_id, s.date)),
        out / "summaries.jsonl",
    )
    write_fact_sets(
        sorted(corpus.fact_sets, key=lambda fs: (fs.patient_id, fs.date)),
        out / "expected_facts.jsonl",
    )
    atomic_write_text(
        out / "expected_report.json",
        json.dumps(expected_report(corpus).to_record(), sort_keys=True, indent=2) + "\n",
    )
    _manifest(args, cfg, started, [Path(args.spec)]).write(out)
    print(f"wrote {len(corpus.days)} synthetic patient-days to {out}", file=sys.stderr)
    return 0


def _cmd_extract_facts(args: argparse.Namespace) -> int:
    started = _now()
    cfg = _load_config(args)
    load = load_observations(args.inp, schema=args.schema)
    if load.rejects:
        write_rejects(load.rejects, Path(str(args.inp) + ".rejects"))
        print(f"{len(load.rejects)} rows rejected (see {args.inp}.rejects)", file=sys.stderr)
    fact_sets = [build_fact_set(day, cfg) for day in load.days]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps(fs.to_record(), sort_keys=True) for fs in fact_sets]
    atomic_write_text(out, "".join(line + "\n" for line in lines))
    _manifest(args, cfg, started, [Path(args.inp)]).write(out.parent)
    print(f"extracted {sum(len(fs.facts) for fs in fact_sets)} facts "
          f"from {len(fact_sets)} patient-days", file=sys.stderr)
    return 0


def _cmd_featurize(args: argparse.Namespace) -> int:
    started = _now()
    cfg = _load_config(args)
    load = load_observations(args.inp, schema=args.schema)
    if load.rejects:
        write_rejects(load.rejects, Path(str(args.inp) + ".rejects"))
    summaries = [compute_stat_summary(day, cfg) for day in load.days]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_stat_summaries(summaries, out)
    _manifest(args, cfg, started, [Path(args.inp)]).write(out.parent)
    return 0


def _cmd_prompt(args: argparse.Namespace) -> int:
    started = _now()
    cfg = _load_config(args)
    load = load_observations(args.inp, schema=args.schema)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def render_one(day):
        summary = compute_stat_summary(day, cfg) if args.kind == "stat_based" else None
        text = render_prompt(args.kind, day, summary=summary, cfg=cfg)
        path = out / f"{day.patient_id}_{day.date.isoformat()}_{args.kind}.txt"
        atomic_write_text(path, text)
        return path

    _map_jobs(render_one, load.days, args.jobs)
    _manifest(args, cfg, started, [Path(args.inp)]).write(out)
    return 0


def _cmd_render(args: argparse.Namespace) -> int:
    started = _now()
    cfg = _load_config(args)
    load = load_observations(args.inp, schema=args.schema)
    out = Path(args.out)
    written = _map_jobs(lambda day: render_day(day, cfg, out), load.days, args.jobs)
    _manifest(args, cfg, started, [Path(args.inp)]).write(out)
    print(f"rendered {sum(len(w) for w in written)} plots", file=sys.stderr)
    return 0


def _cmd_generate(args: argparse.Namespace) -> int:
    started = _now()
    cfg = _load_config(args)
    load = load_observations(args.inp, schema=args.schema)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    client = SummaryClient.from_env(
        max_in_flight=args.jobs,
        audit_path=out / "audit.jsonl",
        replay_path=args.replay,
    )
    pipeline = Pipeline(args.pipeline)

    def generate_one(day) -> Summary:
        if pipeline is Pipeline.IMAGE_BASED:
            plot_dir = out / "plots"
            paths = render_day(day, cfg, plot_dir)
            parts = []
            for vital, path in zip([v for v in VITALS if day.readings(v)], paths):
                prompt = render_vision_prompt(vital, cfg)
                parts.append(
                    client.generate(
                        GenerationRequest(
                            model=args.model, prompt=prompt, images=(str(path),)
                        )
                    )
                )
            # Per-vital responses fused in canonical vital order.
            text = "\n\n".join(parts)
        else:
            summary = compute_stat_summary(day, cfg) if pipeline is Pipeline.STAT_BASED else None
            prompt = render_prompt(pipeline.value, day, summary=summary, cfg=cfg)
            text = client.generate(GenerationRequest(model=args.model, prompt=prompt))
        return Summary(day.patient_id, day.date, pipeline, text)

    summaries = _map_jobs(generate_one, load.days, args.jobs)
    write_summaries(summaries, out / "summaries.jsonl")
    _manifest(args, cfg, started, [Path(args.inp)]).write(out)
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    started = _now()
    cfg = _load_config(args)
    lexicon = _load_lexicon(args)
    fact_sets = {(fs.patient_id, fs.date): fs for fs in load_fact_sets(args.facts)}
    summary_load = load_summaries(args.summaries)
    if summary_load.rejects:
        write_rejects(summary_load.rejects, Path(str(args.summaries) + ".rejects"))
        print(f"{len(summary_load.rejects)} summary lines rejected", file=sys.stderr)

    pairs = []
    for summary in summary_load.summaries:
        facts = fact_sets.get((summary.patient_id, summary.date))
        if facts is None:
            print(
                f"no facts for {summary.patient_id}/{summary.date}; skipping",
                file=sys.stderr,
            )
            continue
        pairs.append((facts, summary))

    evaluations = _map_jobs(
        lambda pair: evaluate_day(pair[0], pair[1], lexicon), pairs, args.jobs
    )
    evaluations.sort(key=lambda e: (e.pipeline.value, e.patient_id, e.date))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_day_evaluations(evaluations, out / "day_evaluations.jsonl")
    report = aggregate(evaluations, mode=args.mode)
    write_report_files(report, out)
    _manifest(args, cfg, started, [Path(args.facts), Path(args.summaries)]).write(out)
    print(report.to_table(), end="")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    started = _now()
    cfg = _load_config(args)
    in_dir = Path(args.inp)
    day_file = in_dir / "day_evaluations.jsonl" if in_dir.is_dir() else in_dir
    records = load_day_records(day_file)
    report = aggregate_records(records, mode=args.mode)
    out = Path(args.out) if args.out else (in_dir if in_dir.is_dir() else in_dir.parent)
    write_report_files(report, out)
    _manifest(args, cfg, started, [day_file]).write(out)
    if args.format == "json":
        print(json.dumps(report.to_record(), sort_keys=True, indent=2))
    else:
        print(report.to_table(), end="")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="rtmeval", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p: _Parser, schema: bool = True) -> None:
        p.add_argument("--config", type=Path, help="threshold config file")
        p.add_argument("--jobs", type=int, default=1, help="parallel workers")
        if schema:
            p.add_argument(
                "--schema", choices=("generic", "tihm_like"), default="generic"
            )

    p = sub.add_parser("synth", help="generate a synthetic corpus with known metrics")
    p.add_argument("--spec", type=Path, required=True, help="scenario spec JSON")
    p.add_argument("--out", type=Path, required=True)
    common(p, schema=False)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("extract-facts", help="derive clinical facts from observations")
    p.add_argument("--in", dest="inp", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="facts JSONL path")
    common(p)
    p.set_defaults(func=_cmd_extract_facts)

    p = sub.add_parser("featurize", help="compute per-day statistics")
    p.add_argument("--in", dest="inp", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="stat summaries JSONL path")
    common(p)
    p.set_defaults(func=_cmd_featurize)

    p = sub.add_parser("prompt", help="emit prompt text files")
    p.add_argument("--in", dest="inp", type=Path, required=True)
    p.add_argument("--kind", choices=("zero_shot", "stat_based"), required=True)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    common(p)
    p.set_defaults(func=_cmd_prompt)

    p = sub.add_parser("render", help="render per-vital SVG day plots")
    p.add_argument("--in", dest="inp", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    common(p)
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("generate", help="collect model summaries over HTTP")
    p.add_argument("--in", dest="inp", type=Path, required=True)
    p.add_argument(
        "--pipeline", choices=("zero_shot", "stat_based", "image_based"), required=True
    )
    p.add_argument("--model", required=True)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--replay", type=Path, help="replay responses from this audit log")
    common(p)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("evaluate", help="score summaries against facts")
    p.add_argument("--facts", type=Path, required=True)
    p.add_argument("--summaries", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--mode", choices=("micro", "macro"), default="micro")
    p.add_argument("--lexicon", type=Path, help="lexicon override file")
    common(p, schema=False)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("report", help="aggregate day evaluations into a report")
    p.add_argument("--in", dest="inp", type=Path, required=True,
                   help="evaluate output directory or day_evaluations.jsonl")
    p.add_argument("--out", type=Path, help="output directory (default: --in)")
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.add_argument("--mode", choices=("micro", "macro"), default="micro")
    common(p, schema=False)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (RtmEvalError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
