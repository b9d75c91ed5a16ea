"""``medal``: one entry point for every pipeline stage.

Exit status is 0 on success, 1 when a stage finished with some failed
items, and 2 for usage or configuration errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import Counter
from dataclasses import replace
from pathlib import Path

from .agents.backends import BackendRegistry, recording_registry, replay_registry
from .agents.profiles import STRONG_JUDGE
from .agents.prompts import load_few_shot
from .autolabel import (
    Judge,
    ScreenResult,
    comment_keyword_filter,
    label_dialogues,
    load_keywords,
    measure_consistency,
    read_assessment_stream,
    screen_dialogues,
    summarize_screening,
    write_assessment_stream,
)
from .config import ConfigError, PipelineConfig, load_config, tomllib
from .core import (
    AnnotationRecord,
    Dialogue,
    SchemaError,
    atomic_write_text,
    read_jsonl,
    write_jsonl,
)
from .curation import (
    AnnotationError,
    BenchmarkSet,
    CurationTarget,
    annotation_files,
    build_pool,
    curate,
    ingest_annotations,
)
from .metaeval.corpus import corpus_stats
from .metaeval.harness import (
    TIE,
    WIN_A,
    WIN_B,
    JudgeConfig,
    Predictions,
    pairwise_preference_trial,
    run_judge_harness,
)
from .metaeval.report import build_report, dumps_report
from .orchestrator import Pools, plan_campaign, read_manifest, run_campaign
from .seedgen import AffectList, PersonaPool, ScenePool, load_lexicon

log = logging.getLogger("medal")

OK, PARTIAL, USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _emit(obj) -> None:
    if isinstance(obj, str):
        print(obj)
    else:
        print(json.dumps(obj, ensure_ascii=False, indent=2))


def _config(args) -> PipelineConfig:
    if not getattr(args, "config", None):
        raise UsageError("--config is required for this command")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.parallelism is not None:
        cfg.parallelism = args.parallelism
    return cfg


def _registry(cfg: PipelineConfig, args) -> BackendRegistry:
    if args.replay:
        return replay_registry(args.replay)
    reg = cfg.registry()
    if args.record:
        reg = recording_registry(reg, args.record)
    return reg


def _parallelism(cfg: PipelineConfig | None, args) -> int:
    if args.parallelism is not None:
        return args.parallelism
    return cfg.parallelism if cfg else 1


def _dialogues(path) -> list[Dialogue]:
    return read_jsonl(_existing(path), Dialogue)


def _existing(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"input not found: {p}")
    return p


def _strong_judge(cfg: PipelineConfig, reg: BackendRegistry) -> Judge:
    if not cfg.labelling.strong_judge:
        raise ConfigError("[labelling] strong_judge is not set")
    return Judge(reg, cfg.labelling.strong_judge, cfg.profiles[STRONG_JUDGE],
                 cfg.labelling.relabel_attempts)


def load_pools(cfg: PipelineConfig) -> Pools:
    p = cfg.pools
    if p.scenes is None or p.personas is None:
        raise ConfigError("[pools] needs scenes and personas")
    lexicon = load_lexicon(p.lexicon)
    return Pools(
        scenes=ScenePool.from_tsv(_existing(p.scenes), lexicon),
        personas=PersonaPool.from_tsv(_existing(p.personas)),
        affects=AffectList.from_tsv(p.affects),
        lexicon=lexicon,
    )


# ---------------------------------------------------------------------------
# commands

def cmd_generate(args) -> int:
    cfg = _config(args)
    if cfg.campaign is None:
        raise ConfigError("config has no [campaign] section")
    campaign = cfg.campaign
    campaign = replace(campaign, rng_seed=cfg.seed if args.seed is not None else campaign.rng_seed,
                       parallelism=_parallelism(cfg, args))
    pools = load_pools(cfg)
    manifest = args.manifest or str(args.out) + ".manifest"
    if args.dry_run:
        plan = plan_campaign(campaign, pools)
        done = read_manifest(manifest)
        budget = plan.call_budget(campaign.limits, done)
        _emit({"starters": len(plan.starters), "planned_dialogues": plan.planned_dialogues,
               "already_completed": len(done & {p[2] for p in plan.pairs}),
               "calls_if_all_accepted": budget, "total_calls": sum(budget.values())})
        return OK
    few_shot = load_few_shot(cfg.pools.few_shot) if cfg.pools.few_shot else None
    result = run_campaign(campaign, pools, _registry(cfg, args), args.out, manifest,
                          profiles=cfg.profiles, few_shot=few_shot)
    _emit({"planned": result.planned, "written": len(result.dialogues),
           "new": len(result.new_ids), "first_turn_generations": result.first_turn_generations,
           "dropped_starters": len(result.dropped_starters), "failed": len(result.failed)})
    for f in result.failed:
        log.error("failed %s (%s, %s): %s", f.dialogue_id, f.starter_key, f.chatbot_model, f.error)
    return OK if result.ok else PARTIAL


def cmd_screen(args) -> int:
    cfg = _config(args)
    dialogues = _dialogues(args.inp)
    if args.dry_run:
        _emit({"dialogues": len(dialogues), "model_calls": len(dialogues)})
        return OK
    results = screen_dialogues(dialogues, _strong_judge(cfg, _registry(cfg, args)),
                               _parallelism(cfg, args))
    write_jsonl(args.out, results)
    summary = summarize_screening(results, cfg.labelling.include_chatbot_mixing)
    if args.clean_out:
        write_jsonl(args.clean_out, [d for d in dialogues if d.dialogue_id not in summary.excluded])
    _emit({"dialogues": summary.total, "excluded": len(summary.excluded),
           "excluded_fraction": summary.excluded_fraction,
           "role_confusion": summary.role_confusion, "unscreened": len(summary.unscreened)})
    return PARTIAL if summary.unscreened else OK


def cmd_label(args) -> int:
    cfg = _config(args)
    dialogues = _dialogues(args.inp)
    if args.dry_run:
        n = len(dialogues) * args.runs
        _emit({"dialogues": len(dialogues), "runs": args.runs, "model_calls": n,
               "max_model_calls_with_relabels": n * (cfg.labelling.relabel_attempts + 1)})
        return OK
    judge = _strong_judge(cfg, _registry(cfg, args))
    if args.runs > 1:
        report, assessments = measure_consistency(dialogues, judge, args.runs,
                                                  _parallelism(cfg, args))
        write_assessment_stream(args.out, assessments)
        atomic_write_text(str(args.out) + ".consistency.json",
                          json.dumps(report.to_dict(), indent=2) + "\n")
        _emit(report.to_dict())
        return PARTIAL if report.skipped else OK
    done, missing = label_dialogues(dialogues, judge, parallelism=_parallelism(cfg, args))
    write_assessment_stream(args.out, done, missing)
    _emit({"labelled": len(done), "missing": len(missing)})
    return PARTIAL if missing else OK


def cmd_filter(args) -> int:
    dialogues = _dialogues(args.dialogues)
    assessments, _ = read_assessment_stream(_existing(args.assessments))
    assessments = [a for a in assessments if a.run_index == 0]
    keywords = load_keywords(_existing(args.keywords)) if args.keywords else None
    languages = {d.dialogue_id: d.language for d in dialogues}
    excluded = comment_keyword_filter(assessments, keywords, languages)
    screened_out: set[str] = set()
    if args.screen:
        results = read_jsonl(_existing(args.screen), ScreenResult)
        screened_out = set(summarize_screening(results, args.include_chatbot_mixing,
                                               drop_unscreened=args.drop_unscreened).excluded)
    kept = [d for d in dialogues if d.dialogue_id not in excluded | screened_out]
    if args.dry_run:
        _emit({"dialogues": len(dialogues), "keyword_excluded": len(excluded),
               "screen_excluded": len(screened_out), "would_keep": len(kept)})
        return OK
    write_jsonl(args.out, kept)
    if args.excluded_out:
        atomic_write_text(args.excluded_out, "".join(f"{i}\n" for i in sorted(excluded | screened_out)))
    _emit({"dialogues": len(dialogues), "keyword_excluded": len(excluded),
           "screen_excluded": len(screened_out), "kept": len(kept)})
    return OK


def cmd_curate(args) -> int:
    cfg = load_config(args.config) if args.config else None
    target = cfg.curation if cfg else None
    target = target or CurationTarget()
    if args.size is not None:
        target = replace(target, per_language_size=args.size)
    seed = args.seed if args.seed is not None else (cfg.seed if cfg else 0)
    assessments, _ = read_assessment_stream(_existing(args.pool))
    assessments.sort(key=lambda a: a.run_index)
    pool = build_pool(_dialogues(args.dialogues), assessments, drop_exhausted=target.drop_exhausted)
    if args.dry_run:
        _emit({"languages": {k: len(v) for k, v in sorted(pool.items())},
               "target_per_language": target.per_language_size})
        return OK
    bench = curate(pool, target, seed)
    bench.save(args.out)
    _emit({"entries": len(bench.entries),
           "per_language": {k: len(v) for k, v in sorted(bench.by_language().items())},
           "relaxed_steps": sum(1 for a in bench.audit_log if a.get("relaxed")),
           "warnings": bench.warnings})
    return PARTIAL if bench.warnings else OK


def _load_annotations(path, bench: BenchmarkSet):
    p = _existing(path)
    if p.is_dir():
        return ingest_annotations(annotation_files(p), bench)
    if p.suffix == ".jsonl":
        return ingest_annotations(read_jsonl(p, AnnotationRecord), bench)
    return ingest_annotations([p], bench)


def cmd_ingest(args) -> int:
    bench = BenchmarkSet.load(_existing(args.benchmark))
    files = annotation_files(_existing(args.annotations)) if Path(args.annotations).is_dir() \
        else [Path(args.annotations)]
    if args.dry_run:
        _emit({"benchmark_dialogues": len(bench.entries), "annotation_files": [str(f) for f in files]})
        return OK
    store = ingest_annotations(files, bench)
    if args.out:
        write_jsonl(args.out, store.records)
    completeness = store.completeness()
    _emit({"records": len(store.records), "annotators_per_language": store.annotator_counts(),
           "complete": {k: v["complete"] for k, v in completeness.items()},
           "agreement_available": {k: store.agreement_available(k) for k in completeness}})
    return OK if all(v["complete"] for v in completeness.values()) else PARTIAL


def _judge_config(cfg: PipelineConfig, spec: str) -> JudgeConfig:
    p = Path(spec)
    if p.suffix == ".toml" and p.exists():
        return JudgeConfig(**tomllib.loads(p.read_text(encoding="utf-8")))
    return cfg.judge(spec)


def cmd_judge(args) -> int:
    cfg = _config(args)
    jc = _judge_config(cfg, args.judge_config)
    bench = BenchmarkSet.load(_existing(args.benchmark))
    ids = [e.dialogue_id for e in bench.entries]
    by_id = {d.dialogue_id: d for d in _dialogues(args.dialogues)}
    absent = [i for i in ids if i not in by_id]
    if absent:
        raise UsageError(f"{len(absent)} benchmark dialogues missing from {args.dialogues}")
    if args.dry_run:
        _emit({"judge": jc.name, "model": jc.model, "profile": jc.profile,
               "model_calls": len(ids),
               "max_model_calls_with_relabels": len(ids) * (jc.relabel_attempts + 1)})
        return OK
    preds = run_judge_harness(jc, [by_id[i] for i in ids], _registry(cfg, args),
                              _parallelism(cfg, args), cfg.profiles)
    preds.save(args.out, ids)
    _emit({"judge": jc.name, "predictions": len(preds.assessments), "missing": len(preds.missing)})
    return PARTIAL if preds.missing else OK


def cmd_report(args) -> int:
    bench = BenchmarkSet.load(_existing(args.benchmark))
    store = _load_annotations(args.annotations, bench)
    preds = {}
    for spec in args.predictions:
        name, _, path = spec.rpartition("=")
        p = Predictions.load(_existing(path))
        preds[name or Path(path).stem] = p
    if args.dry_run:
        _emit({"judges": sorted(preds), "annotation_records": len(store.records)})
        return OK
    report = build_report(preds, store, bench)
    atomic_write_text(args.out, dumps_report(report))
    _emit({"report": str(args.out), "judges": sorted(preds)})
    return OK


def cmd_stats(args) -> int:
    dialogues = _dialogues(args.dialogues)
    if args.dry_run:
        _emit({"dialogues": len(dialogues), "model_calls": 0})
        return OK
    stats = corpus_stats(dialogues)
    if args.out:
        atomic_write_text(args.out, json.dumps(stats.to_dict(), ensure_ascii=False, indent=2) + "\n")
    terminations = Counter(d.termination for d in dialogues)
    _emit(stats.table())
    _emit("terminations: " + ", ".join(f"{k}={v}" for k, v in sorted(terminations.items())))
    return OK


def cmd_compare(args) -> int:
    cfg = _config(args)
    a = _dialogues(args.a)
    b = {(d.seed.scene_id, d.user_model, d.chatbot_model): d for d in _dialogues(args.b)}
    pairs = [(d, b[k]) for d in a
             if (k := (d.seed.scene_id, d.user_model, d.chatbot_model)) in b]
    if args.dry_run:
        _emit({"pairs": len(pairs), "model_calls": 2 * len(pairs)})
        return OK
    criterion = Path(_existing(args.criterion)).read_text(encoding="utf-8")
    model = args.judge or cfg.labelling.strong_judge
    if not model:
        raise ConfigError("pass --judge or set [labelling] strong_judge")
    judge = Judge(_registry(cfg, args), model, cfg.profiles[STRONG_JUDGE])
    outcomes = [pairwise_preference_trial(x, y, criterion, judge) for x, y in pairs]
    counts = Counter(o.result for o in outcomes)
    errors = sum(o.protocol_error for o in outcomes)
    summary = {"pairs": len(pairs), WIN_A: counts[WIN_A], WIN_B: counts[WIN_B], TIE: counts[TIE],
               "protocol_errors": errors}
    if args.out:
        rows = [{"a": x.dialogue_id, "b": y.dialogue_id, "result": o.result,
                 "choices": list(o.choices), "protocol_error": o.protocol_error}
                for (x, y), o in zip(pairs, outcomes)]
        atomic_write_text(args.out, json.dumps({"summary": summary, "pairs": rows}, indent=2) + "\n")
    _emit(summary)
    return PARTIAL if errors else OK


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline TOML file")
    common.add_argument("--seed", type=int, help="override the config rng seed")
    common.add_argument("--parallelism", type=int, help="bound on concurrent backend calls")
    common.add_argument("--dry-run", action="store_true", help="print planned work, call nothing")
    common.add_argument("--record", help="append every model exchange to this transcript")
    common.add_argument("--replay", help="serve model calls from a recorded transcript")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="medal", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="generate dialogues")
    p.add_argument("--out", required=True)
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("screen", parents=[common], help="flag malformed user behaviour")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--clean-out")
    p.set_defaults(func=cmd_screen)

    p = sub.add_parser("label", parents=[common], help="strong-judge assessments")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--runs", type=int, default=1)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("filter", parents=[common], help="drop keyword- and screen-flagged dialogues")
    p.add_argument("--dialogues", required=True)
    p.add_argument("--assessments", required=True)
    p.add_argument("--screen")
    p.add_argument("--keywords")
    p.add_argument("--out", required=True)
    p.add_argument("--excluded-out")
    p.add_argument("--include-chatbot-mixing", action="store_true")
    p.add_argument("--drop-unscreened", action="store_true")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("curate", parents=[common], help="balanced benchmark selection")
    p.add_argument("--pool", required=True, help="assessments JSONL")
    p.add_argument("--dialogues", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--size", type=int, help="dialogues per language")
    p.set_defaults(func=cmd_curate)

    p = sub.add_parser("ingest", parents=[common], help="validate human annotation TSVs")
    p.add_argument("--benchmark", required=True)
    p.add_argument("--annotations", required=True, help="directory of TSV files, or one file")
    p.add_argument("--out", help="write the merged records as JSONL")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("judge", parents=[common], help="run a candidate judge on the benchmark")
    p.add_argument("--benchmark", required=True)
    p.add_argument("--dialogues", required=True)
    p.add_argument("--judge-config", required=True, help="judge name in the config, or a TOML file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_judge)

    p = sub.add_parser("report", parents=[common], help="score judges against annotations")
    p.add_argument("--predictions", nargs="+", required=True, help="[name=]predictions.jsonl")
    p.add_argument("--annotations", required=True)
    p.add_argument("--benchmark", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("stats", parents=[common], help="corpus statistics")
    p.add_argument("--dialogues", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("compare", parents=[common], help="pairwise preference trials")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--criterion", required=True, help="file with the comparison system prompt")
    p.add_argument("--judge")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE if exc.code not in (0, None) else OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "parallelism", None) is not None and args.parallelism < 1:
        print("medal: --parallelism must be >= 1", file=sys.stderr)
        return USAGE
    try:
        return args.func(args)
    except (UsageError, ConfigError, SchemaError, AnnotationError, FileNotFoundError) as exc:
        print(f"medal {args.command}: {exc}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
