"""Scoring judges against human annotations and assembling report.json."""

from __future__ import annotations

import itertools
import json
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from statistics import fmean

from ..core import ISSUES, AnnotationRecord, DialogueAssessment, IssueLabel, atomic_write_text
from ..curation import AnnotationStore, BenchmarkSet, benchmark_stats
from .harness import Predictions
from .stats import (
    INTERVAL,
    NOMINAL,
    adjacent_agreement,
    binary_metrics,
    exact_agreement,
    krippendorff_alpha,
    mcnemar,
    mean_defined,
    pearson,
    spearman,
)

METRICS = ("f1_plus", "f1_minus", "precision_plus", "recall_plus", "accuracy")
AnnotationSet = Mapping[str, AnnotationRecord]


@dataclass
class ClassificationReport:
    issues: dict[str, dict]
    per_set: list[dict[str, dict]]
    missing: list[str] = field(default_factory=list)

    @property
    def n_sets(self) -> int:
        return len(self.per_set)

    def to_dict(self) -> dict:
        return {"issues": self.issues, "per_set": self.per_set, "n_sets": self.n_sets,
                "missing": self.missing, "missing_count": len(self.missing)}


def _flag(record, issue: IssueLabel) -> int:
    if isinstance(record, DialogueAssessment):
        return record.labels[issue].flag
    if isinstance(record, AnnotationRecord):
        return record.labels[issue]
    return int(record[issue])


def _set_metrics(pred: Mapping[str, object], gold: AnnotationSet, ids: Sequence[str]) -> dict:
    return {
        issue.value: binary_metrics([_flag(pred[d], issue) for d in ids],
                                    [_flag(gold[d], issue) for d in ids])
        for issue in ISSUES
    }


def _average_sets(per_set: list[dict]) -> dict[str, dict]:
    out = {}
    for issue in ISSUES:
        rows = [s[issue.value] for s in per_set]
        merged = {m: mean_defined(r[m] for r in rows) for m in METRICS}
        merged["predicted_positive_count"] = rows[0]["predicted_positive_count"] if rows else 0
        merged["gold_positive_count"] = mean_defined(r["gold_positive_count"] for r in rows)
        out[issue.value] = merged
    return out


def f1_suite(predictions: Mapping[str, object], annotation_sets: Sequence[AnnotationSet]) -> ClassificationReport:
    """Per-issue metrics against each annotator set, then the unweighted mean over sets.

    Dialogues an annotator set covers but the predictions lack are listed
    as missing and left out of every set's computation.
    """
    if not annotation_sets:
        raise ValueError("need at least one annotation set")
    wanted = sorted(set().union(*(s.keys() for s in annotation_sets)))
    missing = [d for d in wanted if d not in predictions]
    per_set = []
    for gold in annotation_sets:
        ids = sorted(d for d in gold if d in predictions)
        per_set.append(_set_metrics(predictions, gold, ids))
    return ClassificationReport(_average_sets(per_set), per_set, missing)


def human_reference(annotation_sets: Sequence[AnnotationSet]) -> ClassificationReport | None:
    """The second annotator scored against the first; None without two sets."""
    if len(annotation_sets) < 2:
        return None
    a, b = annotation_sets[0], annotation_sets[1]
    ids = sorted(set(a) & set(b))
    per_set = [_set_metrics(b, a, ids)]
    return ClassificationReport(_average_sets(per_set), per_set)


def gold_overall(annotation_sets: Sequence[AnnotationSet]) -> dict[str, float]:
    """Mean overall over whichever annotators rated each dialogue."""
    scores: dict[str, list[int]] = {}
    for s in annotation_sets:
        for did, r in s.items():
            scores.setdefault(did, []).append(r.overall)
    return {d: fmean(v) for d, v in scores.items()}


def correlation_report(predictions: Mapping[str, DialogueAssessment],
                       annotation_sets: Sequence[AnnotationSet]) -> dict:
    gold = gold_overall(annotation_sets)
    ids = sorted(d for d in gold if d in predictions)
    xs = [predictions[d].overall for d in ids]
    ys = [gold[d] for d in ids]
    if len(ids) < 3:
        return {"pearson": None, "spearman": None, "n": len(ids)}
    return {"pearson": pearson(xs, ys).to_dict(), "spearman": spearman(xs, ys).to_dict(),
            "n": len(ids)}


def agreement_report(annotation_sets: Sequence[AnnotationSet]) -> dict:
    if len(annotation_sets) < 2:
        return {"available": False, "annotators": len(annotation_sets)}
    a, b = annotation_sets[0], annotation_sets[1]
    ids = sorted(set(a) & set(b))
    if not ids:
        return {"available": False, "annotators": len(annotation_sets)}
    dims = {}
    for issue in ISSUES:
        va = [a[d].labels[issue] for d in ids]
        vb = [b[d].labels[issue] for d in ids]
        dims[issue.value] = {"exact": exact_agreement(va, vb),
                             "alpha": krippendorff_alpha([va, vb], NOMINAL)}
    oa = [a[d].overall for d in ids]
    ob = [b[d].overall for d in ids]
    dims["overall"] = {"exact": exact_agreement(oa, ob), "adjacent": adjacent_agreement(oa, ob),
                       "alpha": krippendorff_alpha([oa, ob], INTERVAL)}
    ha = [a[d].user_humanlikeness for d in ids]
    hb = [b[d].user_humanlikeness for d in ids]
    if any(v is not None for v in ha + hb):
        dims["user_humanlikeness"] = {"alpha": krippendorff_alpha([ha, hb], INTERVAL)}
    return {"available": True, "annotators": len(annotation_sets), "n": len(ids),
            "dimensions": dims}


def significance_report(predictions: Mapping[str, Predictions],
                        annotation_sets: Sequence[AnnotationSet]) -> dict:
    """Exact McNemar for every judge pair and issue, against each annotator set."""
    out = {}
    for ja, jb in itertools.combinations(sorted(predictions), 2):
        pa, pb = predictions[ja].assessments, predictions[jb].assessments
        per_issue = {}
        for issue in ISSUES:
            per_gold = []
            for gold in annotation_sets:
                ids = sorted(d for d in gold if d in pa and d in pb)
                per_gold.append(mcnemar([_flag(pa[d], issue) for d in ids],
                                        [_flag(pb[d], issue) for d in ids],
                                        [_flag(gold[d], issue) for d in ids]).to_dict())
            per_issue[issue.value] = per_gold
        out[f"{ja} vs {jb}"] = per_issue
    return out


def build_report(predictions: Mapping[str, Predictions], store: AnnotationStore,
                 benchmark: BenchmarkSet) -> dict:
    """Everything the meta-evaluation produces, keyed by judge and language."""
    languages = benchmark.languages
    scopes = {lang: store.annotation_sets(lang) for lang in languages}
    scopes["combined"] = store.combined_sets()
    bench_ids = benchmark.ids()

    judges = {}
    for name in sorted(predictions):
        preds = {d: a for d, a in predictions[name].assessments.items() if d in bench_ids}
        entry = {"judge_model": predictions[name].judge_model,
                 "missing": sorted(m.dialogue_id for m in predictions[name].missing),
                 "classification": {}, "correlation": {}}
        for scope, sets in scopes.items():
            if not sets:
                continue
            entry["classification"][scope] = f1_suite(preds, sets).to_dict()
            entry["correlation"][scope] = correlation_report(preds, sets)
        judges[name] = entry

    human = {}
    agreement = {}
    for scope, sets in scopes.items():
        ref = human_reference(sets)
        human[scope] = ref.to_dict() if ref else None
        agreement[scope] = agreement_report(sets)

    return {
        "schema_version": 1,
        "languages": languages,
        "benchmark": benchmark_stats(benchmark, store),
        "judges": judges,
        "human_reference": human,
        "agreement": agreement,
        "significance": significance_report(predictions, scopes["combined"]),
    }


def dumps_report(report: dict) -> str:
    return json.dumps(report, ensure_ascii=False, indent=2, allow_nan=False) + "\n"


def write_report(path, report: dict) -> None:
    atomic_write_text(path, dumps_report(report))
