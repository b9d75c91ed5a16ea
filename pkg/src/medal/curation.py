"""Balanced benchmark selection and human-annotation ingestion."""

from __future__ import annotations

import json
import logging
import random
from collections import Counter, defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

from .core import (
    ISSUES,
    NO_ISSUE,
    REGENERATION_EXHAUSTED,
    AnnotationRecord,
    BenchmarkEntry,
    Dialogue,
    DialogueAssessment,
    IssueLabel,
    SchemaError,
    atomic_write_text,
    read_annotations_tsv,
    read_jsonl,
    write_jsonl,
)

log = logging.getLogger(__name__)

ISSUE_KINDS: tuple[str, ...] = tuple(i.value for i in ISSUES) + (NO_ISSUE,)


@dataclass(frozen=True)
class CurationTarget:
    per_language_size: int = 100
    issue_kinds: tuple[str, ...] = ISSUE_KINDS
    overall_bins: tuple[int, ...] = (2, 3, 4, 5)
    coverage_bonus: float = 1.0
    drop_exhausted: bool = True

    def __post_init__(self):
        if self.per_language_size < 1:
            raise ValueError("per_language_size must be >= 1")
        unknown = set(self.issue_kinds) - set(ISSUE_KINDS)
        if unknown or not self.issue_kinds:
            raise ValueError(f"bad issue kinds {sorted(unknown)}")


@dataclass(frozen=True)
class Candidate:
    dialogue: Dialogue
    assessment: DialogueAssessment

    @property
    def dialogue_id(self) -> str:
        return self.dialogue.dialogue_id

    @property
    def pair(self) -> tuple[str, str]:
        return (self.dialogue.user_model, self.dialogue.chatbot_model)

    def exhibits(self, kind: str) -> bool:
        if kind == NO_ISSUE:
            return not any(self.assessment.flags)
        return self.assessment.labels[IssueLabel(kind)].flag == 1

    @property
    def perfect(self) -> bool:
        return not any(self.assessment.flags) and self.assessment.overall == 5


def build_pool(dialogues: Iterable[Dialogue], assessments: Iterable[DialogueAssessment],
               excluded: Iterable[str] = (), drop_exhausted: bool = True) -> dict[str, list[Candidate]]:
    """Join dialogues with their (first) assessment, dropping excluded ids, grouped by language."""
    by_id = {}
    for a in assessments:
        by_id.setdefault(a.dialogue_id, a)
    excluded = set(excluded)
    pool: dict[str, list[Candidate]] = defaultdict(list)
    for d in dialogues:
        if d.dialogue_id in excluded or d.dialogue_id not in by_id:
            continue
        if drop_exhausted and d.termination == REGENERATION_EXHAUSTED:
            continue
        pool[d.language].append(Candidate(d, by_id[d.dialogue_id]))
    for cands in pool.values():
        cands.sort(key=lambda c: c.dialogue_id)
    return dict(pool)


@dataclass
class BenchmarkSet:
    entries: list[BenchmarkEntry]
    curation_seed: int
    audit_log: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        ids = [e.dialogue_id for e in self.entries]
        dup = [k for k, n in Counter(ids).items() if n > 1]
        if dup:
            raise ValueError(f"duplicate dialogue_id {dup[0]!r} in benchmark")

    @property
    def languages(self) -> list[str]:
        return sorted({e.language for e in self.entries})

    def by_language(self) -> dict[str, list[BenchmarkEntry]]:
        out: dict[str, list[BenchmarkEntry]] = defaultdict(list)
        for e in self.entries:
            out[e.language].append(e)
        return dict(out)

    def ids(self) -> set[str]:
        return {e.dialogue_id for e in self.entries}

    def language_of(self) -> dict[str, str]:
        return {e.dialogue_id: e.language for e in self.entries}

    def save(self, path: str | Path) -> None:
        path = Path(path)
        write_jsonl(path, self.entries)
        meta = {"curation_seed": self.curation_seed, "warnings": self.warnings,
                "audit_log": self.audit_log}
        atomic_write_text(audit_path(path), json.dumps(meta, ensure_ascii=False, indent=1) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> BenchmarkSet:
        path = Path(path)
        entries = read_jsonl(path, BenchmarkEntry)
        meta = {"curation_seed": 0, "audit_log": [], "warnings": []}
        if audit_path(path).exists():
            meta.update(json.loads(audit_path(path).read_text(encoding="utf-8")))
        return cls(entries, meta["curation_seed"], meta["audit_log"], meta["warnings"])


def audit_path(path: Path) -> Path:
    return path.with_name(path.name + ".audit.json")


def _range(counts: Iterable[int]) -> int:
    counts = list(counts)
    return max(counts) - min(counts) if counts else 0


class _LanguageState:
    def __init__(self, chatbots: Sequence[str], bins: Sequence[int]):
        self.chatbot_counts = Counter({c: 0 for c in chatbots})
        self.overall_counts = Counter({b: 0 for b in bins})
        self.pair_counts: Counter = Counter()

    def add(self, c: Candidate) -> None:
        self.chatbot_counts[c.dialogue.chatbot_model] += 1
        if c.assessment.overall in self.overall_counts:
            self.overall_counts[c.assessment.overall] += 1
        self.pair_counts[c.pair] += 1

    def objective(self, c: Candidate, bonus_pairs: set, bonus: float) -> float:
        """Imbalance after adding ``c``: chatbot-count range plus overall-histogram range."""
        chat = dict(self.chatbot_counts)
        chat[c.dialogue.chatbot_model] = chat.get(c.dialogue.chatbot_model, 0) + 1
        hist = dict(self.overall_counts)
        if c.assessment.overall in hist:
            hist[c.assessment.overall] += 1
        j = _range(chat.values()) + _range(hist.values())
        if c.pair in bonus_pairs and self.pair_counts[c.pair] == 0:
            j -= bonus
        return j


def curate_language(candidates: Sequence[Candidate], target: CurationTarget,
                    rng: random.Random, language: str) -> tuple[list[BenchmarkEntry], list[dict], list[str]]:
    candidates = sorted(candidates, key=lambda c: c.dialogue_id)
    size = target.per_language_size
    audit: list[dict] = []
    warnings: list[str] = []
    pairs = sorted({c.pair for c in candidates})
    chatbots = sorted({c.dialogue.chatbot_model for c in candidates})
    if size < len(pairs):
        warnings.append(f"{language}: target {size} is below the {len(pairs)} model pairs")
    state = _LanguageState(chatbots, target.overall_bins)
    chosen: list[BenchmarkEntry] = []
    taken: set[str] = set()

    def take(c: Candidate, kind: str, seeded: bool) -> None:
        taken.add(c.dialogue_id)
        state.add(c)
        chosen.append(BenchmarkEntry(
            dialogue_id=c.dialogue_id, language=language,
            chatbot_model=c.dialogue.chatbot_model, user_model=c.dialogue.user_model,
            seeded_no_issue=seeded, selected_for=kind, source_assessment=c.assessment,
        ))

    # stage 1: one flawless dialogue per user/chatbot pair
    skipped = set()
    for pair in pairs:
        if len(chosen) >= size:
            break
        perfect = [c for c in candidates if c.pair == pair and c.perfect]
        if not perfect:
            skipped.add(pair)
            audit.append({"language": language, "stage": 1, "pair": list(pair), "skipped": True})
            log.info("%s: no flawless dialogue for pair %s", language, pair)
            continue
        c = rng.choice(perfect)
        take(c, NO_ISSUE, True)
        audit.append({"language": language, "stage": 1, "pair": list(pair),
                      "dialogue_id": c.dialogue_id})

    # stage 2: round-robin over issue kinds, minimizing the imbalance objective
    step = 0
    while len(chosen) < size:
        remaining = [c for c in candidates if c.dialogue_id not in taken]
        if not remaining:
            warnings.append(f"{language}: pool exhausted at {len(chosen)} of {size}")
            log.warning("%s: pool exhausted at %d of %d dialogues", language, len(chosen), size)
            break
        kind = target.issue_kinds[step % len(target.issue_kinds)]
        step += 1
        matching = [c for c in remaining if c.exhibits(kind)]
        relaxed = not matching
        pool = remaining if relaxed else matching
        scores = [state.objective(c, skipped, target.coverage_bonus) for c in pool]
        best = min(scores)
        ties = [c for c, s in zip(pool, scores) if s == best]
        c = rng.choice(ties)
        take(c, kind, False)
        audit.append({"language": language, "stage": 2, "step": step, "issue": kind,
                      "relaxed": relaxed, "dialogue_id": c.dialogue_id, "objective": best,
                      "candidates": len(pool), "ties": len(ties)})
    return chosen, audit, warnings


def curate(pool: Mapping[str, Sequence[Candidate]], target: CurationTarget = CurationTarget(),
           seed: int = 0, languages: Sequence[str] | None = None) -> BenchmarkSet:
    """Select ``target.per_language_size`` dialogues per language.

    Each language draws from its own rng stream, so the result for one
    language does not depend on which others are curated alongside it.
    """
    languages = list(languages) if languages is not None else sorted(pool)
    entries, audit, warnings = [], [], []
    for lang in languages:
        rng = random.Random(f"curate:{seed}:{lang}")
        e, a, w = curate_language(pool.get(lang, []), target, rng, lang)
        entries += e
        audit += a
        warnings += w
    return BenchmarkSet(entries, seed, audit, warnings)


# ---------------------------------------------------------------------------
# annotations

class AnnotationError(ValueError):
    pass


@dataclass
class AnnotationStore:
    records: list[AnnotationRecord]
    language_of: dict[str, str]

    def annotators(self, language: str | None = None) -> list[str]:
        ids = {r.annotator_id for r in self.records
               if language is None or self.language_of[r.dialogue_id] == language}
        return sorted(ids)

    def annotator_counts(self) -> dict[str, int]:
        langs = sorted(set(self.language_of.values()))
        return {lang: len(self.annotators(lang)) for lang in langs}

    def for_language(self, language: str) -> list[AnnotationRecord]:
        return [r for r in self.records if self.language_of[r.dialogue_id] == language]

    def agreement_available(self, language: str) -> bool:
        return len(self.annotators(language)) >= 2

    def annotation_sets(self, language: str) -> list[dict[str, AnnotationRecord]]:
        """One ``{dialogue_id: record}`` map per annotator, in annotator-id order."""
        out = []
        for ann in self.annotators(language):
            out.append({r.dialogue_id: r for r in self.for_language(language)
                        if r.annotator_id == ann})
        return out

    def combined_sets(self, max_sets: int = 2) -> list[dict[str, AnnotationRecord]]:
        """Set i pools the i-th annotator of every language that has one."""
        sets: list[dict[str, AnnotationRecord]] = [dict() for _ in range(max_sets)]
        for lang in sorted(set(self.language_of.values())):
            for i, s in enumerate(self.annotation_sets(lang)[:max_sets]):
                sets[i].update(s)
        return [s for s in sets if s]

    def completeness(self) -> dict[str, dict]:
        report = {}
        for lang in sorted(set(self.language_of.values())):
            expected = {d for d, l in self.language_of.items() if l == lang}
            missing = {}
            for ann in self.annotators(lang):
                have = {r.dialogue_id for r in self.for_language(lang) if r.annotator_id == ann}
                if expected - have:
                    missing[ann] = sorted(expected - have)
            report[lang] = {"dialogues": len(expected), "annotators": len(self.annotators(lang)),
                            "missing": missing, "complete": not missing}
        return report


def ingest_annotations(sources: Iterable, benchmark: BenchmarkSet) -> AnnotationStore:
    """Validate annotation TSV files (or records) against the benchmark."""
    language_of = benchmark.language_of()
    records: list[AnnotationRecord] = []
    seen: set[tuple[str, str]] = set()
    for src in sources:
        if isinstance(src, AnnotationRecord):
            batch, where = [src], "record"
        else:
            try:
                batch, where = read_annotations_tsv(src), str(src)
            except SchemaError as exc:
                raise AnnotationError(f"{src}: {exc}") from exc
        for r in batch:
            if r.dialogue_id not in language_of:
                raise AnnotationError(f"{where}: unknown dialogue_id {r.dialogue_id!r}")
            key = (r.dialogue_id, r.annotator_id)
            if key in seen:
                raise AnnotationError(f"{where}: duplicate record for {key}")
            seen.add(key)
            records.append(r)
    return AnnotationStore(records, language_of)


def annotation_files(directory: str | Path) -> list[Path]:
    return sorted(Path(directory).glob("*.tsv"))


def benchmark_stats(benchmark: BenchmarkSet, store: AnnotationStore | None = None) -> dict:
    store = store or AnnotationStore([], benchmark.language_of())
    dims = len(ISSUES) + 1
    per_lang = {}
    for lang, entries in sorted(benchmark.by_language().items()):
        recs = store.for_language(lang)
        per_annotator = {}
        for ann in store.annotators(lang):
            mine = [r for r in recs if r.annotator_id == ann]
            per_annotator[ann] = {i.value: sum(r.labels[i] for r in mine) / len(mine) for i in ISSUES}
        averaged = {
            i.value: (sum(p[i.value] for p in per_annotator.values()) / len(per_annotator)
                      if per_annotator else None)
            for i in ISSUES
        }
        per_lang[lang] = {
            "dialogues": len(entries),
            "annotators": len(per_annotator),
            "records": len(recs),
            "positive_rate_per_annotator": per_annotator,
            "positive_rate": averaged,
            "overall_histogram": histogram(r.overall for r in recs),
            "selected_for": dict(sorted(Counter(e.selected_for for e in entries).items())),
        }
    return {
        "languages": per_lang,
        "unique_dialogues": len(benchmark.ids()),
        "annotators": sum(v["annotators"] for v in per_lang.values()),
        "annotation_records": len(store.records),
        "assessment_cells": dims * len(store.records),
        "overall_histogram": histogram(r.overall for r in store.records),
    }


def histogram(scores: Iterable[int], bins: Sequence[int] = (1, 2, 3, 4, 5)) -> dict[str, int]:
    c = Counter(scores)
    return {str(b): c.get(b, 0) for b in bins}
