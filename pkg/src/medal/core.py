"""Domain records shared by every stage and their JSONL/TSV persistence.

Every record is a frozen dataclass that validates itself on construction.
Serialized lines are compact UTF-8 JSON objects whose keys follow the field
order declared here, preceded by ``schema_version``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, ClassVar

from .text import detect_gender

SCHEMA_VERSION = 1
MAX_USER_TURNS = 10

# code -> (language name, country framing used in prompts)
LANGUAGES: dict[str, tuple[str, str]] = {
    "ZH": ("Chinese", "China"),
    "EN": ("English", "the United States"),
    "FR": ("French", "France"),
    "DE": ("German", "Germany"),
    "PT": ("Portuguese", "Brazil"),
    "ES": ("Spanish", "Spain"),
}
_EXTRA_LANGUAGES: dict[str, tuple[str, str]] = {}
_allow_extra_languages = False


def set_allow_extra_languages(flag: bool) -> None:
    global _allow_extra_languages
    _allow_extra_languages = bool(flag)


def register_language(code: str, name: str, country: str) -> None:
    """Add a tag outside the built-in six; only accepted with the extra-language flag on."""
    _EXTRA_LANGUAGES[code] = (name, country)


def language_info(code: str) -> tuple[str, str]:
    if code in LANGUAGES:
        return LANGUAGES[code]
    return _EXTRA_LANGUAGES.get(code, (code, code))


def check_language(code: Any, field_name: str = "language") -> str:
    if not isinstance(code, str) or not code:
        raise SchemaError("language tag must be a non-empty string", field_name)
    if code not in LANGUAGES and not _allow_extra_languages:
        raise SchemaError(f"unknown language tag {code!r}", field_name)
    return code


class IssueLabel(str, Enum):
    UNINTERPRETABLE = "uninterpretable"
    UNSAFE = "unsafe"
    LACKS_EMPATHY = "lacks_empathy"
    LACKS_COMMONSENSE = "lacks_commonsense"
    REPETITIVE = "repetitive"
    INCOHERENT = "incoherent"
    IRRELEVANT = "irrelevant"
    NONFACTUAL = "nonfactual"


ISSUES: tuple[IssueLabel, ...] = tuple(IssueLabel)
NO_ISSUE = "no_issue"

USER, CHATBOT = "user", "chatbot"
TURN_CAP, END_FLAG, REGENERATION_EXHAUSTED = "turn_cap", "end_flag", "regeneration_exhausted"
TERMINATIONS = (TURN_CAP, END_FLAG, REGENERATION_EXHAUSTED)
GENDER_HINTS = ("male", "female", "none")


class SchemaError(ValueError):
    """A record violates its schema; ``field`` names the offending key."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.message = message
        self.field = field
        self.line = line
        super().__init__(self._render())

    def _render(self) -> str:
        parts = []
        if self.line is not None:
            parts.append(f"line {self.line}")
        if self.field:
            parts.append(f"field {self.field!r}")
        prefix = ", ".join(parts)
        return f"{prefix}: {self.message}" if prefix else self.message

    def at_line(self, line: int) -> SchemaError:
        return SchemaError(self.message, self.field, line)


def stable_id(*parts: Any) -> str:
    raw = "\x1f".join(str(p) for p in parts)
    return hashlib.sha256(raw.encode("utf-8")).hexdigest()[:16]


def make_dialogue_id(scene_id, persona_id, language, user_model, chatbot_model, rng_seed) -> str:
    return stable_id("dialogue", scene_id, persona_id, language, user_model, chatbot_model, rng_seed)


def make_starter_id(scene_id, user_model, language) -> str:
    return stable_id("starter", scene_id, user_model, language)


# ---------------------------------------------------------------------------
# field helpers

def _get(d: Mapping[str, Any], key: str, prefix: str = "") -> Any:
    if key not in d:
        raise SchemaError("missing key", prefix + key)
    return d[key]


def _check_keys(d: Any, allowed: Iterable[str], strict: bool, prefix: str = "") -> None:
    if not isinstance(d, dict):
        raise SchemaError("expected a JSON object", prefix.rstrip(".") or None)
    if strict:
        extra = [k for k in d if k not in allowed]
        if extra:
            raise SchemaError("unknown key", prefix + extra[0])


def _int(value: Any, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError("expected an integer", name)
    return value


def _str(value: Any, name: str, *, allow_empty: bool = True) -> str:
    if not isinstance(value, str):
        raise SchemaError("expected a string", name)
    if not allow_empty and not value.strip():
        raise SchemaError("must be non-empty", name)
    return value


def _flag(value: Any, name: str) -> int:
    if isinstance(value, bool) or value not in (0, 1) or not isinstance(value, int):
        raise SchemaError("flag must be 0 or 1", name)
    return value


def _overall(value: Any, name: str = "overall") -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError("overall must be an integer", name)
    if not 1 <= value <= 5:
        raise SchemaError("overall out of range", name)
    return value


def _issue(key: Any) -> IssueLabel:
    try:
        return IssueLabel(key)
    except ValueError:
        raise SchemaError(f"unknown issue label {key!r}", "labels") from None


# ---------------------------------------------------------------------------
# records

class Record:
    kind: ClassVar[str]

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError

    @classmethod
    def from_dict(cls, d: Mapping[str, Any], strict: bool = True):
        raise NotImplementedError


@dataclass(frozen=True)
class SeedContext(Record):
    kind: ClassVar[str] = "seed"

    scene_id: str
    scene_text: str
    persona_id: str
    persona_text: str
    affective_state: str
    affect_quadrant: int
    gender_hint: str
    language: str

    def __post_init__(self):
        _str(self.scene_id, "scene_id", allow_empty=False)
        _str(self.scene_text, "scene_text", allow_empty=False)
        _str(self.persona_id, "persona_id", allow_empty=False)
        _str(self.persona_text, "persona_text")
        _str(self.affective_state, "affective_state", allow_empty=False)
        if _int(self.affect_quadrant, "affect_quadrant") not in (1, 2, 3, 4):
            raise SchemaError("quadrant must be in 1..4", "affect_quadrant")
        if self.gender_hint not in GENDER_HINTS:
            raise SchemaError(f"gender_hint must be one of {GENDER_HINTS}", "gender_hint")
        if self.gender_hint == "none" and (
            detect_gender(self.scene_text + " " + self.persona_text) == "neutral"
        ):
            raise SchemaError(
                "gender_hint none requires a gendered scene or persona", "gender_hint"
            )
        check_language(self.language)

    def to_dict(self):
        return {
            "scene_id": self.scene_id,
            "scene_text": self.scene_text,
            "persona_id": self.persona_id,
            "persona_text": self.persona_text,
            "affective_state": self.affective_state,
            "affect_quadrant": self.affect_quadrant,
            "gender_hint": self.gender_hint,
            "language": self.language,
        }

    @classmethod
    def from_dict(cls, d, strict=True, prefix=""):
        names = [
            "scene_id", "scene_text", "persona_id", "persona_text",
            "affective_state", "affect_quadrant", "gender_hint", "language",
        ]
        _check_keys(d, names, strict, prefix)
        return cls(**{n: _get(d, n, prefix) for n in names})


@dataclass(frozen=True)
class Turn(Record):
    kind: ClassVar[str] = "turn"

    role: str
    text: str
    attempt_count: int | None = None
    judge_feedback_trail: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "judge_feedback_trail", tuple(self.judge_feedback_trail))
        _str(self.text, "text")
        if self.role == USER:
            if _int(self.attempt_count, "attempt_count") < 1:
                raise SchemaError("attempt_count must be >= 1", "attempt_count")
            for fb in self.judge_feedback_trail:
                _str(fb, "judge_feedback_trail")
            if len(self.judge_feedback_trail) > self.attempt_count:
                raise SchemaError("more feedback entries than attempts", "judge_feedback_trail")
        elif self.role == CHATBOT:
            if self.attempt_count is not None or self.judge_feedback_trail:
                raise SchemaError("chatbot turns carry no attempt bookkeeping", "attempt_count")
        else:
            raise SchemaError(f"role must be {USER!r} or {CHATBOT!r}", "role")

    def to_dict(self):
        return {
            "role": self.role,
            "text": self.text,
            "attempt_count": self.attempt_count,
            "judge_feedback_trail": list(self.judge_feedback_trail),
        }

    @classmethod
    def from_dict(cls, d, strict=True, prefix=""):
        names = ["role", "text", "attempt_count", "judge_feedback_trail"]
        _check_keys(d, names, strict, prefix)
        trail = d.get("judge_feedback_trail", [])
        if not isinstance(trail, list):
            raise SchemaError("expected a list", prefix + "judge_feedback_trail")
        return cls(
            role=_get(d, "role", prefix),
            text=_get(d, "text", prefix),
            attempt_count=d.get("attempt_count"),
            judge_feedback_trail=tuple(trail),
        )


@dataclass(frozen=True)
class Dialogue(Record):
    kind: ClassVar[str] = "dialogue"

    dialogue_id: str
    seed: SeedContext
    user_model: str
    chatbot_model: str
    judge_model: str
    turns: tuple[Turn, ...]
    termination: str
    rng_seed: int

    def __post_init__(self):
        object.__setattr__(self, "turns", tuple(self.turns))
        _str(self.dialogue_id, "dialogue_id", allow_empty=False)
        if not isinstance(self.seed, SeedContext):
            raise SchemaError("expected a SeedContext", "seed")
        for name in ("user_model", "chatbot_model", "judge_model"):
            _str(getattr(self, name), name, allow_empty=False)
        _int(self.rng_seed, "rng_seed")
        if not self.turns:
            raise SchemaError("dialogue has no turns", "turns")
        for i, t in enumerate(self.turns):
            expected = USER if i % 2 == 0 else CHATBOT
            if t.role != expected:
                raise SchemaError("non-alternating roles", "turns")
        n_user = sum(t.role == USER for t in self.turns)
        if n_user > MAX_USER_TURNS:
            raise SchemaError(f"more than {MAX_USER_TURNS} user turns", "turns")
        if self.termination not in TERMINATIONS:
            raise SchemaError(f"termination must be one of {TERMINATIONS}", "termination")

    @property
    def language(self) -> str:
        return self.seed.language

    @property
    def user_turns(self) -> list[Turn]:
        return [t for t in self.turns if t.role == USER]

    @property
    def chatbot_turns(self) -> list[Turn]:
        return [t for t in self.turns if t.role == CHATBOT]

    def check_attempt_limits(self, first_turn: int, next_turn: int) -> None:
        for i, t in enumerate(self.user_turns):
            limit = first_turn if i == 0 else next_turn
            if t.attempt_count > limit:
                raise SchemaError(
                    f"user turn {i} used {t.attempt_count} attempts, limit {limit}", "turns"
                )

    def to_dict(self):
        return {
            "dialogue_id": self.dialogue_id,
            "seed": self.seed.to_dict(),
            "user_model": self.user_model,
            "chatbot_model": self.chatbot_model,
            "judge_model": self.judge_model,
            "turns": [t.to_dict() for t in self.turns],
            "termination": self.termination,
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, d, strict=True):
        names = [
            "dialogue_id", "seed", "user_model", "chatbot_model",
            "judge_model", "turns", "termination", "rng_seed",
        ]
        _check_keys(d, names, strict)
        turns = _get(d, "turns")
        if not isinstance(turns, list):
            raise SchemaError("expected a list", "turns")
        return cls(
            dialogue_id=_get(d, "dialogue_id"),
            seed=SeedContext.from_dict(_get(d, "seed"), strict, "seed."),
            user_model=_get(d, "user_model"),
            chatbot_model=_get(d, "chatbot_model"),
            judge_model=_get(d, "judge_model"),
            turns=tuple(Turn.from_dict(t, strict, f"turns[{i}].") for i, t in enumerate(turns)),
            termination=_get(d, "termination"),
            rng_seed=_get(d, "rng_seed"),
        )


@dataclass(frozen=True)
class LabelVerdict:
    flag: int
    comment: str | None = None

    def to_dict(self):
        return {"flag": self.flag, "comment": self.comment}


def _check_verdict(v: Any, name: str) -> LabelVerdict:
    if not isinstance(v, LabelVerdict):
        raise SchemaError("expected a LabelVerdict", name)
    _flag(v.flag, name)
    has_comment = v.comment is not None and bool(str(v.comment).strip())
    if v.flag == 1 and not has_comment:
        raise SchemaError(f"missing comment for {name}", name)
    if v.flag == 0 and v.comment is not None:
        raise SchemaError(f"comment given for unflagged {name}", name)
    return v


def _verdict_from_dict(d: Any, name: str, strict: bool) -> LabelVerdict:
    _check_keys(d, ["flag", "comment"], strict, name + ".")
    comment = d.get("comment")
    if comment is not None:
        _str(comment, name + ".comment")
    return LabelVerdict(flag=_flag(_get(d, "flag", name + "."), name), comment=comment)


@dataclass(frozen=True)
class DialogueAssessment(Record):
    kind: ClassVar[str] = "assessment"

    dialogue_id: str
    labels: Mapping[IssueLabel, LabelVerdict]
    other: LabelVerdict
    overall: int
    overall_comment: str
    judge_model: str
    run_index: int = 0

    def __post_init__(self):
        _str(self.dialogue_id, "dialogue_id", allow_empty=False)
        labels = {_issue(k): v for k, v in dict(self.labels).items()}
        for issue in ISSUES:
            if issue not in labels:
                raise SchemaError(f"missing label {issue.value}", "labels")
            _check_verdict(labels[issue], issue.value)
        object.__setattr__(self, "labels", {i: labels[i] for i in ISSUES})
        _check_verdict(self.other, "other")
        _overall(self.overall)
        _str(self.overall_comment, "overall_comment", allow_empty=False)
        _str(self.judge_model, "judge_model", allow_empty=False)
        if _int(self.run_index, "run_index") < 0:
            raise SchemaError("run_index must be >= 0", "run_index")

    @property
    def flags(self) -> tuple[int, ...]:
        return tuple(self.labels[i].flag for i in ISSUES)

    @property
    def issues(self) -> list[IssueLabel]:
        return [i for i in ISSUES if self.labels[i].flag == 1]

    def has(self, issue: IssueLabel) -> bool:
        return self.labels[issue].flag == 1

    def to_dict(self):
        return {
            "dialogue_id": self.dialogue_id,
            "labels": {i.value: self.labels[i].to_dict() for i in ISSUES},
            "other": self.other.to_dict(),
            "overall": self.overall,
            "overall_comment": self.overall_comment,
            "judge_model": self.judge_model,
            "run_index": self.run_index,
        }

    @classmethod
    def from_dict(cls, d, strict=True, prefix=""):
        names = ["dialogue_id", "labels", "other", "overall", "overall_comment",
                 "judge_model", "run_index"]
        _check_keys(d, names, strict, prefix)
        raw = _get(d, "labels", prefix)
        _check_keys(raw, [i.value for i in ISSUES], strict, prefix + "labels.")
        labels = {}
        for issue in ISSUES:
            labels[issue] = _verdict_from_dict(_get(raw, issue.value, prefix + "labels."),
                                               issue.value, strict)
        return cls(
            dialogue_id=_get(d, "dialogue_id", prefix),
            labels=labels,
            other=_verdict_from_dict(_get(d, "other", prefix), "other", strict),
            overall=_get(d, "overall", prefix),
            overall_comment=_get(d, "overall_comment", prefix),
            judge_model=_get(d, "judge_model", prefix),
            run_index=d.get("run_index", 0),
        )


@dataclass(frozen=True)
class AnnotationRecord(Record):
    kind: ClassVar[str] = "annotation"

    dialogue_id: str
    annotator_id: str
    labels: Mapping[IssueLabel, int]
    overall: int
    user_humanlikeness: int | None = None

    def __post_init__(self):
        _str(self.dialogue_id, "dialogue_id", allow_empty=False)
        _str(self.annotator_id, "annotator_id", allow_empty=False)
        labels = {_issue(k): v for k, v in dict(self.labels).items()}
        for issue in ISSUES:
            if issue not in labels:
                raise SchemaError(f"missing label {issue.value}", "labels")
            _flag(labels[issue], issue.value)
        object.__setattr__(self, "labels", {i: labels[i] for i in ISSUES})
        _overall(self.overall)
        if self.user_humanlikeness is not None:
            _overall(self.user_humanlikeness, "user_humanlikeness")

    @property
    def flags(self) -> tuple[int, ...]:
        return tuple(self.labels[i] for i in ISSUES)

    def to_dict(self):
        return {
            "dialogue_id": self.dialogue_id,
            "annotator_id": self.annotator_id,
            "labels": {i.value: self.labels[i] for i in ISSUES},
            "overall": self.overall,
            "user_humanlikeness": self.user_humanlikeness,
        }

    @classmethod
    def from_dict(cls, d, strict=True):
        names = ["dialogue_id", "annotator_id", "labels", "overall", "user_humanlikeness"]
        _check_keys(d, names, strict)
        raw = _get(d, "labels")
        _check_keys(raw, [i.value for i in ISSUES], strict, "labels.")
        return cls(
            dialogue_id=_get(d, "dialogue_id"),
            annotator_id=_get(d, "annotator_id"),
            labels={i: _get(raw, i.value, "labels.") for i in ISSUES},
            overall=_get(d, "overall"),
            user_humanlikeness=d.get("user_humanlikeness"),
        )


@dataclass(frozen=True)
class BenchmarkEntry(Record):
    kind: ClassVar[str] = "benchmark_entry"

    dialogue_id: str
    language: str
    chatbot_model: str
    user_model: str
    seeded_no_issue: bool
    selected_for: str
    source_assessment: DialogueAssessment

    def __post_init__(self):
        _str(self.dialogue_id, "dialogue_id", allow_empty=False)
        check_language(self.language)
        if not isinstance(self.seeded_no_issue, bool):
            raise SchemaError("expected a boolean", "seeded_no_issue")
        if self.selected_for not in {i.value for i in ISSUES} | {NO_ISSUE}:
            raise SchemaError("unknown issue kind", "selected_for")
        if self.source_assessment.dialogue_id != self.dialogue_id:
            raise SchemaError("assessment belongs to another dialogue", "source_assessment")

    def to_dict(self):
        return {
            "dialogue_id": self.dialogue_id,
            "language": self.language,
            "chatbot_model": self.chatbot_model,
            "user_model": self.user_model,
            "seeded_no_issue": self.seeded_no_issue,
            "selected_for": self.selected_for,
            "source_assessment": self.source_assessment.to_dict(),
        }

    @classmethod
    def from_dict(cls, d, strict=True):
        names = ["dialogue_id", "language", "chatbot_model", "user_model",
                 "seeded_no_issue", "selected_for", "source_assessment"]
        _check_keys(d, names, strict)
        return cls(
            dialogue_id=_get(d, "dialogue_id"),
            language=_get(d, "language"),
            chatbot_model=_get(d, "chatbot_model"),
            user_model=_get(d, "user_model"),
            seeded_no_issue=_get(d, "seeded_no_issue"),
            selected_for=_get(d, "selected_for"),
            source_assessment=DialogueAssessment.from_dict(
                _get(d, "source_assessment"), strict, "source_assessment."
            ),
        )


@dataclass(frozen=True)
class MissingPrediction(Record):
    """Placeholder line for a dialogue a judge failed to assess."""

    kind: ClassVar[str] = "missing_prediction"

    dialogue_id: str
    judge_model: str
    reason: str

    def to_dict(self):
        return {"dialogue_id": self.dialogue_id, "judge_model": self.judge_model,
                "reason": self.reason, "missing": True}

    @classmethod
    def from_dict(cls, d, strict=True):
        _check_keys(d, ["dialogue_id", "judge_model", "reason", "missing"], strict)
        return cls(_get(d, "dialogue_id"), _get(d, "judge_model"), _get(d, "reason"))


RECORD_KINDS: dict[str, type[Record]] = {}


def register_kind(cls: type[Record]) -> type[Record]:
    RECORD_KINDS[cls.kind] = cls
    return cls


for _cls in (SeedContext, Turn, Dialogue, DialogueAssessment, AnnotationRecord,
             BenchmarkEntry, MissingPrediction):
    register_kind(_cls)


# ---------------------------------------------------------------------------
# JSONL

def serialize_record(record: Record) -> str:
    if not isinstance(record, Record):
        raise SchemaError(f"not a record: {type(record).__name__}")
    payload = {"schema_version": SCHEMA_VERSION, **record.to_dict()}
    return json.dumps(payload, ensure_ascii=False, separators=(",", ":")) + "\n"


def parse_record(line: str, kind: str | type[Record], *, strict: bool = True,
                 line_no: int | None = None) -> Record:
    cls = RECORD_KINDS[kind] if isinstance(kind, str) else kind
    try:
        data = json.loads(line)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"malformed JSON: {exc.msg}", line=line_no) from None
    try:
        if not isinstance(data, dict):
            raise SchemaError("expected a JSON object")
        version = data.pop("schema_version", None)
        if version != SCHEMA_VERSION:
            raise SchemaError(f"unsupported schema_version {version!r}", "schema_version")
        return cls.from_dict(data, strict)
    except SchemaError as exc:
        raise exc.at_line(line_no) if line_no is not None else exc


def iter_jsonl(path: str | os.PathLike, kind, *, strict: bool = True) -> Iterator[Record]:
    with open(path, encoding="utf-8") as fh:
        for no, line in enumerate(fh, 1):
            if line.strip():
                yield parse_record(line, kind, strict=strict, line_no=no)


def read_jsonl(path, kind, *, strict: bool = True) -> list:
    return list(iter_jsonl(path, kind, strict=strict))


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_jsonl(path, records: Iterable[Record]) -> None:
    atomic_write_text(path, "".join(serialize_record(r) for r in records))


def append_jsonl(path, records: Iterable[Record]) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        for r in records:
            fh.write(serialize_record(r))
        fh.flush()
        os.fsync(fh.fileno())


# ---------------------------------------------------------------------------
# TSV exchange for annotators

TSV_COLUMNS = ["dialogue_id", "annotator_id", *(i.value for i in ISSUES),
               "overall", "user_humanlikeness"]


def annotations_to_tsv(records: Iterable[AnnotationRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    w.writerow(TSV_COLUMNS)
    for r in records:
        w.writerow([r.dialogue_id, r.annotator_id, *r.flags, r.overall,
                    "" if r.user_humanlikeness is None else r.user_humanlikeness])
    return buf.getvalue()


def write_annotations_tsv(path, records: Iterable[AnnotationRecord]) -> None:
    atomic_write_text(path, annotations_to_tsv(records))


def _tsv_int(value: str, name: str, line: int) -> int:
    try:
        return int(value)
    except ValueError:
        raise SchemaError(f"expected an integer, got {value!r}", name, line) from None


def parse_annotations_tsv(text: str) -> list[AnnotationRecord]:
    rows = list(csv.reader(io.StringIO(text), delimiter="\t"))
    if not rows or rows[0] != TSV_COLUMNS:
        raise SchemaError("header does not match the annotation exchange columns", line=1)
    out = []
    for no, row in enumerate(rows[1:], 2):
        if not row:
            continue
        if len(row) != len(TSV_COLUMNS):
            raise SchemaError(f"expected {len(TSV_COLUMNS)} columns, got {len(row)}", line=no)
        cells = dict(zip(TSV_COLUMNS, row))
        try:
            out.append(AnnotationRecord(
                dialogue_id=cells["dialogue_id"],
                annotator_id=cells["annotator_id"],
                labels={i: _tsv_int(cells[i.value], i.value, no) for i in ISSUES},
                overall=_tsv_int(cells["overall"], "overall", no),
                user_humanlikeness=(
                    None if cells["user_humanlikeness"] == ""
                    else _tsv_int(cells["user_humanlikeness"], "user_humanlikeness", no)
                ),
            ))
        except SchemaError as exc:
            raise exc.at_line(no) from None
    return out


def read_annotations_tsv(path) -> list[AnnotationRecord]:
    return parse_annotations_tsv(Path(path).read_text(encoding="utf-8"))
