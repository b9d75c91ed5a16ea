"""Per-language dataset statistics: size, turns, utterance length, lexical diversity."""

from __future__ import annotations

from collections import defaultdict
from collections.abc import Iterable
from dataclasses import asdict, dataclass

from ..core import Dialogue
from ..text import TokenizerRegistry, default_tokenizers, normalize_tokens
from .stats import mtld


@dataclass(frozen=True)
class LanguageStats:
    language: str
    dialogues: int
    mean_turns: float
    mean_utterance_length: float
    length_unit: str
    mtld: float | None


@dataclass(frozen=True)
class CorpusStats:
    languages: dict[str, LanguageStats]

    @property
    def total_dialogues(self) -> int:
        return sum(s.dialogues for s in self.languages.values())

    def to_dict(self) -> dict:
        return {"total_dialogues": self.total_dialogues,
                "languages": {k: asdict(v) for k, v in sorted(self.languages.items())}}

    def table(self) -> str:
        rows = [("lang", "dialogues", "turns", "utt_len", "unit", "mtld")]
        for lang, s in sorted(self.languages.items()):
            rows.append((lang, str(s.dialogues), f"{s.mean_turns:.2f}",
                         f"{s.mean_utterance_length:.2f}", s.length_unit,
                         "-" if s.mtld is None else f"{s.mtld:.2f}"))
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in rows)


def corpus_stats(dialogues: Iterable[Dialogue],
                 tokenizers: TokenizerRegistry | None = None) -> CorpusStats:
    """Turns count user turns; utterance length covers every turn of both roles."""
    tokenizers = tokenizers or default_tokenizers()
    by_lang: dict[str, list[Dialogue]] = defaultdict(list)
    for d in dialogues:
        by_lang[d.language].append(d)
    out = {}
    for lang, ds in by_lang.items():
        tokenize, unit = tokenizers.get(lang)
        lengths = []
        stream: list[str] = []
        for d in ds:
            for t in d.turns:
                toks = tokenize(t.text)
                lengths.append(len(toks))
                stream.extend(normalize_tokens(toks))
        out[lang] = LanguageStats(
            language=lang,
            dialogues=len(ds),
            mean_turns=sum(len(d.user_turns) for d in ds) / len(ds),
            mean_utterance_length=sum(lengths) / len(lengths),
            length_unit=unit,
            mtld=mtld(stream),
        )
    return CorpusStats(out)
