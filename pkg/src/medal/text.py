"""Tokenization and rule-based lexical scans shared by the pipeline stages."""

from __future__ import annotations

import re
import string
from collections.abc import Callable, Iterable, Sequence

_WORD_RE = re.compile(r"\w+")
_PUNCT = string.punctuation + "“”‘’«»¿¡…，。！？、；：（）【】《》"

MALE_TOKENS = frozenset(
    """he him his himself man men boy boys gentleman father dad daddy brother
    son husband uncle nephew grandfather grandpa grandson king prince mr sir
    boyfriend fiance groom male""".split()
)
FEMALE_TOKENS = frozenset(
    """she her hers herself woman women girl girls lady mother mom mum mommy
    sister daughter wife aunt niece grandmother grandma granddaughter queen
    princess mrs ms miss madam girlfriend fiancee bride female""".split()
)


def words(text: str) -> list[str]:
    """Lowercased ``\\w+`` runs; the unit for keyword and gender scans."""
    return _WORD_RE.findall(text.lower())


def detect_gender(
    text: str,
    male_tokens: Iterable[str] = MALE_TOKENS,
    female_tokens: Iterable[str] = FEMALE_TOKENS,
) -> str:
    """Return ``"male"``, ``"female"`` or ``"neutral"``.

    The first gendered token in reading order decides; a text with no
    gendered token is neutral.
    """
    male = frozenset(t.lower() for t in male_tokens)
    female = frozenset(t.lower() for t in female_tokens)
    for w in words(text):
        if w in male:
            return "male"
        if w in female:
            return "female"
    return "neutral"


def find_phrase(tokens: Sequence[str], phrase: Sequence[str]) -> bool:
    n = len(phrase)
    if n == 0:
        return False
    return any(list(tokens[i : i + n]) == list(phrase) for i in range(len(tokens) - n + 1))


# Utterance length units and tokenizers per language.

def whitespace_tokens(text: str) -> list[str]:
    return text.split()


def character_tokens(text: str) -> list[str]:
    return [ch for ch in text if not ch.isspace() and ch not in _PUNCT]


def normalize_tokens(tokens: Iterable[str]) -> list[str]:
    """Lowercase and strip surrounding punctuation, dropping empty tokens."""
    out = []
    for tok in tokens:
        t = tok.strip(_PUNCT).lower()
        if t:
            out.append(t)
    return out


Tokenizer = Callable[[str], list[str]]


class TokenizerRegistry:
    """Maps a language tag to (tokenizer, unit name).

    Unregistered languages fall back to the default tokenizer when one is
    set; otherwise lookup raises ``KeyError``.
    """

    def __init__(self, default: tuple[Tokenizer, str] | None = (whitespace_tokens, "words")):
        self._by_lang: dict[str, tuple[Tokenizer, str]] = {}
        self.default = default

    def register(self, language: str, tokenizer: Tokenizer, unit: str) -> None:
        self._by_lang[language] = (tokenizer, unit)

    def get(self, language: str) -> tuple[Tokenizer, str]:
        if language in self._by_lang:
            return self._by_lang[language]
        if self.default is None:
            raise KeyError(f"no tokenizer registered for language {language!r}")
        return self.default


def default_tokenizers() -> TokenizerRegistry:
    reg = TokenizerRegistry()
    reg.register("ZH", character_tokens, "characters")
    return reg
