"""Seed-context pools and sampling.

Scenes and personas come from plain ``id<TAB>text`` files; affective states
from ``label<TAB>quadrant`` files. Only gender-neutral scenes are sampled and
each context receives a binary gender hint for grammatically gendered
languages.
"""

from __future__ import annotations

import logging
import random
from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .core import SeedContext, Turn, check_language, make_starter_id
from .text import detect_gender, find_phrase, words

log = logging.getLogger(__name__)


def _read_tsv(path: str | Path, ncols: int) -> list[list[str]]:
    rows = []
    for no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        cells = line.split("\t")
        if len(cells) < ncols:
            raise ValueError(f"{path}:{no}: expected {ncols} tab-separated columns")
        rows.append([c.strip() for c in cells[:ncols]])
    if rows and rows[0][0].lower() in {"id", "scene_id", "persona_id", "label"}:
        rows = rows[1:]
    return rows


def _data_path(name: str) -> Path:
    return Path(str(resources.files("medal") / "data" / name))


def load_lexicon(path: str | Path | None = None) -> dict[str, int]:
    """Affect keyword -> quadrant, in file order."""
    rows = _read_tsv(path or _data_path("affect_lexicon.tsv"), 2)
    return {label.lower(): int(q) for label, q in rows}


def detect_affect(scene_text: str, affect_lexicon: Iterable[str]) -> str | None:
    """First lexicon entry, in lexicon order, present in the text as a whole word."""
    tokens = words(scene_text)
    for entry in affect_lexicon:
        if find_phrase(tokens, entry.lower().split()):
            return entry
    return None


@dataclass(frozen=True)
class Scene:
    scene_id: str
    text: str
    detected_affect: str | None
    detected_gender: str


@dataclass(frozen=True)
class ScenePool:
    scenes: tuple[Scene, ...]

    def __post_init__(self):
        ids = [s.scene_id for s in self.scenes]
        dup = [k for k, n in Counter(ids).items() if n > 1]
        if dup:
            raise ValueError(f"duplicate scene_id {dup[0]!r}")

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[str, str]], lexicon: Iterable[str]) -> ScenePool:
        lexicon = list(lexicon)
        return cls(tuple(
            Scene(sid, text, detect_affect(text, lexicon), detect_gender(text))
            for sid, text in rows
        ))

    @classmethod
    def from_tsv(cls, path, lexicon) -> ScenePool:
        return cls.from_rows(_read_tsv(path, 2), lexicon)

    def neutral(self) -> list[Scene]:
        return [s for s in self.scenes if s.detected_gender == "neutral"]

    def gender_distribution(self) -> Counter:
        return Counter(s.detected_gender for s in self.scenes)


@dataclass(frozen=True)
class Persona:
    persona_id: str
    text: str


@dataclass(frozen=True)
class PersonaPool:
    personas: tuple[Persona, ...]

    def __post_init__(self):
        ids = [p.persona_id for p in self.personas]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate persona_id")
        for p in self.personas:
            if detect_gender(p.text) != "neutral":
                raise ValueError(f"persona {p.persona_id!r} is not gender-neutral")

    @classmethod
    def from_tsv(cls, path, drop_gendered: bool = True) -> PersonaPool:
        personas = [Persona(pid, text) for pid, text in _read_tsv(path, 2)]
        if drop_gendered:
            kept = [p for p in personas if detect_gender(p.text) == "neutral"]
            if len(kept) < len(personas):
                log.info("dropped %d gendered personas", len(personas) - len(kept))
            personas = kept
        return cls(tuple(personas))


@dataclass(frozen=True)
class AffectState:
    label: str
    quadrant: int


@dataclass(frozen=True)
class AffectList:
    states: tuple[AffectState, ...]

    def __post_init__(self):
        labels = [s.label for s in self.states]
        if len(set(labels)) != len(labels):
            raise ValueError("affect labels must be unique")
        counts = Counter(s.quadrant for s in self.states)
        if set(counts) != {1, 2, 3, 4}:
            raise ValueError("every quadrant 1..4 needs at least one state")
        if len(set(counts.values())) != 1:
            raise ValueError(f"unequal states per quadrant: {dict(sorted(counts.items()))}")

    @classmethod
    def from_tsv(cls, path=None) -> AffectList:
        rows = _read_tsv(path or _data_path("affects.tsv"), 2)
        return cls(tuple(AffectState(label, int(q)) for label, q in rows))

    def in_quadrant(self, q: int) -> list[AffectState]:
        return [s for s in self.states if s.quadrant == q]


class SeedSampler:
    """Draws seed contexts, cycling quadrants for scenes with no affect of their own.

    The quadrant cursor lives on the sampler, so a batch drawn from one
    sampler is balanced across quadrants regardless of its size.
    """

    def __init__(self, scene_pool: ScenePool, persona_pool: PersonaPool,
                 affect_list: AffectList, lexicon: Mapping[str, int] | None = None):
        self.scenes = scene_pool.neutral()
        if not self.scenes:
            raise ValueError("no gender-neutral scenes to sample from")
        if not persona_pool.personas:
            raise ValueError("persona pool is empty")
        self.personas = persona_pool.personas
        self.affects = affect_list
        self.lexicon = dict(lexicon) if lexicon is not None else load_lexicon()
        self._cursor = 0

    def _sampled_affect(self, rng: random.Random) -> AffectState:
        q = self._cursor % 4 + 1
        self._cursor += 1
        return rng.choice(self.affects.in_quadrant(q))

    def _context(self, rng, scene: Scene, language: str) -> SeedContext:
        if scene.detected_affect is not None:
            affect = AffectState(scene.detected_affect,
                                 self.lexicon.get(scene.detected_affect.lower(), 1))
        else:
            affect = self._sampled_affect(rng)
        persona = rng.choice(self.personas)
        return SeedContext(
            scene_id=scene.scene_id,
            scene_text=scene.text,
            persona_id=persona.persona_id,
            persona_text=persona.text,
            affective_state=affect.label,
            affect_quadrant=affect.quadrant,
            gender_hint=rng.choice(("male", "female")),
            language=check_language(language),
        )

    def sample(self, rng: random.Random, language: str) -> SeedContext:
        return self._context(rng, rng.choice(self.scenes), language)

    def batch(self, rng: random.Random, n: int, languages: Sequence[str]) -> dict[str, list[SeedContext]]:
        """``n`` distinct scenes, each instantiated identically in every language."""
        if n > len(self.scenes):
            raise ValueError(f"requested {n} scenes, only {len(self.scenes)} neutral scenes")
        chosen = rng.sample(self.scenes, n)
        base = [self._context(rng, s, languages[0]) for s in chosen]
        out = {}
        for lang in languages:
            check_language(lang)
            out[lang] = [_with_language(c, lang) for c in base]
        return out


def _with_language(ctx: SeedContext, language: str) -> SeedContext:
    d = ctx.to_dict()
    d["language"] = language
    return SeedContext(**d)


def sample_seed_context(rng, scene_pool, persona_pool, affect_list, language, lexicon=None) -> SeedContext:
    return SeedSampler(scene_pool, persona_pool, affect_list, lexicon).sample(rng, language)


@dataclass(frozen=True)
class Starter:
    """One conversation starter: a seed context bound to a user model."""

    seed: SeedContext
    user_model: str
    first_turn: Turn | None = None

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.seed.scene_id, self.user_model, self.seed.language)

    @property
    def starter_id(self) -> str:
        return make_starter_id(*self.key)


def build_starter_matrix(contexts: Iterable[SeedContext], user_models: Sequence[str],
                         languages: Sequence[str]) -> list[Starter]:
    starters: list[Starter] = []
    seen: set[tuple[str, str, str]] = set()
    wanted = list(languages)
    by_lang: dict[str, list[SeedContext]] = {lang: [] for lang in wanted}
    for ctx in contexts:
        if ctx.language in by_lang:
            by_lang[ctx.language].append(ctx)
    for lang in wanted:
        for ctx in by_lang[lang]:
            for um in user_models:
                st = Starter(ctx, um)
                if st.key in seen:
                    raise ValueError(f"duplicate starter key {st.key}")
                seen.add(st.key)
                starters.append(st)
    return starters
