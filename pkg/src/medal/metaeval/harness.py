"""Running candidate judges over the benchmark, plus pairwise preference trials."""

from __future__ import annotations

import re
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from pathlib import Path

from ..agents.backends import BackendError, BackendRegistry
from ..agents.profiles import META_EVAL, META_EVAL_REASONING, PROFILES, STRONG_JUDGE, Message
from ..autolabel import Judge, label_dialogues, read_assessment_stream, render_dialogue
from ..core import (
    Dialogue,
    DialogueAssessment,
    MissingPrediction,
    SeedContext,
    Turn,
    language_info,
    stable_id,
    write_jsonl,
)


@dataclass(frozen=True)
class JudgeConfig:
    name: str
    model: str
    profile: str = META_EVAL
    relabel_attempts: int = 2

    def __post_init__(self):
        if self.profile not in (META_EVAL, META_EVAL_REASONING):
            raise ValueError(f"judge profile must be {META_EVAL} or {META_EVAL_REASONING}")

    def judge(self, registry: BackendRegistry, profiles=None, **kw) -> Judge:
        profiles = profiles or PROFILES
        return Judge(registry, self.model, profiles[self.profile], self.relabel_attempts, **kw)


@dataclass
class Predictions:
    judge_model: str
    assessments: dict[str, DialogueAssessment]
    missing: list[MissingPrediction] = field(default_factory=list)

    def records(self, order: Iterable[str]) -> list:
        """Assessments and missing markers in ``order``."""
        missing = {m.dialogue_id: m for m in self.missing}
        out = []
        for did in order:
            if did in self.assessments:
                out.append(self.assessments[did])
            elif did in missing:
                out.append(missing[did])
        return out

    def save(self, path: str | Path, order: Iterable[str]) -> None:
        write_jsonl(path, self.records(order))

    @classmethod
    def load(cls, path: str | Path) -> Predictions:
        done, missing = read_assessment_stream(path)
        models = {r.judge_model for r in [*done, *missing]}
        if len(models) > 1:
            raise ValueError(f"{path}: predictions from several judges {sorted(models)}")
        return cls(models.pop() if models else "", {a.dialogue_id: a for a in done}, missing)


def run_judge_harness(config: JudgeConfig, dialogues: Iterable[Dialogue], registry: BackendRegistry,
                      parallelism: int = 1, profiles=None, **judge_kw) -> Predictions:
    """Assess each benchmark dialogue; failures are recorded as missing, the run continues."""
    judge = config.judge(registry, profiles, **judge_kw)
    done, missing = label_dialogues(dialogues, judge, parallelism=parallelism)
    return Predictions(config.model, {a.dialogue_id: a for a in done}, missing)


# ---------------------------------------------------------------------------
# pairwise preference

WIN_A, WIN_B, TIE = "win_a", "win_b", "tie"

PAIRWISE_USER_TEMPLATE = """\
Dialogue 1:
{first}

Dialogue 2:
{second}

Answer with the number of the preferred dialogue only: 1 or 2."""

_CHOICE_RE = re.compile(r"^\s*(?:dialogue\s*)?\(?([12])\)?(?:\W|$)", re.IGNORECASE)


class PreferenceProtocolError(ValueError):
    pass


def parse_preference(text: str) -> int:
    m = _CHOICE_RE.match(text)
    if not m:
        raise PreferenceProtocolError(f"unparseable preference {text[:40]!r}")
    return int(m.group(1))


@dataclass(frozen=True)
class PreferenceOutcome:
    result: str
    choices: tuple[int | None, int | None]
    protocol_error: bool = False


def pairwise_preference_trial(dialogue_a: Dialogue, dialogue_b: Dialogue, criterion_prompt: str,
                              judge: Judge) -> PreferenceOutcome:
    """Ask twice with the presentation order swapped; a win needs both trials to agree."""
    if dialogue_a.seed.scene_id != dialogue_b.seed.scene_id:
        raise ValueError("dialogues in a preference pair must share a seed context")
    shown = [(dialogue_a, dialogue_b), (dialogue_b, dialogue_a)]
    key = stable_id("pair", dialogue_a.dialogue_id, dialogue_b.dialogue_id)
    picks: list[str | None] = []
    choices: list[int | None] = []
    error = False
    for trial, (first, second) in enumerate(shown):
        messages = [
            Message("system", criterion_prompt),
            Message("user", PAIRWISE_USER_TEMPLATE.format(first=render_dialogue(first),
                                                          second=render_dialogue(second))),
        ]
        try:
            choice = parse_preference(judge.ask(messages, key, turn=trial))
        except (PreferenceProtocolError, BackendError):
            choices.append(None)
            picks.append(None)
            error = True
            continue
        choices.append(choice)
        picks.append((first if choice == 1 else second).dialogue_id)
    if error or picks[0] != picks[1]:
        return PreferenceOutcome(TIE, tuple(choices), error)
    return PreferenceOutcome(WIN_A if picks[0] == dialogue_a.dialogue_id else WIN_B,
                             tuple(choices))


TRANSLATE_SYSTEM = ("Translate the user's message into {language}. Keep the meaning, tone and "
                    "register. Output only the translation.")


def translate_dialogue(dialogue: Dialogue, target_language: str, judge: Judge) -> Dialogue:
    """Turn-by-turn machine translation, for native-versus-translated comparisons."""
    name = language_info(target_language)[0]
    new_id = stable_id("translated", dialogue.dialogue_id, target_language)
    turns = []
    for i, t in enumerate(dialogue.turns):
        text = judge.ask([Message("system", TRANSLATE_SYSTEM.format(language=name)),
                          Message("user", t.text)], new_id, turn=i).strip()
        turns.append(Turn(t.role, text, t.attempt_count, t.judge_feedback_trail))
    seed = SeedContext(**{**dialogue.seed.to_dict(), "language": target_language})
    return Dialogue(new_id, seed, dialogue.user_model, dialogue.chatbot_model,
                    dialogue.judge_model, tuple(turns), dialogue.termination, dialogue.rng_seed)


def strong_judge(registry: BackendRegistry, model: str, profiles: Mapping | None = None, **kw) -> Judge:
    profiles = profiles or PROFILES
    return Judge(registry, model, profiles[STRONG_JUDGE], **kw)
