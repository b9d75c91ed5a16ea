"""A deterministic stand-in for every model role, and synthetic human annotations.

Each dialogue gets a latent quality (issue flags plus an overall score)
hashed from its first chatbot reply. Judges and synthetic annotators
report that latent quality through their own hash-seeded noise, so judge
scores correlate with "human" ones without any network access.
"""

from __future__ import annotations

import hashlib
import json
import random
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

from .agents.backends import CallContext, Completion
from .agents.profiles import CHATBOT, USER_FIRST, USER_JUDGE, USER_NEXT, ChatRequest
from .agents.prompts import END_OF_DIALOGUE
from .autolabel import LABEL_SYSTEM_PROMPT
from .core import CHATBOT as CHATBOT_ROLE
from .core import ISSUES, AnnotationRecord, Dialogue

VOCAB = {
    "EN": "today really think friend work home feel tired happy weekend plan dinner music "
          "walk coffee morning city family story small long".split(),
    "FR": "aujourd'hui vraiment pense ami travail maison fatigue heureux week-end projet "
          "dîner musique promenade café matin ville famille histoire petit long".split(),
    "DE": "heute wirklich denke Freund Arbeit Hause müde glücklich Wochenende Plan Abendessen "
          "Musik Spaziergang Kaffee Morgen Stadt Familie Geschichte klein lang".split(),
    "ES": "hoy realmente pienso amigo trabajo casa cansado feliz fin semana plan cena música "
          "paseo café mañana ciudad familia historia pequeño largo".split(),
    "PT": "hoje realmente acho amigo trabalho casa cansado feliz fim semana plano jantar música "
          "passeio café manhã cidade família história pequeno longo".split(),
    "ZH": list("今天真的觉得朋友工作回家有点累开心周末计划晚饭音乐散步咖啡早上城市家人故事"),
}
ROLE_CONFUSION_LINE = "How can I assist you today?"
ISSUE_RATE = 0.12


def _h(*parts) -> int:
    raw = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.sha256(raw).digest()[:8], "big")


def _rng(*parts) -> random.Random:
    return random.Random(_h(*parts))


def _sentence(rng: random.Random, language: str, n: int) -> str:
    words = VOCAB.get(language, VOCAB["EN"])
    picked = [rng.choice(words) for _ in range(n)]
    if language == "ZH":
        return "".join(picked) + "。"
    return " ".join(picked).capitalize() + "."


def _language_of(request: ChatRequest) -> str:
    text = "\n".join(m.content for m in request.messages)
    names = {"Chinese": "ZH", "French": "FR", "German": "DE", "Spanish": "ES",
             "Portuguese": "PT", "English": "EN"}
    marker = "write directly in "
    at = text.rfind(marker)
    if at >= 0:
        tail = text[at + len(marker):]
        for name, code in names.items():
            if tail.startswith(name):
                return code
    # chatbot prompts carry no seed: infer from script
    last = request.messages[-1].content
    if any("一" <= ch <= "鿿" for ch in last):
        return "ZH"
    tokens = {w.strip(".,!?").lower() for w in last.split()}
    scores = {code: len(tokens & {w.lower() for w in words})
              for code, words in VOCAB.items() if code != "ZH"}
    return max(scores, key=lambda c: (scores[c], c == "EN"))


@dataclass(frozen=True)
class LatentQuality:
    flags: tuple[int, ...]
    overall: int
    mixing: bool

    @classmethod
    def of_text(cls, text: str) -> LatentQuality:
        rng = _rng("latent", text)
        flags = tuple(int(rng.random() < ISSUE_RATE) for _ in ISSUES)
        n = sum(flags)
        overall = 5 if n == 0 else max(2, 5 - n - rng.randint(0, 1))
        if n == 0 and rng.random() < 0.25:
            overall = 4
        return cls(flags, overall, mixing=bool(flags[0]) and rng.random() < 0.5)

    @classmethod
    def of_dialogue(cls, dialogue: Dialogue) -> LatentQuality:
        return cls.of_text(_first_reply(t.text for t in dialogue.turns if t.role == CHATBOT_ROLE))


def _first_reply(replies: Iterable[str]) -> str:
    return next(iter(replies), "")


class SyntheticWorld:
    """Backend answering every profile; ``noise`` is the per-flag flip rate of a judge model."""

    def __init__(self, seed: int = 0, end_rate: float = 0.08, reject_rate: float = 0.1,
                 role_confusion_rate: float = 0.01, judge_noise: dict[str, float] | None = None):
        self.seed = seed
        self.end_rate = end_rate
        self.reject_rate = reject_rate
        self.role_confusion_rate = role_confusion_rate
        self.judge_noise = dict(judge_noise or {})

    def complete(self, request: ChatRequest, context: CallContext) -> Completion:
        rng = _rng(self.seed, request.model, json.dumps(request.wire(), sort_keys=True,
                                                        ensure_ascii=False))
        system = request.messages[0].content if request.messages[0].role == "system" else ""
        profile = context.profile
        if profile in (USER_FIRST, USER_NEXT):
            return Completion(self._user(request, context, rng))
        if profile == USER_JUDGE:
            if rng.random() < self.reject_rate:
                return Completion("No. The message sounds more like an assistant than a person.")
            return Completion("Yes.")
        if profile == CHATBOT:
            lang = _language_of(request)
            return Completion(_sentence(rng, lang, 10) + " " + _sentence(rng, lang, 6))
        if system.startswith(LABEL_SYSTEM_PROMPT[:40]):
            return Completion(self._assessment(request))
        if "role_confusion" in system:
            return Completion(self._screen(request))
        return Completion("1")

    def _user(self, request, context, rng) -> str:
        lang = _language_of(request)
        if context.profile == USER_NEXT and rng.random() < self.end_rate:
            return END_OF_DIALOGUE
        text = _sentence(rng, lang, 8)
        if context.profile == USER_NEXT and rng.random() < self.role_confusion_rate:
            text = ROLE_CONFUSION_LINE + " " + text
        return text

    def _dialogue_lines(self, request) -> list[tuple[str, str]]:
        lines = []
        for line in request.messages[-1].content.splitlines():
            role, _, text = line.partition(": ")
            lines.append((role, text))
        return lines

    def _assessment(self, request) -> str:
        lines = self._dialogue_lines(request)
        reply = _first_reply(t for r, t in lines if r == "assistant")
        truth = LatentQuality.of_text(reply)
        noise = self.judge_noise.get(request.model, 0.05)
        rng = _rng("judge", self.seed, request.model, reply)
        flags = [f ^ int(rng.random() < noise) for f in truth.flags]
        overall = truth.overall
        if rng.random() < noise * 3:
            overall = min(5, max(1, overall + rng.choice((-1, 1))))
        if any(flags) and overall == 5:
            overall = 4
        out = {}
        for issue, f in zip(ISSUES, flags):
            comment = ""
            if f:
                comment = f"The assistant shows a {issue.value.replace('_', ' ')} problem."
                if issue == ISSUES[0] and truth.mixing:
                    comment = "The response mixes English words into the reply."
            out[issue.value] = {"label": f, "comment": comment}
        out["other"] = {"label": 0, "comment": ""}
        out["overall_quality_rating"] = {"label": overall, "comment": "Synthetic overall rating."}
        return "```json\n" + json.dumps(out, indent=2) + "\n```"

    def _screen(self, request) -> str:
        lines = self._dialogue_lines(request)
        confused = [t for r, t in lines if r == "user" and ROLE_CONFUSION_LINE in t]
        return json.dumps({
            "role_confusion": bool(confused),
            "user_language_mixing": False,
            "chatbot_language_mixing": False,
            "evidence": confused[0] if confused else "",
        })


def synthetic_annotations(dialogues: Sequence[Dialogue], annotators_per_language: dict[str, int],
                          noise: float = 0.08, seed: int = 0,
                          humanlikeness: bool = True) -> list[AnnotationRecord]:
    """Annotator records derived from each dialogue's latent quality plus per-annotator noise."""
    out = []
    for d in dialogues:
        truth = LatentQuality.of_dialogue(d)
        for k in range(annotators_per_language.get(d.language, 0)):
            ann = f"{d.language.lower()}_annotator_{k + 1}"
            rng = _rng("annotator", seed, ann, d.dialogue_id)
            labels = {i: f ^ int(rng.random() < noise) for i, f in zip(ISSUES, truth.flags)}
            overall = truth.overall
            if rng.random() < noise * 2:
                overall = min(5, max(1, overall + rng.choice((-1, 1))))
            out.append(AnnotationRecord(
                d.dialogue_id, ann, labels, overall,
                rng.choice((4, 5, 5, 5)) if humanlikeness else None,
            ))
    return out
