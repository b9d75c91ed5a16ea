"""Prompt templates for the user, chatbot and user-judge roles, and verdict parsing."""

from __future__ import annotations

import json
import re
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from ..core import CHATBOT, USER, SeedContext, Turn, language_info
from .profiles import Message

END_OF_DIALOGUE = "END_OF_DIALOGUE"

FIRST_TURN_SYSTEM = """\
You are a creative writer specializing in crafting human-like casual open-domain interactions with chatbots. Your task is to generate the first message a human user might send to a chatbot, based on the following inputs:

1. Scene Description: A small social context or event description.
2. Persona: A brief description of the individual’s role, background, or identity.
3. Gender: Gender of the individual if not already provided before.
4. Language/Culture: The language or cultural context of the user.

Guidelines:

- Use natural, conversational language typical of casual, open-domain interactions. Messages should feel authentic and concise, limited to one or two small sentences.
- Do not address the chatbot in a manner that assumes it has a physical body, a personal history, or experiences typical of a human (e.g., having a family, personal secrets, or emotions linked to past events).
- Do not write messages that imply the chatbot is someone the user has met before or can relate to as if it were a human friend.
- Ask for advice, opinions, information, or share personal reflections, experiences, or questions that do not attribute human characteristics to the chatbot.
- Reflect the age, emotional state and language/culture of the individual in tone, word choice, and phrasing.
- Incorporate the context from the scene description without explicitly repeating it word-for-word but subtly integrating its essence or themes.
- Do not use placeholder terms like "PersonY". Use realistic names, pronouns, or generic references suitable for the context.
- If gender is required and not provided in the persona or scene, use the one provided as "Gender".

Output:

Provide only the message that the human might send to a chatbot. Do not include quotation marks, meta-commentary, or any additional text outside of the generated message (including "user:").
"""

USER_TURN_SYSTEM = """\
You are role-playing as a human in an online casual conversation. Your task is to generate a natural and authentic response given prior context and an optional feedback from a prior generation attempt.

Guidelines:

- Use natural, conversational language that reflects how humans communicate online with chatbots.
- Do not acknowledge that you are an AI or break character as the human in the conversation.
- Keep your single response clear and easy to follow, using short sentences and everyday language. The message should be concise (1 or 2 small sentences) and relevant to the conversation and scene.
- Respond in a way that feels humanlike. Avoid repeating previous content.
- Avoid verbose or robotic phrasing. Do not use the same conversational structure (e.g., starting with appreciation or a personal preference followed by a question) in every turn.
- If gender is required and not provided in the persona or scene, use the one provided as "Gender".
- Use the language specified in the scene.
- Do not use placeholder names like "PersonY". Use realistic names or generic pronouns that suit the context and language.
- Do not let the conversation drag on. If the conversation should end, output 'END_OF_DIALOGUE' to signal the end of the dialogue.
- Take into account the optional feedback from a prior generation attempt, if provided, to improve the response.

Output:

Provide only the message that the human might send to a chatbot. Do not include quotation marks, meta-commentary, or any additional text outside of the generated message (including "user:")."""

CHATBOT_SYSTEM = """\
You are a chatbot designed to engage in online casual conversations. Your task is to respond to messages directed at you in a way that fosters a smooth, engaging dialogue.

Guidelines:

- Use natural, conversational language that is clear and easy to follow, avoiding overly formal or robotic tones.
- Use the same language as the user.
- Keep your responses concise (1 or 2 sentences) with sentences that are short, easy to follow and relevant -- aim for maintaining conversational flow.
- Avoid steering the conversation towards a specific goal, such as information provision or task completion. Instead, focus on maintaining an engaging dialogue.
- Do not use bullet points or overly structured lists; instead, respond in a fluid, conversational manner.
- Adapt your tone and content to match the style and mood of the conversation.
- Ask questions and introduce new elements or topics when appropriate to keep the exchange interactive, engaging and non-repetitive."""

USER_JUDGE_SYSTEM = """\
You are a dialogue evaluation assistant tasked with determining whether a generated response (the last user message) meets the following criteria:

- Natural and Conversational: The response should sound like it was written by a real person in an ordinary online conversation, using language and expressions typical of a user.
- Concise and Coherent: The response should be brief (1–2 sentences), non-repetitive, and coherent with the prior conversation context.
- Appropriate Tone: The response should match the style, language, and mood expected from a user. It should not mimic an assistant's voice by providing advice, guidance, or suggestions that are typically offered by the assistant. Asking for advice or seeking information is acceptable if it aligns with the user's role.
- Role Appropriateness: The response must clearly reflect the user's role. If the response includes elements (e.g., offering support, advice, or asking probing follow-up questions) that are characteristic of an assistant's response, it should be flagged. The user should not break character or acknowledge that they are an AI.
- Non-Repetitiveness: Responses should not repeat of previous content, sentence structures (e.g., starting with appreciation or a personal preference followed by a question), or acknowledgments.
- Ending: The generated response can include the flag "END_OF_DIALOGUE" if the conversation should end. This flag should be used only when the conversation has reached a natural conclusion.

Your task is to evaluate ONLY the last message in the conversation against these criteria.

Output: "Yes." if the user response meets all criteria, or "No. <brief explanation>" if it does not."""


def load_few_shot(path: str | Path | None = None) -> dict[str, list[dict]]:
    if path is None:
        path = Path(str(resources.files("medal") / "data" / "few_shot.json"))
    return json.loads(Path(path).read_text(encoding="utf-8"))


_DEFAULT_FEW_SHOT: dict[str, list[dict]] | None = None


def _few_shot_for(language: str, few_shot: Mapping[str, list[dict]] | None) -> list[dict]:
    global _DEFAULT_FEW_SHOT
    if few_shot is None:
        if _DEFAULT_FEW_SHOT is None:
            _DEFAULT_FEW_SHOT = load_few_shot()
        few_shot = _DEFAULT_FEW_SHOT
    return list(few_shot.get(language, few_shot.get("EN", [])))


def seed_block(seed: SeedContext) -> str:
    """Scene, persona, affect, gender and language lines; always written in English."""
    name, country = language_info(seed.language)
    lines = [
        f"Scene Description: {seed.scene_text}",
        f"Persona: {seed.persona_text}",
        f"Affective State: {seed.affective_state}",
    ]
    if seed.gender_hint != "none":
        lines.append(f"Gender: {seed.gender_hint}")
    lines.append(
        f"Language/Culture: {name}. Act as someone from {country}, adapting the scene "
        f"to that culture, and write directly in {name}."
    )
    return "\n".join(lines)


def render_history(history: Sequence[Turn], user_name: str = "User",
                   chatbot_name: str = "Chatbot") -> str:
    names = {USER: user_name, CHATBOT: chatbot_name}
    return "\n".join(f"{names[t.role]}: {t.text}" for t in history)


def _rejection_block(rejected: Mapping[str, str]) -> str:
    return (
        "\n\nPrior failed generation attempt was:\n"
        f"{rejected['text']}\n"
        "Feedback from this previous generation:\n"
        f"{rejected['feedback']}"
    )


def render_first_turn_prompt(seed: SeedContext, rejected: Mapping[str, str] | None = None,
                             few_shot: Mapping[str, list[dict]] | None = None) -> list[Message]:
    examples = _few_shot_for(seed.language, few_shot)
    system = FIRST_TURN_SYSTEM
    if examples:
        shots = "\n\n".join(f"Scene: {ex['scene']}\nMessage: {ex['message']}" for ex in examples)
        system += "\nExamples:\n\n" + shots + "\n"
    user = "The scene is as follows:\n" + seed_block(seed)
    if rejected is not None:
        user += _rejection_block(rejected)
    return [Message("system", system.rstrip("\n")), Message("user", user)]


def render_user_turn_prompt(seed: SeedContext, history: Sequence[Turn],
                            rejected: Mapping[str, str] | None = None) -> list[Message]:
    if not history:
        raise ValueError("history is empty; use render_first_turn_prompt")
    if history[-1].role != CHATBOT:
        raise ValueError("history must end with a chatbot turn")
    user = (
        "The scene is as follows:\n" + seed_block(seed)
        + "\n\nThe Dialogue is as follows:\n" + render_history(history)
    )
    if rejected is not None:
        user += _rejection_block(rejected)
    return [Message("system", USER_TURN_SYSTEM), Message("user", user)]


def render_chatbot_prompt(history: Sequence[Turn]) -> list[Message]:
    if not history:
        raise ValueError("history is empty")
    if history[-1].role != USER:
        raise ValueError("history must end with a user turn")
    roles = {USER: "user", CHATBOT: "assistant"}
    return [Message("system", CHATBOT_SYSTEM)] + [Message(roles[t.role], t.text) for t in history]


def render_user_judge_prompt(history: Sequence[Turn]) -> list[Message]:
    if not history or history[-1].role != USER:
        raise ValueError("the last turn must be the candidate user utterance")
    return [Message("system", USER_JUDGE_SYSTEM), Message("user", render_history(history))]


@dataclass(frozen=True)
class JudgeVerdict:
    accept: bool
    feedback: str | None = None

    def __post_init__(self):
        if self.accept and self.feedback is not None:
            raise ValueError("an accepting verdict carries no feedback")
        if not self.accept and not self.feedback:
            raise ValueError("a rejecting verdict needs feedback")


GENERIC_FEEDBACK = "The response does not meet the criteria."
_LENIENT_RE = re.compile(r"^\s*(yes|no)\b[\s.!:,;-]*(.*)$", re.IGNORECASE | re.DOTALL)


class VerdictProtocolError(ValueError):
    pass


def parse_verdict(text: str, lenient: bool = False) -> JudgeVerdict:
    """Parse a ``Yes.`` / ``No. <reason>`` verdict.

    Strict mode raises :class:`VerdictProtocolError` on anything else;
    lenient mode tolerates case and punctuation drift and turns unparseable
    output into a rejection with generic feedback.
    """
    stripped = text.rstrip()
    if stripped == "Yes.":
        return JudgeVerdict(True)
    if stripped.startswith("No."):
        return JudgeVerdict(False, stripped[3:].strip() or GENERIC_FEEDBACK)
    if not lenient:
        raise VerdictProtocolError(f"unparseable verdict: {text[:80]!r}")
    m = _LENIENT_RE.match(text)
    if m and m.group(1).lower() == "yes":
        return JudgeVerdict(True)
    if m:
        return JudgeVerdict(False, m.group(2).strip() or GENERIC_FEEDBACK)
    return JudgeVerdict(False, GENERIC_FEEDBACK)


def is_end_of_dialogue(text: str, substring: bool = False) -> bool:
    if substring:
        return END_OF_DIALOGUE in text
    return text.strip().strip("'\"") == END_OF_DIALOGUE
