"""Chat requests and the fixed decoding profiles for each agent role."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple


class Message(NamedTuple):
    role: str
    content: str

    def to_dict(self) -> dict:
        return {"role": self.role, "content": self.content}


MESSAGE_ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: tuple[Message, ...]
    temperature: float = 1.0
    top_p: float = 1.0
    presence_penalty: float = 0.0
    max_tokens: int = 512
    reasoning_budget: int | None = None
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "messages", tuple(Message(*m) for m in self.messages))
        if not self.model:
            raise ValueError("model id is required")
        if not self.messages:
            raise ValueError("messages must be non-empty")
        for i, m in enumerate(self.messages):
            if m.role not in MESSAGE_ROLES:
                raise ValueError(f"bad message role {m.role!r}")
            if m.role == "system" and i != 0:
                raise ValueError("a system message may only appear first")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must be in (0, 1]")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be > 0")
        if self.reasoning_budget is not None and self.reasoning_budget <= 0:
            raise ValueError("reasoning_budget must be > 0")

    def wire(self) -> dict:
        """Body of an OpenAI-style ``/chat/completions`` request."""
        body = {
            "model": self.model,
            "messages": [m.to_dict() for m in self.messages],
            "temperature": self.temperature,
            "top_p": self.top_p,
            "presence_penalty": self.presence_penalty,
            "max_tokens": self.max_tokens,
        }
        if self.reasoning_budget is not None:
            body["reasoning"] = {"max_tokens": self.reasoning_budget}
        if self.seed is not None:
            body["seed"] = self.seed
        return body


@dataclass(frozen=True)
class DecodingProfile:
    name: str
    temperature: float
    top_p: float = 1.0
    presence_penalty: float = 0.0
    max_tokens: int = 512
    reasoning_budget: int | None = None

    def request(self, model: str, messages, seed: int | None = None) -> ChatRequest:
        return ChatRequest(
            model=model,
            messages=tuple(messages),
            temperature=self.temperature,
            top_p=self.top_p,
            presence_penalty=self.presence_penalty,
            max_tokens=self.max_tokens,
            reasoning_budget=self.reasoning_budget,
            seed=seed,
        )

    def with_overrides(self, **kw) -> DecodingProfile:
        return replace(self, **kw)


USER_FIRST = "user_first"
USER_NEXT = "user_next"
USER_JUDGE = "user_judge"
CHATBOT = "chatbot"
STRONG_JUDGE = "strong_judge"
META_EVAL = "meta_eval"
META_EVAL_REASONING = "meta_eval_reasoning"

PROFILES: dict[str, DecodingProfile] = {
    USER_FIRST: DecodingProfile(USER_FIRST, temperature=1.5, presence_penalty=0.6, max_tokens=512),
    USER_NEXT: DecodingProfile(USER_NEXT, temperature=0.9, top_p=0.95, max_tokens=512),
    USER_JUDGE: DecodingProfile(USER_JUDGE, temperature=0.1, max_tokens=64),
    CHATBOT: DecodingProfile(CHATBOT, temperature=0.9, top_p=0.95, max_tokens=512),
    STRONG_JUDGE: DecodingProfile(STRONG_JUDGE, temperature=0.0, top_p=1.0, max_tokens=8192),
    META_EVAL: DecodingProfile(META_EVAL, temperature=0.0, top_p=1.0, max_tokens=8192),
    META_EVAL_REASONING: DecodingProfile(
        META_EVAL_REASONING, temperature=0.0, top_p=1.0, max_tokens=32768,
        reasoning_budget=32768,
    ),
}
