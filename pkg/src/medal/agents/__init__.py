from .backends import (
    AuthenticationError,
    Backend,
    BackendError,
    BackendRegistry,
    CallContext,
    Completion,
    ContextLengthError,
    HostedBackend,
    RecordingBackend,
    ReplayBackend,
    RetryPolicy,
    RoutedBackend,
    ScriptCall,
    ScriptedBackend,
    ScriptExhausted,
    ScriptRule,
    TransportError,
    as_registry,
    chat_complete,
    recording_registry,
    replay_registry,
)
from .profiles import PROFILES, ChatRequest, DecodingProfile, Message
from .prompts import (
    END_OF_DIALOGUE,
    JudgeVerdict,
    VerdictProtocolError,
    parse_verdict,
    render_chatbot_prompt,
    render_first_turn_prompt,
    render_user_judge_prompt,
    render_user_turn_prompt,
)


def scripted_backend(script) -> ScriptedBackend:
    """Build a scripted backend from rules, rule dicts, or a JSONL rules path."""
    if isinstance(script, (str, bytes)) or hasattr(script, "__fspath__"):
        return ScriptedBackend.from_jsonl(script)
    return ScriptedBackend(r if isinstance(r, ScriptRule) else ScriptRule.from_dict(r) for r in script)
