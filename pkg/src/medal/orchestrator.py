"""Dialogue generation: the per-turn feedback loop and campaign fan-out."""

from __future__ import annotations

import json
import logging
import random
import threading
import time
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

from .agents.backends import BackendError, BackendRegistry, CallContext, RetryPolicy, chat_complete
from .agents.profiles import CHATBOT as CHATBOT_PROFILE
from .agents.profiles import PROFILES, USER_FIRST, USER_JUDGE, USER_NEXT, DecodingProfile
from .agents.prompts import (
    VerdictProtocolError,
    is_end_of_dialogue,
    parse_verdict,
    render_chatbot_prompt,
    render_first_turn_prompt,
    render_user_judge_prompt,
    render_user_turn_prompt,
)
from .core import (
    CHATBOT,
    END_FLAG,
    MAX_USER_TURNS,
    REGENERATION_EXHAUSTED,
    SCHEMA_VERSION,
    TURN_CAP,
    USER,
    Dialogue,
    SchemaError,
    SeedContext,
    Turn,
    append_jsonl,
    iter_jsonl,
    make_dialogue_id,
    write_jsonl,
)
from .seedgen import AffectList, PersonaPool, ScenePool, SeedSampler, Starter, build_starter_matrix

log = logging.getLogger(__name__)

FIRST_TURN_END_FEEDBACK = "The first message must open the conversation, not end it."


@dataclass(frozen=True)
class LoopLimits:
    first_turn_attempts: int = 10
    next_turn_attempts: int = 5
    max_user_turns: int = 10

    def __post_init__(self):
        for name in ("first_turn_attempts", "next_turn_attempts", "max_user_turns"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.max_user_turns > MAX_USER_TURNS:
            raise ValueError(f"max_user_turns cannot exceed {MAX_USER_TURNS}")


@dataclass
class Agents:
    """Everything a generation call needs besides the dialogue state."""

    registry: BackendRegistry
    user_model: str
    judge_model: str
    profiles: Mapping[str, DecodingProfile] = field(default_factory=lambda: dict(PROFILES))
    few_shot: Mapping[str, list] | None = None
    end_substring: bool = False
    lenient_verdicts: bool = False
    retry: RetryPolicy = RetryPolicy()
    sleep: object = time.sleep

    def call(self, profile: str, model: str, messages, ctx: CallContext, rng) -> str:
        seed = rng.randrange(2**31) if rng is not None else None
        request = self.profiles[profile].request(model, messages, seed=seed)
        backend = self.registry.get(model)
        return chat_complete(backend, request, ctx, retry=self.retry, sleep=self.sleep).text


ACCEPTED, END_OF_DIALOGUE, EXHAUSTED = "accepted", "end_of_dialogue", "exhausted"


@dataclass(frozen=True)
class UserTurnResult:
    status: str
    text: str | None
    attempts: int
    feedback_trail: tuple[str, ...] = ()

    def to_turn(self) -> Turn:
        if self.status != ACCEPTED:
            raise ValueError(f"no turn to build from a {self.status} result")
        return Turn(USER, self.text, self.attempts, self.feedback_trail)


def generate_user_turn(seed: SeedContext, history: Sequence[Turn], limits: LoopLimits,
                       agents: Agents, rng: random.Random | None = None,
                       dialogue_key: str = "") -> UserTurnResult:
    """Render, generate and judge until accepted, ended, or out of attempts."""
    first = not history
    if not first and history[-1].role != CHATBOT:
        raise ValueError("history must be empty or end with a chatbot turn")
    limit = limits.first_turn_attempts if first else limits.next_turn_attempts
    turn_index = sum(t.role == USER for t in history)
    trail: list[str] = []
    rejected = None
    for attempt in range(1, limit + 1):
        ctx_args = dict(dialogue_key=dialogue_key, turn_index=turn_index, attempt=attempt)
        if first:
            messages = render_first_turn_prompt(seed, rejected, agents.few_shot)
            profile = USER_FIRST
        else:
            messages = render_user_turn_prompt(seed, history, rejected)
            profile = USER_NEXT
        text = agents.call(profile, agents.user_model, messages,
                           CallContext(profile, **ctx_args), rng).strip()
        if is_end_of_dialogue(text, agents.end_substring):
            if not first:
                return UserTurnResult(END_OF_DIALOGUE, None, attempt, tuple(trail))
            feedback = FIRST_TURN_END_FEEDBACK
        else:
            candidate = list(history) + [Turn(USER, text, 1)]
            raw = agents.call(USER_JUDGE, agents.judge_model,
                              render_user_judge_prompt(candidate),
                              CallContext(USER_JUDGE, **ctx_args), rng)
            verdict = parse_verdict(raw, lenient=agents.lenient_verdicts)
            if verdict.accept:
                return UserTurnResult(ACCEPTED, text, attempt, tuple(trail))
            feedback = verdict.feedback
        trail.append(feedback)
        rejected = {"text": text, "feedback": feedback}
    return UserTurnResult(EXHAUSTED, None, limit, tuple(trail))


def generate_first_turn(starter: Starter, limits: LoopLimits, agents: Agents,
                        rng: random.Random | None = None) -> UserTurnResult:
    return generate_user_turn(starter.seed, [], limits, agents, rng, dialogue_key=starter.starter_id)


def generate_dialogue(starter: Starter, chatbot_model: str, limits: LoopLimits, agents: Agents,
                      rng: random.Random | None = None, rng_seed: int = 0) -> Dialogue:
    """Run one user/chatbot conversation from a starter's shared first turn."""
    if starter.first_turn is None:
        raise ValueError("starter has no accepted first turn")
    seed = starter.seed
    dialogue_id = make_dialogue_id(seed.scene_id, seed.persona_id, seed.language,
                                   starter.user_model, chatbot_model, rng_seed)
    history: list[Turn] = [starter.first_turn]
    while True:
        n_user = len(history) // 2 + 1
        reply = agents.call(
            CHATBOT_PROFILE, chatbot_model, render_chatbot_prompt(history),
            CallContext(CHATBOT_PROFILE, dialogue_id, n_user - 1), rng,
        )
        history.append(Turn(CHATBOT, reply.strip()))
        if n_user >= limits.max_user_turns:
            termination = TURN_CAP
            break
        result = generate_user_turn(seed, history, limits, agents, rng, dialogue_key=dialogue_id)
        if result.status == ACCEPTED:
            history.append(result.to_turn())
        else:
            termination = END_FLAG if result.status == END_OF_DIALOGUE else REGENERATION_EXHAUSTED
            break
    return Dialogue(
        dialogue_id=dialogue_id, seed=seed, user_model=starter.user_model,
        chatbot_model=chatbot_model, judge_model=agents.judge_model,
        turns=tuple(history), termination=termination, rng_seed=rng_seed,
    )


# ---------------------------------------------------------------------------
# campaigns

@dataclass(frozen=True)
class CampaignConfig:
    user_models: tuple[str, ...]
    chatbot_models: tuple[str, ...]
    judge_model: str
    languages: tuple[str, ...]
    scenes_per_language: int
    limits: LoopLimits = LoopLimits()
    parallelism: int = 1
    rng_seed: int = 0
    end_substring: bool = False
    lenient_verdicts: bool = False

    def __post_init__(self):
        for name in ("user_models", "chatbot_models", "languages"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
            if not getattr(self, name):
                raise ValueError(f"{name} must be non-empty")
        if not self.judge_model:
            raise ValueError("judge_model is required")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        if self.scenes_per_language < 1:
            raise ValueError("scenes_per_language must be >= 1")


@dataclass(frozen=True)
class Pools:
    scenes: ScenePool
    personas: PersonaPool
    affects: AffectList
    lexicon: Mapping[str, int] | None = None


@dataclass(frozen=True)
class CampaignPlan:
    starters: list[Starter]
    pairs: list[tuple[Starter, str, str]]  # (starter, chatbot_model, dialogue_id)

    @property
    def planned_dialogues(self) -> int:
        return len(self.pairs)

    def call_budget(self, limits: LoopLimits, completed: set[str] = frozenset()) -> dict[str, int]:
        """Calls needed when every turn is accepted first time and no dialogue ends early."""
        todo = [p for p in self.pairs if p[2] not in completed]
        started = {p[0].starter_id for p in todo}
        n, m = len(todo), limits.max_user_turns
        return {
            USER_FIRST: len(started),
            USER_NEXT: n * (m - 1),
            USER_JUDGE: len(started) + n * (m - 1),
            CHATBOT_PROFILE: n * m,
        }


def plan_campaign(config: CampaignConfig, pools: Pools) -> CampaignPlan:
    sampler = SeedSampler(pools.scenes, pools.personas, pools.affects, pools.lexicon)
    contexts = sampler.batch(random.Random(f"seeds:{config.rng_seed}"),
                             config.scenes_per_language, config.languages)
    starters = build_starter_matrix(
        [c for lang in config.languages for c in contexts[lang]],
        config.user_models, config.languages,
    )
    pairs = []
    for st in starters:
        for cm in config.chatbot_models:
            did = make_dialogue_id(st.seed.scene_id, st.seed.persona_id, st.seed.language,
                                   st.user_model, cm, config.rng_seed)
            pairs.append((st, cm, did))
    return CampaignPlan(starters, pairs)


@dataclass
class FailedPair:
    dialogue_id: str
    starter_key: tuple[str, str, str]
    chatbot_model: str
    error: str


@dataclass
class CampaignResult:
    dialogues: list[Dialogue]
    planned: int
    new_ids: list[str] = field(default_factory=list)
    first_turn_generations: int = 0
    dropped_starters: list[tuple[str, str, str]] = field(default_factory=list)
    failed: list[FailedPair] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failed


def read_manifest(path: str | Path) -> set[str]:
    path = Path(path)
    if not path.exists():
        return set()
    done = set()
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            done.add(json.loads(line)["dialogue_id"])
    return done


class _Manifest:
    def __init__(self, path: str | Path | None):
        self.path = Path(path) if path else None
        self._lock = threading.Lock()

    def record(self, dialogue: Dialogue, out_path: Path | None) -> None:
        with self._lock:
            if out_path is not None:
                append_jsonl(out_path, [dialogue])
            if self.path is not None:
                line = json.dumps({
                    "schema_version": SCHEMA_VERSION,
                    "dialogue_id": dialogue.dialogue_id,
                    "completed_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
                }, separators=(",", ":"))
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(line + "\n")


_RECOVERABLE = (BackendError, VerdictProtocolError, SchemaError, ValueError)


def run_campaign(config: CampaignConfig, pools: Pools, registry: BackendRegistry,
                 out_path: str | Path | None = None, manifest_path: str | Path | None = None,
                 *, profiles: Mapping[str, DecodingProfile] | None = None,
                 few_shot: Mapping[str, list] | None = None,
                 retry: RetryPolicy = RetryPolicy(), sleep=time.sleep) -> CampaignResult:
    """Generate every (starter, chatbot) dialogue not already in the manifest.

    The first user turn is generated once per starter and shared by all of
    its chatbots. Completed dialogues are appended to ``out_path`` and the
    manifest as they finish; the output file is then rewritten in plan
    order so identical runs produce identical files.
    """
    plan = plan_campaign(config, pools)
    out_path = Path(out_path) if out_path else None
    completed = read_manifest(manifest_path) if manifest_path else set()

    existing: dict[str, Dialogue] = {}
    if out_path is not None and out_path.exists():
        for d in iter_jsonl(out_path, Dialogue):
            if d.dialogue_id in completed:
                existing[d.dialogue_id] = d
    completed &= set(existing)

    todo = [p for p in plan.pairs if p[2] not in completed]
    result = CampaignResult(dialogues=[], planned=plan.planned_dialogues)
    profiles = dict(profiles or PROFILES)

    def agents_for(user_model: str) -> Agents:
        return Agents(registry, user_model, config.judge_model, profiles, few_shot,
                      config.end_substring, config.lenient_verdicts, retry, sleep)

    # shared first turns: reuse from finished dialogues when resuming
    first_turns: dict[str, Turn] = {}
    for d in existing.values():
        st = Starter(d.seed, d.user_model)
        first_turns.setdefault(st.starter_id, d.turns[0])
    need_first = []
    seen = set()
    for st, _, _ in todo:
        if st.starter_id not in first_turns and st.starter_id not in seen:
            seen.add(st.starter_id)
            need_first.append(st)

    failed_starters: dict[str, str] = {}

    def first_job(st: Starter):
        rng = random.Random(f"{config.rng_seed}:{st.starter_id}")
        try:
            res = generate_first_turn(st, config.limits, agents_for(st.user_model), rng)
        except _RECOVERABLE as exc:
            return st, None, f"{type(exc).__name__}: {exc}"
        return st, res, None

    with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
        for st, res, err in pool.map(first_job, need_first):
            result.first_turn_generations += 1
            if err is not None:
                failed_starters[st.starter_id] = err
            elif res.status == ACCEPTED:
                first_turns[st.starter_id] = res.to_turn()
            else:
                log.info("dropping starter %s after %d rejected first turns", st.key, res.attempts)
                result.dropped_starters.append(st.key)

    manifest = _Manifest(manifest_path)

    def dialogue_job(pair):
        st, cm, did = pair
        rng = random.Random(f"{config.rng_seed}:{did}")
        try:
            d = generate_dialogue(replace(st, first_turn=first_turns[st.starter_id]), cm,
                                  config.limits, agents_for(st.user_model), rng, config.rng_seed)
        except _RECOVERABLE as exc:
            return pair, None, f"{type(exc).__name__}: {exc}"
        manifest.record(d, out_path)
        return pair, d, None

    runnable = []
    for pair in todo:
        st, cm, did = pair
        if st.starter_id in failed_starters:
            result.failed.append(FailedPair(did, st.key, cm, failed_starters[st.starter_id]))
        elif st.starter_id in first_turns:
            runnable.append(pair)

    new: dict[str, Dialogue] = {}
    with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
        for (st, cm, did), d, err in pool.map(dialogue_job, runnable):
            if err is not None:
                result.failed.append(FailedPair(did, st.key, cm, err))
            else:
                new[did] = d
                result.new_ids.append(did)

    merged = {**existing, **new}
    result.dialogues = [merged[did] for _, _, did in plan.pairs if did in merged]
    if out_path is not None:
        write_jsonl(out_path, result.dialogues)
    return result
