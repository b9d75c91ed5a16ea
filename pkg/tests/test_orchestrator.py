import json
import random
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from factories import pools, scripted, seed
from medal.agents import ScriptRule
from medal.core import (
    CHATBOT,
    END_FLAG,
    REGENERATION_EXHAUSTED,
    TURN_CAP,
    USER,
    Dialogue,
    Turn,
    read_jsonl,
)
from medal.orchestrator import (
    ACCEPTED,
    END_OF_DIALOGUE,
    EXHAUSTED,
    FIRST_TURN_END_FEEDBACK,
    Agents,
    CampaignConfig,
    LoopLimits,
    generate_dialogue,
    generate_user_turn,
    plan_campaign,
    read_manifest,
    run_campaign,
)
from medal.seedgen import Starter


def sim_rules(reject=lambda ctx: False, end=lambda ctx: False, chat_fail=None):
    """User, judge and chatbot rules driven by call context.

    ``reject(ctx)`` decides the judge verdict, ``end(ctx)`` whether a later
    user turn is END_OF_DIALOGUE.
    """
    def user(req, ctx):
        if ctx.profile == "user_next" and end(ctx):
            return "END_OF_DIALOGUE"
        return f"user says {ctx.turn_index}.{ctx.attempt}"

    def judge(req, ctx):
        return "No. Sounds scripted." if reject(ctx) else "Yes."

    def bot(req, ctx):
        if chat_fail and chat_fail(ctx):
            raise ValueError("boom")
        return f"bot reply {ctx.turn_index}"

    return (ScriptRule(profile="user_first", respond=user),
            ScriptRule(profile="user_next", respond=user),
            ScriptRule(profile="user_judge", respond=judge),
            ScriptRule(profile="chatbot", respond=bot))


def agents_for(*rules, **kw):
    backend, reg = scripted(*rules)
    return backend, Agents(reg, "user-a", "judge", **kw)


def history(n_user):
    res = []
    for k in range(n_user):
        res += [Turn(USER, f"u{k}", 1), Turn(CHATBOT, f"b{k}")]
    return res


@pytest.mark.parametrize("first", [True, False])
@pytest.mark.parametrize("k", range(0, 12))
def test_reject_k_times(first, k):
    limits = LoopLimits()
    limit = limits.first_turn_attempts if first else limits.next_turn_attempts
    backend, agents = agents_for(*sim_rules(reject=lambda ctx: ctx.attempt <= k))
    res = generate_user_turn(seed(), [] if first else history(2), limits, agents)
    judge_calls = backend.calls("user_judge")
    if k < limit:
        assert res.status == ACCEPTED and res.attempts == k + 1
        assert len(res.feedback_trail) == k and len(judge_calls) == k + 1
    else:
        assert res.status == EXHAUSTED and res.attempts == limit
        assert len(judge_calls) == limit


def test_rejection_feedback_reaches_next_prompt():
    backend, agents = agents_for(*sim_rules(reject=lambda ctx: ctx.attempt == 1))
    generate_user_turn(seed(), history(1), LoopLimits(), agents)
    second = backend.calls("user_next")[1].request.messages[-1].content
    assert "Prior failed generation attempt was:\nuser says 1.1" in second
    assert "Sounds scripted." in second


def test_judge_sees_candidate_as_last_turn():
    backend, agents = agents_for(*sim_rules())
    generate_user_turn(seed(), history(1), LoopLimits(), agents)
    shown = backend.calls("user_judge")[0].request.messages[-1].content
    assert shown.splitlines()[-1] == "User: user says 1.1"


def test_later_end_skips_judge():
    backend, agents = agents_for(*sim_rules(end=lambda ctx: True))
    res = generate_user_turn(seed(), history(1), LoopLimits(), agents)
    assert res.status == END_OF_DIALOGUE and backend.calls("user_judge") == []


def test_first_turn_end_counts_as_rejection():
    def user(req, ctx):
        return "END_OF_DIALOGUE" if ctx.attempt == 1 else "hello"
    backend, agents = agents_for(ScriptRule(profile="user_first", respond=user),
                                 ScriptRule(profile="user_judge", responses=["Yes."]))
    res = generate_user_turn(seed(), [], LoopLimits(), agents)
    assert res.status == ACCEPTED and res.attempts == 2
    assert res.feedback_trail == (FIRST_TURN_END_FEEDBACK,)


def _starter(agents, limits=LoopLimits()):
    st_ = Starter(seed(), "user-a")
    first = generate_user_turn(st_.seed, [], limits, agents)
    return Starter(st_.seed, "user-a", first.to_turn())


def test_turn_cap():
    _, agents = agents_for(*sim_rules())
    d = generate_dialogue(_starter(agents), "bot-1", LoopLimits(), agents, random.Random(0))
    assert d.termination == TURN_CAP and len(d.user_turns) == 10 and len(d.chatbot_turns) == 10


@pytest.mark.parametrize("t", range(1, 10))
def test_end_flag_at_turn(t):
    # END produced while generating user turn index t, so t user turns survive
    _, agents = agents_for(*sim_rules(end=lambda ctx: ctx.turn_index == t))
    d = generate_dialogue(_starter(agents), "bot-1", LoopLimits(), agents)
    assert d.termination == END_FLAG and len(d.user_turns) == t
    assert d.turns[-1].role == "chatbot"


def test_exhaustion_mid_dialogue():
    _, agents = agents_for(*sim_rules(reject=lambda ctx: ctx.turn_index == 3))
    d = generate_dialogue(_starter(agents), "bot-1", LoopLimits(), agents)
    assert d.termination == REGENERATION_EXHAUSTED and len(d.user_turns) == 3


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 10), st.integers(1, 5), st.lists(st.integers(0, 6), min_size=10, max_size=10))
def test_dialogue_invariants(max_turns, next_limit, rejects):
    limits = LoopLimits(10, next_limit, max_turns)
    _, agents = agents_for(*sim_rules(reject=lambda ctx: ctx.turn_index > 0
                                      and ctx.attempt <= rejects[ctx.turn_index]))
    d = generate_dialogue(_starter(agents, limits), "bot-1", limits, agents)
    d.check_attempt_limits(10, next_limit)
    n = len(d.user_turns)
    assert 1 <= n <= max_turns and len(d.chatbot_turns) == n
    if d.termination == TURN_CAP:
        assert n == max_turns
    else:
        assert d.termination == REGENERATION_EXHAUSTED and rejects[n] >= next_limit
    for i, t in enumerate(d.user_turns[1:], 1):
        assert t.attempt_count == rejects[i] + 1 and len(t.judge_feedback_trail) == rejects[i]


def config(**kw):
    base = dict(user_models=("user-a", "user-b"), chatbot_models=("bot-1", "bot-2"),
                judge_model="judge", languages=("EN", "FR"), scenes_per_language=5)
    base.update(kw)
    return CampaignConfig(**base)


def test_campaign_counts_and_budget():
    backend, reg = scripted(*sim_rules())
    cfg = config()
    plan = plan_campaign(cfg, pools())
    res = run_campaign(cfg, pools(), reg)
    assert len(plan.starters) == 20 and res.planned == 40 and len(res.dialogues) == 40
    assert res.first_turn_generations == 20 and res.ok
    actual = Counter(c.context.profile for c in backend.log)
    assert dict(actual) == plan.call_budget(cfg.limits)
    # each starter's first turn is shared by its two chatbots
    firsts = Counter(d.turns[0].text + d.seed.scene_id + d.user_model + d.language
                     for d in res.dialogues)
    assert set(firsts.values()) == {2}


def test_campaign_is_deterministic_across_parallelism(tmp_path):
    outs = []
    for par in (1, 4):
        _, reg = scripted(*sim_rules(reject=lambda ctx: ctx.dialogue_key[-1] in "02468"
                                     and ctx.attempt == 1))
        out = tmp_path / f"d{par}.jsonl"
        run_campaign(config(parallelism=par), pools(), reg, out)
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_resume_skips_completed(tmp_path):
    out, man = tmp_path / "d.jsonl", tmp_path / "d.manifest"
    fail_once = {"armed": True}

    def chat_fail(ctx):
        return fail_once["armed"] and ctx.dialogue_key.endswith(("0", "1", "2", "3"))

    _, reg = scripted(*sim_rules(chat_fail=chat_fail))
    first = run_campaign(config(), pools(), reg, out, man)
    assert not first.ok and len(first.failed) + len(first.dialogues) == 40
    done_before = read_manifest(man)
    assert done_before == {d.dialogue_id for d in first.dialogues}

    fail_once["armed"] = False
    backend, reg = scripted(*sim_rules())
    second = run_campaign(config(), pools(), reg, out, man)
    assert second.ok and len(second.dialogues) == 40
    assert set(second.new_ids) == {d.dialogue_id for d in second.dialogues} - done_before
    assert not set(second.new_ids) & done_before
    assert {c.context.dialogue_key for c in backend.calls("chatbot")} == set(second.new_ids)
    ids = [d.dialogue_id for d in read_jsonl(out, Dialogue)]
    assert ids == [p[2] for p in plan_campaign(config(), pools()).pairs]
    lines = man.read_text().splitlines()
    assert all(json.loads(x)["schema_version"] == 1 for x in lines)


def test_exhausted_first_turn_drops_starter():
    _, reg = scripted(*sim_rules(reject=lambda ctx: ctx.profile == "user_judge"
                                 and ctx.turn_index == 0))
    res = run_campaign(config(), pools(), reg)
    assert res.dialogues == [] and len(res.dropped_starters) == 20 and res.ok


def test_limits_validation():
    with pytest.raises(ValueError):
        LoopLimits(max_user_turns=11)
    with pytest.raises(ValueError):
        LoopLimits(first_turn_attempts=0)
