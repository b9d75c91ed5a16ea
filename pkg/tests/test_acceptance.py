"""Acceptance criteria, one test each; the terminal summary lists PASS/FAIL per criterion."""

import importlib.util
import json
import os
import random
import re
import threading
import time
from collections import Counter
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

import oracles
from factories import (
    ROOT,
    annotation,
    candidate_pool,
    dialogue,
    pools,
    scripted,
    seed,
)
from medal.agents import PROFILES, ScriptRule
from medal.autolabel import Judge, screen_dialogues, summarize_screening
from medal.cli import main as medal
from medal.core import (
    END_FLAG,
    ISSUES,
    NO_ISSUE,
    REGENERATION_EXHAUSTED,
    TURN_CAP,
    Dialogue,
    read_jsonl,
    write_jsonl,
)
from medal.curation import CurationTarget, benchmark_stats, curate, ingest_annotations
from medal.metaeval import (
    adjacent_agreement,
    agreement_report,
    binary_metrics,
    exact_agreement,
    krippendorff_alpha,
    mcnemar,
    pearson,
    spearman,
)
from medal.metaeval.stats import INTERVAL, NOMINAL
from medal.orchestrator import (
    ACCEPTED,
    EXHAUSTED,
    Agents,
    CampaignConfig,
    LoopLimits,
    generate_dialogue,
    generate_user_turn,
    plan_campaign,
    run_campaign,
)
from medal.seedgen import Starter
from medal.simulation import ROLE_CONFUSION_LINE, synthetic_annotations

LANGS6 = ("ZH", "EN", "FR", "DE", "PT", "ES")


class Clock:
    def __init__(self, limit):
        self.limit = limit

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0
        if exc[0] is None:
            assert self.elapsed < self.limit, f"took {self.elapsed:.2f}s, limit {self.limit}s"


def sim_rules(reject=lambda ctx: False, end=lambda ctx: False):
    def user(req, ctx):
        if ctx.profile == "user_next" and end(ctx):
            return "END_OF_DIALOGUE"
        return f"user says {ctx.turn_index}.{ctx.attempt}"

    def judge(req, ctx):
        return "No. Too polished." if reject(ctx) else "Yes."

    return (ScriptRule(profile="user_first", respond=user),
            ScriptRule(profile="user_next", respond=user),
            ScriptRule(profile="user_judge", respond=judge),
            ScriptRule(profile="chatbot", respond=lambda r, c: f"bot reply {c.turn_index}"))


def agents_for(rules):
    backend, reg = scripted(*rules)
    return backend, Agents(reg, "user-a", "judge")


def starter_with_first_turn(agents):
    st = Starter(seed(), "user-a")
    return Starter(st.seed, "user-a", generate_user_turn(st.seed, [], LoopLimits(), agents).to_turn())


@pytest.mark.acceptance(1, "campaign counting identity")
def test_ac1_counting_identity():
    with Clock(5):
        cfg = CampaignConfig(("user-a", "user-b"), ("bot-1", "bot-2"), "judge", ("EN", "ZH"), 5)
        backend, reg = scripted(*sim_rules())
        res = run_campaign(cfg, pools(5), reg)
        assert len(plan_campaign(cfg, pools(5)).starters) == 20
        assert res.planned == 40 and len(res.dialogues) == 40
        assert res.first_turn_generations == 20 and len(backend.calls("user_first")) == 20

        # full-scale matrix, planned only
        big = CampaignConfig(("u1", "u2"), tuple(f"b{i}" for i in range(8)), "judge", LANGS6, 400)
        plan = plan_campaign(big, pools(400))
        assert len(plan.starters) == 4800 and plan.planned_dialogues == 38400
        assert len({p[2] for p in plan.pairs}) == 38400

        # linear in every factor
        for s, u, langs, c in [(1, 1, ("EN",), 1), (3, 2, ("EN", "FR", "DE"), 4),
                               (7, 3, ("ZH", "PT"), 2)]:
            cfg = CampaignConfig(tuple(f"u{i}" for i in range(u)), tuple(f"b{i}" for i in range(c)),
                                 "judge", langs, s)
            plan = plan_campaign(cfg, pools(7))
            assert len(plan.starters) == s * u * len(langs)
            assert plan.planned_dialogues == s * u * len(langs) * c


@pytest.mark.acceptance(2, "regeneration limits")
def test_ac2_regeneration_limits():
    limits = LoopLimits()
    with Clock(5):
        for first, limit in ((True, 10), (False, 5)):
            for k in range(12):
                backend, agents = agents_for(sim_rules(reject=lambda ctx, k=k: ctx.attempt <= k))
                history = [] if first else list(dialogue(n_user=2).turns)
                res = generate_user_turn(seed(), history, limits, agents)
                if k < limit:
                    assert res.status == ACCEPTED and res.attempts == k + 1
                else:
                    assert res.status == EXHAUSTED and res.attempts == limit
                assert len(backend.calls("user_judge")) == min(k + 1, limit)
        # rejecting every later turn ends the dialogue as regeneration_exhausted
        _, ok = agents_for(sim_rules())
        _, agents = agents_for(sim_rules(reject=lambda ctx: ctx.turn_index >= 1))
        d = generate_dialogue(starter_with_first_turn(ok), "bot-1", limits, agents)
        assert d.termination == REGENERATION_EXHAUSTED and len(d.user_turns) == 1


@pytest.mark.acceptance(3, "turn cap and end flag")
def test_ac3_turn_cap_and_end():
    with Clock(5):
        _, agents = agents_for(sim_rules())
        d = generate_dialogue(starter_with_first_turn(agents), "bot-1", LoopLimits(), agents)
        assert d.termination == TURN_CAP and len(d.user_turns) == 10
        for t in range(1, 10):
            _, agents = agents_for(sim_rules(end=lambda ctx, t=t: ctx.turn_index == t))
            d = generate_dialogue(starter_with_first_turn(agents), "bot-1", LoopLimits(), agents)
            assert d.termination == END_FLAG and len(d.user_turns) == t


_CJK = re.compile(r"[一-鿿]")


def _screen_reply(req, ctx):
    text = req.messages[-1].content
    user = [ln for ln in text.splitlines() if ln.startswith("user: ")]
    bot = [ln for ln in text.splitlines() if ln.startswith("assistant: ")]
    verdict = {
        "role_confusion": any(ROLE_CONFUSION_LINE in ln for ln in user),
        "user_language_mixing": any(_CJK.search(ln) for ln in user),
        "chatbot_language_mixing": any(_CJK.search(ln) for ln in bot),
    }
    verdict["evidence"] = "quoted" if any(verdict.values()) else ""
    return json.dumps(verdict)


@pytest.mark.acceptance(4, "malformed screening fraction")
def test_ac4_malformed_screening(tmp_path):
    rng = random.Random(4)
    ids = [f"d{i:04d}" for i in range(1000)]
    planted = rng.sample(ids, 64 + 20)
    role, mixing, bot_mixing = set(planted[:47]), set(planted[47:64]), set(planted[64:])
    dialogues = []
    for did in ids:
        texts = ["I just got back from the market.", "Nice, what did you buy?",
                 "Mostly apples.", "Apples are great in autumn."]
        if did in role:
            texts[2] = ROLE_CONFUSION_LINE
        elif did in mixing:
            texts[2] = "Mostly apples, 还有一些梨."
        elif did in bot_mixing:
            texts[3] = "Apples are great, 很好吃."
        dialogues.append(dialogue(did, texts=texts))
    with Clock(10):
        _, reg = scripted(ScriptRule(profile="strong_judge", respond=_screen_reply))
        results = screen_dialogues(dialogues, Judge(reg, "strong"), parallelism=4)
        summary = summarize_screening(results)
        assert summary.excluded == role | mixing and summary.role_confusion == 47
        assert summary.excluded_fraction == 0.064
        clean = [d for d in dialogues if d.dialogue_id not in summary.excluded]
        write_jsonl(tmp_path / "clean.jsonl", clean)
        assert len(read_jsonl(tmp_path / "clean.jsonl", Dialogue)) == 936
        # chatbot-side mixing is kept unless explicitly requested
        assert summarize_screening(results, include_chatbot_mixing=True).excluded_fraction == 0.084


def _six_language_benchmark():
    pool = {lang: candidate_pool(lang, rng_seed=5) for lang in LANGS6}
    return pool, curate(pool, CurationTarget(per_language_size=100), seed=11)


@pytest.mark.acceptance(5, "balanced curation")
def test_ac5_curation(tmp_path):
    with Clock(10):
        pool, bench = _six_language_benchmark()
        for lang, entries in bench.by_language().items():
            assert len(entries) == 100
            kinds = Counter(e.selected_for for e in entries if not e.seeded_no_issue)
            issue_counts = [kinds[i.value] for i in ISSUES]
            assert max(issue_counts) - min(issue_counts) <= 1
            assert sum(kinds.values()) == 92 and kinds[NO_ISSUE] in (10, 11)
            for e in entries:
                if e.seeded_no_issue:
                    assert e.source_assessment.flags == (0,) * 8
                    assert e.source_assessment.overall == 5
            per_bot = Counter(e.chatbot_model for e in entries)
            assert max(per_bot.values()) - min(per_bot.values()) <= 2
        assert not any(a.get("relaxed") for a in bench.audit_log)
        bench.save(tmp_path / "a.jsonl")
        curate(pool, CurationTarget(per_language_size=100), seed=11).save(tmp_path / "b.jsonl")
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def _close(a, b, tol=1e-9):
    if a is None or b is None:
        return a is None and b is None
    return abs(a - b) <= tol


@pytest.mark.acceptance(6, "metric oracles")
def test_ac6_metric_oracles():
    rng = random.Random(6)
    with Clock(30):
        for _ in range(200):
            n = rng.randint(3, 100)
            xs = [rng.randint(1, 5) for _ in range(n)]
            ys = [round(rng.uniform(1, 5), 3) for _ in range(n)]
            assert _close(pearson(xs, ys).value, oracles.pearson(xs, ys))
            assert _close(spearman(xs, ys).value, oracles.spearman(xs, ys))

            pred = [int(rng.random() < 0.3) for _ in range(n)]
            gold = [int(rng.random() < 0.3) for _ in range(n)]
            m = binary_metrics(pred, gold)
            assert _close(m["f1_plus"], oracles.f1(pred, gold, 1))
            assert _close(m["f1_minus"], oracles.f1(pred, gold, 0))

            a = [rng.randint(1, 5) for _ in range(n)]
            b = [min(5, max(1, x + rng.choice((-2, -1, 0, 0, 1, 2)))) for x in a]
            assert _close(exact_agreement(a, b), oracles.exact(a, b))
            assert _close(adjacent_agreement(a, b), oracles.adjacent(a, b))

            units = {}
            for i in range(n):
                units[i] = [x if rng.random() > 0.15 else None for x in (a[i], b[i])]
            cleaned = [[v for v in u if v is not None] for u in units.values()]
            for level, metric in ((NOMINAL, oracles.nominal), (INTERVAL, oracles.interval)):
                assert _close(krippendorff_alpha(units, level), oracles.alpha(cleaned, metric))

        gold = [1] * 10
        r = mcnemar([1] * 10, [0] * 10, gold)
        assert (r.b, r.c) == (10, 0) and abs(r.p - 0.001953125) <= 1e-9
        for k in (1, 4, 9):
            r = mcnemar([1] * k + [0] * k, [0] * k + [1] * k, [1] * (2 * k))
            assert r.b == r.c == k and r.p == 1.0


@pytest.mark.acceptance(7, "annotation cell count")
def test_ac7_annotation_cells():
    _, bench = _six_language_benchmark()
    ids = bench.ids()
    dialogues = [c.dialogue for lang in LANGS6 for c in candidate_pool(lang, rng_seed=5)
                 if c.dialogue_id in ids]
    counts = {lang: 2 if lang in ("ZH", "EN", "FR", "PT") else 1 for lang in LANGS6}
    store = ingest_annotations(synthetic_annotations(dialogues, counts), bench)
    stats = benchmark_stats(bench, store)
    assert stats["unique_dialogues"] == 600 and stats["annotators"] == 10
    assert stats["annotation_records"] == 1000
    assert stats["assessment_cells"] == 9 * 10 * 100 == 9000
    assert stats["assessment_cells"] == sum(len(r.labels) + 1 for r in store.records)
    assert all(v["complete"] for v in store.completeness().values())
    assert {lang: store.agreement_available(lang) for lang in LANGS6} == \
        {lang: counts[lang] == 2 for lang in LANGS6}


@pytest.mark.acceptance(8, "planted inter-annotator agreement")
def test_ac8_planted_agreement():
    rng = random.Random(8)
    n = 100
    ids = [f"d{i:03d}" for i in range(n)]
    flags_a = {d: [int(rng.random() < 0.3) for _ in ISSUES] for d in ids}
    flags_b = {d: list(f) for d, f in flags_a.items()}
    for j in range(len(ISSUES)):
        for d in rng.sample(ids, 11):
            flags_b[d][j] ^= 1

    # overall: 55 equal, 30 off by one, 10 off by two, 5 off by three
    offsets = [0] * 55 + [1] * 30 + [2] * 10 + [3] * 5
    rng.shuffle(offsets)
    over_a, over_b = {}, {}
    for d, off in zip(ids, offsets):
        sign = rng.choice((1, -1))
        base = rng.randint(1, 5 - off) if sign > 0 else rng.randint(1 + off, 5)
        over_a[d], over_b[d] = base, base + sign * off
    hand_exact = sum(1 for o in offsets if o == 0) / n
    hand_adjacent = sum(1 for o in offsets if o <= 1) / n

    set_a = {d: annotation(d, "a", tuple(flags_a[d]), over_a[d]) for d in ids}
    set_b = {d: annotation(d, "b", tuple(flags_b[d]), over_b[d]) for d in ids}
    dims = agreement_report([set_a, set_b])["dimensions"]
    for issue in ISSUES:
        assert dims[issue.value]["exact"] == 0.89
    assert dims["overall"]["exact"] == hand_exact == 0.55
    assert dims["overall"]["adjacent"] == hand_adjacent == 0.85


def _load_smoke():
    spec = importlib.util.spec_from_file_location("smoke_pipeline", ROOT / "scripts" / "smoke_pipeline.py")
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


@pytest.mark.acceptance(9, "end-to-end smoke and replay")
def test_ac9_smoke_and_replay(tmp_path):
    smoke = _load_smoke()
    transcript = tmp_path / "transcript.jsonl"
    with Clock(60):
        live = smoke.run(tmp_path / "live", transcript=transcript)
        replayed = smoke.run(tmp_path / "replay", transcript=transcript, replay=True)
    assert live.read_bytes() == replayed.read_bytes()

    report = json.loads(live.read_text())
    langs = report["languages"]
    assert sorted(langs) == sorted(LANGS6)
    scopes = set(langs) | {"combined"}
    for name in ("small", "large"):
        judge = report["judges"][name]
        assert set(judge["classification"]) == scopes and set(judge["correlation"]) == scopes
        assert judge["missing"] == []
        for scope in scopes:
            assert judge["correlation"][scope]["pearson"]["value"] is not None
            issues = judge["classification"][scope]["issues"]
            assert set(issues) == {i.value for i in ISSUES}
    for lang in langs:
        two = lang not in ("DE", "ES")
        assert report["agreement"][lang]["available"] is two
        assert (report["human_reference"][lang] is not None) is two
    assert report["agreement"]["combined"]["available"]
    assert report["significance"]["large vs small"]
    assert report["benchmark"]


# hosted-mode conformance against a local chat-completions server

class _Capture(BaseHTTPRequestHandler):
    bodies: list = []
    headers_seen: list = []
    lock = threading.Lock()

    def log_message(self, *args):
        pass

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        with self.lock:
            self.bodies.append(body)
            self.headers_seen.append(self.headers.get("Authorization"))
        reply = json.dumps({"choices": [{"message": {"role": "assistant",
                                                     "content": _hosted_reply(body)}}]})
        data = reply.encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)


def _hosted_reply(body):
    model = body["model"]
    system = body["messages"][0]["content"] if body["messages"][0]["role"] == "system" else ""
    if model == "user-judge":
        return "Yes."
    if model == "user-a":
        return "So bored today, any ideas?"
    if model.startswith("bot-"):
        return "How about a walk?"
    if system.startswith("You will read a conversation"):
        return json.dumps({"role_confusion": False, "user_language_mixing": False,
                           "chatbot_language_mixing": False, "evidence": ""})
    out = {i.value: {"label": 0, "comment": ""} for i in ISSUES}
    out["overall_quality_rating"] = {"label": 5, "comment": "smooth"}
    return "```json\n" + json.dumps(out) + "\n```"


def _profile_of(body):
    model = body["model"]
    if model == "user-a":
        return "user_first" if body["temperature"] == 1.5 else "user_next"
    return {"user-judge": "user_judge", "strong-judge": "strong_judge",
            "judge-small": "meta_eval", "judge-large": "meta_eval_reasoning"}.get(model, "chatbot")


@pytest.fixture
def hosted_server():
    if os.environ.get("MEDAL_SKIP_HOSTED"):
        pytest.skip("MEDAL_SKIP_HOSTED is set")
    _Capture.bodies, _Capture.headers_seen = [], []
    server = ThreadingHTTPServer(("127.0.0.1", 0), _Capture)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield server
    server.shutdown()
    server.server_close()


@pytest.mark.acceptance(10, "hosted-mode call plans and wire profiles")
def test_ac10_hosted_conformance(hosted_server, tmp_path, monkeypatch, capsys):
    port = hosted_server.server_address[1]
    smoke = ROOT / "configs" / "smoke"
    cfg = tmp_path / "hosted.toml"
    cfg.write_text(f"""
seed = 3
parallelism = 2

[backends.local]
kind = "hosted"
endpoint = "http://127.0.0.1:{port}/v1"
models = ["*"]

[pools]
scenes = "{smoke / 'scenes.tsv'}"
personas = "{smoke / 'personas.tsv'}"

[campaign]
user_models = ["user-a"]
chatbot_models = ["bot-1", "bot-2"]
judge_model = "user-judge"
languages = ["EN"]
scenes_per_language = 2

[labelling]
strong_judge = "strong-judge"

[curation]
per_language_size = 2

[[judges]]
name = "small"
model = "judge-small"

[[judges]]
name = "large"
model = "judge-large"
profile = "meta_eval_reasoning"
""")
    monkeypatch.setenv("MEDAL_API_TOKEN_LOCAL", "sekret")
    w = lambda name: str(tmp_path / name)  # noqa: E731
    c = ["--config", str(cfg)]

    def run(*argv):
        capsys.readouterr()
        assert medal(list(argv)) == 0
        out = capsys.readouterr().out
        return json.loads(out) if out.lstrip().startswith("{") else out

    def served(start):
        return Counter(_profile_of(b) for b in _Capture.bodies[start:])

    plan = run("generate", *c, "--out", w("d.jsonl"), "--dry-run")
    mark = len(_Capture.bodies)
    assert mark == 0
    run("generate", *c, "--out", w("d.jsonl"), "--manifest", w("m"))
    assert served(0) == Counter(plan["calls_if_all_accepted"])
    assert len(_Capture.bodies) == plan["total_calls"]

    steps = [
        (("screen", *c, "--in", w("d.jsonl"), "--out", w("s.jsonl")), "model_calls"),
        (("label", *c, "--in", w("d.jsonl"), "--out", w("a.jsonl")), "model_calls"),
    ]
    for argv, key in steps:
        expected = run(*argv, "--dry-run")[key]
        mark = len(_Capture.bodies)
        run(*argv)
        assert sum(served(mark).values()) == expected == 4
    run("curate", *c, "--pool", w("a.jsonl"), "--dialogues", w("d.jsonl"), "--out", w("b.jsonl"))
    for judge in ("small", "large"):
        argv = ("judge", *c, "--benchmark", w("b.jsonl"), "--dialogues", w("d.jsonl"),
                "--judge-config", judge, "--out", w(f"p_{judge}.jsonl"))
        expected = run(*argv, "--dry-run")["model_calls"]
        mark = len(_Capture.bodies)
        run(*argv)
        assert sum(served(mark).values()) == expected == 2

    assert set(_Capture.headers_seen) == {"Bearer sekret"}
    seen = set()
    for body in _Capture.bodies:
        name = _profile_of(body)
        seen.add(name)
        want = PROFILES[name].request(body["model"], [("user", "x")]).wire()
        for key in ("model", "messages", "seed"):
            want.pop(key, None)
            body.pop(key, None)
        assert body == want, name
    assert seen == set(PROFILES)
