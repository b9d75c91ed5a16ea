import json
import random

import pytest

import oracles
from factories import annotation, assessment, candidate_pool, dialogue, random_flags, scripted
from medal.agents import ScriptRule
from medal.autolabel import render_assessment_json
from medal.core import ISSUES, MissingPrediction
from medal.curation import CurationTarget, curate, ingest_annotations
from medal.metaeval import (
    TIE,
    WIN_A,
    WIN_B,
    JudgeConfig,
    Predictions,
    build_report,
    corpus_stats,
    dumps_report,
    f1_suite,
    human_reference,
    pairwise_preference_trial,
    parse_preference,
    run_judge_harness,
    translate_dialogue,
)
from medal.metaeval.harness import PreferenceProtocolError, strong_judge


def test_f1_suite_averages_defined_values_over_sets():
    rng = random.Random(0)
    ids = [f"d{i}" for i in range(30)]
    preds = {d: assessment(d, random_flags(rng, 0.3)) for d in ids}
    sets = [{d: annotation(d, f"a{k}", random_flags(rng, 0.3)) for d in ids} for k in range(2)]
    rep = f1_suite(preds, sets)
    for j, issue in enumerate(ISSUES):
        per = [oracles.f1([preds[d].flags[j] for d in ids], [s[d].flags[j] for d in ids])
               for s in sets]
        defined = [v for v in per if v is not None]
        expect = sum(defined) / len(defined) if defined else None
        got = rep.issues[issue.value]["f1_plus"]
        assert (got is None and expect is None) or got == pytest.approx(expect, abs=1e-12)


def test_missing_predictions_listed_and_skipped():
    ids = ["a", "b", "c"]
    preds = {d: assessment(d) for d in ids[:2]}
    gold = [{d: annotation(d, "x", (1,) + (0,) * 7) for d in ids}]
    rep = f1_suite(preds, gold)
    assert rep.missing == ["c"]
    assert rep.per_set[0]["uninterpretable"]["n"] == 2


def test_human_reference_scores_second_against_first():
    a = {"d1": annotation("d1", "a", (1,) + (0,) * 7), "d2": annotation("d2", "a")}
    b = {"d1": annotation("d1", "b", (1,) + (0,) * 7), "d2": annotation("d2", "b", (1,) + (0,) * 7)}
    ref = human_reference([a, b])
    m = ref.per_set[0]["uninterpretable"]
    # b predicts 2 positives, a (gold) has 1
    assert m["predicted_positive_count"] == 2 and m["gold_positive_count"] == 1
    assert m["precision_plus"] == 0.5 and m["recall_plus"] == 1.0
    assert human_reference([a]) is None


def test_preference_parsing():
    assert parse_preference("1") == 1 and parse_preference("Dialogue 2.") == 2
    assert parse_preference("(2) because") == 2
    with pytest.raises(PreferenceProtocolError):
        parse_preference("the first one")


class TestPairwise:
    def pair(self):
        a = dialogue("A", texts=["hello", "better reply", "more", "ok"])
        b = dialogue("B", texts=["hello", "worse reply", "more", "ok"])
        return a, b

    def judge(self, respond):
        backend, reg = scripted(ScriptRule(respond=respond))
        return backend, strong_judge(reg, "j")

    def test_consistent_preference_wins(self):
        def prefer_better(req, ctx):
            body = req.messages[-1].content
            return "1" if body.index("better") < body.index("worse") else "2"
        backend, judge = self.judge(prefer_better)
        out = pairwise_preference_trial(*self.pair(), "criterion", judge)
        assert out.result == WIN_A and out.choices == (1, 2)
        first, second = (c.request.messages[-1].content for c in backend.calls())
        assert first.index("better") < first.index("worse")
        assert second.index("worse") < second.index("better")

    def test_position_bias_is_a_tie(self):
        _, judge = self.judge(lambda r, c: "1")
        assert pairwise_preference_trial(*self.pair(), "c", judge).result == TIE

    def test_reversed(self):
        a, b = self.pair()
        def prefer_better(req, ctx):
            body = req.messages[-1].content
            return "1" if body.index("better") < body.index("worse") else "2"
        _, judge = self.judge(prefer_better)
        assert pairwise_preference_trial(b, a, "c", judge).result == WIN_B

    def test_protocol_error(self):
        _, judge = self.judge(lambda r, c: "hmm")
        out = pairwise_preference_trial(*self.pair(), "c", judge)
        assert out.result == TIE and out.protocol_error

    def test_requires_shared_seed(self):
        _, judge = self.judge(lambda r, c: "1")
        with pytest.raises(ValueError):
            pairwise_preference_trial(dialogue("A"), dialogue("B", scene_id="other"), "c", judge)


def test_translate_dialogue():
    _, reg = scripted(ScriptRule(respond=lambda r, c: "T:" + r.messages[-1].content))
    d = dialogue("x", n_user=2)
    t = translate_dialogue(d, "DE", strong_judge(reg, "j"))
    assert t.language == "DE" and t.dialogue_id != d.dialogue_id
    assert [x.text for x in t.turns] == ["T:" + x.text for x in d.turns]
    assert "German" in reg.default.calls()[0].request.messages[0].content


def test_judge_harness_and_predictions_io(tmp_path):
    good = render_assessment_json(assessment("x"))
    backend, reg = scripted(ScriptRule(pattern="user: keep", responses=[good], repeat_last=True),
                            ScriptRule(responses=["nope"], repeat_last=True))
    ds = [dialogue("a", texts=["keep", "r", "u", "r"]), dialogue("b", texts=["drop", "r", "u", "r"])]
    cfg = JudgeConfig("r", "judge-r", profile="meta_eval_reasoning", relabel_attempts=1)
    preds = run_judge_harness(cfg, ds, reg)
    assert set(preds.assessments) == {"a"} and [m.dialogue_id for m in preds.missing] == ["b"]
    wire = backend.calls()[0].request.wire()
    assert wire["max_tokens"] == 32768 and wire["reasoning"] == {"max_tokens": 32768}
    preds.save(tmp_path / "p.jsonl", ["b", "a"])
    back = Predictions.load(tmp_path / "p.jsonl")
    assert back.judge_model == "judge-r" and set(back.assessments) == {"a"}
    assert back.missing == [MissingPrediction("b", "judge-r", preds.missing[0].reason)]
    with pytest.raises(ValueError):
        JudgeConfig("x", "m", profile="chatbot")


def test_corpus_stats_by_hand():
    en = dialogue("e", n_user=2, texts=["a b", "a b c", "d", "e f"])
    zh = dialogue("z", language="ZH", n_user=1, texts=["你好。", "好"])
    stats = corpus_stats([en, zh]).languages
    assert stats["EN"].mean_turns == 2 and stats["EN"].mean_utterance_length == 2.0
    assert stats["ZH"].length_unit == "characters" and stats["ZH"].mean_utterance_length == 1.5
    assert stats["EN"].mtld == oracles.mtld(["a", "b", "a", "b", "c", "d", "e", "f"])


def test_build_report_is_complete_and_finite():
    pool = {lang: candidate_pool(lang) for lang in ("EN", "FR")}
    bench = curate(pool, CurationTarget(per_language_size=20), seed=0)
    rng = random.Random(5)
    recs = []
    for e in bench.entries:
        for k in range(2 if e.language == "EN" else 1):
            recs.append(annotation(e.dialogue_id, f"{e.language}{k}", random_flags(rng),
                                   rng.randint(1, 5), rng.randint(1, 5)))
    store = ingest_annotations(recs, bench)
    preds = {name: Predictions(name, {e.dialogue_id: assessment(e.dialogue_id, random_flags(rng),
                                                                 rng.randint(1, 5), name)
                                      for e in bench.entries})
             for name in ("j1", "j2")}
    rep = build_report(preds, store, bench)
    assert set(rep) == {"schema_version", "languages", "benchmark", "judges", "human_reference",
                        "agreement", "significance"}
    assert set(rep["judges"]["j1"]["classification"]) == {"EN", "FR", "combined"}
    assert rep["agreement"]["FR"] == {"available": False, "annotators": 1}
    assert rep["agreement"]["EN"]["dimensions"]["overall"]["adjacent"] is not None
    assert rep["human_reference"]["FR"] is None and rep["human_reference"]["EN"]
    assert len(rep["significance"]["j1 vs j2"]["unsafe"]) == 2
    json.loads(dumps_report(rep))
