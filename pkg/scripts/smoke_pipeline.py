"""Run every stage against the offline synthetic backend.

    python scripts/smoke_pipeline.py --workdir /tmp/medal-smoke [--replay]

The first run records all model traffic to ``transcript.jsonl``; with
``--replay`` the same stages are served from that transcript and the
resulting report is compared byte for byte.
"""

import argparse
import filecmp
import shutil
import sys
from pathlib import Path

from medal.cli import main as medal

ROOT = Path(__file__).resolve().parents[1]
CONFIG = ROOT / "configs" / "smoke" / "medal.toml"


def run(workdir: Path, config: Path = CONFIG, transcript: Path | None = None,
        replay: bool = False, single=("DE", "ES")) -> Path:
    """All stages in order; returns the report path. Raises on any non-zero exit."""
    from medal.core import Dialogue, read_jsonl, write_annotations_tsv
    from medal.curation import BenchmarkSet
    from medal.simulation import synthetic_annotations

    workdir.mkdir(parents=True, exist_ok=True)
    w = lambda name: str(workdir / name)  # noqa: E731
    model = []
    if transcript is not None:
        model = ["--replay" if replay else "--record", str(transcript)]
    c = ["--config", str(config)]

    def step(*argv):
        code = medal(list(argv))
        if code != 0:
            raise RuntimeError(f"medal {argv[0]} exited {code}")

    step("generate", *c, *model, "--out", w("dialogues.jsonl"))
    step("screen", *c, *model, "--in", w("dialogues.jsonl"), "--out", w("screen.jsonl"))
    step("label", *c, *model, "--in", w("dialogues.jsonl"), "--out", w("assessments.jsonl"))
    step("filter", "--dialogues", w("dialogues.jsonl"), "--assessments", w("assessments.jsonl"),
         "--screen", w("screen.jsonl"), "--out", w("clean.jsonl"))
    step("curate", *c, "--pool", w("assessments.jsonl"), "--dialogues", w("clean.jsonl"),
         "--out", w("benchmark.jsonl"))

    bench = BenchmarkSet.load(w("benchmark.jsonl"))
    ids = bench.ids()
    dialogues = [d for d in read_jsonl(w("dialogues.jsonl"), Dialogue) if d.dialogue_id in ids]
    counts = {lang: 1 if lang in single else 2 for lang in bench.languages}
    ann_dir = workdir / "annotations"
    ann_dir.mkdir(exist_ok=True)
    by_ann: dict[str, list] = {}
    for r in synthetic_annotations(dialogues, counts):
        by_ann.setdefault(r.annotator_id, []).append(r)
    for ann, recs in by_ann.items():
        write_annotations_tsv(ann_dir / f"{ann}.tsv", recs)

    step("ingest", "--benchmark", w("benchmark.jsonl"), "--annotations", str(ann_dir),
         "--out", w("annotations.jsonl"))
    preds = []
    for judge in ("small", "large"):
        step("judge", *c, *model, "--benchmark", w("benchmark.jsonl"),
             "--dialogues", w("dialogues.jsonl"), "--judge-config", judge,
             "--out", w(f"predictions_{judge}.jsonl"))
        preds.append(f"{judge}={w(f'predictions_{judge}.jsonl')}")
    step("report", "--benchmark", w("benchmark.jsonl"), "--annotations", w("annotations.jsonl"),
         "--predictions", *preds, "--out", w("report.json"))
    return workdir / "report.json"


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--workdir", default="/tmp/medal-smoke")
    ap.add_argument("--config", default=str(CONFIG))
    args = ap.parse_args()
    base = Path(args.workdir)
    shutil.rmtree(base, ignore_errors=True)
    transcript = base / "transcript.jsonl"
    first = run(base / "live", Path(args.config), transcript)
    second = run(base / "replay", Path(args.config), transcript, replay=True)
    same = filecmp.cmp(first, second, shallow=False)
    print(f"report: {first}\nreplayed report identical: {same}")
    return 0 if same else 1


if __name__ == "__main__":
    sys.exit(main())
