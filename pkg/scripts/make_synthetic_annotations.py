"""Write one annotation TSV per synthetic annotator for a curated benchmark.

    python scripts/make_synthetic_annotations.py --benchmark bench.jsonl \
        --dialogues dialogues.jsonl --out-dir annotations/ [--single DE,ES]
"""

import argparse
from collections import defaultdict
from pathlib import Path

from medal.core import Dialogue, read_jsonl, write_annotations_tsv
from medal.curation import BenchmarkSet
from medal.simulation import synthetic_annotations


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--benchmark", required=True)
    ap.add_argument("--dialogues", required=True)
    ap.add_argument("--out-dir", required=True)
    ap.add_argument("--single", default="DE,ES", help="languages with only one annotator")
    ap.add_argument("--noise", type=float, default=0.08)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    bench = BenchmarkSet.load(args.benchmark)
    wanted = bench.ids()
    dialogues = [d for d in read_jsonl(args.dialogues, Dialogue) if d.dialogue_id in wanted]
    single = {s.strip() for s in args.single.split(",") if s.strip()}
    counts = {lang: 1 if lang in single else 2 for lang in bench.languages}
    records = synthetic_annotations(dialogues, counts, noise=args.noise, seed=args.seed)

    by_annotator = defaultdict(list)
    for r in records:
        by_annotator[r.annotator_id].append(r)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for ann, recs in sorted(by_annotator.items()):
        write_annotations_tsv(out / f"{ann}.tsv", sorted(recs, key=lambda r: r.dialogue_id))
    print(f"wrote {len(records)} records for {len(by_annotator)} annotators to {out}")


if __name__ == "__main__":
    main()
