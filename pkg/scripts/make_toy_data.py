#!/usr/bin/env python3
"""Write the synthetic datasets as CLI-ready files.

Produces JSONL files for each task kind, an MLM corpus, entailment data,
a small dialog sample, and a few loose text lines for `embed`.
"""

import argparse
import json
from pathlib import Path

from hitkit import synth


def dump_jsonl(path, rows):
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")
    print(f"wrote {len(rows):4d} records -> {path}")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="toy_data")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    s = args.seed

    dump_jsonl(out / "classify_train.jsonl",
               [{"text": " ".join(t), "label": str(l)}
                for t, l in synth.classification_records(32, seed=s)])
    dump_jsonl(out / "classify_test.jsonl",
               [{"text": " ".join(t), "label": str(l)}
                for t, l in synth.classification_records(16, seed=s + 1)])

    dump_jsonl(out / "tags_train.jsonl",
               [{"tokens": t, "tags": [synth.TAG_NAMES[i] for i in g]}
                for t, g in synth.labeling_records(24, seed=s + 2)])
    dump_jsonl(out / "tags_test.jsonl",
               [{"tokens": t, "tags": [synth.TAG_NAMES[i] for i in g]}
                for t, g in synth.labeling_records(12, seed=s + 3)])

    dump_jsonl(out / "copy_train.jsonl",
               [{"source": " ".join(q), "target": " ".join(q)}
                for q in synth.copy_sequences(200, seed=s + 4)])
    dump_jsonl(out / "copy_test.jsonl",
               [{"source": " ".join(q), "target": " ".join(q)}
                for q in synth.copy_sequences(50, seed=s + 5)])

    corpus = out / "mlm_corpus.txt"
    lines = [" ".join(t) for t in synth.mlm_corpus(150, seed=s + 6)]
    corpus.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {len(lines):4d} lines   -> {corpus}")

    dump_jsonl(out / "zsl_train.jsonl",
               [{"text": " ".join(t), "label": synth.ZSL_LABELS[l]}
                for t, l in synth.zsl_texts(40, seed=s + 7)])
    dump_jsonl(out / "zsl_held.jsonl",
               [{"text": " ".join(t), "label": synth.ZSL_LABELS[l]}
                for t, l in synth.zsl_texts(25, seed=s + 8)])

    dump_jsonl(out / "dialog.jsonl", [
        {"turns": [{"speaker": "bot", "text": "what food do you want"},
                   {"speaker": "user", "text": "cheap chinese food in the east part"},
                   {"speaker": "bot", "text": "golden wok serves cheap chinese food"}],
         "slots": {"food": "chinese food", "area": "east part"},
         "intent": "inform"},
        {"turns": [{"speaker": "bot", "text": "anything else"},
                   {"speaker": "user", "text": "thanks bye"},
                   {"speaker": "bot", "text": "good bye"}],
         "slots": {}, "intent": "thankyou"},
    ])

    (out / "embed_lines.txt").write_text(
        "hello good day\n\nthanks time\nplay nice word\n", encoding="utf-8")
    print(f"wrote embed sample -> {out / 'embed_lines.txt'}")


if __name__ == "__main__":
    main()
