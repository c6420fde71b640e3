"""Compare a byte-level baseline with a learned BPE vocabulary on a text corpus.

Without arguments the corpus is the Python source of this package, split into
one component per module directory; pass ``--corpus DIR`` to use a directory of
component subdirectories instead.
"""

import argparse
from pathlib import Path

from neoxkit import tokscope
from neoxkit.tokenizer import base_model, train_bpe

ROOT = Path(__file__).resolve().parents[1]


def default_corpus():
    return [
        tokscope.CorpusComponent("package", [p.read_bytes() for p in sorted((ROOT / "src").rglob("*.py"))]),
        tokscope.CorpusComponent("tests", [p.read_bytes() for p in sorted((ROOT / "tests").rglob("*.py"))]),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--corpus", type=Path)
    ap.add_argument("--vocab-size", type=int, default=1000)
    ap.add_argument("--top", type=int, default=5)
    args = ap.parse_args()

    comps = tokscope.load_corpus_dir(args.corpus) if args.corpus else default_corpus()
    docs = [d for c in comps for d in c.documents]
    base = base_model(["<|endoftext|>"])
    learned = train_bpe(docs, args.vocab_size, reserved=["<|endoftext|>"])

    rep = tokscope.ratio_report(comps, base, learned, label_a="bytes", label_b=f"bpe-{args.vocab_size}")
    print(rep.format_table())
    print("\nlongest mostly-letter tokens:", tokscope.format_tokens(tokscope.longest_tokens(learned, 10)))
    print("\nwords the byte baseline splits most relative to BPE:")
    for comp in comps:
        for row in tokscope.worst_case_words(comp, base, learned, min_count=3, top=args.top):
            print(f"  {comp.name}: {row.word.decode(errors='replace')!r} "
                  f"{len(row.tokens_a)} vs {len(row.tokens_b)} tokens")


if __name__ == "__main__":
    main()
