"""Comparative tokenizer analytics: token counts, ratio tables, longest tokens,
and worst-case word tokenizations between two vocabularies."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .tokenizer import WHITESPACE, TokenizerModel

ASCII_PUNCTUATION = b"!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~"
ASCII_LETTERS = frozenset(b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ")
_WORD_SEPARATORS = frozenset(ASCII_PUNCTUATION) | WHITESPACE


@dataclass
class CorpusComponent:
    name: str
    documents: list[bytes] = field(default_factory=list)


@dataclass(frozen=True)
class CountRow:
    component: str
    count_a: int
    count_b: int

    @property
    def ratio(self) -> float:
        if self.count_a == 0:
            return float("nan") if self.count_b == 0 else float("inf")
        return self.count_b / self.count_a


@dataclass
class CountReport:
    rows: list[CountRow]
    label_a: str = "A"
    label_b: str = "B"

    @property
    def totals(self) -> CountRow:
        return CountRow(
            "Total",
            sum(r.count_a for r in self.rows),
            sum(r.count_b for r in self.rows),
        )

    def format_table(self) -> str:
        rows = [*self.rows, self.totals]
        name_w = max([len(r.component) for r in rows] + [9])
        head = f"{'component':<{name_w}}  {self.label_a:>15}  {self.label_b:>15}  {'ratio':>8}"
        lines = [head, "-" * len(head)]
        for i, r in enumerate(rows):
            if i == len(rows) - 1:
                lines.append("-" * len(head))
            lines.append(
                f"{r.component:<{name_w}}  {r.count_a:>15,}  {r.count_b:>15,}  {format_ratio(r.ratio):>8}"
            )
        return "\n".join(lines)

    def records(self) -> list[dict]:
        out = []
        for r in [*self.rows, self.totals]:
            out.append(
                {
                    "component": r.component,
                    "count_a": r.count_a,
                    "count_b": r.count_b,
                    "ratio": round(r.ratio, 5),
                }
            )
        return out


def format_ratio(ratio: float) -> str:
    return f"{ratio:.5f}"


def is_whitespace_token(tok: bytes) -> bool:
    return len(tok) > 0 and all(b in WHITESPACE for b in tok)


def count_tokens(
    component: CorpusComponent, model: TokenizerModel, exclude_whitespace: bool = False
) -> int:
    total = 0
    for doc in component.documents:
        ids = model.encode(doc)
        if exclude_whitespace:
            total += sum(1 for t in ids if not is_whitespace_token(model.vocab[t]))
        else:
            total += len(ids)
    return total


def ratio_report(
    corpus: Sequence[CorpusComponent],
    model_a: TokenizerModel,
    model_b: TokenizerModel,
    exclude_whitespace: bool = False,
    label_a: str = "A",
    label_b: str = "B",
) -> CountReport:
    names = [c.name for c in corpus]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate component names in {names}")
    rows = [
        CountRow(
            c.name,
            count_tokens(c, model_a, exclude_whitespace),
            count_tokens(c, model_b, exclude_whitespace),
        )
        for c in corpus
    ]
    return CountReport(rows, label_a, label_b)


def letter_fraction(tok: bytes) -> float:
    if not tok:
        return 0.0
    return sum(1 for b in tok if b in ASCII_LETTERS) / len(tok)


def longest_tokens(model: TokenizerModel, k: int, min_letter_fraction: float = 0.5) -> list[bytes]:
    """Top-``k`` tokens by byte length among those that are mostly letters."""
    if k < 1:
        raise ValueError("k must be >= 1")
    special = set(model.special_ids)
    keep = [
        (i, tok)
        for i, tok in enumerate(model.vocab)
        if i not in special and letter_fraction(tok) >= min_letter_fraction
    ]
    keep.sort(key=lambda it: (-len(it[1]), it[0]))
    return [tok for _, tok in keep[:k]]


def extract_words(doc: bytes) -> list[bytes]:
    words = []
    cur = bytearray()
    for b in doc:
        if b in _WORD_SEPARATORS:
            if cur:
                words.append(bytes(cur))
                cur.clear()
        else:
            cur.append(b)
    if cur:
        words.append(bytes(cur))
    return words


def word_frequencies(documents: Iterable[bytes]) -> Counter:
    freq: Counter = Counter()
    for doc in documents:
        freq.update(extract_words(doc))
    return freq


@dataclass(frozen=True)
class WordTokenization:
    word: bytes
    tokens_a: tuple[bytes, ...]
    tokens_b: tuple[bytes, ...]

    @property
    def discrepancy(self) -> int:
        return len(self.tokens_a) - len(self.tokens_b)


def _word_tokens(model: TokenizerModel, word: bytes) -> tuple[bytes, ...]:
    return tuple(model.vocab[t] for t in model.encode_symbols(b" " + word))


def worst_case_words(
    component: CorpusComponent,
    model_a: TokenizerModel,
    model_b: TokenizerModel,
    min_count: int = 10,
    top: int = 10,
) -> list[WordTokenization]:
    """Words (space-prefixed) that ``model_a`` splits into the most extra pieces.

    Ranking is by ``len(tokens_a) - len(tokens_b)`` descending, ties by word.
    Swap the models for the symmetric report.
    """
    freq = word_frequencies(component.documents)
    rows = [
        WordTokenization(w, _word_tokens(model_a, w), _word_tokens(model_b, w))
        for w, c in freq.items()
        if c >= min_count
    ]
    rows.sort(key=lambda r: (-r.discrepancy, r.word))
    return rows[:top]


def format_tokens(tokens: Iterable[bytes]) -> str:
    return " ".join(t.decode("utf-8", errors="replace").replace(" ", "Ġ") for t in tokens)


def load_component_dir(path: str | Path) -> CorpusComponent:
    """One component: every ``*.jsonl`` record's ``text`` and every other file whole."""
    path = Path(path)
    docs: list[bytes] = []
    for f in sorted(p for p in path.rglob("*") if p.is_file()):
        if f.suffix == ".jsonl":
            with f.open(encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        docs.append(json.loads(line)["text"].encode("utf-8"))
        else:
            docs.append(f.read_bytes())
    return CorpusComponent(path.name, docs)


def load_corpus_dir(path: str | Path) -> list[CorpusComponent]:
    root = Path(path)
    subdirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not subdirs:
        raise ValueError(f"{root} has no component subdirectories")
    return [load_component_dir(p) for p in subdirs]
