"""Byte-level BPE tokenizer with consistent space delimitation and space-run tokens.

Vocabulary layout (ids are dense):

    0..255            base bytes (id == byte value)
    256..279          space runs of length 1..24
    280..279+R        reserved/special tokens
    ...               tokens created by learned merges, in merge order

Pretokenization splits input bytes into segments that BPE never merges across:

* maximal runs of spaces (emitted as space-run tokens, chunked to at most 24);
* newlines, one segment each;
* maximal runs of letters/digits (and non-ASCII bytes), optionally preceded by
  exactly one space mid-string;
* maximal runs of ASCII punctuation (tab included), optionally preceded by one
  space mid-string;
* runs of any other byte (control characters, ``\\r`` ...).

A word or punctuation segment at the very start of the input is tokenized as if
it were preceded by a space, so ``"def"`` and ``"x def"`` assign the same ids to
``def``. ``decode`` drops that implicit space again: a leading token whose bytes
start with a space is rendered without it unless it is a space-run token. A text
that genuinely starts with spaces always begins with a space-run token, which is
what keeps ``decode(encode(t)) == t`` for every byte string.
"""

from __future__ import annotations

import heapq
import re
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

MAX_SPACE_RUN = 24
NUM_BASE = 256
SPACE = 0x20
NEWLINE = 0x0A
FORMAT_TAG = "neox-tok v1"

PUNCTUATION = frozenset(b"!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~") | {0x09}
WORD_BYTES = frozenset(
    b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"
) | frozenset(range(0x80, 0x100))
WHITESPACE = frozenset(b" \t\n\r\x0b\x0c")

WORD = "word"
SPACE_RUN = "space-run"
PUNCT = "punctuation"
NEWLINE_KIND = "newline"
OTHER = "other"


def _byte_class(b: int) -> str:
    if b == SPACE:
        return SPACE_RUN
    if b == NEWLINE:
        return NEWLINE_KIND
    if b in WORD_BYTES:
        return WORD
    if b in PUNCTUATION:
        return PUNCT
    return OTHER


@dataclass(frozen=True)
class Segment:
    bytes: bytes
    kind: str
    word_boundary: bool
    at_start: bool = False

    @property
    def symbol_bytes(self) -> bytes:
        """Bytes fed to BPE: start-of-string words get the implicit space."""
        if self.at_start and self.kind in (WORD, PUNCT):
            return b" " + self.bytes
        return self.bytes


def _as_bytes(text: bytes | str) -> bytes:
    if isinstance(text, str):
        return text.encode("utf-8")
    return bytes(text)


def _space_chunks(n: int) -> list[int]:
    chunks = [MAX_SPACE_RUN] * (n // MAX_SPACE_RUN)
    if n % MAX_SPACE_RUN:
        chunks.append(n % MAX_SPACE_RUN)
    return chunks


def pretokenize(text: bytes | str, at_start: bool = True) -> list[Segment]:
    """Split ``text`` into segments whose concatenation is ``text``.

    ``at_start=False`` treats the input as a continuation of earlier text, so no
    implicit leading space is assumed and a single leading space may be absorbed.
    """
    data = _as_bytes(text)
    n = len(data)
    out: list[Segment] = []
    i = 0
    while i < n:
        b = data[i]
        cls = _byte_class(b)
        boundary = (i == 0) or data[i - 1] in WHITESPACE
        start = at_start and i == 0
        if cls == SPACE_RUN:
            j = i
            while j < n and data[j] == SPACE:
                j += 1
            run = j - i
            absorbs = (
                run == 1
                and not (at_start and i == 0)
                and j < n
                and _byte_class(data[j]) in (WORD, PUNCT)
            )
            if absorbs:
                k = j
                target = _byte_class(data[j])
                while k < n and _byte_class(data[k]) == target:
                    k += 1
                out.append(Segment(data[i:k], target, True))
                i = k
                continue
            pos = i
            for c in _space_chunks(run):
                out.append(Segment(data[pos:pos + c], SPACE_RUN, pos == 0 or data[pos - 1] in WHITESPACE))
                pos += c
            i = j
        elif cls == NEWLINE_KIND:
            out.append(Segment(data[i:i + 1], NEWLINE_KIND, boundary, start))
            i += 1
        else:
            j = i
            while j < n and _byte_class(data[j]) == cls:
                j += 1
            out.append(Segment(data[i:j], cls, boundary, start))
            i = j
    return out


@dataclass
class TokenizerModel:
    vocab: list[bytes]
    merges: list[tuple[int, int, int]]
    space_run_ids: dict[int, int]
    special_ids: tuple[int, ...] = ()
    _ranks: dict[tuple[int, int], tuple[int, int]] = field(
        init=False, repr=False, compare=False, default_factory=dict
    )
    _cache: dict[bytes, tuple[int, ...]] = field(
        init=False, repr=False, compare=False, default_factory=dict
    )

    def __post_init__(self) -> None:
        self.validate()
        self._ranks = {(a, b): (r, new) for r, (a, b, new) in enumerate(self.merges)}

    @property
    def id_bounds(self) -> int:
        return len(self.vocab)

    @property
    def space_run_set(self) -> frozenset[int]:
        return frozenset(self.space_run_ids.values())

    def validate(self) -> None:
        missing = [k for k in range(1, MAX_SPACE_RUN + 1) if k not in self.space_run_ids]
        if missing:
            raise ValueError(f"missing space-run tokens for run lengths {missing}")
        ids = [self.space_run_ids[k] for k in range(1, MAX_SPACE_RUN + 1)]
        if len(set(ids)) != MAX_SPACE_RUN:
            raise ValueError("space-run token ids are not distinct")
        for k, tid in self.space_run_ids.items():
            if not 0 <= tid < len(self.vocab) or self.vocab[tid] != b" " * k:
                raise ValueError(f"space-run token for k={k} has wrong bytes")
        for b in range(min(NUM_BASE, len(self.vocab))):
            if self.vocab[b] != bytes([b]):
                raise ValueError(f"base token {b} does not map to its byte")
        if len(self.vocab) < NUM_BASE:
            raise ValueError("vocabulary is missing base byte tokens")
        created = set(range(len(self.vocab))) - {new for _, _, new in self.merges}
        for r, (a, b, new) in enumerate(self.merges):
            for t in (a, b):
                if t not in created:
                    raise ValueError(f"merge {r} references token {t} before it exists")
            if not 0 <= new < len(self.vocab) or self.vocab[new] != self.vocab[a] + self.vocab[b]:
                raise ValueError(f"merge {r} output {new} does not equal its concatenation")
            created.add(new)

    # -- encoding -----------------------------------------------------------

    def encode_symbols(self, data: bytes) -> tuple[int, ...]:
        """BPE over one pretokenized segment (no segmentation applied)."""
        hit = self._cache.get(data)
        if hit is not None:
            return hit
        ids = list(data)
        ranks = self._ranks
        while len(ids) > 1:
            best = None
            for pos in range(len(ids) - 1):
                r = ranks.get((ids[pos], ids[pos + 1]))
                if r is not None and (best is None or r[0] < best[0]):
                    best = (r[0], r[1], pos)
            if best is None:
                break
            _, new, _ = best
            pair = (ids[best[2]], ids[best[2] + 1])
            merged = []
            pos = 0
            while pos < len(ids):
                if pos < len(ids) - 1 and (ids[pos], ids[pos + 1]) == pair:
                    merged.append(new)
                    pos += 2
                else:
                    merged.append(ids[pos])
                    pos += 1
            ids = merged
        result = tuple(ids)
        self._cache[data] = result
        return result

    def encode(self, text: bytes | str, at_start: bool = True) -> list[int]:
        out: list[int] = []
        for seg in pretokenize(text, at_start=at_start):
            if seg.kind == SPACE_RUN:
                out.append(self.space_run_ids[len(seg.bytes)])
            else:
                out.extend(self.encode_symbols(seg.symbol_bytes))
        return out

    def decode(self, ids: Iterable[int], at_start: bool = True) -> bytes:
        ids = list(ids)
        bound = len(self.vocab)
        for t in ids:
            if not 0 <= t < bound:
                raise IndexError(f"token id {t} out of range [0, {bound})")
        data = b"".join(self.vocab[t] for t in ids)
        if (
            at_start
            and ids
            and ids[0] not in self.space_run_set
            and self.vocab[ids[0]][:1] == b" "
        ):
            data = data[1:]
        return data

    def decode_text(self, ids: Iterable[int], at_start: bool = True) -> str:
        return self.decode(ids, at_start=at_start).decode("utf-8", errors="replace")

    def token_bytes(self, ids: Iterable[int]) -> list[bytes]:
        return [self.vocab[t] for t in ids]


def encode(model: TokenizerModel, text: bytes | str) -> list[int]:
    return model.encode(text)


def decode(model: TokenizerModel, ids: Iterable[int]) -> bytes:
    return model.decode(ids)


# -- training ---------------------------------------------------------------


def base_model(reserved: Iterable[bytes | str] = ()) -> TokenizerModel:
    vocab = [bytes([b]) for b in range(NUM_BASE)]
    space_runs = {}
    for k in range(1, MAX_SPACE_RUN + 1):
        space_runs[k] = len(vocab)
        vocab.append(b" " * k)
    special = []
    for tok in reserved:
        special.append(len(vocab))
        vocab.append(_as_bytes(tok))
    return TokenizerModel(vocab, [], space_runs, tuple(special))


def min_vocab_size(n_reserved: int = 0) -> int:
    return NUM_BASE + MAX_SPACE_RUN + n_reserved


def segment_counts(corpus: Iterable[bytes | str]) -> Counter:
    """Frequency of every BPE-able segment (space runs excluded)."""
    counts: Counter = Counter()
    for doc in corpus:
        for seg in pretokenize(doc):
            if seg.kind != SPACE_RUN:
                counts[seg.symbol_bytes] += 1
    return counts


def train_bpe(
    corpus: Iterable[bytes | str],
    target_vocab: int,
    reserved: Iterable[bytes | str] = (),
) -> TokenizerModel:
    """Learn merges until the vocabulary has ``target_vocab`` entries.

    Pairs are counted inside segments only. The most frequent pair wins; ties go
    to the pair whose (left bytes, right bytes) sorts first.
    """
    docs = list(corpus)
    if not docs:
        raise ValueError("cannot train on an empty corpus")
    reserved = [_as_bytes(t) for t in reserved]
    floor = min_vocab_size(len(reserved))
    if target_vocab < floor:
        raise ValueError(f"target_vocab {target_vocab} below minimum {floor}")

    model = base_model(reserved)
    vocab = list(model.vocab)
    merges: list[tuple[int, int, int]] = []
    # merged bytes -> id, so two merge paths to the same string share a token
    learned: dict[bytes, int] = {}

    counts = segment_counts(docs)
    words = [list(w) for w in counts]
    freqs = [counts[w] for w in counts]

    pair_counts: Counter = Counter()
    where: dict[tuple[int, int], set[int]] = {}
    for wi, (w, f) in enumerate(zip(words, freqs)):
        for p in zip(w, w[1:]):
            pair_counts[p] += f
            where.setdefault(p, set()).add(wi)

    heap: list = []

    def push(p: tuple[int, int]) -> None:
        c = pair_counts.get(p, 0)
        if c > 0:
            heapq.heappush(heap, (-c, vocab[p[0]], vocab[p[1]], p))

    for p in pair_counts:
        push(p)

    while len(vocab) < target_vocab:
        best = None
        while heap:
            negc, _, _, p = heapq.heappop(heap)
            if pair_counts.get(p, 0) == -negc:
                best = p
                break
        if best is None:
            warnings.warn(
                f"no mergeable pairs left; stopping at vocab size {len(vocab)} "
                f"(target {target_vocab})",
                stacklevel=2,
            )
            break
        merged_bytes = vocab[best[0]] + vocab[best[1]]
        new = learned.get(merged_bytes)
        if new is None:
            new = len(vocab)
            vocab.append(merged_bytes)
            learned[merged_bytes] = new
        merges.append((best[0], best[1], new))

        touched: set[tuple[int, int]] = set()
        for wi in sorted(where.pop(best, ())):
            w, f = words[wi], freqs[wi]
            for p in zip(w, w[1:]):
                pair_counts[p] -= f
                touched.add(p)
            out = []
            i = 0
            while i < len(w):
                if i < len(w) - 1 and w[i] == best[0] and w[i + 1] == best[1]:
                    out.append(new)
                    i += 2
                else:
                    out.append(w[i])
                    i += 1
            words[wi] = out
            for p in zip(out, out[1:]):
                pair_counts[p] += f
                where.setdefault(p, set()).add(wi)
                touched.add(p)
        pair_counts.pop(best, None)
        for p in touched:
            if pair_counts.get(p, 0) <= 0:
                pair_counts.pop(p, None)
            else:
                push(p)

    return TokenizerModel(vocab, merges, dict(model.space_run_ids), model.special_ids)


# -- persistence ------------------------------------------------------------

_ESCAPE_RE = re.compile(r"\\x([0-9a-fA-F]{2})")


def escape_bytes(data: bytes) -> str:
    parts = []
    for b in data:
        if 0x21 <= b <= 0x7E and b != 0x5C:
            parts.append(chr(b))
        else:
            parts.append(f"\\x{b:02x}")
    return "".join(parts)


def unescape_bytes(text: str) -> bytes:
    out = bytearray()
    i = 0
    while i < len(text):
        if text[i] == "\\":
            m = _ESCAPE_RE.match(text, i)
            if not m:
                raise ValueError(f"bad escape at column {i}")
            out.append(int(m.group(1), 16))
            i = m.end()
        else:
            ch = text[i]
            if not 0x21 <= ord(ch) <= 0x7E:
                raise ValueError(f"unescaped character {ch!r}")
            out.append(ord(ch))
            i += 1
    return bytes(out)


def dumps_model(model: TokenizerModel) -> str:
    lines = [f"{FORMAT_TAG} {len(model.vocab)}"]
    lines += [f"{i}\t{escape_bytes(tok)}" for i, tok in enumerate(model.vocab)]
    lines.append("#MERGES")
    lines += [f"{a} {b} {new}" for a, b, new in model.merges]
    return "\n".join(lines) + "\n"


def save_model(model: TokenizerModel, path: str | Path) -> None:
    Path(path).write_text(dumps_model(model), encoding="utf-8")


class TokenizerFileError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


def loads_model(text: str) -> TokenizerModel:
    lines = text.splitlines()
    if not lines:
        raise TokenizerFileError(1, "empty tokenizer file")
    head = lines[0].rsplit(" ", 1)
    if len(head) != 2 or head[0] != FORMAT_TAG or not head[1].isdigit():
        raise TokenizerFileError(1, f"expected header '{FORMAT_TAG} <vocab_size>'")
    size = int(head[1])
    if len(lines) < size + 2:
        raise TokenizerFileError(len(lines), f"file ends before {size} vocab entries")
    vocab: list[bytes] = []
    for lineno in range(2, size + 2):
        line = lines[lineno - 1]
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0].isdigit():
            raise TokenizerFileError(lineno, "expected '<id>\\t<bytes>'")
        if int(parts[0]) != len(vocab):
            raise TokenizerFileError(lineno, f"expected id {len(vocab)}, got {parts[0]}")
        try:
            vocab.append(unescape_bytes(parts[1]))
        except ValueError as exc:
            raise TokenizerFileError(lineno, str(exc)) from None
    if lines[size + 1] != "#MERGES":
        raise TokenizerFileError(size + 2, "expected '#MERGES' delimiter")
    if len(vocab) < NUM_BASE or any(vocab[b] != bytes([b]) for b in range(NUM_BASE)):
        raise TokenizerFileError(2, "first 256 entries must be the base bytes")

    parsed: list[tuple[int, int, int, int]] = []
    for offset, line in enumerate(lines[size + 2:]):
        lineno = size + 3 + offset
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 3 or not all(p.isdigit() for p in parts):
            raise TokenizerFileError(lineno, "expected '<left_id> <right_id> <new_id>'")
        a, b, new = map(int, parts)
        for t in (a, b, new):
            if t >= size:
                raise TokenizerFileError(lineno, f"merge references unknown token {t}")
        parsed.append((lineno, a, b, new))

    # a merge output is unavailable until the merge that creates it has run
    outputs = {new for _, _, _, new in parsed}
    produced: set[int] = set()
    for lineno, a, b, new in parsed:
        for t in (a, b):
            if t in outputs and t not in produced:
                raise TokenizerFileError(lineno, f"merge references token {t} before it is created")
        if vocab[new] != vocab[a] + vocab[b]:
            raise TokenizerFileError(lineno, f"token {new} is not the concatenation of {a} and {b}")
        produced.add(new)
    merges = [(a, b, new) for _, a, b, new in parsed]

    space_runs: dict[int, int] = {}
    for tid in range(NUM_BASE, size):
        tok = vocab[tid]
        if tok and tok.count(b" ") == len(tok) and len(tok) <= MAX_SPACE_RUN and tid not in produced:
            space_runs.setdefault(len(tok), tid)
    missing = [k for k in range(1, MAX_SPACE_RUN + 1) if k not in space_runs]
    if missing:
        raise TokenizerFileError(2, f"missing space-run tokens for run lengths {missing}")
    run_ids = set(space_runs.values())
    special = tuple(
        t for t in range(NUM_BASE, size) if t not in run_ids and t not in produced
    )
    return TokenizerModel(vocab, merges, space_runs, special)


def load_model(path: str | Path) -> TokenizerModel:
    return loads_model(Path(path).read_text(encoding="utf-8"))
