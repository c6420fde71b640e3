import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from neoxkit.tokenizer import base_model, min_vocab_size, train_bpe
from neoxkit.tokscope import (
    CorpusComponent,
    CountReport,
    CountRow,
    extract_words,
    format_ratio,
    format_tokens,
    is_whitespace_token,
    load_corpus_dir,
    longest_tokens,
    ratio_report,
    word_frequencies,
    worst_case_words,
)


@pytest.fixture(scope="module")
def components(corpus):
    return [
        CorpusComponent("code", [d.encode() for d in corpus[::2]]),
        CorpusComponent("prose", [d.encode() for d in corpus[1::2]]),
    ]


def test_published_total_ratio_formats():
    assert format_ratio(342_887_807 / 383_111_734) == "0.89501"
    row = CountRow("Total", 383_111_734, 342_887_807)
    assert format_ratio(row.ratio) == "0.89501"


def test_identical_models_give_unit_ratio(components, tok):
    rep = ratio_report(components, tok, tok)
    assert all(format_ratio(r.ratio) == "1.00000" for r in [*rep.rows, rep.totals])


def test_counts_match_naive_oracle(components, tok):
    base = base_model(["<|endoftext|>"])
    rep = ratio_report(components, base, tok)
    for comp, row in zip(components, rep.rows):
        assert row.count_a == sum(len(base.encode(d)) for d in comp.documents)
        assert row.count_b == sum(len(tok.encode(d)) for d in comp.documents)
    assert rep.totals.count_b == sum(r.count_b for r in rep.rows)


def test_whitespace_exclusion_matches_oracle(components, tok):
    rep = ratio_report(components, tok, tok, exclude_whitespace=True)
    for comp, row in zip(components, rep.rows):
        expected = sum(
            1 for d in comp.documents for t in tok.encode(d)
            if not tok.vocab[t].strip(b" \t\n\r\x0b\x0c") == b""
        )
        assert row.count_a == expected


def test_trained_tokenizer_compresses(components, tok):
    rep = ratio_report(components, base_model(["<|endoftext|>"]), tok)
    assert rep.totals.ratio < 0.8


def test_table_and_records(components, tok):
    rep = ratio_report(components, tok, tok, label_a="gpt2", label_b="neox")
    table = rep.format_table()
    assert "gpt2" in table and "Total" in table and "1.00000" in table
    recs = rep.records()
    assert recs[-1]["component"] == "Total"
    json.dumps(recs)


def test_thousands_separators():
    rep = CountReport([CountRow("Pile", 383_111_734, 342_887_807)])
    assert "383,111,734" in rep.format_table()


def test_duplicate_component_names_rejected(tok):
    c = CorpusComponent("x", [b"a"])
    with pytest.raises(ValueError, match="duplicate"):
        ratio_report([c, c], tok, tok)


@pytest.mark.parametrize("tok_bytes,expected", [
    (b"  ", True), (b"\n", True), (b" \t", True), (b" a", False), (b"", False),
])
def test_is_whitespace_token(tok_bytes, expected):
    assert is_whitespace_token(tok_bytes) is expected


def test_longest_tokens_oracle():
    corpus = ["Telecommunications Telecommunications ____________ 1234567890 1234567890"] * 3
    m = train_bpe(corpus, min_vocab_size() + 30)
    got = longest_tokens(m, 3)
    ranked = sorted(
        (t for t in m.vocab if sum(bytes([c]).isalpha() for c in t) >= len(t) / 2),
        key=lambda t: (-len(t), m.vocab.index(t)),
    )
    assert got == ranked[:3]
    assert got[0] == b" Telecommunications"
    assert all(b"_" not in t and b"1" not in t for t in got)


def test_longest_excludes_specials():
    m = base_model(["<|endoftext|>"])
    assert b"<|endoftext|>" not in longest_tokens(m, 5, min_letter_fraction=0.0)


@given(st.binary(max_size=80))
def test_extract_words_contain_no_separators(doc):
    for w in extract_words(doc):
        assert w and not any(b in b" \t\n\r.,;:()" for b in w)


def test_word_frequencies():
    freq = word_frequencies([b"the cat, the dog.", b"(the)"])
    assert freq[b"the"] == 3 and freq[b"cat"] == 1


def test_worst_case_words_ranking(tok):
    base = base_model(["<|endoftext|>"])
    comp = CorpusComponent("c", [b"fibRec return the value " * 12])
    rows = worst_case_words(comp, base, tok, min_count=10, top=3)
    assert [r.word for r in rows][0] == b"fibRec"
    diffs = [r.discrepancy for r in rows]
    assert diffs == sorted(diffs, reverse=True)
    for r in rows:
        assert b"".join(r.tokens_a) == b" " + r.word == b"".join(r.tokens_b)


def test_min_count_threshold(tok):
    comp = CorpusComponent("c", [b"rare " + b"often " * 10])
    words = [r.word for r in worst_case_words(comp, tok, tok, min_count=10)]
    assert words == [b"often"]


def test_format_tokens():
    assert format_tokens([b" un", b"st"]) == "Ġun st"


def test_load_corpus_dir(tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    (tmp_path / "a" / "doc.txt").write_text("hello")
    (tmp_path / "b" / "docs.jsonl").write_text('{"text": "x"}\n{"text": "y"}\n')
    comps = load_corpus_dir(tmp_path)
    assert [(c.name, c.documents) for c in comps] == [("a", [b"hello"]), ("b", [b"x", b"y"])]
