import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from neoxkit.evaluation import (
    EXACT_MATCH,
    MULTIPLE_CHOICE,
    EvalResult,
    EvalTask,
    Item,
    NeoxLM,
    accuracy_stderr,
    build_prompt,
    evaluate,
    fewshot_delta,
    format_results,
    generate_greedy,
    load_task,
    predict_choice,
    score_choice,
    score_ids,
)
from neoxkit.model import ModelConfig, init_params
from neoxkit.tokenizer import base_model


class Rigged:
    """Fixed next-token distribution regardless of input."""

    def __init__(self, tokenizer, favourite=None, max_length=64):
        self.tokenizer = tokenizer
        self.max_length = max_length
        self.favourite = favourite
        self.calls = []

    def logprobs(self, ids):
        self.calls.append(list(ids))
        V = len(self.tokenizer.vocab)
        row = np.full(V, -math.log(V))
        if self.favourite is not None:
            row = np.full(V, math.log(0.5 / (V - 1)))
            row[self.favourite] = math.log(0.5)
        return np.tile(row, (len(ids), 1))


@pytest.fixture(scope="module")
def byte_tok():
    return base_model()


class TestScoring:
    def test_uniform_model(self, byte_tok):
        V = len(byte_tok.vocab)
        assert score_ids(Rigged(byte_tok), [1, 2], [3, 4, 5]) == pytest.approx(-3 * math.log(V), abs=1e-12)

    def test_chain_rule_additivity(self, tok):
        model = init_params(ModelConfig(num_layers=1, hidden_size=16, num_heads=2,
                                        vocab_size=len(tok.vocab), rotary_pct=0.5, max_positions=64))
        lm = NeoxLM(model, tok)
        ctx = tok.encode("The quick brown")
        a, b = tok.encode(" fox", at_start=False), tok.encode(" jumps over", at_start=False)
        whole = score_ids(lm, ctx, a + b)
        assert whole == pytest.approx(score_ids(lm, ctx, a) + score_ids(lm, ctx + a, b), abs=1e-10)

    def test_only_context_window_is_fed(self, byte_tok):
        lm = Rigged(byte_tok, max_length=4)
        score_ids(lm, list(range(10)), [20, 21])
        assert lm.calls == [[7, 8, 9, 20]]

    def test_score_choice_encodes_continuation(self, byte_tok):
        lm = Rigged(byte_tok, favourite=ord("a"))
        assert score_choice(lm, "Q:", "a") == pytest.approx(math.log(0.5))
        assert lm.calls[-1] == byte_tok.encode("Q:")

    def test_empty_pieces_rejected(self, byte_tok):
        with pytest.raises(ValueError):
            score_ids(Rigged(byte_tok), [1], [])
        with pytest.raises(ValueError):
            score_ids(Rigged(byte_tok), [], [1])


class TestPrompt:
    pool = [Item("2+2=", answer="4"), Item("3+3=", answer="6")]

    def test_zero_and_k_shot(self):
        item = Item("5+5=", answer="10")
        assert build_prompt(item, self.pool, 0) == "5+5="
        assert build_prompt(item, self.pool, 2) == "2+2=4\n3+3=6\n5+5="
        assert build_prompt(item, self.pool, 1, "Q: {context} A: {answer}") == "Q: 2+2= A: 4\n5+5="

    def test_k_exceeds_pool(self):
        with pytest.raises(ValueError, match="pool"):
            build_prompt(Item("x"), self.pool, 3)


class TestGreedy:
    def test_always_seven(self, byte_tok):
        assert generate_greedy(Rigged(byte_tok, favourite=7), "hi", 5) == "\x07" * 5

    def test_stops_on_newline(self, byte_tok):
        lm = Rigged(byte_tok, favourite=ord("\n"))
        assert generate_greedy(lm, "hi", 5) == ""
        assert len(lm.calls) == 1

    def test_window_is_left_truncated(self, byte_tok):
        lm = Rigged(byte_tok, favourite=ord("z"), max_length=3)
        generate_greedy(lm, "abcdef", 2, stop=None)
        assert lm.calls == [list(b"def"), list(b"efz")]


class TestEvaluate:
    def mc_task(self):
        items = [Item("x", ("a", "b"), 0), Item("y", ("a", "b"), 1), Item("z", ("b", "a"), 1)]
        return EvalTask("rigged", MULTIPLE_CHOICE, items, [Item("w", ("a", "b"), 0)])

    def test_multiple_choice_accuracy(self, byte_tok):
        res = evaluate(Rigged(byte_tok, favourite=ord("a")), self.mc_task(), k=1)
        assert (res.n, res.accuracy) == (3, 2 / 3)
        assert res.stderr == pytest.approx(math.sqrt(2 / 9 / 3))

    def test_normalisation_changes_length_bias(self, byte_tok):
        task = EvalTask("len", MULTIPLE_CHOICE, [Item("q", ("aaaa", "a"), 0)])
        lm = Rigged(byte_tok)
        assert evaluate(lm, task).accuracy == 0.0
        assert evaluate(lm, task, normalize=True).accuracy == 1.0  # tie -> lowest index

    def test_exact_match(self, byte_tok):
        task = EvalTask("em", EXACT_MATCH, [Item("q", answer="aaa"), Item("r", answer="b")])
        res = evaluate(Rigged(byte_tok, favourite=ord("a")), task, max_tokens=3)
        assert res.accuracy == 0.5

    @given(st.lists(st.floats(-50, 0), min_size=1, max_size=6), st.floats(-10, 10))
    def test_argmax_invariant_to_shift(self, scores, c):
        shifted = [s + c for s in scores]
        if len(set(shifted)) == len(set(scores)):
            assert predict_choice(shifted) == predict_choice(scores)

    def test_ties_take_lowest_index(self):
        assert predict_choice([-1.0, -0.5, -0.5]) == 1

    def test_task_validation(self):
        with pytest.raises(ValueError, match="gold"):
            EvalTask("t", MULTIPLE_CHOICE, [Item("x", ("a",), 1)])
        with pytest.raises(ValueError, match="overlaps"):
            EvalTask("t", EXACT_MATCH, [Item("x", answer="1")], [Item("x", answer="1")])


class TestResults:
    def test_stderr_example(self):
        assert round(accuracy_stderr(0.5, 104), 3) == 0.049
        r = EvalResult.from_counts("t", 0, 52, 104)
        assert r.format() == "0.500 ± 0.049"
        lo, hi = r.interval
        assert hi - lo == pytest.approx(4 * r.stderr)

    def test_delta_example(self):
        zero = [EvalResult("a", 0, 10, 0.5, 0.0), EvalResult("b", 0, 10, 0.7, 0.0)]
        five = [EvalResult("a", 5, 10, 0.6, 0.0), EvalResult("b", 5, 10, 0.68, 0.0)]
        d = fewshot_delta(zero, five)
        assert d.mean == pytest.approx(0.04)
        assert d.per_task == pytest.approx({"a": 0.1, "b": -0.02})

    def test_delta_requires_same_tasks(self):
        zero = [EvalResult("a", 0, 1, 0.5, 0.0)]
        five = [EvalResult("b", 5, 1, 0.5, 0.0)]
        with pytest.raises(ValueError, match=r"only in zero-shot \['a'\]"):
            fewshot_delta(zero, five)

    def test_format_results(self):
        text = format_results([EvalResult.from_counts("lambada", 0, 52, 104)])
        assert "0.500 ± 0.049" in text and "[0.402, 0.598]" in text


class TestLoadTask:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "arith.jsonl"
        recs = [
            {"task": "arith", "version": 2, "template": "{context} {answer}"},
            {"context": "1+1=", "answer": "2", "fewshot": True},
            {"context": "2+2=", "answer": "4"},
        ]
        path.write_text("\n".join(json.dumps(r) for r in recs) + "\n")
        task = load_task(path)
        assert (task.name, task.version, task.kind) == ("arith", 2, EXACT_MATCH)
        assert task.items == [Item("2+2=", answer="4")]
        assert build_prompt(task.items[0], task.fewshot_pool, 1, task.template) == "1+1= 2\n2+2="

    @pytest.mark.parametrize("body,match", [
        ('{"context": "x"}', "needs"),
        ('not json', ":1:"),
        ('{"context": "x", "answer": "1"}\n{"context": "y", "choices": ["a"], "gold": 0}', "mixes"),
        ('{"task": "empty"}', "no items"),
    ])
    def test_errors(self, tmp_path, body, match):
        path = tmp_path / "t.jsonl"
        path.write_text(body)
        with pytest.raises(ValueError, match=match):
            load_task(path)
