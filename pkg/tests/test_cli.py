import json

import numpy as np
import pytest

from neoxkit.checkpoint import load_checkpoint
from neoxkit.cli import main
from neoxkit.synthetic import markov_stream
from neoxkit.tokenizer import save_model


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, [json.loads(l) for l in out.splitlines()], err


def test_params(capsys):
    code, recs, err = run(capsys, "params")
    assert code == 0
    assert recs == [{"total": 20_552_417_280, "non_embedding": 19_934_859_264}]
    assert "20.55B" in err


def test_params_with_flag(capsys):
    code, recs, _ = run(capsys, "params", "--num-layers", "1", "--hidden-size", "8",
                        "--num-attention-heads", "2", "--vocab-size", "10", "--rotary-pct", "0.5")
    assert code == 0 and recs[0]["total"] > 0


def test_plan(capsys):
    code, recs, err = run(capsys, "plan", "--nodes", "12", "--gpus", "8", "--tp", "2", "--pp", "4")
    assert code == 0
    assert recs[0]["dp"] == 12 and recs[0]["intra_node"] is True
    assert recs[0]["allreduce"] == {"serial": [88, 88], "parallel": [44, 44]}


def test_carbon(capsys):
    code, recs, err = run(capsys, "carbon")
    assert code == 0
    assert abs(recs[0]["intensity"] - 0.47905) < 5e-5
    assert [round(e["t_co2"], 2) for e in recs[0]["emissions"]] == [21.04, 31.73]


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["plan", "--nodes", "x", "--gpus", "8"], ["plan"]])
def test_usage_errors(capsys, argv):
    code, recs, err = run(capsys, *argv)
    assert code == 1 and recs == [] and "usage" in err


def test_validation_error(capsys):
    code, _, err = run(capsys, "plan", "--nodes", "12", "--gpus", "8", "--tp", "9")
    assert code == 2 and "remainder" in err


def test_bad_config_value(capsys, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("seed 1\nhidden-size wide\n")
    code, _, err = run(capsys, "params", "--config", str(cfg))
    assert code == 2 and "line 2" in err


def test_missing_file_is_runtime_error(capsys, tmp_path):
    code, _, err = run(capsys, "encode", "--tokenizer", str(tmp_path / "none.tok"), "--text", "x")
    assert code == 3


def test_tokenizer_round_trip(capsys, tmp_path, corpus):
    for i, doc in enumerate(corpus):
        (tmp_path / f"doc{i}.txt").write_text(doc)
    out = tmp_path / "bpe.tok"
    code, recs, _ = run(capsys, "tok-train", "--corpus", *[str(p) for p in sorted(tmp_path.glob("*.txt"))],
                        "--vocab-size", "320", "--reserved", "<|endoftext|>", "--out", str(out))
    assert code == 0 and recs[0]["vocab_size"] == 320
    text = "def fibRec(n):\n        return n"
    _, recs, _ = run(capsys, "encode", "--tokenizer", str(out), "--text", text)
    ids = recs[0]["ids"]
    _, recs, _ = run(capsys, "decode", "--tokenizer", str(out), *map(str, ids))
    assert recs[0]["text"] == text


def test_train_then_eval(capsys, tmp_path, tok):
    tok_path = tmp_path / "t.tok"
    save_model(tok, tok_path)
    V = len(tok.vocab)
    ids = markov_stream(3000, V, seed=2)
    np.save(tmp_path / "ids.npy", ids)
    out = tmp_path / "run"
    code, recs, err = run(
        capsys, "train", "--corpus", str(tmp_path / "ids.npy"), "--tokenizer", str(tok_path),
        "--out", str(out), "--num-layers", "1", "--hidden-size", "16", "--num-attention-heads", "2",
        "--rotary-pct", "0.5", "--max-position-embeddings", "16", "--seq-length", "16",
        "--batch-contexts", "2", "--train-iters", "6", "--lr-decay-iters", "6", "--min-lr", "1e-5",
        "--optimizer.params.lr", "1e-4", "--save-interval", "3", "--log-interval", "3", "--seed", "4",
    )
    assert code == 0, err
    assert [r["step"] for r in recs if "train_loss" in r] == [1, 3, 6]
    assert (out / "loss.jsonl").exists() and (out / "step_0000003.ckpt").exists()
    model, _ = load_checkpoint(out / "final.ckpt")
    assert model.config.vocab_size == V and model.config.seed == 4

    task = tmp_path / "arith.jsonl"
    task.write_text("\n".join(json.dumps(r) for r in [
        {"context": "1 plus 1 is", "choices": [" two", " three"], "gold": 0, "fewshot": True},
        {"context": "2 plus 2 is", "choices": [" four", " five"], "gold": 0},
        {"context": "3 plus 3 is", "choices": [" seven", " six"], "gold": 1},
    ]) + "\n")
    code, recs, err = run(capsys, "eval", "--task", str(task), "--shots", "1",
                          "--model", str(out / "final.ckpt"), "--tokenizer", str(tok_path))
    assert code == 0, err
    assert recs[0]["task"] == "arith" and recs[0]["n"] == 2 and recs[0]["k"] == 1
    assert recs[0]["acc"] in (0.0, 0.5, 1.0)
    assert "acc ± stderr" in err


def test_eval_vocab_mismatch(capsys, tmp_path, tok, tiny_model):
    from neoxkit.checkpoint import save_checkpoint
    save_checkpoint(tiny_model, tmp_path / "m.ckpt")
    save_model(tok, tmp_path / "t.tok")
    task = tmp_path / "t.jsonl"
    task.write_text('{"context": "x", "answer": "y"}\n')
    code, _, err = run(capsys, "eval", "--task", str(task), "--model", str(tmp_path / "m.ckpt"),
                       "--tokenizer", str(tmp_path / "t.tok"))
    assert code == 2 and "expects 23" in err
