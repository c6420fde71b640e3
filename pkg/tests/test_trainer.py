import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neoxkit.checkpoint import load_checkpoint
from neoxkit.model import ModelConfig, init_params
from neoxkit.synthetic import entropy_rate, markov_stream
from neoxkit.trainer import (
    OptState,
    TrainConfig,
    WindowStream,
    adamw_step,
    global_norm,
    lr_at,
    split_stream,
    train,
)

FULL = TrainConfig()


class TestSchedule:
    def test_published_endpoints(self):
        assert FULL.warmup_steps == 1500
        assert lr_at(FULL.warmup_steps, FULL) == 9.7e-5
        assert lr_at(FULL.total_steps, FULL) == 9.7e-6
        assert FULL.min_lr == 9.7e-6

    def test_warmup_is_linear_from_zero(self):
        assert lr_at(0, FULL) == 0.0
        assert lr_at(750, FULL) == pytest.approx(9.7e-5 / 2, rel=1e-15)

    def test_midpoint(self):
        cfg = TrainConfig(peak_lr=1.0, total_steps=110, warmup_frac=10 / 110)
        assert cfg.warmup_steps == 10
        assert lr_at(60, cfg) == pytest.approx(0.1 + 0.5 * 0.9, abs=1e-15)

    def test_clamps_past_end(self):
        assert lr_at(FULL.total_steps + 10, FULL) == FULL.min_lr

    def test_monotone_after_warmup(self):
        lrs = [lr_at(s, FULL) for s in range(FULL.warmup_steps, FULL.total_steps + 1, 97)]
        assert all(a >= b for a, b in zip(lrs, lrs[1:]))

    def test_continuous_at_junction(self):
        w = FULL.warmup_steps
        assert abs(lr_at(w - 1, FULL) - lr_at(w, FULL)) <= FULL.peak_lr / w + 1e-18

    def test_negative_step(self):
        with pytest.raises(ValueError):
            lr_at(-1, FULL)

    def test_batch_tokens(self):
        assert FULL.batch_tokens == 3_149_824


class TestAdamW:
    def test_zero_gradient_zero_decay_is_noop(self):
        p = {"w": np.array([[1.0, -2.0]])}
        adamw_step(p, {"w": np.zeros((1, 2))}, OptState.zeros_like(p), 1e-3,
                   TrainConfig(weight_decay=0.0))
        assert np.array_equal(p["w"], [[1.0, -2.0]])

    def test_first_step_closed_form(self):
        cfg = TrainConfig(weight_decay=0.0, grad_clip=0.0)
        p = {"w": np.array([0.5])}
        adamw_step(p, {"w": np.array([1.0])}, OptState.zeros_like(p), 1e-3, cfg)
        # m_hat = g, v_hat = g^2 after bias correction
        assert p["w"][0] == pytest.approx(0.5 - 1e-3 * 1.0 / (1.0 + 1e-8), abs=1e-12)

    def test_decoupled_decay_exact(self):
        p = {"w": np.full((2, 2), 3.0), "b": np.full(2, 3.0)}
        adamw_step(p, {"w": np.zeros((2, 2)), "b": np.zeros(2)}, OptState.zeros_like(p), 1e-3,
                   TrainConfig(weight_decay=0.01))
        assert np.all(p["w"] == 3.0 * (1 - 1e-5))
        assert np.all(p["b"] == 3.0)  # vectors are not decayed

    def test_clipping_applies_before_moments(self):
        cfg = TrainConfig(weight_decay=0.0, grad_clip=1.0)
        p = {"w": np.zeros(2)}
        state = OptState.zeros_like(p)
        adamw_step(p, {"w": np.array([30.0, 40.0])}, state, 1e-3, cfg)
        assert np.allclose(state.m["w"], 0.1 * np.array([0.6, 0.8]))

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_no_decay_matches_reference_adam(self, seed):
        rng = np.random.default_rng(seed)
        cfg = TrainConfig(weight_decay=0.0, grad_clip=0.0)
        p = {"w": rng.normal(size=5)}
        ref = p["w"].copy()
        m = np.zeros(5)
        v = np.zeros(5)
        state = OptState.zeros_like(p)
        for t in range(1, 6):
            g = rng.normal(size=5)
            adamw_step(p, {"w": g.copy()}, state, 1e-2, cfg)
            m = 0.9 * m + 0.1 * g
            v = 0.95 * v + 0.05 * g * g
            ref = ref - 1e-2 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.95 ** t)) + 1e-8)
        assert np.allclose(p["w"], ref, atol=1e-13, rtol=0)

    def test_non_finite_gradient_named(self):
        p = {"a": np.zeros(2), "blocks.0.q_weight": np.zeros((2, 2))}
        g = {"a": np.zeros(2), "blocks.0.q_weight": np.array([[0.0, np.inf], [0.0, 0.0]])}
        with pytest.raises(FloatingPointError, match="blocks.0.q_weight"):
            adamw_step(p, g, OptState.zeros_like(p), 1e-3, FULL)

    def test_global_norm(self):
        assert global_norm({"a": np.array([3.0]), "b": np.array([[4.0]])}) == 5.0


class TestData:
    def test_windows_cover_each_epoch_once(self):
        ids = np.arange(41)
        ws = WindowStream(ids, 4, seed=0)
        batch, boundaries = ws.next_batch(10)
        starts = sorted(batch[:, 0] // 4)
        assert starts == list(range(10)) and boundaries == []
        assert all(np.array_equal(row, np.arange(row[0], row[0] + 5)) for row in batch)
        _, boundaries = ws.next_batch(1)
        assert boundaries == [1]

    def test_too_short(self):
        with pytest.raises(ValueError):
            WindowStream(np.arange(3), 4, 0)

    def test_split_stream(self):
        a, b, c = split_stream(np.arange(1000))
        assert (len(a), len(b), len(c)) == (995, 4, 1)
        assert np.array_equal(np.concatenate([a, b, c]), np.arange(1000))

    def test_markov_entropy_matches_empirical(self):
        ids = markov_stream(200_000, 16, seed=5)
        pairs = np.zeros((16, 16))
        np.add.at(pairs, (ids[:-1], ids[1:]), 1)
        cond = pairs / pairs.sum(1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            h = -np.nansum(pairs / pairs.sum() * np.where(cond > 0, np.log(cond), 0))
        assert h == pytest.approx(entropy_rate(16, seed=5), abs=0.01)


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    ids = markov_stream(6000, 32, seed=1)
    cfg = ModelConfig(num_layers=1, hidden_size=16, num_heads=2, vocab_size=32, max_positions=16)
    tc = TrainConfig(peak_lr=1e-2, total_steps=20, contexts=4, seq_len=16, checkpoint_interval=5,
                     log_interval=5, eval_interval=10, eval_iters=2)
    out = tmp_path_factory.mktemp("run")
    model, log = train(init_params(cfg), ids[:5000], tc, ids[5000:], out)
    return model, log, out, (ids, cfg, tc)


class TestTrain:
    def test_checkpoints_written(self, small_run):
        _, _, out, _ = small_run
        names = sorted(p.name for p in out.glob("*.ckpt"))
        assert names == ["final.ckpt"] + [f"step_{s:07d}.ckpt" for s in (5, 10, 15, 20)]
        model, meta = load_checkpoint(out / "step_0000010.ckpt")
        assert meta == {"step": 10}

    def test_log_records(self, small_run, tmp_path):
        _, log, _, _ = small_run
        steps = [s for s, _ in log.train_losses]
        assert steps == [1, 5, 10, 15, 20]
        assert [r["step"] for r in log.records if "val_loss" in r] == [10, 20]
        log.write_jsonl(tmp_path / "loss.jsonl")
        lines = (tmp_path / "loss.jsonl").read_text().splitlines()
        assert json.loads(lines[0])["step"] == 1

    def test_loss_decreases(self, small_run):
        _, log, _, _ = small_run
        losses = [l for _, l in log.train_losses]
        assert losses[-1] < losses[0] < math.log(32) + 0.5

    def test_bitwise_reproducible(self, small_run):
        model, log, _, (ids, cfg, tc) = small_run
        again, log2 = train(init_params(cfg), ids[:5000], tc, ids[5000:])
        assert log2.records == log.records
        for name, p in model.parameters().items():
            assert p.tobytes() == again.parameters()[name].tobytes()

    def test_epoch_boundary_logged(self):
        ids = markov_stream(200, 8, seed=0)
        cfg = ModelConfig(num_layers=1, hidden_size=8, num_heads=2, vocab_size=8, max_positions=8, rotary_pct=0.5)
        tc = TrainConfig(peak_lr=1e-3, total_steps=10, contexts=4, seq_len=8)
        _, log = train(init_params(cfg), ids, tc)
        epochs = [r for r in log.records if r.get("event") == "epoch"]
        # 24 windows, 4 per step: epochs begin at steps 7 and 13 -> one within 10 steps
        assert [(r["step"], r["epoch"]) for r in epochs] == [(7, 1)]

    def test_corpus_smaller_than_batch(self):
        cfg = ModelConfig(num_layers=1, hidden_size=8, num_heads=2, vocab_size=8, max_positions=8, rotary_pct=0.5)
        with pytest.raises(ValueError, match="contexts"):
            train(init_params(cfg), np.zeros(20, dtype=int), TrainConfig(contexts=4, seq_len=8))

    def test_zero_intervals_disable(self, tmp_path):
        ids = markov_stream(400, 8, seed=0)
        cfg = ModelConfig(num_layers=1, hidden_size=8, num_heads=2, vocab_size=8, max_positions=8, rotary_pct=0.5)
        tc = TrainConfig(total_steps=4, contexts=2, seq_len=8, checkpoint_interval=0, log_interval=0,
                         eval_interval=0, eval_iters=1)
        _, log = train(init_params(cfg), ids[:300], tc, ids[300:], tmp_path)
        assert [p.name for p in tmp_path.iterdir()] == ["final.ckpt"]
        assert [r["step"] for r in log.records if "train_loss" in r] == [1, 4]
        assert [r["step"] for r in log.records if "val_loss" in r] == [4]
        with pytest.raises(ValueError, match="intervals"):
            TrainConfig(log_interval=-1)
