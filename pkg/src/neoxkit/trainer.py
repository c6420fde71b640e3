"""AdamW training loop with linear warmup and cosine decay to a tenth of peak."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import save_checkpoint
from .model import LMModel, forward_loss, loss_and_grads

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    peak_lr: float = 9.7e-5
    total_steps: int = 150_000
    warmup_frac: float = 0.01
    betas: tuple[float, float] = (0.9, 0.95)
    eps: float = 1e-8
    weight_decay: float = 0.01
    grad_clip: float = 1.0
    contexts: int = 1538
    seq_len: int = 2048
    checkpoint_interval: int = 500
    log_interval: int = 2
    eval_interval: int = 1000
    eval_iters: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")
        if not 0.0 <= self.warmup_frac < 1.0:
            raise ValueError("warmup_frac must be in [0, 1)")
        if self.contexts < 1 or self.seq_len < 1:
            raise ValueError("contexts and seq_len must be >= 1")
        if min(self.checkpoint_interval, self.log_interval, self.eval_interval) < 0:
            raise ValueError("intervals must be >= 0 (0 disables)")

    @property
    def min_lr(self) -> float:
        return self.peak_lr / 10

    @property
    def warmup_steps(self) -> int:
        return round(self.warmup_frac * self.total_steps)

    @property
    def batch_tokens(self) -> int:
        return self.contexts * self.seq_len


def lr_at(step: int, cfg: TrainConfig) -> float:
    """Linear warmup from 0, then cosine decay to ``min_lr``; clamps past the end."""
    if step < 0:
        raise ValueError("step must be >= 0")
    warm = cfg.warmup_steps
    if step >= cfg.total_steps:
        return cfg.min_lr
    if step < warm:
        return cfg.peak_lr * (step / warm)
    progress = (step - warm) / (cfg.total_steps - warm)
    return cfg.min_lr + 0.5 * (cfg.peak_lr - cfg.min_lr) * (1.0 + math.cos(math.pi * progress))


@dataclass
class OptState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "OptState":
        return cls(
            {n: np.zeros_like(p) for n, p in params.items()},
            {n: np.zeros_like(p) for n, p in params.items()},
        )


def decays(name: str, param: np.ndarray) -> bool:
    """Weight decay applies to matrices only, not biases or norm gains."""
    return param.ndim >= 2


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))


def adamw_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: OptState,
    lr: float,
    cfg: TrainConfig,
) -> OptState:
    """One in-place AdamW update (global-norm clipping, then decoupled decay)."""
    for name, g in grads.items():
        if name not in params or params[name].shape != g.shape:
            raise ValueError(f"gradient {name} does not match a parameter")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name}")
    norm = global_norm(grads)
    scale = cfg.grad_clip / norm if cfg.grad_clip and norm > cfg.grad_clip else 1.0

    b1, b2 = cfg.betas
    state.step += 1
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, p in params.items():
        g = grads[name] * scale if scale != 1.0 else grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        if cfg.weight_decay and decays(name, p):
            p *= 1.0 - lr * cfg.weight_decay
        p -= lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
    return state


@dataclass
class LossLog:
    records: list[dict] = field(default_factory=list)

    def add(self, **rec) -> None:
        self.records.append(rec)

    @property
    def train_losses(self) -> list[tuple[int, float]]:
        return [(r["step"], r["train_loss"]) for r in self.records if "train_loss" in r]

    def write_jsonl(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for r in self.records:
                fh.write(json.dumps(r) + "\n")


class WindowStream:
    """Endless stream of ``seq_len + 1`` token windows, reshuffled each epoch."""

    def __init__(self, ids: np.ndarray, seq_len: int, seed: int):
        self.ids = np.asarray(ids, dtype=np.int64)
        self.seq_len = seq_len
        self.n_windows = (len(self.ids) - 1) // seq_len
        if self.n_windows < 1:
            raise ValueError("token stream shorter than one context")
        self.seed = seed
        self.epoch = 0
        self.cursor = 0
        self._order = self._perm(0)

    def _perm(self, epoch: int) -> np.ndarray:
        return np.random.default_rng([self.seed, epoch]).permutation(self.n_windows)

    def next_batch(self, contexts: int) -> tuple[np.ndarray, list[int]]:
        rows = []
        boundaries = []
        while len(rows) < contexts:
            if self.cursor == self.n_windows:
                self.epoch += 1
                self.cursor = 0
                self._order = self._perm(self.epoch)
                boundaries.append(self.epoch)
            w = self._order[self.cursor]
            self.cursor += 1
            start = w * self.seq_len
            rows.append(self.ids[start:start + self.seq_len + 1])
        return np.stack(rows), boundaries


def evaluate_loss(model: LMModel, ids: np.ndarray, seq_len: int, iters: int) -> float:
    ids = np.asarray(ids, dtype=np.int64)
    n = min(iters, (len(ids) - 1) // seq_len)
    if n < 1:
        raise ValueError("validation stream shorter than one context")
    losses = [
        forward_loss(model, ids[i * seq_len:(i + 1) * seq_len + 1])[0] for i in range(n)
    ]
    return float(np.mean(losses))


def train(
    model: LMModel,
    corpus_ids,
    cfg: TrainConfig,
    val_ids=None,
    checkpoint_dir: str | Path | None = None,
    steps: int | None = None,
) -> tuple[LMModel, LossLog]:
    """Train ``model`` in place for ``steps`` (default ``cfg.total_steps``)."""
    stream = WindowStream(corpus_ids, cfg.seq_len, cfg.seed)
    if stream.n_windows < cfg.contexts:
        raise ValueError(
            f"corpus holds {stream.n_windows} contexts, one batch needs {cfg.contexts}"
        )
    params = model.parameters()
    state = OptState.zeros_like(params)
    lossl = LossLog()
    n_steps = cfg.total_steps if steps is None else steps
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None

    def due(step, every):  # an interval of 0 disables the action
        return every > 0 and step % every == 0

    for step in range(1, n_steps + 1):
        batch, boundaries = stream.next_batch(cfg.contexts)
        for epoch in boundaries:
            log.info("step %d: starting epoch %d", step, epoch)
            lossl.add(step=step, event="epoch", epoch=epoch)
        lr = lr_at(step - 1, cfg)
        loss, grads = loss_and_grads(model, batch)
        adamw_step(params, grads, state, lr, cfg)

        rec = None
        if step == 1 or due(step, cfg.log_interval) or step == n_steps:
            rec = {"step": step, "lr": lr, "train_loss": loss}
        if val_ids is not None and (due(step, cfg.eval_interval) or step == n_steps):
            rec = rec or {"step": step, "lr": lr, "train_loss": loss}
            rec["val_loss"] = evaluate_loss(model, val_ids, cfg.seq_len, cfg.eval_iters)
        if rec is not None:
            lossl.add(**rec)
        if ckpt_dir is not None and due(step, cfg.checkpoint_interval):
            save_checkpoint(model, ckpt_dir / f"step_{step:07d}.ckpt", {"step": step})
    if ckpt_dir is not None:
        save_checkpoint(model, ckpt_dir / "final.ckpt", {"step": n_steps})
    return model, lossl


def split_stream(ids, weights=(995, 4, 1)) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Contiguous train/valid/test split by relative weights."""
    ids = np.asarray(ids)
    w = np.asarray(weights, dtype=np.float64)
    bounds = np.round(np.cumsum(w) / w.sum() * len(ids)).astype(int)
    return ids[:bounds[0]], ids[bounds[0]:bounds[1]], ids[bounds[1]:]
