"""Decoder-only transformer with partial rotary embeddings and parallel
attention + feed-forward residual blocks (untied layer norms), in float64 numpy.

Forward and backward are written out by hand; every parameter gradient is
exact. Weight layout is ``x @ W`` with ``W`` shaped ``(d_in, d_out)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from functools import lru_cache

import numpy as np

LN_EPS = 1e-5
GELU_C = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class ModelConfig:
    num_layers: int
    hidden_size: int
    num_heads: int
    vocab_size: int
    rotary_pct: float = 0.25
    max_positions: int = 2048
    weight_tying: bool = False
    rotary_base: float = 10000.0
    seed: int = 0

    def __post_init__(self):
        if self.num_layers < 0:
            raise ValueError("num_layers must be >= 0")
        if self.num_heads < 1 or self.hidden_size % self.num_heads:
            raise ValueError(
                f"hidden_size {self.hidden_size} not divisible by num_heads {self.num_heads}"
            )
        if not 0.0 < self.rotary_pct <= 1.0:
            raise ValueError(f"rotary_pct must be in (0, 1], got {self.rotary_pct}")
        if self.rotary_dim < 2:
            raise ValueError(
                f"rotary_pct {self.rotary_pct} rotates fewer than 2 of {self.head_dim} head dims"
            )
        if self.max_positions < 1:
            raise ValueError("max_positions must be >= 1")
        if self.vocab_size < 1:
            raise ValueError("vocab_size must be >= 1")
        if self.weight_tying:
            raise ValueError("tied input/output embeddings are not supported")

    @property
    def head_dim(self) -> int:
        return self.hidden_size // self.num_heads

    @property
    def rotary_dim(self) -> int:
        return rotary_dim(self.head_dim, self.rotary_pct)


def rotary_dim(head_dim: int, rotary_pct: float) -> int:
    """Number of rotated dims per head, floored to an even count."""
    n = int(math.floor(rotary_pct * head_dim + 1e-9))
    return n - (n % 2)


# -- rotary -------------------------------------------------------------------


def rotary_thetas(d_rot: int, base: float = 10000.0) -> np.ndarray:
    if d_rot <= 0 or d_rot % 2:
        raise ValueError(f"rotary dimension must be a positive even number, got {d_rot}")
    i = np.arange(d_rot // 2, dtype=np.float64)
    return base ** (-2.0 * i / d_rot)


@dataclass
class RotaryCache:
    d_rot: int
    thetas: np.ndarray
    cos: np.ndarray  # (max_positions, d_rot // 2)
    sin: np.ndarray

    @classmethod
    def build(cls, d_rot: int, max_positions: int, base: float = 10000.0) -> "RotaryCache":
        thetas = rotary_thetas(d_rot, base)
        angles = np.arange(max_positions, dtype=np.float64)[:, None] * thetas[None, :]
        return cls(d_rot, thetas, np.cos(angles), np.sin(angles))

    @property
    def max_positions(self) -> int:
        return self.cos.shape[0]

    def tables(self, positions) -> tuple[np.ndarray, np.ndarray]:
        pos = np.asarray(positions)
        if pos.size and (pos.min() < 0 or pos.max() >= self.max_positions):
            raise IndexError(
                f"position out of range [0, {self.max_positions}): {pos.min()}..{pos.max()}"
            )
        return self.cos[pos], self.sin[pos]


def _rotate(x: np.ndarray, cos: np.ndarray, sin: np.ndarray, d_rot: int) -> np.ndarray:
    """Rotate interleaved pairs (2i, 2i+1) of the first ``d_rot`` dims of ``x``.

    ``cos``/``sin`` broadcast against ``x[..., :d_rot:2]``.
    """
    out = x.copy()
    xe = x[..., 0:d_rot:2]
    xo = x[..., 1:d_rot:2]
    out[..., 0:d_rot:2] = xe * cos - xo * sin
    out[..., 1:d_rot:2] = xe * sin + xo * cos
    return out


def _rotate_back(dy: np.ndarray, cos: np.ndarray, sin: np.ndarray, d_rot: int) -> np.ndarray:
    dx = dy.copy()
    de = dy[..., 0:d_rot:2]
    do = dy[..., 1:d_rot:2]
    dx[..., 0:d_rot:2] = de * cos + do * sin
    dx[..., 1:d_rot:2] = -de * sin + do * cos
    return dx


def apply_rotary(x: np.ndarray, position: int, cache: RotaryCache, rotary_pct: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    d_rot = rotary_dim(x.shape[-1], rotary_pct)
    if d_rot != cache.d_rot:
        raise ValueError(f"cache rotates {cache.d_rot} dims, config implies {d_rot}")
    if position == 0:
        return x.copy()
    cos, sin = cache.tables(position)
    return _rotate(x, cos, sin, d_rot)


def attention_scores(
    q_states: np.ndarray, k_states: np.ndarray, positions, cache: RotaryCache
) -> np.ndarray:
    """Causally masked, scaled single-head scores ``(T, T)``; masked entries are ``-inf``."""
    q = np.asarray(q_states, dtype=np.float64)
    k = np.asarray(k_states, dtype=np.float64)
    positions = np.asarray(positions)
    if q.shape != k.shape or q.ndim != 2 or positions.shape != (q.shape[0],):
        raise ValueError(f"shape mismatch: q {q.shape}, k {k.shape}, positions {positions.shape}")
    if cache.d_rot > q.shape[1]:
        raise ValueError("rotary dimension exceeds head dimension")
    cos, sin = cache.tables(positions)
    qr = _rotate(q, cos, sin, cache.d_rot)
    kr = _rotate(k, cos, sin, cache.d_rot)
    scores = qr @ kr.T / math.sqrt(q.shape[1])
    mask = np.triu(np.ones(scores.shape, dtype=bool), k=1)
    scores[mask] = -np.inf
    return scores


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(x, axis=axis, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(x, axis=axis, keepdims=True)
    z = x - m
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


# -- parameters ---------------------------------------------------------------


@dataclass
class Block:
    ln1_weight: np.ndarray
    ln1_bias: np.ndarray
    ln2_weight: np.ndarray
    ln2_bias: np.ndarray
    q_weight: np.ndarray
    q_bias: np.ndarray
    k_weight: np.ndarray
    k_bias: np.ndarray
    v_weight: np.ndarray
    v_bias: np.ndarray
    o_weight: np.ndarray
    o_bias: np.ndarray
    up_weight: np.ndarray
    up_bias: np.ndarray
    down_weight: np.ndarray
    down_bias: np.ndarray
    num_heads: int = field(default=1, metadata={"param": False})

    def parameters(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.metadata.get("param", True)}


# weights drawn from the output-layer (depth-scaled) init
OUTPUT_LAYER_PARAMS = ("o_weight", "down_weight")
SMALL_INIT_PARAMS = ("q_weight", "k_weight", "v_weight", "up_weight")


@dataclass
class LMModel:
    config: ModelConfig
    embed: np.ndarray  # (vocab, d)
    blocks: list[Block]
    final_ln_weight: np.ndarray
    final_ln_bias: np.ndarray
    unembed: np.ndarray  # (d, vocab), never shares storage with embed
    rotary: RotaryCache

    def parameters(self) -> dict[str, np.ndarray]:
        params = {"embed": self.embed}
        for i, blk in enumerate(self.blocks):
            for name, arr in blk.parameters().items():
                params[f"blocks.{i}.{name}"] = arr
        params["final_ln.weight"] = self.final_ln_weight
        params["final_ln.bias"] = self.final_ln_bias
        params["unembed"] = self.unembed
        return params

    def load_parameters(self, params: dict[str, np.ndarray]) -> None:
        """Copy ``params`` into this model's arrays in place (shapes must match)."""
        own = self.parameters()
        missing = set(own) - set(params)
        if missing:
            raise KeyError(f"missing parameters: {sorted(missing)}")
        for name, arr in own.items():
            src = np.asarray(params[name], dtype=np.float64)
            if src.shape != arr.shape:
                raise ValueError(f"{name}: shape {src.shape} != {arr.shape}")
            arr[...] = src


def output_layer_std(num_layers: int, hidden_size: int) -> float:
    return 2.0 / (num_layers * math.sqrt(hidden_size))


def small_init_std(hidden_size: int) -> float:
    return math.sqrt(2.0 / (hidden_size + 4 * hidden_size))


def init_params(config: ModelConfig, seed: int | None = None) -> LMModel:
    rng = np.random.default_rng(config.seed if seed is None else seed)
    d, V, L = config.hidden_size, config.vocab_size, config.num_layers
    small = small_init_std(d)
    wang = output_layer_std(L, d) if L > 0 else 0.0

    def normal(shape, std):
        return rng.normal(0.0, std, size=shape)

    embed = normal((V, d), small)
    blocks = []
    for _ in range(L):
        blocks.append(
            Block(
                ln1_weight=np.ones(d), ln1_bias=np.zeros(d),
                ln2_weight=np.ones(d), ln2_bias=np.zeros(d),
                q_weight=normal((d, d), small), q_bias=np.zeros(d),
                k_weight=normal((d, d), small), k_bias=np.zeros(d),
                v_weight=normal((d, d), small), v_bias=np.zeros(d),
                o_weight=normal((d, d), wang), o_bias=np.zeros(d),
                up_weight=normal((d, 4 * d), small), up_bias=np.zeros(4 * d),
                down_weight=normal((4 * d, d), wang), down_bias=np.zeros(d),
                num_heads=config.num_heads,
            )
        )
    unembed = normal((d, V), small)
    rotary = RotaryCache.build(config.rotary_dim, config.max_positions, config.rotary_base)
    return LMModel(config, embed, blocks, np.ones(d), np.zeros(d), unembed, rotary)


def param_count(config: ModelConfig) -> tuple[int, int]:
    """``(total, non_embedding)``; non-embedding excludes the input embedding
    and the output projection."""
    d, V, L = config.hidden_size, config.vocab_size, config.num_layers
    per_layer = (
        4 * d            # two layer norms
        + 4 * (d * d + d)  # q, k, v, o with biases
        + d * 4 * d + 4 * d  # up projection
        + 4 * d * d + d  # down projection
    )
    non_embedding = L * per_layer + 2 * d
    return non_embedding + 2 * V * d, non_embedding


# -- forward / backward pieces --------------------------------------------------


def _ln_fwd(x, g, b):
    inv_d = 1.0 / x.shape[-1]
    xc = x - x.sum(-1, keepdims=True) * inv_d
    var = (xc * xc).sum(-1, keepdims=True) * inv_d
    rstd = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * rstd
    return xhat * g + b, (xhat, rstd, g)


def _ln_bwd(dy, cache):
    xhat, rstd, g = cache
    red = tuple(range(dy.ndim - 1))
    dg = (dy * xhat).sum(red)
    db = dy.sum(red)
    dxhat = dy * g
    dx = rstd * (
        dxhat
        - dxhat.mean(-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(-1, keepdims=True)
    )
    return dx, dg, db


def gelu(x):
    return 0.5 * x * (1.0 + np.tanh(GELU_C * (x + 0.044715 * x * x * x)))


def _gelu_grad(x):
    t = np.tanh(GELU_C * (x + 0.044715 * x * x * x))
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3 * 0.044715 * x * x)


def _split_heads(x, H):
    B, T, d = x.shape
    return x.reshape(B, T, H, d // H).transpose(0, 2, 1, 3)


def _merge_heads(x):
    B, H, T, hd = x.shape
    return x.transpose(0, 2, 1, 3).reshape(B, T, H * hd)


@lru_cache(maxsize=32)
def _causal_mask(T: int) -> np.ndarray:
    mask = np.triu(np.ones((T, T), dtype=bool), k=1)
    mask.setflags(write=False)
    return mask


def _attn_fwd(h, blk: Block, rotary: RotaryCache, positions):
    H = blk.num_heads
    q = _split_heads(h @ blk.q_weight + blk.q_bias, H)
    k = _split_heads(h @ blk.k_weight + blk.k_bias, H)
    v = _split_heads(h @ blk.v_weight + blk.v_bias, H)
    cos, sin = rotary.tables(positions)  # (T, d_rot/2)
    qr = _rotate(q, cos, sin, rotary.d_rot)
    kr = _rotate(k, cos, sin, rotary.d_rot)
    T, hd = q.shape[2], q.shape[3]
    scale = 1.0 / math.sqrt(hd)
    s = (qr @ kr.transpose(0, 1, 3, 2)) * scale
    s = np.where(_causal_mask(T), -np.inf, s)
    p = softmax(s)
    o = _merge_heads(p @ v)
    out = o @ blk.o_weight + blk.o_bias
    return out, (h, qr, kr, v, p, o, cos, sin, scale)


def _attn_bwd(dout, blk: Block, rotary: RotaryCache, cache):
    h, qr, kr, v, p, o, cos, sin, scale = cache
    H = blk.num_heads
    red = tuple(range(dout.ndim - 1))
    g = {
        "o_weight": np.einsum("btd,bte->de", o, dout),
        "o_bias": dout.sum(red),
    }
    do = _split_heads(dout @ blk.o_weight.T, H)
    dp = do @ v.transpose(0, 1, 3, 2)
    dv = p.transpose(0, 1, 3, 2) @ do
    ds = p * (dp - (dp * p).sum(-1, keepdims=True))
    dqr = (ds @ kr) * scale
    dkr = (ds.transpose(0, 1, 3, 2) @ qr) * scale
    dq = _merge_heads(_rotate_back(dqr, cos, sin, rotary.d_rot))
    dk = _merge_heads(_rotate_back(dkr, cos, sin, rotary.d_rot))
    dv = _merge_heads(dv)
    dh = np.zeros_like(h)
    for name, dz in (("q", dq), ("k", dk), ("v", dv)):
        w = getattr(blk, f"{name}_weight")
        g[f"{name}_weight"] = np.einsum("btd,bte->de", h, dz)
        g[f"{name}_bias"] = dz.sum(red)
        dh += dz @ w.T
    return dh, g


def _ff_fwd(h, blk: Block):
    u = h @ blk.up_weight + blk.up_bias
    a = gelu(u)
    return a @ blk.down_weight + blk.down_bias, (h, u, a)


def _ff_bwd(dout, blk: Block, cache):
    h, u, a = cache
    red = tuple(range(dout.ndim - 1))
    g = {
        "down_weight": np.einsum("btf,btd->fd", a, dout),
        "down_bias": dout.sum(red),
    }
    du = (dout @ blk.down_weight.T) * _gelu_grad(u)
    g["up_weight"] = np.einsum("btd,btf->df", h, du)
    g["up_bias"] = du.sum(red)
    return du @ blk.up_weight.T, g


def _check_finite(x):
    if not np.all(np.isfinite(x)):
        raise FloatingPointError("non-finite values in block input")


def _as_batch(x):
    x = np.asarray(x, dtype=np.float64)
    return (x[None], True) if x.ndim == 2 else (x, False)


def attention_branch(x, block: Block, rotary: RotaryCache, positions=None) -> np.ndarray:
    """``Attn(LN1(x))`` for ``x`` of shape ``(T, d)`` or ``(B, T, d)``."""
    xb, squeeze = _as_batch(x)
    pos = np.arange(xb.shape[1]) if positions is None else positions
    h, _ = _ln_fwd(xb, block.ln1_weight, block.ln1_bias)
    out, _ = _attn_fwd(h, block, rotary, pos)
    return out[0] if squeeze else out


def ff_branch(x, block: Block) -> np.ndarray:
    """``FF(LN2(x))``."""
    xb, squeeze = _as_batch(x)
    h, _ = _ln_fwd(xb, block.ln2_weight, block.ln2_bias)
    out, _ = _ff_fwd(h, block)
    return out[0] if squeeze else out


def _block_fwd(x, blk: Block, rotary: RotaryCache, positions):
    _check_finite(x)
    h1, c_ln1 = _ln_fwd(x, blk.ln1_weight, blk.ln1_bias)
    a, c_attn = _attn_fwd(h1, blk, rotary, positions)
    h2, c_ln2 = _ln_fwd(x, blk.ln2_weight, blk.ln2_bias)
    f, c_ff = _ff_fwd(h2, blk)
    # both branches read x; their sum enters the residual once
    return x + a + f, (c_ln1, c_attn, c_ln2, c_ff)


def _block_bwd(dout, blk: Block, rotary: RotaryCache, cache):
    c_ln1, c_attn, c_ln2, c_ff = cache
    dh1, g = _attn_bwd(dout, blk, rotary, c_attn)
    dh2, g_ff = _ff_bwd(dout, blk, c_ff)
    g.update(g_ff)
    dx1, g["ln1_weight"], g["ln1_bias"] = _ln_bwd(dh1, c_ln1)
    dx2, g["ln2_weight"], g["ln2_bias"] = _ln_bwd(dh2, c_ln2)
    return dout + dx1 + dx2, g


def parallel_block_forward(x, block: Block, rotary: RotaryCache, positions=None) -> np.ndarray:
    """``x + Attn(LN1(x)) + FF(LN2(x))`` for ``x`` of shape ``(T, d)`` or ``(B, T, d)``."""
    xb, squeeze = _as_batch(x)
    pos = np.arange(xb.shape[1]) if positions is None else positions
    out, _ = _block_fwd(xb, block, rotary, pos)
    return out[0] if squeeze else out


# -- full model ----------------------------------------------------------------


def _check_ids(model: LMModel, ids, n_targets: int = 0) -> np.ndarray:
    ids = np.asarray(ids)
    if ids.ndim == 1:
        ids = ids[None]
    if ids.ndim != 2:
        raise ValueError(f"token ids must be 1-D or 2-D, got shape {ids.shape}")
    if not np.issubdtype(ids.dtype, np.integer):
        raise TypeError("token ids must be integers")
    V = model.config.vocab_size
    if ids.size and (ids.min() < 0 or ids.max() >= V):
        bad = ids[(ids < 0) | (ids >= V)].ravel()[0]
        raise IndexError(f"token id {bad} out of range [0, {V})")
    if ids.shape[1] - n_targets > model.rotary.max_positions:
        raise ValueError(
            f"sequence length {ids.shape[1] - n_targets} exceeds max_positions {model.rotary.max_positions}"
        )
    return ids


def _forward(model: LMModel, ids: np.ndarray):
    pos = np.arange(ids.shape[1])
    x = model.embed[ids]
    caches = []
    for blk in model.blocks:
        x, c = _block_fwd(x, blk, model.rotary, pos)
        caches.append(c)
    hf, c_lnf = _ln_fwd(x, model.final_ln_weight, model.final_ln_bias)
    logits = hf @ model.unembed
    return logits, (caches, hf, c_lnf)


def logits(model: LMModel, token_ids) -> np.ndarray:
    ids = _check_ids(model, token_ids)
    out, _ = _forward(model, ids)
    return out[0] if np.asarray(token_ids).ndim == 1 else out


def _loss_from_logits(lg: np.ndarray, tgt: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy of ``lg`` (B, T, V) against ``tgt`` (B, T) and its gradient."""
    lp = log_softmax(lg)
    picked = np.take_along_axis(lp, tgt[..., None], axis=-1)[..., 0]
    n = tgt.size
    loss = -picked.sum() / n
    dlg = np.exp(lp)
    np.put_along_axis(dlg, tgt[..., None], np.take_along_axis(dlg, tgt[..., None], -1) - 1.0, -1)
    dlg /= n
    return float(loss), dlg


def _loss_ids(model: LMModel, token_ids) -> np.ndarray:
    # the last token is only ever a target, so a window may be one longer than max_positions
    ids = _check_ids(model, token_ids, n_targets=1)
    if ids.shape[1] < 2:
        raise ValueError("need at least 2 tokens for a next-token loss")
    return ids


def forward_loss(model: LMModel, token_ids) -> tuple[float, np.ndarray]:
    """Mean next-token cross-entropy and the logits of every input position
    (all tokens but the last)."""
    ids = _loss_ids(model, token_ids)
    lg, _ = _forward(model, ids[:, :-1])
    loss, _ = _loss_from_logits(lg, ids[:, 1:])
    return loss, (lg[0] if np.asarray(token_ids).ndim == 1 else lg)


def loss_and_grads(model: LMModel, token_ids) -> tuple[float, dict[str, np.ndarray]]:
    ids = _loss_ids(model, token_ids)
    inp = ids[:, :-1]
    lg, (caches, hf, c_lnf) = _forward(model, inp)
    loss, dlg = _loss_from_logits(lg, ids[:, 1:])

    grads: dict[str, np.ndarray] = {}
    grads["unembed"] = np.einsum("btd,btv->dv", hf, dlg)
    dhf = dlg @ model.unembed.T
    dx, grads["final_ln.weight"], grads["final_ln.bias"] = _ln_bwd(dhf, c_lnf)
    for i in reversed(range(len(model.blocks))):
        dx, g = _block_bwd(dx, model.blocks[i], model.rotary, caches[i])
        for name, val in g.items():
            grads[f"blocks.{i}.{name}"] = val
    dembed = np.zeros_like(model.embed)
    np.add.at(dembed, inp.ravel(), dx.reshape(-1, dx.shape[-1]))
    grads["embed"] = dembed
    return loss, {name: grads[name] for name in model.parameters()}


def backward(model: LMModel, token_ids) -> dict[str, np.ndarray]:
    """Exact gradients of ``forward_loss`` for every parameter, keyed like ``parameters()``."""
    return loss_and_grads(model, token_ids)[1]
