"""Run configuration using the training-config key names.

Syntax is line-based: ``key value`` or ``key: value``, ``#`` comments, and
indented blocks under a bare ``key:`` line, which flatten to dotted keys::

    num-layers 44
    optimizer:
      params:
        lr: 9.7e-05

Values resolve with precedence default < file < ``NEOXKIT_SEED`` < flag.
"""

from __future__ import annotations

import ast
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

from .model import ModelConfig
from .trainer import TrainConfig

SEED_ENV = "NEOXKIT_SEED"


class ConfigError(ValueError):
    def __init__(self, msg: str, lineno: int | None = None):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {msg}" if lineno is not None else msg)


@dataclass(frozen=True)
class Key:
    kind: str  # count | scalar | fraction | flag | pair | choice | text
    default: object
    help: str = ""
    choices: tuple = ()


SCHEMA: dict[str, Key] = {
    # model
    "num-layers": Key("count", 44, "transformer blocks"),
    "hidden-size": Key("count", 6144, "model width"),
    "num-attention-heads": Key("count", 64, "attention heads"),
    "vocab-size": Key("count", 50257, "tokenizer vocabulary size"),
    "rotary-pct": Key("fraction", 0.25, "fraction of each head that is rotated"),
    "rotary-emb-base": Key("scalar", 10000.0, "rotary frequency base"),
    "max-position-embeddings": Key("count", 2048, "longest supported context"),
    "no-weight-tying": Key("flag", True, "untie input and output embeddings"),
    "pos-emb": Key("choice", "rotary", choices=("rotary",)),
    "norm": Key("choice", "layernorm", choices=("layernorm",)),
    "gpt-j-residual": Key("flag", True, "parallel attention and feed-forward"),
    "init-method": Key("choice", "small-init", choices=("small-init",)),
    "output-layer-init-method": Key("choice", "wang-init", choices=("wang-init",)),
    # optimisation
    "optimizer.type": Key("choice", "Adam", choices=("Adam",)),
    "optimizer.params.lr": Key("scalar", 9.7e-05, "peak learning rate"),
    "optimizer.params.betas": Key("pair", (0.9, 0.95), "Adam betas"),
    "optimizer.params.eps": Key("scalar", 1e-08, "Adam epsilon"),
    "weight-decay": Key("scalar", 0.01, "decoupled weight decay"),
    "gradient-clipping": Key("scalar", 1.0, "global gradient-norm clip"),
    "min-lr": Key("scalar", 9.7e-06, "schedule floor, must equal lr/10"),
    "warmup": Key("fraction", 0.01, "warmup fraction of train-iters"),
    "lr-decay-style": Key("choice", "cosine", choices=("cosine",)),
    "lr-decay-iters": Key("count", 150000, "decay span, must equal train-iters"),
    "train-iters": Key("count", 150000, "optimizer steps"),
    # data and bookkeeping
    "seq-length": Key("count", 2048, "tokens per context"),
    "batch-contexts": Key("count", 1538, "contexts per optimizer step"),
    "split": Key("text", "995,4,1", "train/valid/test weights"),
    "save-interval": Key("count", 500, "steps between checkpoints"),
    "eval-interval": Key("count", 1000, "steps between validation passes"),
    "eval-iters": Key("count", 10, "validation contexts per pass"),
    "log-interval": Key("count", 2, "steps between loss records"),
    "seed": Key("count", 1234, "random seed"),
}

# Keys of the published config that configure machinery absent here
# (fp16, ZeRO, fused kernels, launch). Accepted and kept, never warned about.
INERT = frozenset({
    "attention-dropout", "hidden-dropout", "bias-gelu-fusion", "checkpoint-activations",
    "checkpoint-num-layers", "data-impl", "distributed-backend", "fp16.enabled",
    "fp16.fp16", "fp16.hysteresis", "fp16.initial-scale-power", "fp16.loss-scale",
    "fp16.loss-scale-window", "fp16.min-loss-scale", "gradient-accumulation-steps",
    "model-parallel-size", "output-layer-parallelism", "partition-activations",
    "pipe-parallel-size", "scaled-upper-triang-masked-softmax-fusion", "steps-per-print",
    "synchronize-each-layer", "tokenizer-type", "train-micro-batch-size-per-gpu",
    "vocab-file", "wall-clock-breakdown", "zero-optimization.allgather-bucket-size",
    "zero-optimization.allgather-partitions", "zero-optimization.contiguous-gradients",
    "zero-optimization.cpu-offload", "zero-optimization.overlap-comm",
    "zero-optimization.reduce-bucket-size", "zero-optimization.reduce-scatter",
    "zero-optimization.stage",
})

_TYPE_NAMES = {
    "count": "a non-negative integer",
    "scalar": "a finite number",
    "fraction": "a number in [0, 1]",
    "flag": "True or False",
    "pair": "a list of two numbers",
    "text": "text",
}


def _literal(raw: str):
    try:
        return ast.literal_eval(raw)
    except (ValueError, SyntaxError):
        return raw


def coerce(key: str, raw, lineno: int | None = None):
    """Typed value for ``key`` from a raw string (or an already typed value)."""
    spec = SCHEMA[key]
    val = _literal(raw.strip()) if isinstance(raw, str) else raw
    kind = spec.kind

    def bad():
        want = f"one of {list(spec.choices)}" if kind == "choice" else _TYPE_NAMES[kind]
        return ConfigError(f"{key}: expected {want}, got {raw!r}", lineno)

    if kind == "flag":
        if isinstance(val, bool):
            return val
        if isinstance(val, str) and val.lower() in ("true", "false"):
            return val.lower() == "true"
        raise bad()
    if kind == "count":
        if isinstance(val, bool) or not isinstance(val, int) or val < 0:
            raise bad()
        return val
    if kind in ("scalar", "fraction"):
        if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
            raise bad()
        val = float(val)
        if kind == "fraction" and not 0.0 <= val <= 1.0:
            raise bad()
        return val
    if kind == "pair":
        if not isinstance(val, (list, tuple)) or len(val) != 2:
            raise bad()
        if any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in val):
            raise bad()
        return (float(val[0]), float(val[1]))
    if kind == "choice":
        if str(val) not in spec.choices:
            raise bad()
        return str(val)
    return str(raw).strip() if isinstance(raw, str) else str(val)


def format_value(val) -> str:
    if isinstance(val, tuple):
        return "[" + ", ".join(repr(x) for x in val) + "]"
    if isinstance(val, float):
        return repr(val)
    return str(val)


def _strip_comment(line: str) -> str:
    if line.lstrip().startswith("#"):
        return ""
    cut = line.find(" #")
    return line if cut < 0 else line[:cut]


def parse_lines(text: str) -> list[tuple[int, str, str]]:
    """Flatten config text into ``(lineno, dotted_key, raw_value)`` triples."""
    out = []
    stack: list[tuple[int, str]] = []  # (indent, key) of open blocks
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _strip_comment(raw).rstrip()
        if not line.strip():
            continue
        if "\t" in line[: len(line) - len(line.lstrip())]:
            raise ConfigError("tabs are not allowed in indentation", lineno)
        indent = len(line) - len(line.lstrip())
        body = line.strip()
        while stack and stack[-1][0] >= indent:
            stack.pop()
        if indent and not stack:
            raise ConfigError("indented line outside a block", lineno)

        if body.split()[0].endswith(":"):
            key, _, value = body.partition(":")
            key, value = key.strip(), value.strip()
        else:
            parts = body.split(None, 1)
            if len(parts) != 2:
                raise ConfigError(f"expected 'key value', got {body!r}", lineno)
            key, value = parts
        if not key or " " in key:
            raise ConfigError(f"malformed key in {body!r}", lineno)
        full = ".".join([k for _, k in stack] + [key])
        if value == "":
            stack.append((indent, key))
            continue
        out.append((lineno, full, value))
    return out


@dataclass
class RunConfig:
    values: dict[str, object]
    provenance: dict[str, str]
    warnings: list[str] = field(default_factory=list)
    extra: dict[str, str] = field(default_factory=dict)

    def __getitem__(self, key: str):
        return self.values[key]

    def model_config(self, vocab_size: int | None = None) -> ModelConfig:
        v = self.values
        return ModelConfig(
            num_layers=v["num-layers"],
            hidden_size=v["hidden-size"],
            num_heads=v["num-attention-heads"],
            vocab_size=v["vocab-size"] if vocab_size is None else vocab_size,
            rotary_pct=v["rotary-pct"],
            max_positions=v["max-position-embeddings"],
            weight_tying=not v["no-weight-tying"],
            rotary_base=v["rotary-emb-base"],
            seed=v["seed"],
        )

    def train_config(self) -> TrainConfig:
        v = self.values
        return TrainConfig(
            peak_lr=v["optimizer.params.lr"],
            total_steps=v["train-iters"],
            warmup_frac=v["warmup"],
            betas=v["optimizer.params.betas"],
            eps=v["optimizer.params.eps"],
            weight_decay=v["weight-decay"],
            grad_clip=v["gradient-clipping"],
            contexts=v["batch-contexts"],
            seq_len=v["seq-length"],
            checkpoint_interval=v["save-interval"],
            log_interval=v["log-interval"],
            eval_interval=v["eval-interval"],
            eval_iters=v["eval-iters"],
            seed=v["seed"],
        )

    def split_weights(self) -> tuple[int, ...]:
        try:
            w = tuple(int(x) for x in str(self.values["split"]).split(","))
        except ValueError:
            raise ConfigError(f"split: expected comma-separated integers, got {self.values['split']!r}") from None
        if not w or any(x < 0 for x in w) or sum(w) == 0:
            raise ConfigError("split: weights must be non-negative with a positive sum")
        return w


def _consistency_warnings(values: dict) -> list[str]:
    out = []
    lr, floor = values["optimizer.params.lr"], values["min-lr"]
    if not math.isclose(floor, lr / 10, rel_tol=1e-9):
        out.append(f"min-lr {floor!r} differs from lr/10 = {lr / 10!r}; the schedule uses lr/10")
    if values["lr-decay-iters"] != values["train-iters"]:
        out.append(
            f"lr-decay-iters {values['lr-decay-iters']} differs from train-iters "
            f"{values['train-iters']}; decay spans train-iters"
        )
    return out


def parse_config_text(text: str, flag_overrides: dict | None = None, env=None) -> RunConfig:
    values = {k: s.default for k, s in SCHEMA.items()}
    prov = {k: "default" for k in SCHEMA}
    extra: dict[str, str] = {}
    unknown: list[str] = []
    for lineno, key, raw in parse_lines(text):
        if key in SCHEMA:
            values[key] = coerce(key, raw, lineno)
            prov[key] = "file"
        else:
            extra[key] = raw
            if key not in INERT:
                unknown.append(key)

    env = os.environ if env is None else env
    if env.get(SEED_ENV):
        try:
            values["seed"] = coerce("seed", env[SEED_ENV])
        except ConfigError:
            raise ConfigError(f"{SEED_ENV}: expected a non-negative integer, got {env[SEED_ENV]!r}") from None
        prov["seed"] = "env"

    for key, raw in (flag_overrides or {}).items():
        if raw is None:
            continue
        if key not in SCHEMA:
            raise ConfigError(f"unknown flag --{key}")
        values[key] = coerce(key, raw)
        prov[key] = "flag"

    warnings = []
    if unknown:
        warnings.append("unknown keys ignored: " + ", ".join(unknown))
    warnings += _consistency_warnings(values)
    return RunConfig(values, prov, warnings, extra)


def parse_config(path: str | Path | None, flag_overrides: dict | None = None, env=None) -> RunConfig:
    text = "" if path is None else Path(path).read_text(encoding="utf-8")
    return parse_config_text(text, flag_overrides, env)


def emit_config(rc: RunConfig) -> str:
    """Flat text form of every non-default value plus pass-through keys."""
    lines = [
        f"{k} {format_value(v)}" for k, v in rc.values.items() if rc.provenance[k] != "default"
    ]
    lines += [f"{k} {v}" for k, v in rc.extra.items()]
    return "\n".join(lines) + ("\n" if lines else "")
