"""Few-shot evaluation: log-likelihood choice scoring, greedy exact match,
accuracy with standard errors, and zero-vs-k-shot deltas."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .model import LMModel, log_softmax, logits
from .tokenizer import TokenizerModel

MULTIPLE_CHOICE = "multiple_choice"
EXACT_MATCH = "exact_match"


class LanguageModel(Protocol):
    tokenizer: TokenizerModel
    max_length: int

    def logprobs(self, ids: Sequence[int]) -> np.ndarray:
        """Next-token log-probabilities, shape ``(len(ids), vocab)``."""


@dataclass
class NeoxLM:
    model: LMModel
    tokenizer: TokenizerModel

    @property
    def max_length(self) -> int:
        return self.model.config.max_positions

    def logprobs(self, ids):
        return log_softmax(logits(self.model, np.asarray(ids, dtype=np.int64)))


@dataclass(frozen=True)
class Item:
    context: str
    choices: tuple[str, ...] = ()
    gold: int | None = None
    answer: str | None = None

    @property
    def target(self) -> str:
        return self.choices[self.gold] if self.answer is None else self.answer


@dataclass
class EvalTask:
    name: str
    kind: str
    items: list[Item]
    fewshot_pool: list[Item] = field(default_factory=list)
    version: int = 0
    template: str = "{context}{answer}"

    def __post_init__(self):
        if self.kind not in (MULTIPLE_CHOICE, EXACT_MATCH):
            raise ValueError(f"unknown task kind {self.kind!r}")
        for it in self.items + self.fewshot_pool:
            if self.kind == MULTIPLE_CHOICE and not (
                it.gold is not None and 0 <= it.gold < len(it.choices)
            ):
                raise ValueError(f"{self.name}: gold index out of range in {it.context!r}")
            if self.kind == EXACT_MATCH and it.answer is None:
                raise ValueError(f"{self.name}: exact-match item without answer")
        if set(self.items) & set(self.fewshot_pool):
            raise ValueError(f"{self.name}: few-shot pool overlaps evaluation items")


@dataclass(frozen=True)
class EvalResult:
    task: str
    k: int
    n: int | None
    accuracy: float
    stderr: float

    @classmethod
    def from_counts(cls, task: str, k: int, correct: int, n: int) -> "EvalResult":
        acc = correct / n
        return cls(task, k, n, acc, accuracy_stderr(acc, n))

    @property
    def interval(self) -> tuple[float, float]:
        """Two-standard-error (95%) interval."""
        return self.accuracy - 2 * self.stderr, self.accuracy + 2 * self.stderr

    def format(self) -> str:
        return f"{self.accuracy:.3f} ± {self.stderr:.3f}"


def accuracy_stderr(acc: float, n: int) -> float:
    if n < 1:
        raise ValueError("n must be >= 1")
    return math.sqrt(acc * (1.0 - acc) / n)


def render_exemplar(item: Item, template: str) -> str:
    return template.format(context=item.context, answer=item.target)


def build_prompt(item: Item, exemplars: Sequence[Item], k: int, template: str = "{context}{answer}") -> str:
    if k < 0:
        raise ValueError("k must be >= 0")
    if k > len(exemplars):
        raise ValueError(f"k={k} exceeds few-shot pool of {len(exemplars)}")
    shots = [render_exemplar(ex, template) for ex in exemplars[:k]]
    return "\n".join(shots + [item.context])


def _encode_pair(tok: TokenizerModel, prompt: str, continuation: str) -> tuple[list[int], list[int]]:
    ctx = tok.encode(prompt) if prompt else []
    cont = tok.encode(continuation, at_start=not prompt)
    return ctx, cont


def score_ids(lm: LanguageModel, ctx: Sequence[int], cont: Sequence[int]) -> float:
    if not cont:
        raise ValueError("continuation tokenizes to nothing")
    if not ctx:
        raise ValueError("empty context: nothing to condition the first token on")
    ids = list(ctx) + list(cont)
    # left-truncate; the final token is never fed
    window = ids[-(lm.max_length + 1):][:-1]
    lp = lm.logprobs(window)
    n = len(cont)
    rows = lp[len(window) - n:]
    return math.fsum(float(rows[i, t]) for i, t in enumerate(ids[-n:]))


def score_choice(lm: LanguageModel, prompt: str, continuation: str) -> float:
    """Summed log-probability of ``continuation`` given ``prompt``."""
    ctx, cont = _encode_pair(lm.tokenizer, prompt, continuation)
    return score_ids(lm, ctx, cont)


def greedy_ids(lm: LanguageModel, ids: Sequence[int], max_tokens: int) -> list[int]:
    if max_tokens < 1:
        raise ValueError("max_tokens must be >= 1")
    ids = list(ids)
    out: list[int] = []
    for _ in range(max_tokens):
        window = (ids + out)[-lm.max_length:]
        nxt = int(np.argmax(lm.logprobs(window)[-1]))
        out.append(nxt)
    return out


def generate_greedy(lm: LanguageModel, prompt: str, max_tokens: int, stop: str | None = "\n") -> str:
    """Argmax decoding until ``stop`` appears or ``max_tokens`` are produced.

    The returned text excludes the stop sequence and anything after it.
    """
    if max_tokens < 1:
        raise ValueError("max_tokens must be >= 1")
    tok = lm.tokenizer
    ids = tok.encode(prompt) if prompt else []
    if not ids:
        raise ValueError("greedy generation needs a non-empty prompt")
    out: list[int] = []
    text = ""
    for _ in range(max_tokens):
        window = (ids + out)[-lm.max_length:]
        out.append(int(np.argmax(lm.logprobs(window)[-1])))
        text = tok.decode(out, at_start=False).decode("utf-8", errors="replace")
        if stop and stop in text:
            return text[: text.index(stop)]
    return text


def _choice_scores(lm: LanguageModel, prompt: str, choices: Sequence[str], normalize: bool) -> np.ndarray:
    scores = []
    for ch in choices:
        ctx, cont = _encode_pair(lm.tokenizer, prompt, ch)
        s = score_ids(lm, ctx, cont)
        scores.append(s / len(cont) if normalize else s)
    return np.asarray(scores)


def predict_choice(scores: Sequence[float]) -> int:
    """Argmax with ties resolved to the lowest index."""
    return int(np.argmax(np.asarray(scores)))


def evaluate(
    lm: LanguageModel,
    task: EvalTask,
    k: int = 0,
    normalize: bool = False,
    max_tokens: int = 32,
    stop: str = "\n",
) -> EvalResult:
    if not task.items:
        raise ValueError(f"task {task.name} has no items")
    correct = 0
    for item in task.items:
        prompt = build_prompt(item, task.fewshot_pool, k, task.template)
        if task.kind == MULTIPLE_CHOICE:
            pred = predict_choice(_choice_scores(lm, prompt, item.choices, normalize))
            correct += int(pred == item.gold)
        else:
            got = generate_greedy(lm, prompt, max_tokens, stop)
            correct += int(got.strip() == item.answer.strip())
    return EvalResult.from_counts(task.name, k, correct, len(task.items))


@dataclass(frozen=True)
class FewshotDelta:
    mean: float
    per_task: dict[str, float]


def fewshot_delta(zero: Sequence[EvalResult], five: Sequence[EvalResult]) -> FewshotDelta:
    """Mean over tasks of (k-shot accuracy - zero-shot accuracy)."""
    names0 = [r.task for r in zero]
    names5 = [r.task for r in five]
    if names0 != names5:
        only0 = sorted(set(names0) - set(names5))
        only5 = sorted(set(names5) - set(names0))
        raise ValueError(
            f"task lists differ: only in zero-shot {only0}, only in few-shot {only5}"
            + ("" if only0 or only5 else " (order differs)")
        )
    if not names0:
        raise ValueError("no tasks to compare")
    per = {a.task: b.accuracy - a.accuracy for a, b in zip(zero, five)}
    return FewshotDelta(math.fsum(per.values()) / len(per), per)


def format_results(results: Sequence[EvalResult]) -> str:
    """Table in the published style (``acc ± stderr``) plus the 2-stderr interval."""
    width = max([len(r.task) for r in results] + [4])
    lines = [f"{'task':<{width}}  {'k':>2}  {'n':>6}  {'acc ± stderr':>15}  {'95% interval':>17}"]
    for r in results:
        lo, hi = r.interval
        n = "-" if r.n is None else str(r.n)
        lines.append(
            f"{r.task:<{width}}  {r.k:>2}  {n:>6}  {r.format():>15}  [{lo:.3f}, {hi:.3f}]"
        )
    return "\n".join(lines)


def load_task(path: str | Path) -> EvalTask:
    """Line-delimited task file.

    An optional first record ``{"task": name, "version": 0, "template": ...}``
    carries metadata. Item records hold ``context`` plus either ``choices`` and
    ``gold`` or ``answer``; ``"fewshot": true`` moves an item to the exemplar pool.
    """
    path = Path(path)
    meta = {"task": path.stem, "version": 0}
    items, pool = [], []
    kind = None
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            if "context" not in rec:
                meta.update(rec)
                continue
            if "choices" in rec:
                it = Item(rec["context"], tuple(rec["choices"]), int(rec["gold"]))
                this = MULTIPLE_CHOICE
            elif "answer" in rec:
                it = Item(rec["context"], answer=str(rec["answer"]))
                this = EXACT_MATCH
            else:
                raise ValueError(f"{path}:{lineno}: record needs 'choices'+'gold' or 'answer'")
            if kind is not None and kind != this:
                raise ValueError(f"{path}:{lineno}: mixes multiple-choice and exact-match items")
            kind = this
            (pool if rec.get("fewshot") else items).append(it)
    if kind is None:
        raise ValueError(f"{path}: no items")
    return EvalTask(
        str(meta["task"]), kind, items, pool, int(meta.get("version", 0)),
        meta.get("template", "{context}{answer}"),
    )
