"""Synthetic token streams for desk-scale training runs."""

from __future__ import annotations

import numpy as np


def markov_stream(n_tokens: int, vocab: int, branching: int = 4, seed: int = 0) -> np.ndarray:
    """First-order Markov chain over ``vocab`` states.

    Each state moves to one of ``branching`` random successors with
    Dirichlet-drawn probabilities, so the entropy rate is well below ``log(vocab)``
    and a model that learns bigram statistics gets a clear loss drop.
    """
    if n_tokens < 1 or vocab < 2 or not 1 <= branching <= vocab:
        raise ValueError("need n_tokens >= 1, vocab >= 2 and 1 <= branching <= vocab")
    rng = np.random.default_rng(seed)
    succ = np.stack([rng.choice(vocab, size=branching, replace=False) for _ in range(vocab)])
    probs = rng.dirichlet(np.ones(branching), size=vocab)
    cum = np.cumsum(probs, axis=1)
    u = rng.random(n_tokens)
    out = np.empty(n_tokens, dtype=np.int64)
    state = int(rng.integers(vocab))
    for i in range(n_tokens):
        out[i] = state
        j = min(int(np.searchsorted(cum[state], u[i], side="right")), branching - 1)
        state = int(succ[state, j])
    return out


def entropy_rate(vocab: int, branching: int = 4, seed: int = 0) -> float:
    """Stationary entropy rate (nats/token) of the chain ``markov_stream`` draws."""
    rng = np.random.default_rng(seed)
    succ = np.stack([rng.choice(vocab, size=branching, replace=False) for _ in range(vocab)])
    probs = rng.dirichlet(np.ones(branching), size=vocab)
    P = np.zeros((vocab, vocab))
    for s in range(vocab):
        np.add.at(P[s], succ[s], probs[s])
    pi = np.full(vocab, 1.0 / vocab)
    for _ in range(10_000):
        nxt = pi @ P
        if np.abs(nxt - pi).max() < 1e-14:
            break
        pi = nxt
    h = -np.sum(probs * np.log(probs), axis=1)
    return float(pi @ h)
