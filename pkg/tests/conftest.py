import numpy as np
import pytest

from neoxkit.model import ModelConfig, init_params
from neoxkit.tokenizer import min_vocab_size, train_bpe

CORPUS = [
    "def fibRec(n):\n    if n < 2:\n        return n\n    else:\n        return fibRec(n-1) + fibRec(n-2)\n",
    "The quick brown fox jumps over the lazy dog. The dog sleeps.\n",
    "for i in range(10):\n        print(i)  # indented\n\tx = i * 2\n",
    "Über naïve café: ünïcödé words, and the the the repeated words.\n",
    "    return the value of the function to the caller\n" * 3,
]


@pytest.fixture(scope="session")
def corpus():
    return list(CORPUS)


@pytest.fixture(scope="session")
def tok(corpus):
    return train_bpe(corpus, min_vocab_size(1) + 120, reserved=["<|endoftext|>"])


@pytest.fixture
def tiny_config():
    return ModelConfig(num_layers=2, hidden_size=16, num_heads=2, vocab_size=23,
                       rotary_pct=0.5, max_positions=32, seed=3)


@pytest.fixture
def tiny_model(tiny_config):
    model = init_params(tiny_config)
    # non-trivial norms and biases so their gradients are exercised
    rng = np.random.default_rng(11)
    for name, p in model.parameters().items():
        if p.ndim == 1:
            p += rng.normal(0, 0.1, p.shape)
    return model
