"""Train the desk-scale model on a synthetic Markov stream and report the loss curve.

    python3 scripts/train_toy.py --steps 200 --out runs/toy
"""

import argparse
import time
from pathlib import Path

from neoxkit.config import parse_config
from neoxkit.synthetic import entropy_rate, markov_stream
from neoxkit.trainer import train
from neoxkit.model import init_params

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path, default=ROOT / "configs" / "toy.cfg")
    ap.add_argument("--tokens", type=int, default=50_000)
    ap.add_argument("--vocab", type=int, default=64)
    ap.add_argument("--steps", type=int, default=None, help="override train-iters")
    ap.add_argument("--out", type=Path, default=None, help="checkpoint directory")
    args = ap.parse_args()

    flags = {"train-iters": args.steps, "lr-decay-iters": args.steps} if args.steps else {}
    rc = parse_config(args.config, flags)
    for w in rc.warnings:
        print("warning:", w)
    mcfg, tcfg = rc.model_config(args.vocab), rc.train_config()
    ids = markov_stream(args.tokens, args.vocab, seed=tcfg.seed)

    t0 = time.perf_counter()
    _, log = train(init_params(mcfg), ids, tcfg, checkpoint_dir=args.out)
    elapsed = time.perf_counter() - t0
    for step, loss in log.train_losses:
        print(f"step {step:5d}  loss {loss:.4f}")
    first, last = log.train_losses[0][1], log.train_losses[-1][1]
    print(f"{elapsed:.1f} s; loss {first:.3f} -> {last:.3f}; "
          f"source entropy rate {entropy_rate(args.vocab, seed=tcfg.seed):.3f} nats")
    if args.out:
        log.write_jsonl(args.out / "loss.jsonl")


if __name__ == "__main__":
    main()
