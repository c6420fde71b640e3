"""Command-line entry point.

Machine-readable results go to stdout as JSON lines; tables and diagnostics go
to stderr. Exit status: 0 success, 1 usage, 2 validation, 3 runtime.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import evaluation, infra, tokscope
from .checkpoint import load_checkpoint
from .config import SCHEMA, ConfigError, parse_config
from .model import init_params, param_count
from .tokenizer import TokenizerFileError, load_model, save_model, train_bpe
from .trainer import split_stream, train

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _emit(rec) -> None:
    sys.stdout.write(json.dumps(rec) + "\n")


def _say(text: str) -> None:
    sys.stderr.write(text.rstrip("\n") + "\n")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="config file (key value lines)")
    g = p.add_argument_group("config overrides")
    for key, spec in SCHEMA.items():
        g.add_argument(f"--{key}", dest=f"cfg:{key}", metavar="V", help=spec.help or None)


def _run_config(args):
    flags = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg:") and v is not None}
    rc = parse_config(args.config, flags)
    for w in rc.warnings:
        _say(f"warning: {w}")
    return rc


def _read_texts(paths) -> list[bytes]:
    docs = []
    for p in map(Path, paths):
        if p.is_dir():
            docs += tokscope.load_component_dir(p).documents
        else:
            docs.append(p.read_bytes())
    return docs


def cmd_tok_train(args) -> int:
    model = train_bpe(_read_texts(args.corpus), args.vocab_size, args.reserved or ())
    save_model(model, args.out)
    _emit({"vocab_size": len(model.vocab), "merges": len(model.merges), "path": str(args.out)})
    return EXIT_OK


def cmd_encode(args) -> int:
    tok = load_model(args.tokenizer)
    text = args.text if args.text is not None else sys.stdin.read()
    _emit({"ids": tok.encode(text, at_start=not args.continuation)})
    return EXIT_OK


def cmd_decode(args) -> int:
    tok = load_model(args.tokenizer)
    raw = args.ids if args.ids else sys.stdin.read().replace(",", " ").strip("[] \n").split()
    try:
        ids = [int(x) for x in raw]
    except ValueError:
        raise ValueError("ids must be integers") from None
    data = tok.decode(ids, at_start=not args.continuation)
    _emit({"text": data.decode("utf-8", errors="replace")})
    return EXIT_OK


def cmd_tokscope(args) -> int:
    if args.action == "ratio":
        corpus = tokscope.load_corpus_dir(args.corpus)
        rep = tokscope.ratio_report(
            corpus, load_model(args.a), load_model(args.b), args.exclude_whitespace,
            Path(args.a).stem, Path(args.b).stem,
        )
        _say(rep.format_table())
        for rec in rep.records():
            _emit(rec)
    elif args.action == "longest":
        for tok in tokscope.longest_tokens(load_model(args.tokenizer), args.k):
            _emit({"token": tok.decode("utf-8", errors="replace"), "bytes": len(tok)})
            _say(tokscope.format_tokens([tok]))
    else:
        a, b = load_model(args.a), load_model(args.b)
        comps = tokscope.load_corpus_dir(args.corpus) if args.per_component else [
            tokscope.CorpusComponent(Path(args.corpus).name, _read_texts([args.corpus]))
        ]
        for comp in comps:
            for row in tokscope.worst_case_words(comp, a, b, args.min_count, args.top):
                _emit({
                    "component": comp.name,
                    "word": row.word.decode("utf-8", errors="replace"),
                    "tokens_a": len(row.tokens_a),
                    "tokens_b": len(row.tokens_b),
                })
                _say(f"{comp.name}: ({len(row.tokens_a)}) {tokscope.format_tokens(row.tokens_a)}"
                     f"  vs  ({len(row.tokens_b)}) {tokscope.format_tokens(row.tokens_b)}")
    return EXIT_OK


def _load_ids(paths, tok) -> np.ndarray:
    parts = []
    for p in map(Path, paths):
        if p.suffix == ".npy":
            parts.append(np.load(p).astype(np.int64).ravel())
        else:
            if tok is None:
                raise ValueError(f"{p}: text corpus needs --tokenizer")
            parts.append(np.asarray(tok.encode(p.read_bytes()), dtype=np.int64))
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)


def cmd_train(args) -> int:
    rc = _run_config(args)
    tok = load_model(args.tokenizer) if args.tokenizer else None
    vocab = len(tok.vocab) if tok is not None else None
    mcfg = rc.model_config(vocab)
    tcfg = rc.train_config()
    ids = _load_ids(args.corpus, tok)
    if ids.size and (ids.min() < 0 or ids.max() >= mcfg.vocab_size):
        raise ValueError(f"token ids fall outside the vocabulary of {mcfg.vocab_size}")
    if args.val:
        train_ids, val_ids = ids, _load_ids(args.val, tok)
    else:
        train_ids, val_ids, _ = split_stream(ids, rc.split_weights())
    if len(val_ids) < tcfg.seq_len + 1:
        _say("warning: validation stream shorter than one context; skipping validation")
        val_ids = None

    model = init_params(mcfg)
    out = Path(args.out)
    _, lossl = train(model, train_ids, tcfg, val_ids, out)
    lossl.write_jsonl(out / "loss.jsonl")
    for rec in lossl.records:
        _emit(rec)
    last = lossl.train_losses[-1]
    _say(f"trained {last[0]} steps, final train loss {last[1]:.4f}; checkpoints in {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model, _ = load_checkpoint(args.model)
    tok = load_model(args.tokenizer)
    if len(tok.vocab) != model.config.vocab_size:
        raise ValueError(
            f"tokenizer has {len(tok.vocab)} entries, model expects {model.config.vocab_size}"
        )
    lm = evaluation.NeoxLM(model, tok)
    results = []
    for path in args.task:
        task = evaluation.load_task(path)
        r = evaluation.evaluate(lm, task, args.shots, args.normalize, args.max_tokens)
        results.append(r)
        lo, hi = r.interval
        _emit({"task": r.task, "version": task.version, "k": r.k, "n": r.n,
               "acc": r.accuracy, "stderr": r.stderr, "interval": [lo, hi]})
    _say(evaluation.format_results(results))
    return EXIT_OK


def cmd_plan(args) -> int:
    layout = infra.derive_layout(infra.ClusterTopology(args.nodes, args.gpus), args.tp, args.pp)
    serial = infra.allreduce_count(args.layers, "serial")
    parallel = infra.allreduce_count(args.layers, "parallel")
    _emit({"tp": layout.tp, "pp": layout.pp, "dp": layout.dp, "intra_node": layout.intra_node,
           "world_size": layout.world_size,
           "allreduce": {"serial": list(serial), "parallel": list(parallel)}})
    _say(f"{args.nodes}x{args.gpus} GPUs: tp={layout.tp} pp={layout.pp} dp={layout.dp} "
         f"({'model replica within a node' if layout.intra_node else 'model replica spans nodes'}); "
         f"all-reduces per pass over {args.layers} layers: serial {serial[0]}, parallel {parallel[0]}")
    return EXIT_OK


def cmd_carbon(args) -> int:
    mix = infra.load_mix(args.mix) if args.mix else infra.ILLINOIS_MIX
    inten = infra.mix_intensity(mix)
    mwhs = args.mwh or [infra.TRAINING_MWH, infra.TOTAL_MWH]
    rec = {"intensity": inten, "share_total": mix.share_total,
           "emissions": [{"mwh": m, "t_co2": infra.emissions(m, inten)} for m in mwhs]}
    _emit(rec)
    _say(f"mix intensity {inten:.5f} t CO2/MWh")
    for e in rec["emissions"]:
        _say(f"  {e['mwh']:g} MWh -> {e['t_co2']:.2f} t CO2")
    return EXIT_OK


def cmd_params(args) -> int:
    rc = _run_config(args)
    total, non_emb = param_count(rc.model_config())
    _emit({"total": total, "non_embedding": non_emb})
    _say(f"total {total:,} ({total / 1e9:.2f}B), non-embedding {non_emb:,} ({non_emb / 1e9:.2f}B)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="neoxkit", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")

    s = sub.add_parser("tok-train", help="learn a BPE vocabulary")
    s.add_argument("--corpus", nargs="+", required=True, help="text files or directories")
    s.add_argument("--vocab-size", type=int, required=True)
    s.add_argument("--reserved", nargs="*", help="reserved special tokens")
    s.add_argument("--out", type=Path, required=True)
    s.set_defaults(func=cmd_tok_train)

    for name, fn, helptext in (("encode", cmd_encode, "text to token ids"),
                               ("decode", cmd_decode, "token ids to text")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--tokenizer", type=Path, required=True)
        s.add_argument("--continuation", action="store_true",
                       help="treat input as continuing earlier text (no start-of-string rule)")
        if name == "encode":
            s.add_argument("--text", help="text to encode (default: stdin)")
        else:
            s.add_argument("ids", nargs="*", help="token ids (default: stdin)")
        s.set_defaults(func=fn)

    s = sub.add_parser("tokscope", help="compare tokenizers on a corpus")
    ts = s.add_subparsers(dest="action", required=True, parser_class=_Parser, metavar="ACTION")
    r = ts.add_parser("ratio", help="per-component token counts and ratio")
    r.add_argument("--corpus", type=Path, required=True, help="directory of component subdirectories")
    r.add_argument("--a", required=True, help="baseline tokenizer")
    r.add_argument("--b", required=True, help="compared tokenizer")
    r.add_argument("--exclude-whitespace", action="store_true")
    r = ts.add_parser("longest", help="longest mostly-letter tokens")
    r.add_argument("--tokenizer", required=True)
    r.add_argument("--k", type=int, default=10)
    r = ts.add_parser("worstcase", help="words one tokenizer splits far more than the other")
    r.add_argument("--corpus", type=Path, required=True)
    r.add_argument("--a", required=True)
    r.add_argument("--b", required=True)
    r.add_argument("--min-count", type=int, default=10)
    r.add_argument("--top", type=int, default=10)
    r.add_argument("--per-component", action="store_true",
                   help="treat --corpus as a directory of components")
    s.set_defaults(func=cmd_tokscope)

    s = sub.add_parser("train", help="train a model")
    _add_config_flags(s)
    s.add_argument("--corpus", nargs="+", required=True, help="text files or .npy id arrays")
    s.add_argument("--val", nargs="*", help="held-out files (default: split weights)")
    s.add_argument("--tokenizer", type=Path)
    s.add_argument("--out", type=Path, required=True, help="checkpoint and log directory")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="few-shot evaluation of a checkpoint")
    s.add_argument("--task", nargs="+", required=True, type=Path)
    s.add_argument("--shots", type=int, default=0)
    s.add_argument("--model", type=Path, required=True)
    s.add_argument("--tokenizer", type=Path, required=True)
    s.add_argument("--normalize", action="store_true", help="per-token choice scores")
    s.add_argument("--max-tokens", type=int, default=32)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("plan", help="parallel layout for a cluster")
    s.add_argument("--nodes", type=int, required=True)
    s.add_argument("--gpus", type=int, required=True, help="GPUs per node")
    s.add_argument("--tp", type=int, default=1)
    s.add_argument("--pp", type=int, default=1)
    s.add_argument("--layers", type=int, default=44)
    s.set_defaults(func=cmd_plan)

    s = sub.add_parser("carbon", help="energy-mix intensity and emissions")
    s.add_argument("--mix", type=Path, help="mix file (default: built-in grid mix)")
    s.add_argument("--mwh", type=float, nargs="*")
    s.set_defaults(func=cmd_carbon)

    s = sub.add_parser("params", help="parameter counts for a config")
    _add_config_flags(s)
    s.set_defaults(func=cmd_params)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        _say(str(exc))
        return EXIT_USAGE
    if args.command is None:
        _say(parser.format_usage())
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, TokenizerFileError, ValueError, IndexError) as exc:
        _say(f"error: {exc}")
        return EXIT_INVALID
    except (OSError, FloatingPointError, RuntimeError) as exc:
        _say(f"error: {exc}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
