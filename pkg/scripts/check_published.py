"""Recompute the exactly checkable figures: parameter counts, batch size,
init scales, carbon arithmetic and few-shot deltas from the FairSeq tables."""

from neoxkit.evaluation import fewshot_delta
from neoxkit.infra import ILLINOIS_MIX, TOTAL_MWH, TRAINING_MWH, emissions, mix_intensity
from neoxkit.model import ModelConfig, output_layer_std, param_count, small_init_std
from neoxkit.published import (
    FAIRSEQ_SIZES,
    MATH_FIVE,
    MATH_ZERO,
    NLU_FIVE,
    NLU_ZERO,
    results,
    shared_tasks,
)
from neoxkit.tokscope import format_ratio
from neoxkit.trainer import TrainConfig


def delta(size, tables, drop=()):
    zero, five = [], []
    for z, f in tables:
        names = [t for t in shared_tasks(z, f) if t not in drop]
        zero += results(z, size, 0, names)
        five += results(f, size, 5, names)
    return fewshot_delta(zero, five).mean


def main():
    total, non_emb = param_count(ModelConfig(num_layers=44, hidden_size=6144, num_heads=64, vocab_size=50257))
    print(f"parameters: total {total:,}, non-embedding {non_emb:,}")
    print(f"batch tokens: {TrainConfig().batch_tokens:,}")
    print(f"init std: output layers {output_layer_std(44, 6144):.4e}, others {small_init_std(6144):.4e}")

    inten = mix_intensity(ILLINOIS_MIX)
    print(f"grid intensity {inten:.5f} t/MWh; training {emissions(TRAINING_MWH, inten):.2f} t, "
          f"total {emissions(TOTAL_MWH, inten):.2f} t")
    print(f"tokenizer total ratio {format_ratio(342_887_807 / 383_111_734)}")

    nlu, math_ = (NLU_ZERO, NLU_FIVE), (MATH_ZERO, MATH_FIVE)
    subsets = {
        "language understanding": [nlu],
        "language understanding, no LAMBADA": ([nlu], ("LAMBADA",)),
        "arithmetic and MATH": [math_],
        "all shared": [nlu, math_],
        "all shared, no LAMBADA": ([nlu, math_], ("LAMBADA",)),
    }
    print("\nfive-shot minus zero-shot, mean over shared tasks")
    print(f"{'subset':<36}" + "".join(f"{s:>9}" for s in FAIRSEQ_SIZES))
    for name, spec in subsets.items():
        tables, drop = spec if isinstance(spec, tuple) else (spec, ())
        print(f"{name:<36}" + "".join(f"{delta(s, tables, drop):>+9.4f}" for s in FAIRSEQ_SIZES))


if __name__ == "__main__":
    main()
