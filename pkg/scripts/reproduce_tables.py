"""Print the attention-output MRE tables for normal and uniform activations.

Each cell averages over --seeds seeds; activation round-trip MRE of Q, K and V
is printed below each table.

    python3 scripts/reproduce_tables.py --seq-len 1024,2048,4096 --seeds 5
"""

import argparse

from intflash.attention import Variant
from intflash.cli import format_table, int_list, positive_int
from intflash.evaluate import MRE_FORMULA, ExperimentPlan, run_table_experiment
from intflash.tensors import Normal, Uniform

VARIANTS = (Variant.FP8_EMULATED, Variant.HALF_INT8, Variant.FULL_INT8)
DISTRIBUTIONS = {"normal N(0, 1)": Normal(0.0, 1.0), "uniform U(-0.5, 0.5)": Uniform(-0.5, 0.5)}


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seq-len", type=int_list, default=[1024, 2048, 4096])
    parser.add_argument("--head-dim", type=positive_int, default=64)
    parser.add_argument("--seeds", type=positive_int, default=5)
    args = parser.parse_args()

    print(f"MRE = {MRE_FORMULA}, d={args.head_dim}, seeds 0..{args.seeds - 1}\n")
    for title, dist in DISTRIBUTIONS.items():
        plan = ExperimentPlan.grid(VARIANTS, args.seq_len, dist, range(args.seeds), head_dim=args.head_dim)
        reports = run_table_experiment(plan)
        by = {(r.seq_len, r.variant): r for r in reports}
        rows = [[n] + [f"{100 * by[(n, v)].mre:.3g}%" for v in VARIANTS] for n in args.seq_len]
        print(f"## output MRE, {title}\n")
        print(format_table(["N"] + [v.value for v in VARIANTS], rows, "md"))
        act = [[v.value] + [f"{100 * by[(args.seq_len[0], v)].activation_mre[m]:.3g}%" for m in "qkv"]
               for v in VARIANTS]
        print(f"activation round-trip MRE at N={args.seq_len[0]}\n")
        print(format_table(["variant", "Q", "K", "V"], act, "md"))


if __name__ == "__main__":
    main()
