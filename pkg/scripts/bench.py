"""Median kernel time and modelled Q/K/V traffic for each variant.

Wall times are for context only; the byte counts are the comparable figure.

    python3 scripts/bench.py --seq-len 1024,2048,4096
"""

import argparse

from intflash.attention import Variant
from intflash.cli import format_table, int_list, positive_int
from intflash.evaluate import ExperimentPlan, run_speed_benchmark
from intflash.tensors import Normal

VARIANTS = (Variant.FLOAT_FLASH, Variant.FP8_EMULATED, Variant.HALF_INT8, Variant.FULL_INT8)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seq-len", type=int_list, default=[1024, 2048, 4096])
    parser.add_argument("--head-dim", type=positive_int, default=64)
    parser.add_argument("--repeats", type=positive_int, default=5)
    args = parser.parse_args()

    plan = ExperimentPlan.grid(VARIANTS, args.seq_len, Normal(), head_dim=args.head_dim)
    reports = run_speed_benchmark(plan, repeats=args.repeats)
    base = {r.seq_len: r for r in reports if r.variant is Variant.FLOAT_FLASH}
    rows = [[r.variant.value, r.seq_len, f"{1000 * r.wall_time:.1f}",
             f"{base[r.seq_len].wall_time / r.wall_time:.2f}x", r.bytes_loaded_model,
             f"{r.bytes_loaded_model / base[r.seq_len].bytes_loaded_model:.2f}", f"{100 * r.mre:.3g}%"]
            for r in reports]
    print(format_table(["variant", "N", "median_ms", "speedup_vs_float", "bytes_loaded_model",
                        "bytes_vs_float", "mre"], rows, "md"))


if __name__ == "__main__":
    main()
