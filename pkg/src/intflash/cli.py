"""``intflash`` command line: verify, mre, bench, quantize, info.

Exit status: 0 success, 1 runtime or I/O failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from pathlib import Path

import numpy as np

from .attention import Variant
from .errors import IntFlashError
from .evaluate import ExperimentPlan, run_speed_benchmark, run_table_experiment
from .gemm import BlockSpec
from .quant import (
    dequantize_rows,
    dequantize_tensor,
    quantize_per_row,
    quantize_per_tensor,
    roundtrip_error_bound,
)
from .tensors import Normal, Uniform, load_tensor, save_tensor
from .verify import run_all

VARIANT_NAMES = {
    "float": Variant.FLOAT_FLASH,
    "fp8": Variant.FP8_EMULATED,
    "half-int8": Variant.HALF_INT8,
    "full-int8": Variant.FULL_INT8,
}
DISTRIBUTIONS = {"normal": Normal(0.0, 1.0), "uniform": Uniform(-0.5, 0.5)}
DTYPE_NAMES = {np.dtype(np.float32): "f32", np.dtype(np.int8): "i8", np.dtype(np.int32): "i32"}


def positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def non_negative_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def int_list(text: str) -> list:
    values = [positive_int(part) for part in text.split(",") if part.strip()]
    if not values:
        raise argparse.ArgumentTypeError("expected at least one value")
    return values


def variant_list(text: str) -> list:
    out = []
    for name in (p.strip() for p in text.split(",") if p.strip()):
        if name not in VARIANT_NAMES:
            raise argparse.ArgumentTypeError(
                f"unknown variant {name!r}; choose from {','.join(VARIANT_NAMES)}")
        out.append(VARIANT_NAMES[name])
    if not out:
        raise argparse.ArgumentTypeError("expected at least one variant")
    return out


def _add_experiment_flags(p: argparse.ArgumentParser, default_variants: str) -> None:
    p.add_argument("--seq-len", type=int_list, default=[1024], help="comma list of sequence lengths")
    p.add_argument("--head-dim", type=positive_int, default=64)
    p.add_argument("--batch", type=positive_int, default=1)
    p.add_argument("--heads", type=positive_int, default=1)
    p.add_argument("--block-r", type=positive_int, default=64)
    p.add_argument("--block-c", type=positive_int, default=64)
    p.add_argument("--dist", choices=sorted(DISTRIBUTIONS), default="normal")
    p.add_argument("--seed", type=non_negative_int, default=0)
    p.add_argument("--seeds", type=positive_int, default=1, help="number of consecutive seeds to average")
    p.add_argument("--variants", type=variant_list, default=variant_list(default_variants))
    _add_output_flags(p)


def _add_output_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=["csv", "md"], default="csv")
    p.add_argument("--out", type=Path, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="intflash", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="run the kernel self-check suites")
    p.add_argument("--block-r", type=positive_int, default=16)
    p.add_argument("--block-c", type=positive_int, default=16)

    p = sub.add_parser("mre", help="attention-output MRE against the float64 reference")
    _add_experiment_flags(p, "fp8,half-int8,full-int8")

    p = sub.add_parser("bench", help="median kernel time and modelled Q/K/V traffic")
    _add_experiment_flags(p, "float,full-int8")
    p.add_argument("--repeats", type=positive_int, default=5)
    p.add_argument("--warmup", type=non_negative_int, default=2)

    p = sub.add_parser("quantize", help="int8-quantize an f32 tensor file")
    p.add_argument("input", type=Path)
    p.add_argument("output", type=Path)
    p.add_argument("--mode", choices=["per-row", "per-tensor"], default="per-row")
    p.add_argument("--scales", type=Path, default=None, help="scales file (default: OUTPUT.scales)")

    p = sub.add_parser("info", help="describe a tensor file")
    p.add_argument("path", type=Path)
    return parser


def format_table(header: list, rows: list, fmt: str) -> str:
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        return buf.getvalue()
    cells = [list(map(str, header))] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["| " + " | ".join(c.ljust(w) for c, w in zip(r, widths)) + " |" for r in cells]
    lines.insert(1, "|" + "|".join("-" * (w + 2) for w in widths) + "|")
    return "\n".join(lines) + "\n"


def _emit(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def _plan(args) -> ExperimentPlan:
    seeds = tuple(range(args.seed, args.seed + args.seeds))
    return ExperimentPlan.grid(
        args.variants, args.seq_len, DISTRIBUTIONS[args.dist], seeds,
        head_dim=args.head_dim, batch=args.batch, heads=args.heads,
        blocks=BlockSpec(args.block_r, args.block_c),
    )


def cmd_mre(args) -> int:
    reports = run_table_experiment(_plan(args))
    rows = [[r.variant.value, r.seq_len, r.head_dim, r.distribution, len(r.seeds), f"{100 * r.mre:.3g}"]
            for r in reports]
    _emit(format_table(["variant", "N", "d", "dist", "seed_count", "mre_percent"], rows, args.format),
          args.out)
    return 0


def cmd_bench(args) -> int:
    reports = run_speed_benchmark(_plan(args), repeats=args.repeats, warmup=args.warmup, with_mre=False)
    rows = [[r.variant.value, r.seq_len, f"{1000 * r.wall_time:.3f}", r.bytes_loaded_model]
            for r in reports]
    _emit(format_table(["variant", "N", "median_ms", "bytes_loaded_model"], rows, args.format), args.out)
    return 0


def cmd_verify(args) -> int:
    results = run_all(BlockSpec(args.block_r, args.block_c))
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
    failed = [r for r in results if not r.passed]
    if failed:
        print(f"verify failed: {failed[0].name}", file=sys.stderr)
        return 1
    return 0


def cmd_quantize(args) -> int:
    x = load_tensor(args.input)
    if x.dtype != np.float32:
        raise IntFlashError(f"{args.input}: expected an f32 tensor, got {DTYPE_NAMES[x.dtype]}")
    if args.mode == "per-row":
        q = quantize_per_row(x)
        restored, scales = dequantize_rows(q), q.scales[:, None]
        absmax = np.abs(x).max(axis=1, keepdims=True) if x.size else np.zeros((x.shape[0], 1))
    else:
        q = quantize_per_tensor(x)
        restored, scales = dequantize_tensor(q), np.full((1, 1), q.scale, dtype=np.float32)
        absmax = np.full((1, 1), np.abs(x).max() if x.size else 0.0)
    scales_path = args.scales or args.output.with_name(args.output.name + ".scales")
    save_tensor(q.values, args.output)
    save_tensor(scales, scales_path)
    err = np.abs(restored.astype(np.float64) - x)
    bound = np.broadcast_to(roundtrip_error_bound(scales, absmax), x.shape)
    max_err = float(err.max()) if err.size else 0.0
    ok = bool(np.all(err <= bound))
    print(f"wrote {args.output} ({x.shape[0]}x{x.shape[1]} i8) and {scales_path}")
    print(f"max_abs_error={max_err:.6g} max_half_step={float(scales.max()) / 2 if scales.size else 0.0:.6g} "
          f"within_bound={'yes' if ok else 'no'}")
    if not ok:
        return 1
    return 0


def cmd_info(args) -> int:
    x = load_tensor(args.path)
    lo, hi = (x.min(), x.max()) if x.size else (0, 0)
    print(f"dtype={DTYPE_NAMES[x.dtype]} rows={x.shape[0]} cols={x.shape[1]} min={lo} max={hi}")
    return 0


COMMANDS = {"verify": cmd_verify, "mre": cmd_mre, "bench": cmd_bench,
            "quantize": cmd_quantize, "info": cmd_info}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (IntFlashError, OSError) as exc:
        print(f"intflash {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
