"""Command-line interface: train, compare, analyze, flops.

Exit codes: 0 success, 2 usage or input error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import math
import random
import sys
from dataclasses import replace

from . import linalg
from .attention import (AttentionSpec, preconditioner_flops,
                        preconditioner_flops_per_head)
from .config import ExperimentConfig, load_config
from .errors import InputError, NumericalError
from .harness import run_compare, run_training
from .matrix import Matrix

_EPILOG = """\
output CSV schemas:
  summary.csv            step,avg_kappa,train_loss,eval_acc
  condition.csv          step,layer,head,kappa,mu_log,row_norm_min,row_norm_max,flag
  condition_weights.csv  same schema as condition.csv, for the applied weights
  kappa_curves.csv       step,kappa_standard,kappa_<mode>        (compare)
  steps_to_target.csv    variant,seed,target,steps_to_target,final_accuracy  (compare)

environment:
  PRECOND_ATTN_THREADS   caps concurrent per-seed runs in compare
  PRECOND_ATTN_BACKEND   kernel backend: auto (default), pure, or compiled

matrix file format for analyze: first line "rows cols", then row-major
whitespace-separated floats.
"""

_MODE_CHOICES = ("standard", "precond-output", "precond-weights")


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="JSON config file; flags override it")
    p.add_argument("--seed", type=int, help="base RNG seed")
    p.add_argument("--mode", choices=_MODE_CHOICES, help="attention variant")
    p.add_argument("--steps", type=int, help="training step count")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--no-norm", action="store_true", help="disable layer normalization")
    p.add_argument("--no-scale", action="store_true",
                   help="disable 1/sqrt(d_h) attention score scaling")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="precond-attn",
        description="Row-norm preconditioned self-attention laboratory.",
        epilog=_EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model and write run artifacts")
    _add_common_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("compare",
                       help="standard vs preconditioned attention over several seeds")
    _add_common_flags(p)
    p.add_argument("--seeds", type=int, help="number of seeds per variant (default 5)")
    p.add_argument("--target-acc", type=float, help="fixed accuracy target for "
                   "steps-to-target (default: each standard run's final smoothed accuracy)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("analyze", help="conditioning report for one matrix or an ensemble")
    p.add_argument("--file", metavar="PATH", help="matrix file to analyze")
    p.add_argument("--q", metavar="PATH", help="query matrix file")
    p.add_argument("--k", metavar="PATH", help="key matrix file")
    p.add_argument("--v", metavar="PATH", help="value matrix file")
    p.add_argument("--random", nargs=2, type=int, metavar=("ROWS", "COLS"),
                   help="analyze a random ensemble of this shape")
    p.add_argument("--count", type=int, default=200, help="ensemble size (default 200)")
    p.add_argument("--seed", type=int, default=0, help="ensemble RNG seed")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("flops", help="preconditioner FLOP counts for given dims")
    p.add_argument("n", type=int, help="sequence length")
    p.add_argument("d_model", type=int, help="model width D")
    p.add_argument("heads", type=int, help="head count h")
    p.add_argument("layers", type=int, help="layer count")
    p.set_defaults(func=cmd_flops)
    return parser


def _config_from_args(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.mode is not None:
        cfg = replace(cfg, mode=args.mode.replace("-", "_"))
    if args.steps is not None:
        cfg = replace(cfg, steps=args.steps)
    if args.out is not None:
        cfg = replace(cfg, out_dir=args.out)
    if args.no_norm:
        cfg = replace(cfg, use_norm=False)
    if args.no_scale:
        cfg = replace(cfg, scale_scores=False)
    return cfg


def cmd_train(args) -> int:
    cfg = _config_from_args(args)

    def progress(step, loss, acc):
        print(f"step {step}: loss {loss:.4f} eval acc {acc:.4f}")

    result = run_training(cfg, progress=progress)
    print(f"done in {result.wall_time:.1f}s, final eval acc {result.final_accuracy:.4f}")
    print(f"artifacts in {result.out_dir}")
    return 0


def cmd_compare(args) -> int:
    cfg = _config_from_args(args)
    if args.seeds is not None:
        cfg = replace(cfg, seeds=args.seeds)
    result = run_compare(cfg, target_acc=args.target_acc)
    with open(f"{result.out_dir}/report.txt", "r", encoding="ascii") as f:
        sys.stdout.write(f.read())
    print(f"artifacts in {result.out_dir}")
    return 0


def read_matrix_file(path: str) -> Matrix:
    """First line "rows cols", then row-major whitespace-separated floats."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise InputError(f"cannot read matrix file {path}: {e}") from e
    tokens = text.split()
    if len(tokens) < 2:
        raise InputError(f"{path}: expected 'rows cols' on the first line")
    try:
        rows, cols = int(tokens[0]), int(tokens[1])
    except ValueError as e:
        raise InputError(f"{path}: bad dimensions {tokens[0]!r} {tokens[1]!r}") from e
    if rows < 1 or cols < 1:
        raise InputError(f"{path}: dimensions must be positive, got {rows}x{cols}")
    body = tokens[2:]
    if len(body) != rows * cols:
        raise InputError(f"{path}: expected {rows * cols} entries for "
                         f"{rows}x{cols}, got {len(body)}")
    try:
        entries = [float(t) for t in body]
    except ValueError as e:
        raise InputError(f"{path}: non-numeric entry: {e}") from e
    try:
        return Matrix.from_flat(rows, cols, entries)
    except ValueError as e:
        raise InputError(f"{path}: {e}") from e


def _mu_text(rep: linalg.ConditioningReport) -> str:
    if math.isinf(rep.mu) and math.isfinite(rep.mu_log):
        return f"overflows doubles (log mu: {rep.mu_log:.6g})"
    return f"{rep.mu:.6g} (log mu: {rep.mu_log:.6g})"


def _print_single(m: Matrix, label: str) -> None:
    rep = linalg.conditioning_report(m)
    print(f"{label}: {m.rows}x{m.cols}")
    print(f"  kappa: {rep.kappa:.6g}")
    print(f"  mu: {_mu_text(rep)}")
    print(f"  guggenheimer bound (kappa <= mu): "
          f"{'holds' if rep.guggenheimer_bound_holds else 'VIOLATED'}")
    c = linalg.build_preconditioner(m)
    ca = linalg.matmul(c, m)
    rep2 = linalg.conditioning_report(ca)
    norms = linalg.row_norms(ca)
    print("  after row-norm preconditioning:")
    print(f"    kappa: {rep2.kappa:.6g}")
    print(f"    mu: {_mu_text(rep2)}")
    print(f"    row norms: min {min(norms):.6g} max {max(norms):.6g}")


def analyze_ensemble(rows: int, cols: int, count: int, seed: int):
    """(reduced_fraction, mean_kappa_before, mean_kappa_after) over random
    matrices with entries U[-1, 1]."""
    rng = random.Random(seed)
    reduced = 0
    before = []
    after = []
    for _ in range(count):
        m = Matrix.from_flat(rows, cols,
                             [rng.uniform(-1.0, 1.0) for _ in range(rows * cols)])
        ka = linalg.condition_number(m)
        kb = linalg.condition_number(linalg.matmul(linalg.build_preconditioner(m), m))
        if kb <= ka:
            reduced += 1
        if math.isfinite(ka):
            before.append(ka)
        if math.isfinite(kb):
            after.append(kb)
    mean = lambda xs: sum(xs) / len(xs) if xs else math.inf
    return reduced / count, mean(before), mean(after)


def cmd_analyze(args) -> int:
    qkv = (args.q, args.k, args.v)
    have_qkv = all(p is not None for p in qkv)
    if any(p is not None for p in qkv) and not have_qkv:
        raise InputError("analyze needs all three of --q, --k, --v or none")
    sources = sum((args.file is not None, have_qkv, args.random is not None))
    if sources != 1:
        raise InputError("analyze needs exactly one of --file, --q/--k/--v, or --random")

    if args.file is not None:
        _print_single(read_matrix_file(args.file), args.file)
        return 0

    if have_qkv:
        q = read_matrix_file(args.q)
        k = read_matrix_file(args.k)
        v = read_matrix_file(args.v)
        a = linalg.matmul(linalg.softmax_rows(linalg.matmul(q, k.transpose())), v)
        _print_single(a, "softmax(q k^T) v")
        log_bound = linalg.log_attention_kappa_bound(q, k, v)
        bound = linalg.attention_kappa_bound(q, k, v)
        if math.isinf(bound) and math.isfinite(log_bound):
            print(f"  attention kappa bound: overflows doubles (log: {log_bound:.6g})")
        else:
            print(f"  attention kappa bound: {bound:.6g} (log: {log_bound:.6g})")
        return 0

    rows, cols = args.random
    if args.count < 1:
        raise InputError(f"count: must be >= 1, got {args.count}")
    if rows < 1 or cols < 1:
        raise InputError(f"random shape must be positive, got {rows}x{cols}")
    frac, before, after = analyze_ensemble(rows, cols, args.count, args.seed)
    print(f"random ensemble: {args.count} matrices of {rows}x{cols}, "
          f"entries U[-1,1], seed {args.seed}")
    print(f"  mean kappa before: {before:.6g}")
    print(f"  mean kappa after:  {after:.6g}")
    print(f"  kappa reduced or equal in {100.0 * frac:.1f}% of samples")
    return 0


def cmd_flops(args) -> int:
    n, d, h, layers = args.n, args.d_model, args.heads, args.layers
    for name, value in (("n", n), ("d_model", d), ("heads", h), ("layers", layers)):
        if value < 1:
            raise InputError(f"{name}: must be >= 1, got {value}")
    if d % h != 0:
        raise InputError(f"heads: must divide d_model, got {h} for d_model={d}")
    spec = AttentionSpec(model_dim=d, head_count=h, seq_len=n)
    per_head = preconditioner_flops_per_head(spec)
    per_layer = preconditioner_flops(spec)
    print(f"preconditioner FLOPs for n={n}, D={d}, h={h}, layers={layers}:")
    print(f"  per head:  {per_head}")
    print(f"  per layer: {per_layer}")
    print(f"  per model: {per_layer * layers}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 2
    try:
        return args.func(args)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except NumericalError as e:
        print(f"numerical abort: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
