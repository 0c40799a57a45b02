"""Condition-number tracking during training, plus steps-to-accuracy bookkeeping.

Each sampling call runs a probe forward pass on detached values: it touches
no gradients, no optimizer state and no RNG stream, so training trajectories
are bitwise identical with instrumentation on or off.

Two record streams are produced per sample: one for the head output matrix
(the headline metric) and one for the attention weight matrix as applied
(softmax(q k^T), after C in precond_weights mode).
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass

from . import linalg
from .matrix import Matrix
from .transformer import ModelConfig, ModelParams, model_forward

CONDITION_HEADER = "step,layer,head,kappa,mu_log,row_norm_min,row_norm_max,flag"
SUMMARY_HEADER = "step,avg_kappa,train_loss,eval_acc"

FLAG_OK = "ok"
FLAG_RANK_DEFICIENT = "rank_deficient"
FLAG_OVERFLOW = "overflow"


@dataclass(frozen=True)
class ConditionRecord:
    step: int
    layer: int
    head: int
    kappa: float        # inf when rank-deficient
    mu_log: float       # log mu; inf when rank-deficient, finite on overflow
    row_norm_min: float
    row_norm_max: float
    flag: str


@dataclass(frozen=True)
class RunSummary:
    kappa_series: tuple       # (step, head/layer-averaged kappa) pairs
    final_accuracy: float
    steps_to_target: object   # int or None
    precond_flops: int


def record_for(m: Matrix, step: int, layer: int, head: int) -> ConditionRecord:
    rep = linalg.conditioning_report(m)
    norms = linalg.row_norms(m)
    if math.isinf(rep.kappa):
        flag = FLAG_RANK_DEFICIENT
    elif math.isinf(rep.mu):
        flag = FLAG_OVERFLOW
    else:
        flag = FLAG_OK
    return ConditionRecord(step=step, layer=layer, head=head, kappa=rep.kappa,
                           mu_log=rep.mu_log, row_norm_min=min(norms),
                           row_norm_max=max(norms), flag=flag)


def sample_conditioning(params: ModelParams, cfg: ModelConfig, tokens, step: int):
    """(output_records, weight_records), one of each per layer and head."""
    probe = []
    model_forward(tokens, params, cfg, probe=probe)
    out_records = []
    weight_records = []
    for li, layer in enumerate(probe):
        for hi, (weights, out) in enumerate(layer):
            out_records.append(record_for(out, step, li, hi))
            weight_records.append(record_for(weights, step, li, hi))
    return out_records, weight_records


def average_protocol(records):
    """Mean kappa over heads within each layer, then over layers.

    Flagged-infinite records are excluded; returns (average, excluded_count),
    with average = inf when nothing finite remains.
    """
    by_layer = {}
    excluded = 0
    for r in records:
        if math.isfinite(r.kappa):
            by_layer.setdefault(r.layer, []).append(r.kappa)
        else:
            excluded += 1
    if not by_layer:
        return math.inf, excluded
    layer_means = [sum(v) / len(v) for v in by_layer.values()]
    return sum(layer_means) / len(layer_means), excluded


def smoothed_accuracy(series):
    """Trailing window-5 median of (step, accuracy) pairs, per logged step."""
    out = []
    window = []
    for step, acc in series:
        window.append(acc)
        out.append((step, statistics.median(window[-5:])))
    return out


def steps_to_accuracy(series, target):
    """First logged step whose smoothed accuracy reaches target, else None."""
    for step, smoothed in smoothed_accuracy(series):
        if smoothed >= target:
            return step
    return None


def final_smoothed_accuracy(series):
    sm = smoothed_accuracy(series)
    return sm[-1][1] if sm else 0.0


# CSV plumbing ----------------------------------------------------------------

def fmt(x: float) -> str:
    """Shortest round-trip decimal form; 'inf' and 'nan' parse back via float()."""
    return repr(float(x))


def write_condition_csv(path, records):
    with open(path, "w", encoding="ascii") as f:
        f.write(CONDITION_HEADER + "\n")
        for r in records:
            f.write(f"{r.step},{r.layer},{r.head},{fmt(r.kappa)},{fmt(r.mu_log)},"
                    f"{fmt(r.row_norm_min)},{fmt(r.row_norm_max)},{r.flag}\n")


def read_condition_csv(path):
    records = []
    with open(path, "r", encoding="ascii") as f:
        header = f.readline().rstrip("\n")
        if header != CONDITION_HEADER:
            raise ValueError(f"{path}: unexpected header {header!r}")
        for line in f:
            step, layer, head, kappa, mu_log, rmin, rmax, flag = line.rstrip("\n").split(",")
            records.append(ConditionRecord(
                step=int(step), layer=int(layer), head=int(head),
                kappa=float(kappa), mu_log=float(mu_log),
                row_norm_min=float(rmin), row_norm_max=float(rmax), flag=flag))
    return records


def write_summary_csv(path, rows):
    """rows: (step, avg_kappa, train_loss, eval_acc) tuples."""
    with open(path, "w", encoding="ascii") as f:
        f.write(SUMMARY_HEADER + "\n")
        for step, avg_kappa, train_loss, eval_acc in rows:
            f.write(f"{step},{fmt(avg_kappa)},{fmt(train_loss)},{fmt(eval_acc)}\n")


def read_summary_csv(path):
    rows = []
    with open(path, "r", encoding="ascii") as f:
        header = f.readline().rstrip("\n")
        if header != SUMMARY_HEADER:
            raise ValueError(f"{path}: unexpected header {header!r}")
        for line in f:
            step, avg_kappa, train_loss, eval_acc = line.rstrip("\n").split(",")
            rows.append((int(step), float(avg_kappa), float(train_loss), float(eval_acc)))
    return rows
