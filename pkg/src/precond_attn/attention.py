"""Self-attention heads, with and without the row-norm preconditioner.

Three modes:
  standard         out = softmax(q k^T) v
  precond_output   out = C a with a = softmax(q k^T) v, C = diag(1/||a_i||)
  precond_weights  out = (C w) v with w = softmax(q k^T), C = diag(1/||w_i||)

C is always built from the detached forward value and enters the graph as a
constant, so no gradients flow through its entries; it costs n(2 d_h + 1)
extra operations per head, n(2 D + h) per layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import autodiff as ad
from . import linalg
from .errors import ContractError, ShapeError
from .matrix import Matrix

MODES = ("standard", "precond_output", "precond_weights")


@dataclass(frozen=True)
class AttentionSpec:
    model_dim: int
    head_count: int
    seq_len: int
    mode: str = "standard"
    scale_scores: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ContractError(f"unknown attention mode {self.mode!r}, pick from {MODES}")
        if self.model_dim < 1 or self.head_count < 1 or self.seq_len < 1:
            raise ContractError(
                f"dimensions must be positive, got D={self.model_dim} "
                f"h={self.head_count} n={self.seq_len}")
        if self.model_dim % self.head_count:
            raise ContractError(
                f"model_dim {self.model_dim} not divisible by head_count {self.head_count}")

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.head_count


@dataclass
class HeadParams:
    q: ad.Node
    k: ad.Node
    v: ad.Node


def _attention_weights(x: ad.Node, p: HeadParams, scale_scores: bool) -> ad.Node:
    q = ad.matmul(x, p.q)
    k = ad.matmul(x, p.k)
    scores = ad.matmul(q, ad.transpose(k))
    if scale_scores:
        scores = ad.scale(scores, 1.0 / math.sqrt(p.q.value.cols))
    return ad.softmax_rows(scores)


def standard_head(x: ad.Node, p: HeadParams, scale_scores: bool = True,
                  probe=None) -> ad.Node:
    w = _attention_weights(x, p, scale_scores)
    out = ad.matmul(w, ad.matmul(x, p.v))
    if probe is not None:
        probe.append((w.value, out.value))
    return out


def preconditioned_head(x: ad.Node, p: HeadParams, mode: str = "precond_output",
                        scale_scores: bool = True, fixed_c: Matrix | None = None,
                        probe=None, capture_c=None) -> ad.Node:
    """One head with the diagonal row-norm preconditioner applied.

    fixed_c substitutes a caller-chosen C (used to differentiate through a
    frozen preconditioner); by default C is rebuilt from the forward value.
    probe, when given, collects (applied_weights, output) Matrix pairs;
    capture_c collects the C actually used.
    """
    if mode not in ("precond_output", "precond_weights"):
        raise ContractError(f"preconditioned_head cannot run in mode {mode!r}")
    w = _attention_weights(x, p, scale_scores)
    v = ad.matmul(x, p.v)
    if mode == "precond_output":
        a = ad.matmul(w, v)
        c = fixed_c if fixed_c is not None else linalg.build_preconditioner(a.value)
        out = ad.matmul(ad.constant(c), a)
        weights = w.value
    else:
        c = fixed_c if fixed_c is not None else linalg.build_preconditioner(w.value)
        cw = ad.matmul(ad.constant(c), w)
        out = ad.matmul(cw, v)
        weights = cw.value
    if probe is not None:
        probe.append((weights, out.value))
    if capture_c is not None:
        capture_c.append(c)
    return out


def multi_head(x: ad.Node, heads, spec: AttentionSpec, fixed_c=None,
               probe=None, capture_c=None) -> ad.Node:
    """Column-concatenate all head outputs (no output projection)."""
    heads = list(heads)
    if len(heads) != spec.head_count:
        raise ContractError(f"expected {spec.head_count} heads, got {len(heads)}")
    if x.value.cols != spec.model_dim:
        raise ShapeError(
            f"input is {x.value.rows}x{x.value.cols}, expected {spec.model_dim} columns")
    outs = []
    for i, p in enumerate(heads):
        if spec.mode == "standard":
            outs.append(standard_head(x, p, spec.scale_scores, probe))
        else:
            fc = fixed_c[i] if fixed_c is not None else None
            outs.append(preconditioned_head(x, p, spec.mode, spec.scale_scores,
                                            fc, probe, capture_c))
    return ad.concat_cols(outs)


def preconditioner_flops_per_head(spec: AttentionSpec) -> int:
    """Operations to build C for one head: n(2 d_h + 1)."""
    return spec.seq_len * (2 * spec.head_dim + 1)


def preconditioner_flops(spec: AttentionSpec) -> int:
    """Operations to build C for all heads of one layer: n(2 D + h)."""
    return spec.seq_len * (2 * spec.model_dim + spec.head_count)
