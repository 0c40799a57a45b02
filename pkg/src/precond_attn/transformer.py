"""Toy pre-norm transformer classifier built on the autodiff layer.

One layer is  h = multihead(x) + x;  out = h + ffn(norm(h))  where
ffn(z) = gelu(z W1 + b1) W2 + b2 and norm is optional per-row layer norm
(applied inside the feedforward branch only). The attention input is the
raw residual stream. Sequence classification mean-pools rows before the
output projection; per-position tasks project every row.
"""

from __future__ import annotations

import json
import math
import random
from array import array
from dataclasses import dataclass

from . import autodiff as ad
from .attention import AttentionSpec, HeadParams, multi_head
from .backend import K
from .errors import InputError
from .matrix import Matrix


@dataclass(frozen=True)
class ModelConfig:
    vocab: int
    num_classes: int
    n_max: int
    d_model: int = 32
    head_count: int = 4
    layer_count: int = 1
    d_ff: int = 64
    mode: str = "standard"
    scale_scores: bool = True
    use_norm: bool = True
    per_position: bool = False

    def attention_spec(self) -> AttentionSpec:
        return AttentionSpec(self.d_model, self.head_count, self.n_max,
                             self.mode, self.scale_scores)


@dataclass
class LayerParams:
    heads: tuple
    ln_gain: ad.Node | None
    ln_offset: ad.Node | None
    w1: ad.Node
    b1: ad.Node
    w2: ad.Node
    b2: ad.Node


@dataclass
class ModelParams:
    embed: ad.Node
    pos: ad.Node
    layers: tuple
    out_proj: ad.Node

    def named_parameters(self):
        yield "embed", self.embed
        yield "pos", self.pos
        for i, lp in enumerate(self.layers):
            for j, hp in enumerate(lp.heads):
                yield f"layer{i}.head{j}.q", hp.q
                yield f"layer{i}.head{j}.k", hp.k
                yield f"layer{i}.head{j}.v", hp.v
            if lp.ln_gain is not None:
                yield f"layer{i}.ln_gain", lp.ln_gain
                yield f"layer{i}.ln_offset", lp.ln_offset
            yield f"layer{i}.w1", lp.w1
            yield f"layer{i}.b1", lp.b1
            yield f"layer{i}.w2", lp.w2
            yield f"layer{i}.b2", lp.b2
        yield "out_proj", self.out_proj

    def parameters(self) -> list:
        return [node for _, node in self.named_parameters()]


def init_model(cfg: ModelConfig, seed: int) -> ModelParams:
    """Xavier-uniform projections, zero biases, N(0, 0.02) embeddings.

    The output head starts at zero so an untrained model predicts the
    uniform distribution exactly (initial loss = ln(num_classes)).
    """
    rng = random.Random(seed)

    def xavier(fan_in, fan_out):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        return ad.parameter(Matrix.from_flat(
            fan_in, fan_out,
            [rng.uniform(-limit, limit) for _ in range(fan_in * fan_out)]))

    def gauss(r, c, std=0.02):
        return ad.parameter(Matrix.from_flat(
            r, c, [rng.gauss(0.0, std) for _ in range(r * c)]))

    d, dh = cfg.d_model, cfg.d_model // cfg.head_count
    embed = gauss(cfg.vocab, d)
    pos = gauss(cfg.n_max, d)
    layers = []
    for _ in range(cfg.layer_count):
        heads = tuple(HeadParams(q=xavier(d, dh), k=xavier(d, dh), v=xavier(d, dh))
                      for _ in range(cfg.head_count))
        if cfg.use_norm:
            ln_gain = ad.parameter(Matrix.full(1, d, 1.0))
            ln_offset = ad.parameter(Matrix.zeros(1, d))
        else:
            ln_gain = ln_offset = None
        layers.append(LayerParams(
            heads=heads, ln_gain=ln_gain, ln_offset=ln_offset,
            w1=xavier(d, cfg.d_ff), b1=ad.parameter(Matrix.zeros(1, cfg.d_ff)),
            w2=xavier(cfg.d_ff, d), b2=ad.parameter(Matrix.zeros(1, d))))
    out_proj = ad.parameter(Matrix.zeros(d, cfg.num_classes))
    return ModelParams(embed=embed, pos=pos, layers=tuple(layers), out_proj=out_proj)


def layer_forward(x: ad.Node, lp: LayerParams, spec: AttentionSpec, use_norm: bool,
                  fixed_c=None, probe=None, capture_c=None) -> ad.Node:
    h = ad.add(multi_head(x, lp.heads, spec, fixed_c, probe, capture_c), x)
    ff_in = ad.layer_norm_rows(h, lp.ln_gain, lp.ln_offset) if use_norm else h
    hidden = ad.gelu(ad.add(ad.matmul(ff_in, lp.w1), lp.b1))
    return ad.add(h, ad.add(ad.matmul(hidden, lp.w2), lp.b2))


def model_forward(tokens, params: ModelParams, cfg: ModelConfig,
                  fixed_c=None, probe=None, capture_c=None) -> ad.Node:
    """Logits for one token sequence.

    fixed_c, when given, is a per-layer list of per-head preconditioners;
    capture_c, when given, receives one such list per layer as built.
    probe, when given, receives one list per layer of per-head
    (applied_weights, output) value pairs.
    """
    tokens = list(tokens)
    n = len(tokens)
    if n < 1:
        raise InputError("empty token sequence")
    if n > cfg.n_max:
        raise InputError(f"sequence length {n} exceeds the model maximum {cfg.n_max}")
    x = ad.add(ad.embed(params.embed, tokens), ad.embed(params.pos, range(n)))
    spec = cfg.attention_spec()
    for li, lp in enumerate(params.layers):
        layer_probe = None
        if probe is not None:
            layer_probe = []
            probe.append(layer_probe)
        layer_cs = None
        if capture_c is not None:
            layer_cs = []
            capture_c.append(layer_cs)
        fc = fixed_c[li] if fixed_c is not None else None
        x = layer_forward(x, lp, spec, cfg.use_norm, fc, layer_probe, layer_cs)
    if cfg.per_position:
        return ad.matmul(x, params.out_proj)
    pool = ad.constant(Matrix.full(1, n, 1.0 / n))
    return ad.matmul(ad.matmul(pool, x), params.out_proj)


def model_loss(tokens, label, params: ModelParams, cfg: ModelConfig):
    """(loss, logits) for one instance; label is an int or per-position tuple."""
    logits = model_forward(tokens, params, cfg)
    targets = list(label) if cfg.per_position else [label]
    return ad.cross_entropy_loss(logits, targets), logits


def argmax_row(m: Matrix, i: int) -> int:
    base = i * m.cols
    best = 0
    for j in range(1, m.cols):
        if m.data[base + j] > m.data[base + best]:
            best = j
    return best


def instance_accuracy(logits: Matrix, label, per_position: bool) -> float:
    if per_position:
        hits = sum(1 for i in range(logits.rows) if argmax_row(logits, i) == label[i])
        return hits / logits.rows
    return 1.0 if argmax_row(logits, 0) == label else 0.0


class Adam:
    """Adam with decoupled weight decay.

    Bias corrections 1 - beta**t are computed here, once per step, and handed
    to the update kernel so both backends consume identical doubles. A None
    gradient counts as zero.
    """

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8,
                 weight_decay=0.0):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.m = [K.zeros(len(p.value.data)) for p in self.params]
        self.v = [K.zeros(len(p.value.data)) for p in self.params]
        self.t = 0

    def step(self, lr=None):
        self.t += 1
        if lr is None:
            lr = self.lr
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad.data if p.grad is not None else K.zeros(len(p.value.data))
            K.adam_update(p.value.data, g, m, v, lr, self.beta1, self.beta2,
                          self.eps, self.weight_decay, bc1, bc2)


def save_params(params: ModelParams, path):
    """One JSON header line (names and shapes), then raw float64 buffers."""
    names = []
    shapes = []
    bufs = []
    for name, node in params.named_parameters():
        names.append(name)
        shapes.append([node.value.rows, node.value.cols])
        bufs.append(node.value.data.tobytes())
    with open(path, "wb") as f:
        f.write(json.dumps({"names": names, "shapes": shapes}).encode() + b"\n")
        for b in bufs:
            f.write(b)


def load_params(path) -> dict:
    """Read a save_params blob back as {name: Matrix}."""
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode())
        out = {}
        for name, (r, c) in zip(header["names"], header["shapes"]):
            raw = f.read(8 * r * c)
            if len(raw) != 8 * r * c:
                raise InputError(f"parameter blob truncated at {name}")
            buf = array("d")
            buf.frombytes(raw)
            out[name] = Matrix(r, c, buf)
    return out
