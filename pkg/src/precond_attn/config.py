"""Experiment configuration: one JSON file plus command-line overrides."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

from .attention import MODES
from .errors import InputError
from .tasks import TASKS, listops_max_len
from .transformer import ModelConfig


@dataclass
class ExperimentConfig:
    task: str = "majority"
    n: int = 9                  # sequence length (copy/majority); ignored by listops
    vocab: int = 2              # token alphabet size (copy/majority)
    depth: int = 2              # listops nesting depth
    d_model: int = 32
    head_count: int = 4
    layer_count: int = 1
    d_ff: int = 64
    mode: str = "standard"
    scale_scores: bool = True
    use_norm: bool = True
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.0
    warmup_steps: int = 0
    batch_size: int = 4
    steps: int = 200
    eval_every: int = 25
    eval_size: int = 128
    instrument_every: int = 10  # 0 disables conditioning probes
    seeds: int = 5              # seed count for compare runs
    seed: int = 0
    out_dir: str = "runs/run"


_FIELDS = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise InputError(f"config must be a JSON object, got {type(data).__name__}")
    if "config" in data and isinstance(data["config"], dict):
        data = data["config"]  # accept a run manifest as a config source
    unknown = [k for k in data if k not in _FIELDS]
    if unknown:
        raise InputError(f"unknown config field {unknown[0]!r}")
    return ExperimentConfig(**data)


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except OSError as e:
        raise InputError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise InputError(f"cannot parse config {path}: {e}") from e
    return config_from_dict(data)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return dataclasses.asdict(cfg)


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise InputError(message)


def validate(cfg: ExperimentConfig) -> None:
    """Raise InputError naming the offending field on any bad value."""
    _require(cfg.task in TASKS, f"task: unknown task {cfg.task!r}, expected one of {sorted(TASKS)}")
    _require(cfg.mode in MODES, f"mode: unknown mode {cfg.mode!r}, expected one of {list(MODES)}")
    _require(cfg.d_model >= 1, f"d_model: must be >= 1, got {cfg.d_model}")
    _require(cfg.head_count >= 1, f"head_count: must be >= 1, got {cfg.head_count}")
    _require(cfg.d_model % cfg.head_count == 0,
             f"head_count: must divide d_model, got {cfg.head_count} for d_model={cfg.d_model}")
    _require(cfg.layer_count >= 1, f"layer_count: must be >= 1, got {cfg.layer_count}")
    _require(cfg.d_ff >= 1, f"d_ff: must be >= 1, got {cfg.d_ff}")
    _require(cfg.steps >= 1, f"steps: must be >= 1, got {cfg.steps}")
    _require(cfg.batch_size >= 1, f"batch_size: must be >= 1, got {cfg.batch_size}")
    _require(cfg.eval_every >= 1, f"eval_every: must be >= 1, got {cfg.eval_every}")
    _require(cfg.eval_size >= 1, f"eval_size: must be >= 1, got {cfg.eval_size}")
    _require(cfg.instrument_every >= 0, f"instrument_every: must be >= 0, got {cfg.instrument_every}")
    _require(cfg.warmup_steps >= 0, f"warmup_steps: must be >= 0, got {cfg.warmup_steps}")
    _require(cfg.seeds >= 1, f"seeds: must be >= 1, got {cfg.seeds}")
    _require(cfg.lr > 0, f"lr: must be > 0, got {cfg.lr}")
    _require(0 <= cfg.beta1 < 1, f"beta1: must be in [0, 1), got {cfg.beta1}")
    _require(0 <= cfg.beta2 < 1, f"beta2: must be in [0, 1), got {cfg.beta2}")
    _require(cfg.adam_eps > 0, f"adam_eps: must be > 0, got {cfg.adam_eps}")
    _require(cfg.weight_decay >= 0, f"weight_decay: must be >= 0, got {cfg.weight_decay}")
    if cfg.task == "copy":
        _require(cfg.n >= 2, f"n: copy needs n >= 2, got {cfg.n}")
        _require(cfg.vocab >= 2, f"vocab: copy needs vocab >= 2, got {cfg.vocab}")
    elif cfg.task == "majority":
        _require(cfg.n >= 1 and cfg.n % 2 == 1, f"n: majority needs odd n >= 1, got {cfg.n}")
        _require(cfg.vocab >= 2, f"vocab: majority needs vocab >= 2, got {cfg.vocab}")
    elif cfg.task == "listops":
        _require(1 <= cfg.depth <= 3, f"depth: listops needs 1 <= depth <= 3, got {cfg.depth}")


def model_config(cfg: ExperimentConfig) -> ModelConfig:
    """Derive the model shape from the task and experiment settings."""
    if cfg.task == "listops":
        from .tasks import LISTOPS_CLASSES, LISTOPS_VOCAB
        vocab, classes = LISTOPS_VOCAB, LISTOPS_CLASSES
        n_max = listops_max_len(cfg.depth)
        per_position = False
    elif cfg.task == "copy":
        vocab, classes, n_max, per_position = cfg.vocab, cfg.vocab, cfg.n, True
    else:  # majority
        vocab, classes, n_max, per_position = cfg.vocab, cfg.vocab, cfg.n, False
    return ModelConfig(vocab=vocab, num_classes=classes, n_max=n_max,
                       d_model=cfg.d_model, head_count=cfg.head_count,
                       layer_count=cfg.layer_count, d_ff=cfg.d_ff, mode=cfg.mode,
                       scale_scores=cfg.scale_scores, use_norm=cfg.use_norm,
                       per_position=per_position)


def task_kwargs(cfg: ExperimentConfig) -> dict:
    if cfg.task == "listops":
        return {"depth": cfg.depth}
    return {"n": cfg.n, "vocab": cfg.vocab}
