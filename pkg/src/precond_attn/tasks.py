"""Synthetic sequence tasks: copy, majority, and a small nested list-op task.

Instances are (tokens, label) pairs; generation is fully determined by the
seed. dump_instances writes the shared text format: space-separated token
ids, a tab, then the label (space-separated ids again for per-position
labels).
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .errors import InputError

# list-op token ids: digits 0..9, then the three operators and the closer
OP_MAX = 10
OP_MIN = 11
OP_MED = 12
CLOSE = 13
LISTOPS_VOCAB = 14
LISTOPS_CLASSES = 10


@dataclass(frozen=True)
class TaskInstance:
    tokens: tuple
    label: object  # int, or tuple of ints for per-position tasks


def gen_copy(seed: int, n: int, vocab: int, count: int) -> list:
    """Uniform random token strings; the label repeats the input per position."""
    if n < 2:
        raise InputError(f"copy needs n >= 2, got {n}")
    if vocab < 2:
        raise InputError(f"copy needs vocab >= 2, got {vocab}")
    rng = random.Random(seed)
    out = []
    for _ in range(count):
        toks = tuple(rng.randrange(vocab) for _ in range(n))
        out.append(TaskInstance(tokens=toks, label=toks))
    return out


def gen_majority(seed: int, n: int, vocab: int, count: int) -> list:
    """Label is the most frequent token id; n must be odd and ties, which can
    still happen for vocab > 2, resolve to the smallest id."""
    if n < 1 or n % 2 == 0:
        raise InputError(f"majority needs odd n, got {n}")
    if vocab < 2:
        raise InputError(f"majority needs vocab >= 2, got {vocab}")
    rng = random.Random(seed)
    out = []
    for _ in range(count):
        toks = tuple(rng.randrange(vocab) for _ in range(n))
        counts = [0] * vocab
        for t in toks:
            counts[t] += 1
        label = max(range(vocab), key=lambda i: (counts[i], -i))
        out.append(TaskInstance(tokens=toks, label=label))
    return out


def gen_listops_mini(seed: int, depth: int, count: int) -> list:
    """Nested prefix expressions over digits with MAX, MIN and MED operators.

    depth caps the nesting level (1 to 3); MED takes the lower median. The
    label is the expression value, always a digit.
    """
    if not 1 <= depth <= 3:
        raise InputError(f"listops depth must be 1..3, got {depth}")
    rng = random.Random(seed)
    out = []
    for _ in range(count):
        toks, value = _rand_expr(rng, depth)
        out.append(TaskInstance(tokens=tuple(toks), label=value))
    return out


def _rand_expr(rng, depth):
    op = rng.randrange(3)
    argc = rng.randint(2, 3)
    toks = [OP_MAX + op]
    vals = []
    for _ in range(argc):
        if depth > 1 and rng.random() < 0.5:
            sub, val = _rand_expr(rng, depth - 1)
            toks.extend(sub)
        else:
            val = rng.randrange(10)
            toks.append(val)
        vals.append(val)
    toks.append(CLOSE)
    if op == 0:
        value = max(vals)
    elif op == 1:
        value = min(vals)
    else:
        value = sorted(vals)[(len(vals) - 1) // 2]
    return toks, value


def listops_max_len(depth: int) -> int:
    """Longest possible token string for the given nesting depth."""
    n = 5  # op + three digits + close
    for _ in range(depth - 1):
        n = 2 + 3 * n
    return n


def dump_instances(instances, path):
    with open(path, "w", encoding="ascii") as f:
        for inst in instances:
            toks = " ".join(str(t) for t in inst.tokens)
            if isinstance(inst.label, tuple):
                label = " ".join(str(t) for t in inst.label)
            else:
                label = str(inst.label)
            f.write(f"{toks}\t{label}\n")


def load_instances(path) -> list:
    out = []
    with open(path, "r", encoding="ascii") as f:
        for line_no, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                toks_part, label_part = line.split("\t")
                toks = tuple(int(t) for t in toks_part.split())
                label_ids = [int(t) for t in label_part.split()]
            except ValueError:
                raise InputError(f"{path}:{line_no}: not 'tokens<TAB>label'")
            label = tuple(label_ids) if len(label_ids) > 1 else label_ids[0]
            out.append(TaskInstance(tokens=toks, label=label))
    return out


TASKS = ("copy", "majority", "listops")


def generate(task: str, seed: int, count: int, n: int = 8, vocab: int = 8,
             depth: int = 2) -> list:
    if task == "copy":
        return gen_copy(seed, n, vocab, count)
    if task == "majority":
        return gen_majority(seed, n, vocab, count)
    if task == "listops":
        return gen_listops_mini(seed, depth, count)
    raise InputError(f"unknown task {task!r}, pick from {TASKS}")
