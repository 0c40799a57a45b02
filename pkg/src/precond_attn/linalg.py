"""Conditioning mathematics.

Singular values via one-sided Jacobi, the condition number kappa, the
scale-invariant complexity measure mu (a computable upper bound on kappa
built from the Frobenius norm and the product of singular values), the
attention-specific form of that bound, and the inverse-row-norm diagonal
preconditioner.

kappa and mu return math.inf instead of raising when a matrix is
numerically rank-deficient; mu is evaluated in log space and only
exponentiated when the result fits a double.
"""

from __future__ import annotations

import math
from array import array
from dataclasses import dataclass

from .backend import K
from .errors import NumericalError, ShapeError
from .matrix import Matrix

# Relative cutoff under which a singular value no longer counts toward rank.
RANK_RTOL = 1e-10
# One-sided Jacobi stops when every off-diagonal ratio falls below this.
JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100
# Row norms are clamped below by this before inversion.
ROW_NORM_FLOOR = 1e-12
# log(mu) magnitudes past this stay in log space; mu itself reports inf.
EXP_LIMIT = 700.0


@dataclass(frozen=True)
class SingularSpectrum:
    """Singular values in descending order plus the numerical rank.

    rank counts the values above RANK_RTOL times the largest one.
    """

    values: tuple
    rank: int

    @property
    def full_rank(self) -> bool:
        return self.rank == len(self.values)


@dataclass(frozen=True)
class ConditioningReport:
    kappa: float
    mu: float
    mu_log: float
    frobenius: float
    guggenheimer_bound_holds: bool


@dataclass
class OpCounter:
    """Tally of floating-point operations, bucketed by kind."""

    mul: int = 0
    add: int = 0
    div: int = 0
    sqrt: int = 0

    @property
    def total(self) -> int:
        return self.mul + self.add + self.div + self.sqrt


def matmul(a: Matrix, b: Matrix) -> Matrix:
    if a.cols != b.rows:
        raise ShapeError(f"cannot multiply {a.rows}x{a.cols} by {b.rows}x{b.cols}")
    return Matrix(a.rows, b.cols, K.matmul(a.data, a.rows, a.cols, b.data, b.cols))


def softmax_rows(m: Matrix) -> Matrix:
    return Matrix(m.rows, m.cols, K.softmax_rows(m.data, m.rows, m.cols))


def frobenius_norm(m: Matrix) -> float:
    return K.frobenius(m.data)


def row_norms(m: Matrix) -> list:
    return list(K.row_norms(m.data, m.rows, m.cols))


def svd_values(m: Matrix) -> SingularSpectrum:
    """Singular values of m by one-sided Jacobi on the smaller dimension.

    Raises NumericalError if the sweep cap is hit before convergence.
    """
    if m.rows >= m.cols:
        w = array("d", m.data)
        n, k = m.rows, m.cols
    else:
        w = K.transpose(m.data, m.rows, m.cols)
        n, k = m.cols, m.rows
    sweeps, converged, worst = K.jacobi_sweeps(w, n, k, JACOBI_TOL, JACOBI_MAX_SWEEPS)
    if not converged:
        raise NumericalError(
            f"singular value iteration did not converge within {JACOBI_MAX_SWEEPS} "
            f"sweeps (worst off-diagonal ratio {worst:.3e})")
    norms = K.row_norms(K.transpose(w, n, k), k, n)
    values = sorted(norms, reverse=True)
    cutoff = RANK_RTOL * values[0]
    rank = sum(1 for v in values if v > cutoff)
    return SingularSpectrum(tuple(values), rank)


def _kappa_of(spectrum: SingularSpectrum) -> float:
    if not spectrum.full_rank:
        return math.inf
    return spectrum.values[0] / spectrum.values[-1]


def condition_number(m: Matrix) -> float:
    """sigma_max / sigma_min over all min(rows, cols) singular values.

    inf when the smallest singular value falls below RANK_RTOL relative
    to the largest (numerically rank-deficient).
    """
    return _kappa_of(svd_values(m))


def _log_mu_of(spectrum: SingularSpectrum, frob: float) -> float:
    if not spectrum.full_rank:
        return math.inf
    k = len(spectrum.values)
    log_prod = 0.0
    for v in spectrum.values:
        log_prod += math.log(v)
    return math.log(2.0) - log_prod + k * (math.log(frob) - 0.5 * math.log(k))


def _exp_guarded(lg: float) -> float:
    if math.isinf(lg):
        return math.inf
    if abs(lg) < EXP_LIMIT:
        return math.exp(lg)
    return math.inf


def log_mu_measure(m: Matrix) -> float:
    """log mu = log 2 - sum_i log sigma_i + k (log ||m||_F - 0.5 log k)."""
    return _log_mu_of(svd_values(m), frobenius_norm(m))


def mu_measure(m: Matrix) -> float:
    """Scale-invariant conditioning measure; an upper bound on kappa.

    mu = (2 / prod_i sigma_i) * (||m||_F / sqrt(k))^k with k = min(rows, cols).
    Computed in log space; inf when rank-deficient or past double range.
    """
    return _exp_guarded(log_mu_measure(m))


def guggenheimer_bound(m: Matrix) -> float:
    """Guggenheimer's determinant-based bound on kappa; identical to mu."""
    return mu_measure(m)


def log_attention_kappa_bound(q: Matrix, k: Matrix, v: Matrix) -> float:
    """log of the conditioning bound for a = softmax(q k^T) v.

    Substitutes ||softmax(q k^T)||_F <= sqrt(n) into the mu bound:
    kappa(a) <= (2 / prod_i sigma_i(a)) * (sqrt(n)/sqrt(r) * ||v||_F)^r
    with r = min(n, head_dim).
    """
    if q.shape != k.shape or q.shape != v.shape:
        raise ShapeError(
            f"q, k, v must share a shape, got {q.rows}x{q.cols}, "
            f"{k.rows}x{k.cols}, {v.rows}x{v.cols}")
    n = q.rows
    a = matmul(softmax_rows(matmul(q, k.transpose())), v)
    spectrum = svd_values(a)
    if not spectrum.full_rank:
        return math.inf
    r = len(spectrum.values)
    log_prod = 0.0
    for s in spectrum.values:
        log_prod += math.log(s)
    vf = frobenius_norm(v)
    return math.log(2.0) - log_prod + r * (0.5 * (math.log(n) - math.log(r)) + math.log(vf))


def attention_kappa_bound(q: Matrix, k: Matrix, v: Matrix) -> float:
    return _exp_guarded(log_attention_kappa_bound(q, k, v))


def build_preconditioner(a: Matrix, counter: OpCounter | None = None) -> Matrix:
    """Diagonal preconditioner from inverse row norms: C_ii = 1 / ||a_i||_2.

    Row norms below ROW_NORM_FLOOR are clamped to it before inversion, so C
    is always finite. Gradient-free by construction: uses only the value.
    When a counter is given, the exact operation tally of the row-norm pass
    plus the inversions is added to it (r*c mul, r*(c-1) add, r sqrt, r div).
    """
    norms = K.row_norms(a.data, a.rows, a.cols)
    if counter is not None:
        counter.mul += a.rows * a.cols
        counter.add += a.rows * (a.cols - 1)
        counter.sqrt += a.rows
        counter.div += a.rows
    inv = [1.0 / (nv if nv > ROW_NORM_FLOOR else ROW_NORM_FLOOR) for nv in norms]
    return Matrix.diagonal(inv)


def conditioning_report(m: Matrix) -> ConditioningReport:
    """kappa, mu (plus its log), Frobenius norm, and the bound check kappa <= mu.

    One singular value decomposition serves all fields. The bound check is
    vacuously true when both sides are flagged infinite, and true when mu
    alone overflowed double range.
    """
    spectrum = svd_values(m)
    frob = frobenius_norm(m)
    kappa = _kappa_of(spectrum)
    mu_log = _log_mu_of(spectrum, frob)
    mu = _exp_guarded(mu_log)
    if math.isinf(kappa):
        holds = True
    elif math.isinf(mu):
        holds = True
    else:
        holds = kappa <= mu * (1.0 + 1e-8)
    return ConditioningReport(kappa=kappa, mu=mu, mu_log=mu_log, frobenius=frob,
                              guggenheimer_bound_holds=holds)
