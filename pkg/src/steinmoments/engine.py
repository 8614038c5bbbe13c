"""Monte Carlo estimation of central moments, tails and the Stein identity.

Work is split into batches.  Batch ``j`` always draws from stream (seed, j)
and results are merged in batch order, so the number of worker threads never
changes a result.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .bounds import BoundValue
from .core import ConfigError, MomentEstimate, MomentOrder, NumericError
from .couplings import CouplingBatch, ModelSpec, exact_mean, exact_variance, resolve_mu_x, sample_batch
from .rng import replicate_rng
from .stats import norm_estimate

__all__ = [
    "MIN_VERDICT_BATCHES",
    "MAX_ORDER",
    "Verdict",
    "IdentityRow",
    "IdentityReport",
    "TailEstimate",
    "worker_count",
    "simulate",
    "estimate_central_moments",
    "check_stein_identity",
    "estimate_tail",
    "verify_bounds",
    "judge_status",
]

log = logging.getLogger(__name__)

MIN_VERDICT_BATCHES = 30
MAX_ORDER = 12
MAX_F_DEGREE = 6
Z_LIMIT = 4.0
SE_MULTIPLIER = 3.0


def worker_count(requested: Optional[int] = None) -> int:
    """Threads to use: ``requested`` if given, else STEIN_THREADS, else 1."""
    if requested is None:
        requested = int(os.environ.get("STEIN_THREADS", "1") or 1)
    return max(1, int(requested))


def _split(n_samples: int, n_batches: int) -> int:
    if n_samples <= 0:
        raise ConfigError(f"n_samples must be positive, got {n_samples}")
    if n_batches < 2:
        raise ConfigError(f"n_batches must be >= 2, got {n_batches}")
    if n_samples % n_batches:
        raise ConfigError(f"n_samples={n_samples} is not divisible by n_batches={n_batches}")
    return n_samples // n_batches


def simulate(spec: ModelSpec, n_samples: int, n_batches: int = MIN_VERDICT_BATCHES,
             seed: Optional[int] = None, threads: Optional[int] = None) -> CouplingBatch:
    """Draw ``n_samples`` coupling samples, batch j from stream (seed, j)."""
    per = _split(n_samples, n_batches)
    seed = spec.seed if seed is None else seed
    mu_x = resolve_mu_x(spec.params, seed)[0] if spec.kind == "er_neighbourhood" else None

    def run(j: int) -> CouplingBatch:
        return sample_batch(spec, per, replicate_rng(seed, j), mu_x=mu_x)

    workers = min(worker_count(threads), n_batches)
    if workers == 1:
        parts = [run(j) for j in range(n_batches)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(n_batches)))
    return CouplingBatch.concat(parts)


def _center(spec: ModelSpec, w: np.ndarray) -> Tuple[float, bool]:
    mu = exact_mean(spec)
    if mu is not None:
        return mu, True
    return float(w.mean()), False


def _check_order(order) -> MomentOrder:
    r = MomentOrder.of(order)
    if r.value > MAX_ORDER:
        log.warning("order %d exceeds %d; standard errors may be unreliable", r.value, MAX_ORDER)
    return r


def moments_from_batch(spec: ModelSpec, batch: CouplingBatch, orders: Sequence,
                       n_batches: int) -> List[MomentEstimate]:
    mu, exact = _center(spec, batch.w)
    influence = None if exact else batch.w
    return [norm_estimate(batch.w, _check_order(r), n_batches, center=mu, center_influence=influence)
            for r in orders]


def estimate_central_moments(spec: ModelSpec, orders: Sequence, n_samples: int,
                             n_batches: int = MIN_VERDICT_BATCHES, seed: Optional[int] = None,
                             threads: Optional[int] = None) -> List[MomentEstimate]:
    """Estimates of ||W - mu||_r for each order, with batch-means errors.

    The exact mean is used whenever the model supplies one; otherwise the
    sample mean, with its fluctuation folded into the standard error.
    """
    batch = simulate(spec, n_samples, n_batches, seed, threads)
    return moments_from_batch(spec, batch, orders, n_batches)


# ---------------------------------------------------------------------------
# Stein identity

@dataclass(frozen=True)
class IdentityRow:
    degree: int
    lhs: float
    rhs: float
    std_error: float

    @property
    def z_score(self) -> float:
        diff = self.lhs - self.rhs
        if self.std_error == 0.0:
            if abs(diff) <= 1e-12 * max(1.0, abs(self.lhs), abs(self.rhs)):
                return 0.0
            raise NumericError(f"identity difference {diff} has zero standard error")
        return diff / self.std_error


@dataclass(frozen=True)
class IdentityReport:
    rows: Tuple[IdentityRow, ...]

    @property
    def max_abs_z(self) -> float:
        return max((abs(r.z_score) for r in self.rows), default=0.0)

    def passes(self, limit: float = Z_LIMIT) -> bool:
        return self.max_abs_z <= limit


def identity_from_batch(spec: ModelSpec, batch: CouplingBatch, max_f_degree: int) -> IdentityReport:
    if not 1 <= max_f_degree <= MAX_F_DEGREE:
        raise ConfigError(f"max_f_degree must lie in 1..{MAX_F_DEGREE}, got {max_f_degree}")
    w, wp, g = batch.w, batch.w_prime, batch.g
    mu, exact = _center(spec, w)
    a, b = w - mu, wp - mu
    rows = []
    for j in range(1, max_f_degree + 1):
        lhs = g * (b**j - a**j)
        rhs = a ** (j + 1)
        diff = lhs - rhs
        if not exact:
            # derivative of the paired difference with respect to the plug-in centre
            slope = float(np.mean(-j * g * (b ** (j - 1) - a ** (j - 1)) + (j + 1) * a**j))
            diff = diff + slope * (w - mu)
        se = float(diff.std(ddof=1) / math.sqrt(diff.size)) if diff.size > 1 else 0.0
        rows.append(IdentityRow(j, float(lhs.mean()), float(rhs.mean()), se))
    return IdentityReport(tuple(rows))


def check_stein_identity(spec: ModelSpec, max_f_degree: int, n_samples: int,
                         seed: Optional[int] = None, n_batches: int = MIN_VERDICT_BATCHES,
                         threads: Optional[int] = None) -> IdentityReport:
    """Paired comparison of E[G(f(W') - f(W))] with E[(W - mu) f(W)].

    Uses f_j(w) = (w - mu)^j for j = 1..max_f_degree.
    """
    if not 1 <= max_f_degree <= MAX_F_DEGREE:
        raise ConfigError(f"max_f_degree must lie in 1..{MAX_F_DEGREE}, got {max_f_degree}")
    batch = simulate(spec, n_samples, n_batches, seed, threads)
    return identity_from_batch(spec, batch, max_f_degree)


# ---------------------------------------------------------------------------
# tails

@dataclass(frozen=True)
class TailEstimate:
    t: float
    p_hat: float
    std_error: float


MIN_TAIL_SAMPLES = 10_000


def tails_from_batch(spec: ModelSpec, batch: CouplingBatch, thresholds: Sequence[float],
                     standardize: bool = False) -> List[TailEstimate]:
    mu, _ = _center(spec, batch.w)
    dev = np.abs(batch.w - mu)
    if standardize:
        var = exact_variance(spec)
        dev = dev / math.sqrt(var if var is not None else float(batch.w.var(ddof=1)))
    n = dev.size
    out = []
    for t in thresholds:
        p = float(np.count_nonzero(dev > t)) / n
        out.append(TailEstimate(float(t), p, math.sqrt(p * (1.0 - p) / n)))
    return out


def estimate_tail(spec: ModelSpec, thresholds: Sequence[float], n_samples: int,
                  seed: Optional[int] = None, n_batches: int = MIN_VERDICT_BATCHES,
                  standardize: bool = False, threads: Optional[int] = None) -> List[TailEstimate]:
    """Empirical P(|W - mu| > t) (or of the standardised deviation) with binomial errors."""
    if n_samples < MIN_TAIL_SAMPLES:
        raise ConfigError(f"tail estimation needs at least {MIN_TAIL_SAMPLES} samples")
    batch = simulate(spec, n_samples, n_batches, seed, threads)
    return tails_from_batch(spec, batch, thresholds, standardize)


# ---------------------------------------------------------------------------
# verdicts

HOLDS = "holds"
VIOLATED = "violated"
INCONCLUSIVE = "inconclusive"
INAPPLICABLE = "bound_inapplicable"


@dataclass(frozen=True)
class Verdict:
    """A deterministic bound against a noisy estimate, with a 3-SE margin."""

    bound: BoundValue
    estimate: MomentEstimate
    status: str

    @property
    def dominates(self) -> bool:
        """The estimate plus three standard errors lies below the bound."""
        return self.status == HOLDS

    @classmethod
    def judge(cls, bound: BoundValue, estimate: MomentEstimate) -> "Verdict":
        return cls(bound, estimate, judge_status(bound, estimate.point, estimate.std_error))


def judge_status(bound: BoundValue, point: float, std_error: float) -> str:
    """Compare a bound with an estimate using a 3-SE band."""
    if not bound.applicable:
        return INAPPLICABLE
    margin = SE_MULTIPLIER * std_error
    if point - margin > bound.value:
        return VIOLATED
    if point + margin <= bound.value:
        return HOLDS
    return INCONCLUSIVE


def verify_bounds(spec: ModelSpec, bound_set: Sequence[Tuple[int, BoundValue]],
                  estimates: Sequence[MomentEstimate]) -> List[Verdict]:
    """Judge each (order, bound) pair against the estimate of the same order."""
    by_order = {e.order.value: e for e in estimates}
    verdicts = []
    for order, bound in bound_set:
        est = by_order.get(MomentOrder.of(order).value)
        if est is None:
            raise ConfigError(f"no estimate of order {order} for model {spec.model_id}")
        if est.n_batches < MIN_VERDICT_BATCHES:
            raise ConfigError(f"verdicts need >= {MIN_VERDICT_BATCHES} batches, got {est.n_batches}")
        verdicts.append(Verdict.judge(bound, est))
    return verdicts
