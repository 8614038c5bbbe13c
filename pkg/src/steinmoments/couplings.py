"""Samplers for the built-in exact Stein couplings.

Four models are provided: sums of i.i.d. centred summands, centred counts of
m-runs under local dependence, uncentred m-run counts with a size-bias
coupling, and sums of neighbourhood statistics of an Erdos-Renyi graph.
Every sampler is vectorised over a block of replicates and draws only from
the generator it is handed.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterator, Optional, Tuple, Union

import numpy as np
from scipy import stats

from .core import ConfigError, CouplingParams, CouplingSample, DomainError
from .graphs import (
    StatisticSpec,
    ball,
    batched_statistic_values,
    evaluate_statistic,
    generate_er,
    r_neighbourhood,
    resample_edges,
    skip_positions,
    skip_sample_pairs,
    statistic_values,
)
from .rng import PILOT, replicate_rng

__all__ = [
    "IndependentSumParams",
    "RunsParams",
    "ERParams",
    "ModelSpec",
    "CouplingBatch",
    "sample_independent_sum",
    "sample_local_dependence_runs",
    "sample_size_bias_runs",
    "sample_er_neighbourhood",
    "sample_batch",
    "size_bias_transform",
    "run_indicators",
    "resolve_mu_x",
    "exact_mean",
    "exact_variance",
    "coupling_params",
]

KINDS = ("independent_sum", "local_dependence_runs", "size_bias_runs", "er_neighbourhood")
SUMMANDS = ("rademacher", "centered_bernoulli", "centered_exponential")

# cap on (replicates x vector length) held in memory at once
_CHUNK_CELLS = 1 << 22


# ---------------------------------------------------------------------------
# parameters

@dataclass(frozen=True)
class IndependentSumParams:
    n: int
    summand: str = "rademacher"
    p: float = 0.5
    rate: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ConfigError(f"n must be an integer >= 1, got {self.n!r}")
        if self.summand not in SUMMANDS:
            raise ConfigError(f"unknown summand {self.summand!r}; choose from {SUMMANDS}")
        if self.summand == "centered_bernoulli" and not 0.0 < self.p < 1.0:
            raise ConfigError(f"p must lie in (0, 1), got {self.p!r}")
        if self.summand == "centered_exponential" and not self.rate > 0.0:
            raise ConfigError(f"rate must be > 0, got {self.rate!r}")

    def abs_norm(self, order: int) -> float:
        """Exact ||X_1||_order for an even order."""
        if self.summand == "rademacher":
            return 1.0
        if self.summand == "centered_bernoulli":
            p = self.p
            return (p * (1 - p) ** order + (1 - p) * p**order) ** (1.0 / order)
        # E(E - 1)^m for E ~ Exp(1) is the derangement number m! sum (-1)^j / j!
        m = int(order)
        derange = sum((-1) ** j * math.factorial(m) // math.factorial(j) for j in range(m + 1))
        return derange ** (1.0 / m) / self.rate

    @property
    def variance(self) -> float:
        return self.abs_norm(2) ** 2


@dataclass(frozen=True)
class RunsParams:
    """Circular Bernoulli trials with m-run windows."""

    n: int
    m: int = 2
    p: float = 0.5
    circular: bool = True

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ConfigError(f"m must be an integer >= 1, got {self.m!r}")
        if int(self.n) != self.n or self.n < self.m:
            raise ConfigError(f"n must be an integer >= m, got {self.n!r}")
        if not 0.0 < self.p <= 1.0:
            raise ConfigError(f"p must lie in (0, 1], got {self.p!r}")
        if not self.circular:
            raise ConfigError("only circular run models are supported")

    @property
    def q(self) -> float:
        """Probability that a window is a run, p^m."""
        return self.p**self.m

    @property
    def d(self) -> int:
        """Size of the dependency neighbourhood of one window."""
        return min(2 * self.m - 1, self.n)

    def variance(self) -> float:
        """Exact variance of the run count, summing window covariances."""
        n, m, q = self.n, self.m, self.q
        base = set(range(m))
        total = 0.0
        for shift in range(n):
            union = base | {(shift + t) % n for t in range(m)}
            total += self.p ** len(union) - q * q
        return n * total


@dataclass(frozen=True)
class ERParams:
    """G(n, lam/n) with X_i = U(N_r(i)).

    ``mu_x`` is either a number (taken as exact), ``"auto"`` (closed form when
    one is wired in, otherwise a pilot estimate) or ``"estimated"`` (always a
    pilot of ``n_pilot`` graphs).
    """

    n: int
    lam: float
    statistic: StatisticSpec = field(default_factory=lambda: StatisticSpec.degree_indicator({0}))
    mu_x: Union[float, str] = "auto"
    n_pilot: int = 2000

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ConfigError(f"n must be an integer >= 2, got {self.n!r}")
        if not self.lam >= 0.0 or self.lam > self.n:
            raise ConfigError(f"lam must lie in [0, n], got {self.lam!r}")
        if isinstance(self.mu_x, str) and self.mu_x not in ("auto", "estimated"):
            raise ConfigError(f"mu_x must be a number, 'auto' or 'estimated', got {self.mu_x!r}")
        if int(self.n_pilot) != self.n_pilot or self.n_pilot < 0:
            raise ConfigError(f"n_pilot must be a non-negative integer, got {self.n_pilot!r}")

    @property
    def p(self) -> float:
        return self.lam / self.n

    @property
    def r(self) -> int:
        return self.statistic.r

    def closed_form_mu_x(self) -> Optional[float]:
        st = self.statistic
        if st.kind == "degree_indicator" and st.r == 1:
            return float(stats.binom.pmf(sorted(st.degrees), self.n - 1, self.p).sum())
        return None


_PARAM_TYPES = {
    "independent_sum": IndependentSumParams,
    "local_dependence_runs": RunsParams,
    "size_bias_runs": RunsParams,
    "er_neighbourhood": ERParams,
}


@dataclass(frozen=True)
class ModelSpec:
    """A coupling model, its parameters and its base seed.

    ``g_scale`` multiplies G and exists only to build deliberately broken
    couplings for negative controls.
    """

    kind: str
    params: Union[IndependentSumParams, RunsParams, ERParams]
    seed: int = 0
    g_scale: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}; choose from {KINDS}")
        if not isinstance(self.params, _PARAM_TYPES[self.kind]):
            raise ConfigError(f"{self.kind} needs {_PARAM_TYPES[self.kind].__name__}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        if not self.g_scale > 0.0:
            raise ConfigError(f"g_scale must be > 0, got {self.g_scale!r}")

    @property
    def n(self) -> int:
        return self.params.n

    @property
    def model_id(self) -> str:
        return self.kind

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "seed": int(self.seed)}
        if self.g_scale != 1.0:
            out["g_scale"] = self.g_scale
        if isinstance(self.params, ERParams):
            pr = self.params
            out.update(n=pr.n, lam=pr.lam, statistic=pr.statistic.to_dict(), mu_x=pr.mu_x, n_pilot=pr.n_pilot)
        else:
            out.update(asdict(self.params))
            out.pop("circular", None)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ModelSpec":
        data = dict(data)
        try:
            kind = data.pop("kind")
        except KeyError:
            raise ConfigError("model needs a 'kind'") from None
        seed = int(data.pop("seed", 0))
        g_scale = float(data.pop("g_scale", 1.0))
        if kind not in KINDS:
            raise ConfigError(f"unknown model kind {kind!r}; choose from {KINDS}")
        if kind == "er_neighbourhood" and "statistic" in data:
            stat = data["statistic"]
            data["statistic"] = stat if isinstance(stat, StatisticSpec) else StatisticSpec.from_dict(stat)
        try:
            params = _PARAM_TYPES[kind](**data)
        except TypeError as exc:
            raise ConfigError(f"bad parameters for {kind}: {exc}") from None
        return cls(kind, params, seed, g_scale)


# ---------------------------------------------------------------------------
# samples

@dataclass(frozen=True)
class CouplingBatch:
    """Column arrays of coupling draws; ``d`` is always ``w_prime - w``."""

    w: np.ndarray
    w_prime: np.ndarray
    g: np.ndarray

    @property
    def d(self) -> np.ndarray:
        return self.w_prime - self.w

    def __len__(self) -> int:
        return self.w.size

    def samples(self) -> Iterator[CouplingSample]:
        for w, wp, g in zip(self.w.tolist(), self.w_prime.tolist(), self.g.tolist()):
            yield CouplingSample.from_pair(w, wp, g)

    @classmethod
    def concat(cls, parts) -> "CouplingBatch":
        parts = list(parts)
        return cls(*(np.concatenate([getattr(b, name) for b in parts]) for name in ("w", "w_prime", "g")))


def _chunks(size: int, width: int) -> Iterator[int]:
    step = max(1, _CHUNK_CELLS // max(1, width))
    done = 0
    while done < size:
        take = min(step, size - done)
        yield take
        done += take


def _independent_block(pr: IndependentSumParams, size: int, rng) -> CouplingBatch:
    n = pr.n
    # draw the total first, then the summand at a uniform index given the total
    if pr.summand == "centered_exponential":
        s = rng.gamma(n, 1.0 / pr.rate, size)
        share = rng.beta(1.0, n - 1.0, size) if n > 1 else np.ones(size)
        x_i = s * share - 1.0 / pr.rate
        w = s - n / pr.rate
    else:
        p = 0.5 if pr.summand == "rademacher" else pr.p
        s = rng.binomial(n, p, size)
        y_i = rng.random(size) < s / n
        if pr.summand == "rademacher":
            w = 2.0 * s - n
            x_i = np.where(y_i, 1.0, -1.0)
        else:
            w = s - n * p
            x_i = y_i - p
    w_prime = w - x_i
    return CouplingBatch(w, w_prime, n * (w_prime - w))


def run_indicators(xi: np.ndarray, m: int) -> np.ndarray:
    """R_j = xi_j ... xi_{j+m-1} along the last axis, indices taken mod n."""
    runs = xi.copy()
    for t in range(1, m):
        runs &= np.roll(xi, -t, axis=-1)
    return runs


def size_bias_transform(xi: np.ndarray, index: np.ndarray, m: int) -> np.ndarray:
    """Copy of the trial rows ``xi`` with xi_I..xi_{I+m-1} forced to 1."""
    xi = np.array(xi, dtype=bool, copy=True)
    n = xi.shape[-1]
    rows = np.arange(xi.shape[0])[:, None]
    xi[rows, (np.asarray(index)[:, None] + np.arange(m)) % n] = True
    return xi


def _local_runs_block(pr: RunsParams, size: int, rng) -> CouplingBatch:
    n, m, q = pr.n, pr.m, pr.q
    xi = rng.random((size, n)) < pr.p
    x = run_indicators(xi, m) - q
    w = x.sum(axis=1)
    index = rng.integers(0, n, size)
    offsets = np.unique(np.arange(-(m - 1), m) % n)
    rows = np.arange(size)
    local = x[rows[:, None], (index[:, None] + offsets) % n].sum(axis=1)
    return CouplingBatch(w, w - local, -n * x[rows, index])


def _size_bias_block(pr: RunsParams, size: int, rng) -> CouplingBatch:
    n, m = pr.n, pr.m
    xi = rng.random((size, n)) < pr.p
    w = run_indicators(xi, m).sum(axis=1).astype(float)
    index = rng.integers(0, n, size)
    w_s = run_indicators(size_bias_transform(xi, index, m), m).sum(axis=1).astype(float)
    return CouplingBatch(w, w_s, np.full(size, n * pr.q))


def _er_block_vectorized(pr: ERParams, mu_x: float, size: int, rng) -> CouplingBatch:
    n, p, st = pr.n, pr.p, pr.statistic
    gid, u, v = skip_sample_pairs(n, p, rng, size)
    x = batched_statistic_values(st, n, size, gid, u, v)
    rows = np.arange(size)
    root = rng.integers(0, n, size)
    inside = np.zeros((size, n), dtype=bool)
    inside[rows, root] = True
    for _ in range(st.r):
        grown = inside.copy()
        hit = inside[gid, u]
        grown[gid[hit], v[hit]] = True
        hit = inside[gid, v]
        grown[gid[hit], u[hit]] = True
        inside = grown
    keep = ~(inside[gid, u] | inside[gid, v])
    # fresh indicators for every pair meeting the ball: row (graph, a) covers
    # pairs {a, b}; pairs with both ends inside are owned by the smaller end
    owner_g, owner_a = np.nonzero(inside)
    row, b = skip_positions(n, p, rng, owner_g.size)
    g2, a = owner_g[row], owner_a[row]
    ok = (b != a) & (~inside[g2, b] | (b > a))
    g2, a, b = g2[ok], a[ok], b[ok]
    gid2 = np.concatenate([gid[keep], g2])
    u2 = np.concatenate([u[keep], np.minimum(a, b)])
    v2 = np.concatenate([v[keep], np.maximum(a, b)])
    x2 = batched_statistic_values(st, n, size, gid2, u2, v2)
    return CouplingBatch(x.sum(axis=1), x2.sum(axis=1), -n * (x[rows, root] - mu_x))


def _er_single(pr: ERParams, mu_x: float, rng) -> Tuple[float, float, float]:
    """One draw with incremental recomputation of the affected statistics."""
    n, p, st = pr.n, pr.p, pr.statistic
    g = generate_er(n, p, rng)
    x = statistic_values(st, g)
    root = int(rng.integers(0, n))
    overlay = resample_edges(g, ball(g, [root], st.r), p, rng)
    changed = overlay.changed_vertices
    x2 = x.copy()
    for i in sorted(ball(g, changed, st.r) | ball(overlay, changed, st.r)):
        x2[i] = evaluate_statistic(st, r_neighbourhood(overlay, i, st.r))
    return float(x.sum()), float(x2.sum()), -n * (float(x[root]) - mu_x)


def resolve_mu_x(pr: ERParams, seed: int) -> Tuple[float, float]:
    """E X_1 and its standard error (0 when exact)."""
    if not isinstance(pr.mu_x, str):
        return float(pr.mu_x), 0.0
    if pr.mu_x == "auto":
        exact = pr.closed_form_mu_x()
        if exact is not None:
            return exact, 0.0
    if pr.n_pilot < 2:
        raise ConfigError("mu_x must be estimated but n_pilot < 2")
    rng = replicate_rng(seed, 0, namespace=PILOT)
    st = pr.statistic
    if st.vectorized:
        per_graph = []
        for take in _chunks(pr.n_pilot, pr.n * 8):
            gid, u, v = skip_sample_pairs(pr.n, pr.p, rng, take)
            per_graph.append(batched_statistic_values(st, pr.n, take, gid, u, v).mean(axis=1))
        means = np.concatenate(per_graph)
    else:
        means = np.array([statistic_values(st, generate_er(pr.n, pr.p, rng)).mean()
                          for _ in range(pr.n_pilot)])
    return float(means.mean()), float(means.std(ddof=1) / math.sqrt(means.size))


# single-draw interfaces

def _one(batch: CouplingBatch) -> CouplingSample:
    return next(batch.samples())


def sample_independent_sum(params: IndependentSumParams, rng) -> CouplingSample:
    return _one(_independent_block(params, 1, rng))


def sample_local_dependence_runs(params: RunsParams, rng) -> CouplingSample:
    return _one(_local_runs_block(params, 1, rng))


def sample_size_bias_runs(params: RunsParams, rng) -> CouplingSample:
    return _one(_size_bias_block(params, 1, rng))


def sample_er_neighbourhood(params: ERParams, rng, mu_x: Optional[float] = None) -> CouplingSample:
    if mu_x is None:
        mu_x, _ = resolve_mu_x(params, 0)
    w, wp, g = _er_single(params, mu_x, rng)
    return CouplingSample.from_pair(w, wp, g)


def sample_batch(spec: ModelSpec, size: int, rng, mu_x: Optional[float] = None) -> CouplingBatch:
    """``size`` coupling draws from ``rng``, processed in memory-bounded chunks."""
    pr = spec.params
    if spec.kind == "independent_sum":
        parts = [_independent_block(pr, size, rng)]
    elif spec.kind == "local_dependence_runs":
        parts = [_local_runs_block(pr, take, rng) for take in _chunks(size, pr.n)]
    elif spec.kind == "size_bias_runs":
        parts = [_size_bias_block(pr, take, rng) for take in _chunks(size, pr.n)]
    else:
        if mu_x is None:
            mu_x, _ = resolve_mu_x(pr, spec.seed)
        if pr.statistic.vectorized:
            parts = [_er_block_vectorized(pr, mu_x, take, rng) for take in _chunks(size, pr.n * 8)]
        else:
            cols = np.array([_er_single(pr, mu_x, rng) for _ in range(size)]).reshape(-1, 3)
            parts = [CouplingBatch(cols[:, 0], cols[:, 1], cols[:, 2])]
    batch = CouplingBatch.concat(parts) if len(parts) > 1 else parts[0]
    if spec.g_scale != 1.0:
        batch = CouplingBatch(batch.w, batch.w_prime, batch.g * spec.g_scale)
    return batch


# ---------------------------------------------------------------------------
# exact model facts

def exact_mean(spec: ModelSpec) -> Optional[float]:
    """E W when known in closed form."""
    pr = spec.params
    if spec.kind in ("independent_sum", "local_dependence_runs"):
        return 0.0
    if spec.kind == "size_bias_runs":
        return pr.n * pr.q
    mu_x = pr.mu_x if not isinstance(pr.mu_x, str) else pr.closed_form_mu_x()
    return None if mu_x is None else pr.n * mu_x


def exact_variance(spec: ModelSpec) -> Optional[float]:
    pr = spec.params
    if spec.kind == "independent_sum":
        return pr.n * pr.variance
    if spec.kind in ("local_dependence_runs", "size_bias_runs"):
        return pr.variance()
    return None


def coupling_params(spec: ModelSpec, k: int) -> CouplingParams:
    """A = bound on ||G||_2k and B = bound on ||D||_2k for the exact coupling.

    All built-in couplings are exact, so every remainder parameter is zero.
    """
    if int(k) != k or k < 1:
        raise DomainError(f"k must be an integer >= 1, got {k!r}")
    two_k = 2 * int(k)
    pr = spec.params
    var = exact_variance(spec)
    sigma = math.sqrt(var) if var is not None else 0.0
    if spec.kind == "independent_sum":
        x = pr.abs_norm(two_k)
        return CouplingParams(a_norm=spec.g_scale * pr.n * x, b_norm=x, sigma=sigma)
    if spec.kind == "local_dependence_runs":
        q = pr.q
        x = (q * (1 - q) ** two_k + (1 - q) * q**two_k) ** (1.0 / two_k)
        # Minkowski over the d windows in the neighbourhood
        return CouplingParams(a_norm=spec.g_scale * pr.n * x, b_norm=pr.d * x, sigma=sigma)
    if spec.kind == "size_bias_runs":
        return CouplingParams(a_norm=spec.g_scale * pr.n * pr.q, b_norm=float(min(2 * pr.m - 1, pr.n)), sigma=sigma)
    from .bounds import er_d_norm_bound, er_g_norm_bound

    st = pr.statistic
    return CouplingParams(
        a_norm=spec.g_scale * er_g_norm_bound(pr.n, pr.lam, st.c, st.r, st.beta, two_k),
        b_norm=er_d_norm_bound(pr.lam, st.c, st.r, st.beta, two_k),
        sigma=sigma,
    )
