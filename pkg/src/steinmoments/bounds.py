"""Closed-form central-moment and tail bounds for Stein couplings.

Every bound is a deterministic function of its numeric inputs.  Bounds whose
hypotheses fail come back as a :class:`BoundValue` with ``applicable=False``
rather than raising, so parameter sweeps can tabulate where each result
applies.  Genuine domain errors (odd orders where even ones are required,
negative scales, ...) still raise :class:`DomainError`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, Optional, Tuple, Union

from scipy import integrate, optimize

from .core import CouplingParams, DomainError, MomentOrder, NumericError, normal_abs_norm

__all__ = [
    "C_A",
    "PI_E_E2",
    "BoundValue",
    "TailProfile",
    "NormProfile",
    "thm1_moment_bound",
    "thm2_moment_bound",
    "thm3_moment_bound",
    "h_k",
    "thm4_normal_comparison_bound",
    "markov_tail",
    "moment_bound_from_tail",
    "optimized_markov_tail",
    "cor_bounded_tail",
    "cor_normal_tail",
    "weak_concentration_scale",
    "prop_independent_bound",
    "local_dep_moment_bound",
    "local_dep_tail",
    "size_bias_tail",
    "er_constant",
    "er_g_norm_bound",
    "er_d_norm_bound",
    "er_moment_bound",
    "binomial_A",
    "neighbourhood_norm_bound",
]

E = math.e
SQRT_6_OVER_E = math.sqrt(6.0 / E)
# pi * e^(e-2), the leading factor of the binomial moment constant
PI_E_E2 = math.pi * math.exp(E - 2.0)
C_A = PI_E_E2 / math.log(E - 1.0)
# 2^(-1/2) e^(5/2)
_HK_FACTOR = math.exp(2.5) / math.sqrt(2.0)
# 5 sqrt(2 e^3)
_HK_PRIME_FACTOR = 5.0 * math.sqrt(2.0 * E**3)
# guards alpha -> 0 in the n^{-1} G norm
_ALPHA_FLOOR = 2.220446049250313e-16


@dataclass(frozen=True)
class BoundValue:
    """A bound together with the formula variant that produced it.

    ``value`` is ``None`` exactly when the bound is inapplicable; ``reason``
    then says which hypothesis failed.  ``extras`` carries auxiliary numbers
    (the losing form, intermediate norms, the chosen k, ...).
    """

    value: Optional[float]
    form: str
    applicable: bool = True
    reason: str = ""
    extras: Dict[str, float] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.applicable:
            if self.value is None or not (self.value >= 0.0) or math.isinf(self.value):
                raise NumericError(f"{self.form}: applicable bound must be finite and >= 0, got {self.value!r}")
        elif self.value is not None:
            raise DomainError("inapplicable bound cannot carry a value")

    @classmethod
    def ok(cls, value: float, form: str, **extras: float) -> "BoundValue":
        return cls(float(value), form, True, "", dict(extras))

    @classmethod
    def inapplicable(cls, form: str, reason: str, **extras: float) -> "BoundValue":
        return cls(None, form, False, reason, dict(extras))

    def relabel(self, form: str) -> "BoundValue":
        return BoundValue(self.value, form, self.applicable, self.reason, dict(self.extras))


def _check_k(k) -> int:
    if isinstance(k, bool) or int(k) != k or k < 1:
        raise DomainError(f"k must be an integer >= 1, got {k!r}")
    return int(k)


def _safe_exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


# ---------------------------------------------------------------------------
# moment bounds

def _thm1_forms(a: float, b: float, eps: float, t_norm: float, k: int) -> Tuple[float, float]:
    m = 2 * k - 1
    rem = t_norm / (1.0 - eps)
    s = math.sqrt(b * (1.0 - eps) / (a * m))
    try:
        form1 = a / (1.0 - eps) * math.expm1(m * math.log1p(s)) + rem
    except OverflowError:
        form1 = math.inf
    form2 = math.sqrt(m * a * b / (1.0 - eps)) * _safe_exp(math.sqrt(b * (1.0 - eps) * m / a)) + rem
    return form1, form2


def thm1_moment_bound(params: CouplingParams, k: int) -> BoundValue:
    """Bound on ||W - mu||_{2k} from ||G||_{2k} <= A and ||D||_{2k} <= B.

    Both displayed forms are evaluated; the smaller one is returned and the
    other is kept in ``extras``.
    """
    k = _check_k(k)
    a, b, eps = params.a_norm, params.b_norm, params.eps
    if eps >= 1.0:
        return BoundValue.inapplicable("thm1", f"eps = {eps} >= 1")
    if a == 0.0:
        if b > 0.0:
            return BoundValue.inapplicable("thm1", "A = 0 with B > 0")
        return BoundValue.ok(params.t_norm / (1.0 - eps), "form1", form1=params.t_norm / (1.0 - eps))
    form1, form2 = _thm1_forms(a, b, eps, params.t_norm, k)
    if math.isinf(form1) and math.isinf(form2):
        return BoundValue.inapplicable("thm1", "bound overflows")
    if form1 <= form2:
        return BoundValue.ok(form1, "form1", form1=form1, form2=form2)
    return BoundValue.ok(form2, "form2", form1=form1, form2=form2)


def thm2_moment_bound(norm_g_r: float, norm_d_r: float, eps: float, eps_prime: float, r: int) -> BoundValue:
    """sqrt(2 (r-1) ||G||_r ||D||_r / (1 - eps - eps')), for r >= 2.

    Valid only when E|W' - mu|^r <= E|W - mu|^r; that hypothesis is the
    caller's responsibility.
    """
    if isinstance(r, bool) or int(r) != r or r < 2:
        raise DomainError(f"r must be an integer >= 2 (r = 1 is rejected), got {r!r}")
    for name, v in (("norm_g_r", norm_g_r), ("norm_d_r", norm_d_r), ("eps", eps), ("eps_prime", eps_prime)):
        if not v >= 0.0:
            raise DomainError(f"{name} must be >= 0, got {v!r}")
    if eps + eps_prime >= 1.0:
        return BoundValue.inapplicable("thm2", f"eps + eps' = {eps + eps_prime} >= 1")
    return BoundValue.ok(math.sqrt(2.0 * (r - 1) * norm_g_r * norm_d_r / (1.0 - eps - eps_prime)), "thm2")


def thm3_moment_bound(params: CouplingParams, k: int) -> BoundValue:
    k = _check_k(k)
    p = params
    m = 2 * k - 1
    denom = 1.0 - p.eps1 - p.eps2 - m * p.eps3
    if p.sigma == 0.0:
        return BoundValue.inapplicable("thm3", "sigma = 0")
    if denom <= 0.0:
        return BoundValue.inapplicable("thm3", f"eps1 + eps2 + (2k-1) eps3 = {1.0 - denom} >= 1")
    s = p.sigma
    inner = (
        1.0
        + (k - 1) * p.a_norm * p.b_norm**2 / (s**3 * math.sqrt(m)) * _safe_exp(p.b_norm * math.sqrt(m) / s)
        + p.t2_norm / s**2
    )
    value = s * math.sqrt(m) / math.sqrt(denom) * math.sqrt(inner)
    if math.isinf(value) or math.isnan(value):
        return BoundValue.inapplicable("thm3", "bound overflows")
    return BoundValue.ok(value, "thm3")


def h_k(params: CouplingParams, k: int) -> float:
    """Correction term 2^(-1/2) e^(5/2) sigma^-3 A B^2 sqrt(k-1)."""
    k = _check_k(k)
    if params.sigma <= 0.0:
        raise DomainError("h_k needs sigma > 0")
    return _HK_FACTOR * params.a_norm * params.b_norm**2 * math.sqrt(k - 1) / params.sigma**3


def thm4_normal_comparison_bound(params: CouplingParams, k: int) -> BoundValue:
    """Bound on ||sigma^-1 (W - mu)||_{2k} by ||N||_{2k} / sqrt(1 - E - h_k).

    ``params.eps4`` is the caller's bound on sigma^-2 ||T_2||_k.
    """
    k = _check_k(k)
    p = params
    if p.sigma <= 0.0:
        return BoundValue.inapplicable("thm4", "sigma = 0")
    m = 2 * k - 1
    e_total = p.eps1 + p.eps2 + m * (p.eps3 + p.eps4)
    hk = h_k(p, k)
    if not e_total < 1.0 - hk:
        return BoundValue.inapplicable("thm4", f"E + h_k = {e_total + hk} >= 1", E=e_total, h_k=hk)
    if p.sigma < p.b_norm * math.sqrt(E * m):
        return BoundValue.inapplicable(
            "thm4", f"sigma = {p.sigma} < B sqrt(e(2k-1)) = {p.b_norm * math.sqrt(E * m)}", E=e_total, h_k=hk
        )
    return BoundValue.ok(normal_abs_norm(2 * k) / math.sqrt(1.0 - e_total - hk), "thm4", E=e_total, h_k=hk)


def markov_tail(central_norm: float, order: Union[MomentOrder, int], t: float) -> float:
    """min(1, (||W - mu||_r / t)^r)."""
    r = MomentOrder.of(order).value
    if not t > 0.0:
        raise DomainError(f"t must be > 0, got {t!r}")
    if not central_norm >= 0.0:
        raise DomainError(f"central_norm must be >= 0, got {central_norm!r}")
    if central_norm >= t:
        return 1.0
    return (central_norm / t) ** r


# ---------------------------------------------------------------------------
# moments from tails

@dataclass(frozen=True)
class TailProfile:
    """Tail envelope for |X|: bounded(x), weibull(a, b, c) or log_weibull(a, b, c).

    weibull:      P[|X| > t] <= c exp(-b t^a)
    log_weibull:  P[|X| > t] <= c exp(-b log(1 + t)^a), needs a > 1
    """

    kind: str
    a: float = 0.0
    b: float = 0.0
    c: float = 0.0
    x: float = 0.0

    def __post_init__(self):
        if self.kind == "bounded":
            if not self.x >= 0.0 or math.isinf(self.x):
                raise DomainError(f"bounded profile needs finite x >= 0, got {self.x!r}")
        elif self.kind in ("weibull", "log_weibull"):
            if not (self.a > 0.0 and self.b > 0.0 and self.c > 0.0):
                raise DomainError(f"{self.kind} profile needs a, b, c > 0")
            if self.kind == "log_weibull" and not self.a > 1.0:
                raise DomainError("log_weibull profile needs a > 1")
        else:
            raise DomainError(f"unknown tail profile kind {self.kind!r}")

    @classmethod
    def bounded(cls, x: float) -> "TailProfile":
        return cls("bounded", x=float(x))

    @classmethod
    def weibull(cls, a: float, b: float, c: float) -> "TailProfile":
        return cls("weibull", a=float(a), b=float(b), c=float(c))

    @classmethod
    def log_weibull(cls, a: float, b: float, c: float) -> "TailProfile":
        return cls("log_weibull", a=float(a), b=float(b), c=float(c))


def _log_weibull_log_moment(a: float, b: float, c: float, two_k: int) -> float:
    """log of 2k int_0^inf t^(2k-1) min(1, c exp(-b log(1+t)^a)) dt.

    Integrates in u = log(1 + t) after factoring out the peak of the
    log-integrand, so large k stay finite.
    """
    log_c = math.log(c)

    def phi(u: float) -> float:
        if u <= 0.0:
            return -math.inf
        tail = min(0.0, log_c - b * u**a)
        log_t = math.log(math.expm1(u)) if u < 1.0 else u + math.log1p(-math.exp(-u))
        return math.log(two_k) + (two_k - 1) * log_t + u + tail

    # phi is unimodal: increasing while 2k > a b u^(a-1) roughly
    u_star = (two_k / (a * b)) ** (1.0 / (a - 1.0))
    hi = max(4.0 * u_star, 1.0)
    while phi(hi) >= phi(hi / 2.0):
        hi *= 2.0
    res = optimize.minimize_scalar(lambda u: -phi(u), bounds=(1e-12, hi), method="bounded",
                                   options={"xatol": 1e-12})
    u_peak = float(res.x)
    peak = phi(u_peak)
    u_hi = max(u_peak * 2.0, 1.0)
    while phi(u_hi) - peak > -80.0:
        u_hi *= 1.5
    points = [u_peak]
    if c > 1.0:
        u_kink = (log_c / b) ** (1.0 / a)
        if 0.0 < u_kink < u_hi:
            points.append(u_kink)
    val, err = integrate.quad(lambda u: math.exp(phi(u) - peak), 0.0, u_hi,
                              points=sorted(points), epsabs=0.0, epsrel=1e-10, limit=500)
    if not val > 0.0 or err > 1e-8 * val:
        raise NumericError(f"log-Weibull tail integral did not converge (value {val}, error {err})")
    return peak + math.log(val)


@lru_cache(maxsize=4096)
def _profile_norm(profile: TailProfile, two_k: int) -> float:
    if profile.kind == "bounded":
        return profile.x
    if profile.kind == "weibull":
        a, b, c = profile.a, profile.b, profile.c
        log_m = math.log(two_k * c / a) - (two_k / a) * math.log(b) + math.lgamma(two_k / a)
        return math.exp(log_m / two_k)
    return math.exp(_log_weibull_log_moment(profile.a, profile.b, profile.c, two_k) / two_k)


def moment_bound_from_tail(profile: TailProfile, two_k: int) -> float:
    """Upper bound on ||X||_{2k} implied by a tail envelope."""
    order = MomentOrder.of(two_k).require_even()
    return _profile_norm(profile, order.value)


class NormProfile:
    """k -> (alpha_k, beta_k) bounding ||n^-1 G||_{2k} and ||D||_{2k}.

    Values are running maxima over orders up to 2k, which keeps them valid
    (norms grow with the order) and monotone.
    """

    def __init__(self, profile_g: TailProfile, profile_d: TailProfile):
        self._g = profile_g
        self._d = profile_d

    @property
    def profile_g(self) -> TailProfile:
        return self._g

    @property
    def profile_d(self) -> TailProfile:
        return self._d

    def __call__(self, k: int) -> Tuple[float, float]:
        k = _check_k(k)
        alpha = max(moment_bound_from_tail(self._g, 2 * j) for j in range(1, k + 1))
        beta = max(moment_bound_from_tail(self._d, 2 * j) for j in range(1, k + 1))
        return alpha, beta


def _log_markov_term(n: int, k: int, alpha: float, beta: float, t: float) -> float:
    alpha = max(alpha, _ALPHA_FLOOR)
    if beta == 0.0:
        return -math.inf
    m = 2 * k - 1
    return (-2 * k * math.log(t) + k * math.log(n * m * alpha * beta)
            + (2 * k / math.sqrt(n)) * math.sqrt(m * beta / alpha))


def optimized_markov_tail(n: int, profile_g: TailProfile, profile_d: TailProfile,
                          t: float, k_max: int) -> Tuple[BoundValue, int]:
    """Markov bound on P[|W_n - mu_n| > t] minimised over integer k in [1, k_max].

    Returns the clamped probability and the smallest minimising k.
    """
    if not t > 0.0:
        raise DomainError(f"t must be > 0, got {t!r}")
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n!r}")
    if k_max < 1:
        return BoundValue.inapplicable("markov-opt", f"empty k range (k_max = {k_max})"), 0
    norms = NormProfile(profile_g, profile_d)
    best_k, best = 0, math.inf
    for k in range(1, int(k_max) + 1):
        alpha, beta = norms(k)
        term = _log_markov_term(n, k, alpha, beta, t)
        if term < best:
            best_k, best = k, term
    prob = 1.0 if best >= 0.0 else math.exp(best)
    return BoundValue.ok(prob, "markov-opt", k_star=float(best_k)), best_k


def _bounded_tail(scale: float, reach: float, t: float, form: str) -> BoundValue:
    # scale = n x1 x2, reach = n x2
    threshold = math.sqrt(2.0 * scale * E)
    if t < threshold:
        return BoundValue.inapplicable(form, f"t = {t} below threshold {threshold}", threshold=threshold)
    expo = 1.0 - t * t / (2.0 * scale * E) * (1.0 - (t / reach) * SQRT_6_OVER_E)
    return BoundValue.ok(1.0 if expo >= 0.0 else math.exp(expo), form, threshold=threshold)


def cor_bounded_tail(n: int, x1: float, x2: float, t: float) -> BoundValue:
    """Tail bound for |D| <= x1, |G/n| <= x2, valid for t >= sqrt(2 n x1 x2 e)."""
    if not (x1 > 0.0 and x2 > 0.0):
        raise DomainError("x1 and x2 must be > 0")
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n!r}")
    return _bounded_tail(n * x1 * x2, x2 * n, t, "cor-bounded")


def cor_normal_tail(y: float, E_of_k: Union[Callable[[int], float], float] = 0.0,
                    h_of_k: Union[Callable[[int], float], float] = 0.0) -> BoundValue:
    """Normal-type tail bound on P[|W - mu| > y sigma] with k = ceil(y^2 / 2)."""
    if not y > 0.0:
        raise DomainError(f"y must be > 0, got {y!r}")
    k = math.ceil(y * y / 2.0)
    e_val = E_of_k(k) if callable(E_of_k) else float(E_of_k)
    h_val = h_of_k(k) if callable(h_of_k) else float(h_of_k)
    slack = 1.0 - e_val - h_val
    if slack <= 0.0:
        return BoundValue.inapplicable("cor-normal", f"E + h_k = {e_val + h_val} >= 1", k=float(k))
    log_p = 0.5 * math.log(2.0) - y * y / 2.0 + 2.0 / (y * y) - k * math.log(slack)
    return BoundValue.ok(1.0 if log_p >= 0.0 else math.exp(log_p), "cor-normal", k=float(k))


def weak_concentration_scale(n: int, profile_g: TailProfile, profile_d: TailProfile) -> float:
    """Scale d_n on which W_n concentrates, using k_n = ceil(log n)."""
    if isinstance(n, bool) or int(n) != n or n < 3:
        raise DomainError(f"n must be an integer >= 3, got {n!r}")
    n = int(n)
    k = math.ceil(math.log(n))
    alpha, beta = NormProfile(profile_g, profile_d)(k)
    alpha = max(alpha, _ALPHA_FLOOR)
    m = 2 * k - 1
    # a vanishing alpha can still push the exponential past the float range
    return math.sqrt(n * m * alpha * beta) * _safe_exp(math.sqrt(m * beta / alpha) / math.sqrt(n))


# ---------------------------------------------------------------------------
# applications

def prop_independent_bound(rho_k: float, n: int, k: int) -> BoundValue:
    """||sigma^-1 W||_{2k} <= ||N||_{2k} / sqrt(1 - h'_k) for independent sums."""
    k = _check_k(k)
    if not rho_k >= 1.0:
        raise DomainError(f"rho_k = ||X||_2k / ||X||_2 is >= 1, got {rho_k!r}")
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n!r}")
    hp = _HK_PRIME_FACTOR * rho_k**3 * math.sqrt((k - 1) / n)
    if hp >= 1.0:
        return BoundValue.inapplicable("prop41", f"h'_k = {hp} >= 1", h_prime=hp)
    return BoundValue.ok(normal_abs_norm(2 * k) / math.sqrt(1.0 - hp), "prop41", h_prime=hp)


def local_dep_moment_bound(n: int, d: int, x: float, k: int) -> BoundValue:
    """n x [(1 + sqrt(d / (n (2k-1))))^(2k-1) - 1] for neighbourhoods of size d."""
    k = _check_k(k)
    if d < 1 or not x > 0.0 or n < 1:
        raise DomainError("local dependence bound needs n >= 1, d >= 1 and x > 0")
    form1, _ = _thm1_forms(n * x, d * x, 0.0, 0.0, k)
    m = 2 * k - 1
    second = math.sqrt(n) * x * math.sqrt(d * m) * _safe_exp(math.sqrt(d * m / n))
    if math.isinf(form1):
        return BoundValue.inapplicable("locdep", "bound overflows")
    return BoundValue.ok(form1, "locdep", second_line=second)


def local_dep_tail(n: int, d: int, x: float, t: float) -> BoundValue:
    if d < 1 or not x > 0.0:
        raise DomainError("local dependence tail needs d >= 1 and x > 0")
    return cor_bounded_tail(n, d * x, x, t).relabel("locdep-tail")


def size_bias_tail(mu: float, c: float, t: float) -> Tuple[BoundValue, float]:
    """Bounded size-bias tail bound and the Arratia-Baxendale comparator.

    The first component is the bounded-coupling corollary with n = 1,
    x1 = c, x2 = mu.
    """
    if not (mu > 0.0 and c > 0.0):
        raise DomainError("size-bias tail needs mu > 0 and c > 0")
    ours = cor_bounded_tail(1, c, mu, t).relabel("size-bias")
    ab = min(1.0, 2.0 * math.exp(-t * t / (2.0 * mu * c + 2.0 * c * t / 3.0)))
    return ours, ab


def binomial_A(x: float, ell: int) -> float:
    """Bound on ||Bi(n, p)||_ell with x = np."""
    if not x >= 0.0:
        raise DomainError(f"x must be >= 0, got {x!r}")
    if ell < 1:
        raise DomainError(f"ell must be >= 1, got {ell!r}")
    if ell > x:
        return PI_E_E2 * ell / math.log(E - 1.0)
    return PI_E_E2 * x


def neighbourhood_norm_bound(lam: float, r: int, ell: int) -> float:
    """(A^(r+1) - 1) / (A - 1) with A = binomial_A(lam, ell); bounds ||N_r||_ell."""
    if r < 0:
        raise DomainError(f"r must be >= 0, got {r!r}")
    a = binomial_A(lam, ell)
    return (a ** (r + 1) - 1.0) / (a - 1.0)


def er_constant(r: int, beta: float) -> float:
    """C(r, beta) = C_A^((1+2 beta) r) sqrt(2^(2+beta) (10^(1+beta) + 2^(1+beta)))."""
    if r < 1:
        raise DomainError(f"r must be >= 1, got {r!r}")
    if not beta >= 0.0:
        raise DomainError(f"beta must be >= 0, got {beta!r}")
    return C_A ** ((1.0 + 2.0 * beta) * r) * math.sqrt(2.0 ** (2.0 + beta) * (10.0 ** (1.0 + beta) + 2.0 ** (1.0 + beta)))


def er_g_norm_bound(n: int, lam: float, c: float, r: int, beta: float, q: int) -> float:
    """2^(1+beta) n c (C_A max{lam, q beta})^(r beta), bounding ||G||_q."""
    lam1 = max(lam, q * beta)
    return 2.0 ** (1.0 + beta) * n * c * (C_A * lam1) ** (r * beta)


def er_d_norm_bound(lam: float, c: float, r: int, beta: float, q: int) -> float:
    """(10^(1+beta) + 2^(1+beta)) c (C_A max{lam, q(1+beta)})^(2r + 3 r beta), bounding ||D||_q."""
    lam2 = max(lam, q * (1.0 + beta))
    return (10.0 ** (1.0 + beta) + 2.0 ** (1.0 + beta)) * c * (C_A * lam2) ** (2 * r + 3 * r * beta)


def er_moment_bound(n: int, lam: float, c: float, r: int, beta: float, q: int) -> BoundValue:
    """Bound on ||W - EW||_q for sums of r-neighbourhood statistics in G(n, lam/n).

    ``extras['intermediate']`` holds the sharper value obtained from the
    G and D norm bounds before they are coarsened into the closed form.
    """
    if isinstance(q, bool) or int(q) != q or q < 2:
        raise DomainError(f"q must be an integer >= 2, got {q!r}")
    if not (lam > 0.0 and c > 0.0):
        raise DomainError("lam and c must be > 0")
    m = max(lam, q * (1.0 + beta))
    value = math.sqrt(n) * c * er_constant(r, beta) * m ** ((1.0 + 2.0 * beta) * r + 0.5)
    g_b = er_g_norm_bound(n, lam, c, r, beta, q)
    d_b = er_d_norm_bound(lam, c, r, beta, q)
    inter = math.sqrt(2.0 * (q - 1) * g_b * d_b)
    return BoundValue.ok(value, "thm42", intermediate=inter, g_norm=g_b, d_norm=d_b)
