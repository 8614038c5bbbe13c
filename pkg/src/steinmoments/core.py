"""Shared types, normal-moment constants and numerically stable norms."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Iterable, Union

import numpy as np

__all__ = [
    "DomainError",
    "ConfigError",
    "NumericError",
    "CouplingSample",
    "CouplingParams",
    "MomentOrder",
    "MomentEstimate",
    "normal_abs_norm",
    "c1",
    "empirical_norm",
]

# above this, exp(r * log|x|) overflows a double
_LOG_OVERFLOW = 700.0


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class ConfigError(ValueError):
    """A run configuration or model specification is invalid."""


class NumericError(ArithmeticError):
    """A numerical routine failed to reach its stated accuracy."""


@dataclass(frozen=True)
class CouplingSample:
    """One draw (W, W', G, D, R) from a Stein coupling."""

    w: float
    w_prime: float
    g: float
    d: float
    r_term: float = 0.0

    def __post_init__(self):
        if self.d != self.w_prime - self.w:
            raise DomainError(
                f"d={self.d!r} is not w_prime - w = {self.w_prime - self.w!r}"
            )

    @classmethod
    def from_pair(cls, w: float, w_prime: float, g: float, r_term: float = 0.0):
        return cls(float(w), float(w_prime), float(g), float(w_prime) - float(w), float(r_term))


@dataclass(frozen=True)
class CouplingParams:
    """Deterministic inputs to the moment bounds.

    a_norm and b_norm bound the 2k-norms of G and D.  eps, eps_prime and
    eps1..eps4 control the remainder and the conditional variance; t_norm,
    t1_norm and t2_norm are the norms of the corresponding error variables.
    Only non-negativity is enforced here; conditions such as eps < 1 are
    reported as inapplicability by the bound functions.
    """

    a_norm: float = 0.0
    b_norm: float = 0.0
    sigma: float = 0.0
    eps: float = 0.0
    eps_prime: float = 0.0
    eps1: float = 0.0
    eps2: float = 0.0
    eps3: float = 0.0
    eps4: float = 0.0
    t_norm: float = 0.0
    t1_norm: float = 0.0
    t2_norm: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (v >= 0.0) or math.isnan(v):
                raise DomainError(f"{f.name} must be a non-negative number, got {v!r}")


@dataclass(frozen=True, order=True)
class MomentOrder:
    """Validated norm order r (or 2k)."""

    value: int

    def __post_init__(self):
        if isinstance(self.value, bool) or int(self.value) != self.value:
            raise DomainError(f"moment order must be an integer, got {self.value!r}")
        object.__setattr__(self, "value", int(self.value))
        if self.value < 1:
            raise DomainError(f"moment order must be >= 1, got {self.value}")

    @classmethod
    def of(cls, order: Union["MomentOrder", int]) -> "MomentOrder":
        return order if isinstance(order, MomentOrder) else cls(order)

    @property
    def is_even(self) -> bool:
        return self.value % 2 == 0

    def require_even(self) -> "MomentOrder":
        if not self.is_even:
            raise DomainError(f"operation needs an even order, got {self.value}")
        return self

    @property
    def k(self) -> int:
        """Half of an even order."""
        return self.require_even().value // 2

    def __int__(self):
        return self.value


@dataclass(frozen=True)
class MomentEstimate:
    """Monte Carlo estimate of an r-norm with its batch-means standard error."""

    order: MomentOrder
    point: float
    std_error: float
    n_samples: int
    n_batches: int

    def __post_init__(self):
        if not self.std_error >= 0.0:
            raise DomainError(f"std_error must be >= 0, got {self.std_error!r}")


def _log_normal_even_moment(two_k: int) -> float:
    k = two_k // 2
    return math.lgamma(two_k + 1) - math.lgamma(k + 1) - k * math.log(2.0)


def normal_abs_norm(two_k: int) -> float:
    """2k-norm of a standard normal, ((2k)! / (k! 2^k))^(1/(2k))."""
    order = MomentOrder.of(two_k).require_even()
    k = order.value // 2
    if k <= 10:
        # exact integer moment while factorials are small
        return (math.factorial(2 * k) // (math.factorial(k) * 2**k)) ** (1.0 / (2 * k))
    return math.exp(_log_normal_even_moment(order.value) / order.value)


def c1(k: int) -> float:
    """sqrt(2k - 1) / ||N||_{2k}; increases from 1 towards sqrt(e)."""
    if int(k) != k or k < 1:
        raise DomainError(f"k must be an integer >= 1, got {k!r}")
    k = int(k)
    two_k = 2 * k
    log_ratio = 0.5 * math.log(two_k - 1) - _log_normal_even_moment(two_k) / two_k
    return math.exp(log_ratio)


def empirical_norm(samples: Iterable[float], order: Union[MomentOrder, int]) -> float:
    """((1/n) sum |x_i|^r)^(1/r) with correctly rounded summation.

    Switches to a log-sum-exp evaluation when |x|^r would overflow.
    """
    r = MomentOrder.of(order).value
    x = np.abs(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n == 0:
        raise DomainError("empirical_norm needs at least one sample")
    if not np.all(np.isfinite(x)):
        raise DomainError("samples must be finite")
    top = float(x.max())
    if top == 0.0:
        return 0.0
    if r * math.log(top) < _LOG_OVERFLOW:
        return (math.fsum((x**r).tolist()) / n) ** (1.0 / r)
    logs = r * np.log(x[x > 0])
    peak = float(logs.max())
    total = math.fsum(np.exp(logs - peak).tolist())
    return math.exp((peak + math.log(total) - math.log(n)) / r)
