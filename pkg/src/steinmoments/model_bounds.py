"""Theorem bounds instantiated with the exact parameters of each built-in model."""

from __future__ import annotations

import math

from .bounds import (
    BoundValue,
    cor_bounded_tail,
    cor_normal_tail,
    er_moment_bound,
    local_dep_moment_bound,
    local_dep_tail,
    prop_independent_bound,
    size_bias_tail,
    thm1_moment_bound,
    thm2_moment_bound,
)
from .core import ConfigError
from .couplings import ModelSpec, coupling_params, exact_variance

__all__ = ["MOMENT_THEOREMS", "TAIL_THEOREMS", "model_moment_bound", "model_tail_bound",
           "default_theorem", "standardized_tail"]

MOMENT_THEOREMS = ("thm1", "thm2", "prop41", "locdep", "thm42")
TAIL_THEOREMS = ("cor-normal", "cor-bounded", "locdep-tail", "size-bias")

_DEFAULT = {
    "independent_sum": "thm1",
    "local_dependence_runs": "locdep",
    "size_bias_runs": "thm1",
    "er_neighbourhood": "thm42",
}


def default_theorem(spec: ModelSpec) -> str:
    """The moment theorem that matches the model most directly."""
    return _DEFAULT[spec.kind]


def _not_for(theorem: str, spec: ModelSpec, why: str = "") -> BoundValue:
    return BoundValue.inapplicable(theorem, why or f"{theorem} is not defined for {spec.kind}")


def _run_summand_bound(spec: ModelSpec) -> float:
    q = spec.params.q
    return max(q, 1.0 - q)


def model_moment_bound(spec: ModelSpec, theorem: str, k: int) -> BoundValue:
    """Bound on ||W - mu||_2k for the given model."""
    pr = spec.params
    if theorem == "thm1":
        return thm1_moment_bound(coupling_params(spec, k), k)
    if theorem == "thm2":
        # needs E|W' - mu|^r <= E|W - mu|^r, known here only when W' is a
        # conditional expectation of W or has the same law
        if spec.kind not in ("independent_sum", "er_neighbourhood"):
            return _not_for(theorem, spec, "moment comparison of W' and W not established for this model")
        cp = coupling_params(spec, k)
        return thm2_moment_bound(cp.a_norm, cp.b_norm, 0.0, 0.0, 2 * k)
    if theorem == "prop41":
        if spec.kind != "independent_sum":
            return _not_for(theorem, spec)
        rho = pr.abs_norm(2 * k) / pr.abs_norm(2)
        b = prop_independent_bound(rho, pr.n, k)
        if not b.applicable:
            return b
        # the proposition bounds the standardised sum
        return BoundValue.ok(b.value * math.sqrt(exact_variance(spec)), "prop41", **b.extras)
    if theorem == "locdep":
        if spec.kind != "local_dependence_runs":
            return _not_for(theorem, spec)
        return local_dep_moment_bound(pr.n, pr.d, _run_summand_bound(spec), k)
    if theorem == "thm42":
        if spec.kind != "er_neighbourhood":
            return _not_for(theorem, spec)
        if pr.lam <= 0.0:
            return _not_for(theorem, spec, "lam must be > 0")
        st = pr.statistic
        return er_moment_bound(pr.n, pr.lam, st.c, st.r, st.beta, 2 * k)
    raise ConfigError(f"unknown moment theorem {theorem!r}; choose from {MOMENT_THEOREMS}")


def standardized_tail(theorem: str) -> bool:
    """Whether the theorem's threshold is in units of sigma."""
    return theorem == "cor-normal"


def model_tail_bound(spec: ModelSpec, theorem: str, t: float) -> BoundValue:
    """Bound on P(|W - mu| > t), or on P(|W - mu| > t sigma) for cor-normal."""
    pr = spec.params
    if theorem == "cor-normal":
        if spec.kind != "independent_sum":
            return _not_for(theorem, spec, "no conditional-variance parameters for this model")
        rho2 = pr.abs_norm(2)

        def h(k: int) -> float:
            return prop_independent_bound(pr.abs_norm(2 * k) / rho2, pr.n, k).extras["h_prime"]

        # exact coupling with GD = n X_I^2: the remainder terms vanish and the
        # conditional-variance error is carried by h'_k
        return cor_normal_tail(t, 0.0, h)
    if theorem == "cor-bounded":
        if spec.kind == "independent_sum":
            if pr.summand == "centered_exponential":
                return _not_for(theorem, spec, "exponential summands are unbounded")
            x = 1.0 if pr.summand == "rademacher" else max(pr.p, 1.0 - pr.p)
            return cor_bounded_tail(pr.n, x, x, t)
        if spec.kind == "local_dependence_runs":
            x = _run_summand_bound(spec)
            return cor_bounded_tail(pr.n, pr.d * x, x, t)
        return _not_for(theorem, spec)
    if theorem == "locdep-tail":
        if spec.kind != "local_dependence_runs":
            return _not_for(theorem, spec)
        return local_dep_tail(pr.n, pr.d, _run_summand_bound(spec), t)
    if theorem == "size-bias":
        if spec.kind != "size_bias_runs":
            return _not_for(theorem, spec)
        ours, ab = size_bias_tail(pr.n * pr.q, float(min(2 * pr.m - 1, pr.n)), t)
        if not ours.applicable:
            return ours
        return BoundValue.ok(ours.value, ours.form, arratia_baxendale=ab, **ours.extras)
    raise ConfigError(f"unknown tail theorem {theorem!r}; choose from {TAIL_THEOREMS}")
