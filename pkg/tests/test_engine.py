import itertools
import logging
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from steinmoments.bounds import BoundValue, thm1_moment_bound
from steinmoments.core import ConfigError, CouplingParams, MomentEstimate, MomentOrder, NumericError
from steinmoments.couplings import ERParams, IndependentSumParams, ModelSpec, RunsParams
from steinmoments.engine import (
    HOLDS,
    INAPPLICABLE,
    INCONCLUSIVE,
    VIOLATED,
    IdentityRow,
    Verdict,
    check_stein_identity,
    estimate_central_moments,
    estimate_tail,
    judge_status,
    simulate,
    verify_bounds,
    worker_count,
)
from steinmoments.stats import batch_means, norm_estimate

RADEMACHER3 = ModelSpec("independent_sum", IndependentSumParams(3))


def estimate(order, point, se, batches=30):
    return MomentEstimate(MomentOrder(order), point, se, 30 * batches, batches)


class TestMoments:
    def test_rademacher_order4(self):
        (est,) = estimate_central_moments(RADEMACHER3, [4], 10**6, 50, seed=1)
        assert abs(est.point - 21**0.25) <= 3 * est.std_error
        assert est.n_samples == 10**6 and est.n_batches == 50

    def test_constant_model(self):
        spec = ModelSpec("size_bias_runs", RunsParams(20, 2, 1.0))
        for est in estimate_central_moments(spec, [2, 4, 6], 3000, 30, seed=0):
            assert est.point == 0.0 and est.std_error == 0.0

    def test_exponential_variance(self):
        spec = ModelSpec("independent_sum", IndependentSumParams(50, "centered_exponential"))
        (est,) = estimate_central_moments(spec, [2], 300_000, 30, seed=2)
        assert abs(est.point - math.sqrt(50)) <= 3 * est.std_error

    def test_plug_in_centre(self):
        # ER with a pilot mean: the sample mean centres the moments
        pr = ERParams(100, 2.0, mu_x="estimated", n_pilot=500)
        spec = ModelSpec("er_neighbourhood", pr)
        (est,) = estimate_central_moments(spec, [2], 6000, 30, seed=3)
        assert est.point > 0 and est.std_error > 0

    def test_divisibility(self):
        with pytest.raises(ConfigError):
            estimate_central_moments(RADEMACHER3, [2], 1001, 30)
        with pytest.raises(ConfigError):
            estimate_central_moments(RADEMACHER3, [2], 0, 30)

    def test_high_order_warns(self, caplog):
        with caplog.at_level(logging.WARNING, logger="steinmoments.engine"):
            estimate_central_moments(RADEMACHER3, [14], 3000, 30)
        assert any("exceeds" in r.message for r in caplog.records)

    def test_seed_override(self):
        a = estimate_central_moments(RADEMACHER3, [2], 3000, 30, seed=5)
        b = estimate_central_moments(ModelSpec("independent_sum", IndependentSumParams(3), seed=5), [2], 3000, 30)
        assert a == b

    @pytest.mark.parametrize("threads", [2, 4, 16])
    def test_thread_invariance(self, threads):
        spec = ModelSpec("local_dependence_runs", RunsParams(60, 2, 0.5), seed=9)
        ref = simulate(spec, 6000, 30, threads=1)
        got = simulate(spec, 6000, 30, threads=threads)
        for x, y in ((ref.w, got.w), (ref.w_prime, got.w_prime), (ref.g, got.g)):
            assert x.tobytes() == y.tobytes()

    def test_worker_count_env(self, monkeypatch):
        monkeypatch.setenv("STEIN_THREADS", "7")
        assert worker_count() == 7
        assert worker_count(3) == 3
        monkeypatch.delenv("STEIN_THREADS")
        assert worker_count() == 1

    def test_batch_means_coverage(self):
        exact = 21**0.25
        covered = 0
        for rep in range(200):
            (est,) = estimate_central_moments(RADEMACHER3, [4], 3000, 30, seed=1000 + rep)
            covered += abs(est.point - exact) <= 3 * est.std_error
        assert covered >= 198


class TestStats:
    def test_batch_means(self):
        assert np.array_equal(batch_means(np.arange(6.0), 3), [0.5, 2.5, 4.5])
        with pytest.raises(ConfigError):
            batch_means(np.arange(7.0), 3)
        with pytest.raises(ConfigError):
            batch_means(np.arange(6.0), 1)

    def test_norm_estimate_exact_sample(self):
        x = np.array([1.0, -1.0] * 30)
        est = norm_estimate(x, 4, 30)
        assert est.point == 1.0 and est.std_error == 0.0

    def test_centre_influence_widens(self):
        rng = np.random.default_rng(0)
        x = rng.exponential(size=30_000)
        plain = norm_estimate(x, 3, 30, center=float(x.mean()))
        folded = norm_estimate(x, 3, 30, center=float(x.mean()), center_influence=x)
        assert folded.point == plain.point
        assert folded.std_error != plain.std_error


class TestIdentity:
    @pytest.mark.parametrize("spec", [
        ModelSpec("independent_sum", IndependentSumParams(50)),
        ModelSpec("independent_sum", IndependentSumParams(20, "centered_exponential")),
        ModelSpec("local_dependence_runs", RunsParams(200, 2, 0.5)),
        ModelSpec("size_bias_runs", RunsParams(200, 2, 0.5)),
        ModelSpec("er_neighbourhood", ERParams(100, 2.0)),
    ])
    def test_exact_couplings_pass(self, spec):
        rep = check_stein_identity(spec, 3, 60_000, seed=4)
        assert len(rep.rows) == 3
        assert rep.passes(), [r.z_score for r in rep.rows]

    def test_first_degree_is_variance(self):
        rep = check_stein_identity(RADEMACHER3, 1, 30_000, seed=0)
        row = rep.rows[0]
        assert row.lhs == pytest.approx(3.0, abs=4 * row.std_error + 1e-12)

    def test_negative_control(self):
        spec = ModelSpec("independent_sum", IndependentSumParams(50), g_scale=1.1)
        rep = check_stein_identity(spec, 1, 10**6, seed=1, n_batches=50)
        assert abs(rep.rows[0].z_score) > 4 and not rep.passes()

    def test_degenerate_model(self):
        spec = ModelSpec("size_bias_runs", RunsParams(10, 2, 1.0))
        rep = check_stein_identity(spec, 3, 300, seed=0)
        assert all(r.lhs == 0 and r.rhs == 0 and r.z_score == 0.0 for r in rep.rows)

    def test_zero_se_nonzero_difference(self):
        with pytest.raises(NumericError):
            IdentityRow(1, 1.0, 0.0, 0.0).z_score

    def test_degree_guard(self):
        with pytest.raises(ConfigError):
            check_stein_identity(RADEMACHER3, 7, 300)
        with pytest.raises(ConfigError):
            check_stein_identity(RADEMACHER3, 0, 300)


class TestTails:
    def test_rademacher_examples(self):
        t0, t2, t4 = estimate_tail(RADEMACHER3, [0.0, 2.0, 4.0], 30_000, seed=0)
        assert t0.p_hat == 1.0
        assert abs(t2.p_hat - 0.25) <= 3 * t2.std_error
        assert t4.p_hat == 0.0 and t4.std_error == 0.0

    def test_continuous_t0(self):
        spec = ModelSpec("independent_sum", IndependentSumParams(5, "centered_exponential"))
        (t0,) = estimate_tail(spec, [0.0], 30_000)
        assert t0.p_hat == 1.0

    def test_standardized(self):
        spec = ModelSpec("independent_sum", IndependentSumParams(4))
        (raw,) = estimate_tail(spec, [1.5], 30_000, seed=2)
        (std,) = estimate_tail(spec, [0.75], 30_000, seed=2, standardize=True)
        assert raw.p_hat == std.p_hat

    def test_sample_floor(self):
        with pytest.raises(ConfigError):
            estimate_tail(RADEMACHER3, [1.0], 3000)


class TestVerdicts:
    def test_holds(self):
        bound = thm1_moment_bound(CouplingParams(a_norm=3, b_norm=1), 2)
        (v,) = verify_bounds(RADEMACHER3, [(4, bound)], [estimate(4, 2.1407, 0.001)])
        assert v.status == HOLDS and v.dominates

    def test_violated(self):
        v = Verdict.judge(BoundValue.ok(37 / 9, "thm1"), estimate(4, 5.0, 0.01))
        assert v.status == VIOLATED and not v.dominates

    def test_inconclusive_band(self):
        assert judge_status(BoundValue.ok(1.0, "x"), 0.99, 0.01) == INCONCLUSIVE
        assert judge_status(BoundValue.ok(1.0, "x"), 0.97, 0.01) == HOLDS
        assert judge_status(BoundValue.ok(1.0, "x"), 1.04, 0.01) == VIOLATED

    def test_inapplicable(self):
        bound = BoundValue.inapplicable("thm2", "no moment comparison")
        (v,) = verify_bounds(RADEMACHER3, [(2, bound)], [estimate(2, 99.0, 0.0)])
        assert v.status == INAPPLICABLE

    def test_order_mismatch(self):
        with pytest.raises(ConfigError):
            verify_bounds(RADEMACHER3, [(6, BoundValue.ok(1.0, "x"))], [estimate(4, 0.5, 0.1)])

    def test_too_few_batches(self):
        with pytest.raises(ConfigError):
            verify_bounds(RADEMACHER3, [(4, BoundValue.ok(1.0, "x"))], [estimate(4, 0.5, 0.1, batches=10)])

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0, 1e6), st.floats(0, 1e6), st.floats(0, 1e3))
    def test_violated_iff(self, bound, point, se):
        status = judge_status(BoundValue.ok(bound, "x"), point, se)
        assert (status == VIOLATED) == (point - 3 * se > bound)
        assert (status == HOLDS) == (point + 3 * se <= bound)


# ---------------------------------------------------------------------------
# a random subset of bounded i.i.d. terms: ||sum_{i in E} Y_i||_l <= y || |E| ||_l

def subset_sum_moment(subset_law, values, probs, ell):
    """Exact E|sum_{i in E} Y_i|^ell and E|E|^ell by enumeration."""
    lhs = Fraction(0)
    size_moment = Fraction(0)
    for subset, ps in subset_law.items():
        size_moment += ps * len(subset) ** ell
        for ys in itertools.product(range(len(values)), repeat=len(subset)):
            weight = ps
            for j in ys:
                weight *= probs[j]
            lhs += weight * abs(sum(values[j] for j in ys)) ** ell
    return lhs, size_moment


@st.composite
def subset_instances(draw):
    m = draw(st.integers(1, 4))
    subsets = [s for r in range(m + 1) for s in itertools.combinations(range(m), r)]
    weights = draw(st.lists(st.integers(0, 5), min_size=len(subsets), max_size=len(subsets)))
    if not any(weights):
        weights[-1] = 1
    total = sum(weights)
    law = {s: Fraction(w, total) for s, w in zip(subsets, weights) if w}
    k = draw(st.integers(1, 3))
    values = draw(st.lists(st.integers(-3, 3), min_size=k, max_size=k))
    raw = draw(st.lists(st.integers(1, 4), min_size=k, max_size=k))
    probs = [Fraction(r, sum(raw)) for r in raw]
    ell = draw(st.integers(1, 4))
    return law, values, probs, ell


class TestRandomSubsetMinkowski:
    @settings(max_examples=150, deadline=None)
    @given(subset_instances())
    def test_bound(self, inst):
        law, values, probs, ell = inst
        y = max(abs(v) for v in values)
        lhs, size_moment = subset_sum_moment(law, values, probs, ell)
        # compare ell-th powers exactly: E|S|^l <= y^l E|E|^l
        assert lhs <= y**ell * size_moment

    def test_deterministic_full_set_is_tight(self):
        # constant Y = 1 on a fixed set: equality
        law = {(0, 1, 2): Fraction(1)}
        lhs, size_moment = subset_sum_moment(law, [1], [Fraction(1)], 3)
        assert lhs == size_moment == 27
