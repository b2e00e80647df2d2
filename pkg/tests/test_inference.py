import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize, stats

from mvbern.inference import (
    EventPosterior,
    ExpFitError,
    UndefinedConditionalError,
    cluster_correlations,
    conditional,
    correlation,
    correlation_matrix,
    fit_exponential,
    marginal,
    mortality_decomposition,
    risk_table,
)
from mvbern.schema import VariableSchema
from mvbern.synth import SyntheticModel, oracle_conditional, posterior_mc, sample
from mvbern.table import PriorConfig, build_table

from conftest import binary_schema, small_schema

TINY_NU = 1e-12


def test_marginal_and_conditional_with_vanishing_prior(tiny):
    schema, codes = tiny
    t = build_table(codes, schema, PriorConfig(TINY_NU))
    assert marginal(t, {0: 1}).mean == pytest.approx(3 / 4, abs=1e-10)
    assert conditional(t, {1: 1}, {0: 1}).mean == pytest.approx(2 / 3, abs=1e-10)


def test_empty_table_single_bit_is_symmetric_prior():
    t = build_table(np.zeros(0, dtype=np.uint64), binary_schema(1), PriorConfig(0.5))
    post = marginal(t, {0: 1})
    assert (post.alpha, post.beta, post.mean) == (0.25, 0.25, 0.5)


def test_self_conditioning_is_point_mass_at_one(tiny):
    schema, codes = tiny
    t = build_table(codes, schema)
    post = conditional(t, {0: 1}, {0: 1})
    assert post.beta == 0 and post.mean == 1.0 and post.interval() == (1.0, 1.0)


def test_contradictory_condition_is_undefined():
    schema = small_schema(2, 3)
    t = build_table(np.zeros(0, dtype=np.uint64), schema)
    with pytest.raises(UndefinedConditionalError):
        conditional(t, {"b0": 1}, {"g0": 1, "g2": 1})
    post = marginal(t, {"g0": 1, "g2": 1})
    assert post.mean == 0.0 and "empty" in post.flags


def test_interval_matches_beta_quantiles():
    post = EventPosterior(3.5, 11.25)
    lo, hi = post.interval(0.9)
    assert lo == pytest.approx(stats.beta.ppf(0.05, 3.5, 11.25), rel=1e-12)
    assert hi == pytest.approx(stats.beta.ppf(0.95, 3.5, 11.25), rel=1e-12)
    assert post.variance == pytest.approx(stats.beta.var(3.5, 11.25), rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.integers(0, 2**5 - 1), max_size=80),
    st.integers(0, 4),
    st.integers(0, 4),
    st.fractions(min_value=Fraction(1, 100), max_value=5),
)
def test_identity_and_complement(values, j, s, nu):
    schema = binary_schema(5)
    t = build_table(np.array(values, dtype=np.uint64), schema, PriorConfig(nu))
    a = marginal(t, {j: 1})
    b = marginal(t, {j: 0})
    assert a.alpha + b.alpha == t.alpha0  # exact in rationals
    assert a.mean + b.mean == pytest.approx(1.0, abs=1e-15)
    cond = conditional(t, {s: 1}, {j: 1})
    joint = marginal(t, {s: 1, j: 1})
    assert Fraction(cond.alpha) / (cond.alpha + cond.beta) * Fraction(a.alpha) / t.alpha0 == Fraction(
        joint.alpha
    ) / t.alpha0


def test_brute_force_monte_carlo_agrees_with_beta_closed_form():
    schema = small_schema(4, 3)
    model = SyntheticModel.random(schema, seed=11)
    t = build_table(sample(model, 40, seed=12), schema, PriorConfig(2.0))
    j, s = schema.index("b1"), schema.index("g2")

    def ratio(w, bits):
        wj = w[:, bits[:, j] == 1].sum(axis=1)
        wjs = w[:, (bits[:, j] == 1) & (bits[:, s] == 1)].sum(axis=1)
        return wjs / wj

    draws = posterior_mc(t, ratio, 20000, seed=3)
    se = draws.std(ddof=1) / math.sqrt(len(draws))
    closed = conditional(t, {s: 1}, {j: 1}).mean
    assert abs(draws.mean() - closed) < 3 * se


def test_risk_cells_track_generator_truth():
    schema = small_schema(4, 3)
    model = SyntheticModel.random(schema, seed=5, concentration=2.0)
    t = build_table(sample(model, 100_000, seed=6), schema)
    for target, given_ in [({"b0": 1}, {"g": 1}), ({"b2": 1}, {"b1": 0, "g": 3}), ({"b3": 1}, {"b0": 1})]:
        post = conditional(t, target, given_)
        truth = oracle_conditional(model, target, given_)
        assert abs(post.mean - truth) < 3 * math.sqrt(post.variance)


def test_risk_table_flags_unsupported_cells():
    schema = small_schema(2, 3)
    bits = np.array([[1, 1, 1, 0, 0]] * 5 + [[0, 0, 0, 1, 0]] * 5, dtype=np.uint8)
    t = build_table(bits, schema, PriorConfig(0.5))
    rt = risk_table(t, [{"b0": 1}], [{"g": 1}, {"g": 3}], {"b1": 1})
    assert rt.means[0, 0] == pytest.approx((5 + 0.5 / 12) / (5 + 2 * 0.5 / 12))
    assert rt.means[0, 1] == pytest.approx(0.5)
    assert rt.low_support().tolist() == [[False, True]]
    rt2 = risk_table(t, [{"b0": 1}], [{"g0": 1, "g1": 1}], {"b1": 1})
    assert math.isnan(rt2.means[0, 0]) and rt2.errors[0][0]
    assert rt.formatted(percent=True)[0][1] == "50.0"


def test_mortality_decomposition():
    schema = binary_schema(3)
    rng = np.random.default_rng(0)
    bits = (rng.random((500, 3)) < 0.4).astype(np.uint8)
    t = build_table(bits, schema, PriorConfig(TINY_NU))
    out = mortality_decomposition(t, 1000, [{0: 1}, {1: 1}], {2: 1})
    for i, f in enumerate((0, 1)):
        assert out[i] == pytest.approx(1000 * np.sum(bits[:, f] & bits[:, 2]) / 500, rel=1e-9)
    assert np.all(mortality_decomposition(t, 0, [{0: 1}], {2: 1}) == 0)
    # chain rule through the conditional
    chain = 1000 * conditional(t, {2: 1}, {0: 1}).mean * marginal(t, {0: 1}).mean
    assert mortality_decomposition(t, 1000, [{0: 1}], {2: 1})[0] == pytest.approx(chain, rel=1e-12)


# -- correlation ---------------------------------------------------------


def _pair_table(x, y, nu=0.5):
    bits = np.column_stack([x, y]).astype(np.uint8)
    return build_table(bits, binary_schema(2), PriorConfig(nu))


def test_correlation_self_pair_is_one():
    t = _pair_table([0, 1, 1], [1, 0, 1])
    est = correlation(t, 1, 1)
    assert est.mean_correlation == 1.0 and est.samples == 0


def test_identical_and_opposite_columns():
    rng = np.random.default_rng(1)
    x = rng.random(10_000) < 0.3
    assert correlation(_pair_table(x, x), 0, 1, 10_000, seed=2).mean_correlation > 0.99
    assert correlation(_pair_table(x, ~x), 0, 1, 10_000, seed=2).mean_correlation < -0.99


def test_independent_columns_have_no_correlation():
    rng = np.random.default_rng(2)
    n = 50_000
    t = _pair_table(rng.random(n) < 0.3, rng.random(n) < 0.6)
    est = correlation(t, 0, 1, 10_000, seed=9)
    assert abs(est.mean_correlation) < 4 * est.mc_standard_error + 4 / math.sqrt(n)


def test_concentration_limit_reaches_sample_correlation():
    rng = np.random.default_rng(3)
    n = 1_000_000
    x = rng.random(n) < 0.4
    y = np.where(rng.random(n) < 0.7, x, rng.random(n) < 0.5)
    est = correlation(_pair_table(x, y), 0, 1, 10_000, seed=4)
    plug_in = np.corrcoef(x.astype(float), y.astype(float))[0, 1]
    assert abs(est.mean_correlation - plug_in) < 0.01


def test_correlation_seed_determinism_and_threads():
    schema = small_schema(5, 0)
    model = SyntheticModel.random(schema, seed=1)
    t = build_table(sample(model, 2000, seed=2), schema)
    a = correlation_matrix(t, n_samples=500, seed=7, n_groups=2, threads=1)
    b = correlation_matrix(t, n_samples=500, seed=7, n_groups=2, threads=4)
    assert np.array_equal(a.matrix, b.matrix) and np.array_equal(a.labels, b.labels)
    sub = correlation_matrix(t, ["b3", "b1"], n_samples=500, seed=7)
    assert sub.matrix[0, 1] == a.matrix[1, 3]
    assert np.allclose(a.matrix, a.matrix.T) and np.all(np.diag(a.matrix) == 1)


def test_same_group_pair_is_negative_and_finite():
    schema = small_schema(0, 3)
    bits = np.eye(3, dtype=np.uint8)[np.random.default_rng(0).integers(0, 3, 300)]
    t = build_table(bits, schema)
    est = correlation(t, 0, 1, 2000, seed=0)
    assert -1 <= est.mean_correlation < -0.3


def test_clustering_labels_are_canonical():
    corr = np.array([[1, 0.9, 0, 0], [0.9, 1, 0, 0], [0, 0, 1, 0.8], [0, 0, 0.8, 1.0]])
    labels, _ = cluster_correlations(corr, 2)
    assert labels.tolist() == [1, 1, 2, 2]
    labels, _ = cluster_correlations(corr[::-1, ::-1], 2)
    assert labels.tolist() == [1, 1, 2, 2]


# -- exponential fit -----------------------------------------------------


def test_exact_exponential_is_recovered():
    x = np.arange(1, 5)
    f = fit_exponential(x, 2 * np.exp(0.5 * x))
    assert f.a == pytest.approx(2, abs=1e-8) and f.b == pytest.approx(0.5, abs=1e-8)
    g = fit_exponential(x, 2 * np.exp(0.5 * x), "loglinear")
    assert g.a == pytest.approx(2, abs=1e-10) and g.b == pytest.approx(0.5, abs=1e-10)


def _grid_polish_oracle(x, y):
    """Profile out a in closed form, grid-search b, then polish by bounded scalar search."""

    def profile(b):
        e = np.exp(b * x)
        a = (y @ e) / (e @ e)
        return np.sum((y - a * e) ** 2), a

    grid = np.linspace(-3, 3, 6001)
    b0 = grid[np.argmin([profile(b)[0] for b in grid])]
    res = optimize.minimize_scalar(lambda b: profile(b)[0], bounds=(b0 - 1e-3, b0 + 1e-3), method="bounded",
                                   options={"xatol": 1e-12})
    return profile(res.x)[1], res.x


@pytest.mark.parametrize("seed", range(8))
def test_nonlinear_fit_matches_grid_oracle(seed):
    rng = np.random.default_rng(seed)
    x = np.arange(1, 5, dtype=float)
    a, b = rng.uniform(0.5, 3), rng.uniform(0.2, 1.2)
    y = a * np.exp(b * x) * (1 + rng.normal(0, 0.1, 4))
    f = fit_exponential(x, y)
    oa, ob = _grid_polish_oracle(x, y)
    assert f.a == pytest.approx(oa, abs=1e-4) and f.b == pytest.approx(ob, abs=1e-4)


def test_nonpositive_values_use_direct_start():
    x = np.arange(1, 6, dtype=float)
    y = np.array([0.0, 1.5, 4.2, 11.0, 30.5])
    f = fit_exponential(x, y)
    oa, ob = _grid_polish_oracle(x, y)
    assert f.a == pytest.approx(oa, abs=1e-4) and f.b == pytest.approx(ob, abs=1e-4)
    with pytest.raises(ExpFitError):
        fit_exponential(x, y, "loglinear")


def test_nonconvergence_reports_last_iterate():
    x = np.arange(1, 5, dtype=float)
    y = np.array([1.0, 8.0, 2.0, 30.0])
    with pytest.raises(ExpFitError) as err:
        fit_exponential(x, y, max_iter=1)
    assert err.value.a is not None and err.value.b is not None


def test_schema_groups_in_naive_space_differ_only_in_prior():
    schema = small_schema(1, 2)
    bits = np.array([[1, 1, 0], [0, 0, 1]], dtype=np.uint8)
    t = build_table(bits, schema, PriorConfig(1.0))
    u = t.with_prior(PriorConfig(1.0, "naive2k"))
    assert marginal(t, {"g0": 1}).alpha == pytest.approx(1 + 0.5)
    assert marginal(u, {"g0": 1}).alpha == pytest.approx(1 + 0.5)
    assert marginal(t, {"b0": 1, "g0": 1}).alpha == pytest.approx(1 + 0.25)
    assert isinstance(schema, VariableSchema)
