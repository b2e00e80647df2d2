import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mvbern.schema import VariableSchema
from mvbern.synth import (
    OracleRangeError,
    OracleReport,
    PaperlikeGenerator,
    SyntheticModel,
    blocks_model,
    independent_model,
    oracle_conditional,
    oracle_correlation,
    oracle_marginal,
    preset_bits,
    sample,
)

from conftest import binary_schema, small_schema


def test_point_mass_model():
    schema = binary_schema(3)
    w = np.zeros(8)
    w[5] = 1.0
    codes = sample(SyntheticModel.from_weights(schema, w), 1000, seed=0)
    assert np.all(codes == 5)


def test_uniform_frequencies_within_binomial_bound():
    schema = binary_schema(3)
    n = 80_000
    codes = sample(SyntheticModel.from_weights(schema, np.full(8, 1 / 8)), n, seed=1)
    freq = np.bincount(codes.astype(np.int64), minlength=8)
    sd = math.sqrt(n * (1 / 8) * (7 / 8))
    assert np.all(np.abs(freq - n / 8) < 4 * sd)


def test_independent_bits_frequencies():
    p = np.array([0.2, 0.5, 0.9])
    model = independent_model(p)
    n = 50_000
    bits = model.schema.unpack(sample(model, n, seed=2))
    assert np.all(np.abs(bits.mean(axis=0) - p) < 4 * np.sqrt(p * (1 - p) / n))
    for j in range(3):
        for s in range(j + 1, 3):
            assert oracle_correlation(model, j, s) == pytest.approx(0, abs=1e-12)


def test_identity_coupling_correlation_is_one():
    schema = binary_schema(2)
    model = SyntheticModel.from_weights(schema, [0.3, 0.0, 0.0, 0.7])
    assert oracle_correlation(model, 0, 1) == pytest.approx(1.0)


def test_weights_must_normalize():
    with pytest.raises(ValueError):
        SyntheticModel.from_weights(binary_schema(2), [0.25, 0.25, 0.25, 0.25 + 1e-9])
    with pytest.raises(ValueError):
        SyntheticModel.from_weights(binary_schema(1), [1.5, -0.5])
    with pytest.raises(OracleRangeError):
        SyntheticModel.random(binary_schema(21))


def _second_conditional(model, target, given_):
    """Independent double loop over outcomes, working on bit strings."""
    k = model.schema.k
    num = den = 0.0
    for code, w in zip(model.outcomes.tolist(), model.weights.tolist()):
        s = format(code, f"0{k}b")
        if all(s[i] == str(b) for i, b in given_.items()):
            den += w
            if all(s[i] == str(b) for i, b in target.items()):
                num += w
    return num / den


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 2), st.integers(0, 2), st.integers(0, 1))
def test_conditional_double_implementation(seed, j, s, bit):
    model = SyntheticModel.random(binary_schema(3), seed=seed)
    got = oracle_conditional(model, {j: 1}, {s: bit})
    assert got == pytest.approx(_second_conditional(model, {j: 1}, {s: bit}), rel=1e-12)


def test_marginalization_closure():
    schema = small_schema(3, 3)
    model = SyntheticModel.random(schema, seed=3)
    sub = model.marginalize(["b2", "g0", "g1", "g2"])
    assert sub.weights.sum() == pytest.approx(1.0)
    assert sub.schema.admissible_count() == 2 * 3
    assert oracle_marginal(sub, {"b2": 1, "g1": 1}) == pytest.approx(oracle_marginal(model, {"b2": 1, "g1": 1}))
    partial = model.marginalize(["g0", "b0"])  # partial group becomes free bits
    assert partial.weights.sum() == pytest.approx(1.0)


def test_blocks_model_planted_structure():
    model = blocks_model((3, 3), flip=0.1)
    assert oracle_correlation(model, 0, 1) == pytest.approx(0.64)
    assert oracle_correlation(model, 0, 4) == pytest.approx(0.0, abs=1e-12)


def test_oracle_report_errors():
    r = OracleReport("q", 0.5, 0.5000001)
    assert r.abs_error == pytest.approx(1e-7) and r.rel_error == pytest.approx(2e-7)
    assert OracleReport("z", 0.0, 0.0).rel_error == 0.0
    assert OracleReport("z", 0.0, 1e-3).rel_error == math.inf


def test_paperlike_generator_shape_and_rates():
    schema, bits = preset_bits("paperlike", 100_000, seed=0)
    assert bits.shape == (100_000, 35)
    assert np.all(bits[:, 1:5].sum(axis=1) == 1)
    death = bits[:, schema.index("death")]
    assert 0.08 < death.mean() < 0.13
    age = bits[:, 1:5].argmax(axis=1)
    rates = [death[age == a].mean() for a in range(4)]
    assert rates == sorted(rates) or rates[1:] == sorted(rates[1:])
    assert rates[3] > 5 * rates[1]
    assert np.array_equal(PaperlikeGenerator().sample_bits(50, 9), PaperlikeGenerator().sample_bits(50, 9))


def test_presets_are_deterministic():
    for name in ("independent", "blocks"):
        a = preset_bits(name, 100, 3)[1]
        b = preset_bits(name, 100, 3)[1]
        assert np.array_equal(a, b)
    with pytest.raises(ValueError):
        preset_bits("nope", 1, 0)
    assert isinstance(preset_bits("independent", 1, 0)[0], VariableSchema)
