"""Synthetic multivariate Bernoulli models and brute-force reference values.

Exact models hold one probability per admissible outcome and are limited to
``k <= 20``.  Reference quantities are computed by summing over the whole
sample space, which keeps them independent of the sparse event-mass engine.
The ``paperlike`` generator is a sampling-only model over the full 35-bit
clinical layout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .layout import AGE_GROUP, COMORBIDITIES, SYMPTOMS, footprint_schema
from .schema import VariableSchema
from .table import ActiveOutcomeTable

EXACT_MAX_BITS = 20


class OracleRangeError(ValueError):
    """Schema too wide for exhaustive enumeration."""


@dataclass(frozen=True, eq=False)
class SyntheticModel:
    """Explicit probability for every admissible outcome of ``schema``."""

    schema: VariableSchema
    outcomes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if self.schema.k > EXACT_MAX_BITS:
            raise OracleRangeError(f"exact models need k <= {EXACT_MAX_BITS}, got {self.schema.k}")
        w = np.asarray(self.weights, dtype=float)
        if w.shape != self.outcomes.shape:
            raise ValueError("one weight per admissible outcome required")
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")

    @classmethod
    def from_weights(cls, schema: VariableSchema, weights) -> SyntheticModel:
        _check_exact(schema)
        return cls(schema, schema.admissible_codes(), np.asarray(weights, dtype=float))

    @classmethod
    def random(cls, schema: VariableSchema, seed=None, concentration: float = 1.0) -> SyntheticModel:
        _check_exact(schema)
        outcomes = schema.admissible_codes()
        w = np.random.default_rng(seed).dirichlet(np.full(len(outcomes), concentration))
        w /= w.sum()
        return cls(schema, outcomes, w)

    @property
    def bits(self) -> np.ndarray:
        return self.schema.unpack(self.outcomes)

    def sample(self, n: int, seed=None) -> np.ndarray:
        return sample(self, n, seed)

    def marginalize(self, indices: Sequence) -> SyntheticModel:
        """Law of a subset of the variables, as a model on the sub-schema."""
        idx = [self.schema.index(i) for i in indices]
        sub = self.schema.subschema(idx)
        sub_codes = sub.pack(self.bits[:, idx])
        outcomes = sub.admissible_codes()
        pos = np.searchsorted(outcomes, sub_codes)
        weights = np.zeros(len(outcomes))
        np.add.at(weights, pos, self.weights)
        return SyntheticModel(sub, outcomes, weights / weights.sum())


def _check_exact(schema: VariableSchema) -> None:
    if schema.k > EXACT_MAX_BITS:
        raise OracleRangeError(f"exact mode is limited to k <= {EXACT_MAX_BITS}, got {schema.k}")


def sample(model: SyntheticModel, n: int, seed=None) -> np.ndarray:
    """``n`` i.i.d. footprint codes by inverse-CDF over the weight vector."""
    cdf = np.cumsum(model.weights)
    cdf[-1] = 1.0
    u = np.random.default_rng(seed).random(n)
    return model.outcomes[np.searchsorted(cdf, u, side="right")]


# -- plug-in oracles on exact models --------------------------------------


def _matching(schema: VariableSchema, bits: np.ndarray, event) -> np.ndarray:
    event = schema.event(event)
    if event.contradictory:
        return np.zeros(len(bits), dtype=bool)
    sel = np.ones(len(bits), dtype=bool)
    for idx, bit in event.requirements:
        sel &= bits[:, idx] == bit
    return sel


def oracle_marginal(model: SyntheticModel, event) -> float:
    return float(model.weights[_matching(model.schema, model.bits, event)].sum())


def oracle_conditional(model: SyntheticModel, target, given) -> float:
    schema = model.schema
    joint = schema.event(target) & schema.event(given)
    return oracle_marginal(model, joint) / oracle_marginal(model, given)


def oracle_correlation(model: SyntheticModel, j, s) -> float:
    schema = model.schema
    j, s = schema.index(j), schema.index(s)
    wj = oracle_marginal(model, {j: 1})
    ws = oracle_marginal(model, {s: 1})
    wjs = oracle_marginal(model, {j: 1, s: 1}) if j != s else wj
    return (wjs - wj * ws) / math.sqrt(wj * (1 - wj) * ws * (1 - ws))


# -- posterior oracles over the full weight vector -------------------------


def posterior_weights(table: ActiveOutcomeTable) -> tuple[np.ndarray, np.ndarray]:
    """Every admissible outcome with its Dirichlet parameter ``r_l + delta``."""
    schema = table.schema
    _check_exact(schema)
    if table.prior.space == "naive2k":
        outcomes = np.arange(1 << schema.k, dtype=np.uint64)
    else:
        outcomes = schema.admissible_codes()
    delta = float(table.prior.per_outcome_mass(schema))
    alpha = np.full(len(outcomes), delta)
    pos = np.searchsorted(outcomes, table.keys)
    alpha[pos] += table.counts
    return outcomes, alpha


def posterior_mean_marginal(table: ActiveOutcomeTable, event) -> float:
    """``E[w_event | data]`` as a direct sum over the posterior weight vector."""
    outcomes, alpha = posterior_weights(table)
    sel = _matching(table.schema, table.schema.unpack(outcomes), event)
    return float(alpha[sel].sum() / alpha.sum())


def posterior_mean_conditional(table: ActiveOutcomeTable, target, given) -> float:
    schema = table.schema
    outcomes, alpha = posterior_weights(table)
    bits = schema.unpack(outcomes)
    joint = schema.event(target) & schema.event(given)
    return float(alpha[_matching(schema, bits, joint)].sum() / alpha[_matching(schema, bits, given)].sum())


def posterior_mc(table: ActiveOutcomeTable, statistic, n_samples: int, seed=None) -> np.ndarray:
    """Draw full weight vectors from the posterior and apply ``statistic(w, bits)``.

    ``statistic`` receives an ``(n_samples, S)`` weight matrix and the
    ``(S, k)`` outcome bits and returns one value per draw.
    """
    outcomes, alpha = posterior_weights(table)
    rng = np.random.default_rng(seed)
    g = rng.standard_gamma(np.broadcast_to(alpha, (n_samples, len(alpha))))
    w = g / g.sum(axis=1, keepdims=True)
    return statistic(w, table.schema.unpack(outcomes))


@dataclass(frozen=True)
class OracleReport:
    quantity: str
    oracle: float
    engine: float

    @property
    def abs_error(self) -> float:
        return abs(self.engine - self.oracle)

    @property
    def rel_error(self) -> float:
        if self.oracle:
            return self.abs_error / abs(self.oracle)
        return 0.0 if self.abs_error == 0 else math.inf


# -- presets ---------------------------------------------------------------


def independent_model(p: Sequence[float], names: Sequence[str] | None = None) -> SyntheticModel:
    """Product of independent Bernoulli bits with success probabilities ``p``."""
    names = list(names) if names else [f"x{i + 1}" for i in range(len(p))]
    schema = VariableSchema.from_spec(names)
    bits = schema.unpack(schema.admissible_codes()).astype(float)
    p = np.asarray(p, dtype=float)
    w = np.prod(np.where(bits == 1, p, 1 - p), axis=1)
    return SyntheticModel(schema, schema.admissible_codes(), w / w.sum())


def blocks_model(block_sizes: Sequence[int] = (4, 4), flip: float = 0.1) -> SyntheticModel:
    """Independent blocks; inside a block every bit copies a fair latent coin
    and is flipped with probability ``flip``.

    Within-block correlation is ``(1 - 2 flip)**2``; across blocks it is 0.
    """
    names = [f"b{b + 1}_{i + 1}" for b, size in enumerate(block_sizes) for i in range(size)]
    schema = VariableSchema.from_spec(names)
    bits = schema.unpack(schema.admissible_codes())
    w = np.ones(len(bits))
    start = 0
    for size in block_sizes:
        block = bits[:, start : start + size]
        agree1 = np.prod(np.where(block == 1, 1 - flip, flip), axis=1)
        agree0 = np.prod(np.where(block == 0, 1 - flip, flip), axis=1)
        w *= 0.5 * agree1 + 0.5 * agree0
        start += size
    return SyntheticModel(schema, schema.admissible_codes(), w / w.sum())


def _logistic(z):
    return 1.0 / (1.0 + np.exp(-z))


class PaperlikeGenerator:
    """Sampling model over the 35-bit clinical footprint.

    Sex and age band drive comorbidity and symptom prevalence; hospitalization
    and death follow logistic models in age, sex, comorbidities and respiratory
    symptoms, so death risk rises steeply with the age band.
    """

    def __init__(self):
        self.schema = footprint_schema()
        self.p_male = 0.52
        self.p_asymptomatic = 0.04
        self.age_probs = np.array([[0.044, 0.393, 0.378, 0.185], [0.042, 0.367, 0.378, 0.213]])
        # prevalence by age band, rows follow COMORBIDITIES / SYMPTOMS order
        self.comorbidity_rates = np.array(
            [
                [0.004, 0.007, 0.016, 0.040],  # chronic kidney failure
                [0.001, 0.002, 0.008, 0.046],  # copd
                [0.006, 0.005, 0.014, 0.052],  # heart disease
                [0.008, 0.030, 0.175, 0.350],  # diabetes
                [0.010, 0.005, 0.010, 0.017],  # immunosuppression
                [0.007, 0.043, 0.210, 0.470],  # hypertension
                [0.048, 0.135, 0.192, 0.170],  # obesity
                [0.022, 0.086, 0.065, 0.068],  # smoking
                [0.034, 0.025, 0.023, 0.019],  # asthma
            ]
        )
        self.symptom_rates = np.array(
            [
                [0.55, 0.62, 0.66, 0.67],
                [0.60, 0.72, 0.75, 0.78],
                [0.38, 0.49, 0.47, 0.40],
                [0.12, 0.17, 0.31, 0.57],
                [0.17, 0.15, 0.16, 0.17],
                [0.14, 0.20, 0.19, 0.19],
                [0.12, 0.22, 0.28, 0.33],
                [0.23, 0.35, 0.37, 0.35],
                [0.62, 0.78, 0.75, 0.68],
                [0.36, 0.56, 0.59, 0.58],
                [0.30, 0.49, 0.53, 0.53],
                [0.29, 0.40, 0.45, 0.54],
                [0.33, 0.36, 0.30, 0.25],
                [0.05, 0.06, 0.12, 0.22],
                [0.07, 0.06, 0.06, 0.08],
                [0.09, 0.10, 0.10, 0.12],
                [0.09, 0.11, 0.09, 0.07],
                [0.02, 0.02, 0.03, 0.06],
                [0.30, 0.34, 0.35, 0.36],
            ]
        )
        self.hosp_age = np.array([-4.1, -4.4, -3.0, -1.7])
        self.death_age = np.array([-5.9, -5.6, -4.9, -4.2])

    def sample_bits(self, n: int, seed=None) -> np.ndarray:
        rng = np.random.default_rng(seed)
        schema = self.schema
        bits = np.zeros((n, schema.k), dtype=np.uint8)
        male = rng.random(n) < self.p_male
        u = rng.random(n)
        cdf = np.cumsum(self.age_probs, axis=1)
        age = (u[:, None] > cdf[male.astype(int)]).sum(axis=1)
        age = np.minimum(age, 3)
        bits[:, schema.index("male")] = male
        age_idx = schema.group_members(AGE_GROUP)
        bits[np.arange(n), np.array(age_idx)[age]] = 1
        com = rng.random((n, len(COMORBIDITIES))) < self.comorbidity_rates[:, age].T
        sym = rng.random((n, len(SYMPTOMS))) < self.symptom_rates[:, age].T
        sym[rng.random(n) < self.p_asymptomatic] = False
        for i, name in enumerate(COMORBIDITIES):
            bits[:, schema.index(name)] = com[:, i]
        for i, name in enumerate(SYMPTOMS):
            bits[:, schema.index(name)] = sym[:, i]
        c = {name: com[:, i] for i, name in enumerate(COMORBIDITIES)}
        s = {name: sym[:, i] for i, name in enumerate(SYMPTOMS)}
        z_h = (
            self.hosp_age[age]
            + 0.35 * male
            + 2.6 * s["difficulty_breathing"]
            + 0.9 * s["rapid_breathing"]
            + 0.9 * s["cyanosis"]
            + 0.5 * c["diabetes"]
            + 0.3 * c["hypertension"]
            + 1.0 * c["chronic_kidney_failure"]
            + 0.6 * c["copd"]
            + 0.8 * c["immunosuppression"]
        )
        hosp = rng.random(n) < _logistic(z_h)
        z_d = (
            self.death_age[age]
            + 0.35 * male
            + 3.2 * hosp
            + 0.9 * s["difficulty_breathing"]
            + 0.4 * c["diabetes"]
            + 0.3 * c["hypertension"]
            + 0.8 * c["chronic_kidney_failure"]
            + 0.3 * c["copd"]
            + 0.5 * c["immunosuppression"]
        )
        death = rng.random(n) < _logistic(z_d)
        bits[:, schema.index("hospitalized")] = hosp
        bits[:, schema.index("death")] = death
        return bits

    def sample(self, n: int, seed=None) -> np.ndarray:
        return self.schema.pack(self.sample_bits(n, seed))


PRESETS = ("independent", "blocks", "paperlike")


def preset(name: str):
    """Named generator: ``independent``, ``blocks`` or ``paperlike``."""
    if name == "independent":
        return independent_model([0.2, 0.5, 0.9, 0.3, 0.7, 0.1])
    if name == "blocks":
        return blocks_model()
    if name == "paperlike":
        return PaperlikeGenerator()
    raise ValueError(f"unknown preset {name!r}; choose from {PRESETS}")


def preset_bits(name: str, n: int, seed=None) -> tuple[VariableSchema, np.ndarray]:
    gen = preset(name)
    if isinstance(gen, PaperlikeGenerator):
        return gen.schema, gen.sample_bits(n, seed)
    return gen.schema, gen.schema.unpack(sample(gen, n, seed))
