"""Posterior-predictive classification of a binary outcome on reduced footprints.

Training tallies (alive, death) per reduced footprint.  A new footprint gets
``Beta(prior + deaths, prior + survivors)``; its mean is compared to a
cut-point.  Footprints never seen in training fall back to their
(sex, age band) cell, and to the prior alone if that cell is empty too.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .inference import EventPosterior, conditional
from .layout import AGE_GROUP, DEFAULT_PREDICTORS, DEFAULT_TARGET
from .schema import Footprint, SchemaError, SchemaViolation, VariableSchema
from .table import ActiveOutcomeTable, PriorConfig

log = logging.getLogger(__name__)

# size of the reference data set and of its held-out prediction set
REFERENCE_N = 1_584_280
REFERENCE_TEST = 100_000

EXACT, FALLBACK, PRIOR = 0, 1, 2
PROVENANCE = ("exact", "fallback", "prior")


class PredictorError(ValueError):
    pass


def _expand(schema: VariableSchema, names) -> list[int]:
    out: list[int] = []
    group_names = {g for g, _ in schema.groups}
    for name in names:
        if isinstance(name, str) and name in group_names:
            out.extend(schema.group_members(name))
        else:
            out.append(schema.index(name))
    return out


@dataclass(frozen=True)
class ReducedSchema:
    """Predictor subset and target of a full schema.

    Predictor positions are kept in schema order, so permuting the names
    passed in does not change footprint identity.
    """

    schema: VariableSchema
    predictors: tuple[int, ...]
    target: int
    fallback: tuple[int, ...] = ()

    def __post_init__(self):
        preds = tuple(sorted(set(self.predictors)))
        object.__setattr__(self, "predictors", preds)
        object.__setattr__(self, "fallback", tuple(sorted(set(self.fallback))))
        if self.target in preds:
            raise SchemaError("target variable cannot also be a predictor")
        if not set(self.fallback) <= set(preds):
            raise SchemaError("fallback variables must be predictors")
        for g, members in self.schema.groups:
            inside = [i for i in members if i in preds]
            if inside and len(inside) != len(members):
                raise SchemaError(f"one-hot group {g!r} must be used whole")

    @classmethod
    def from_names(
        cls,
        schema: VariableSchema,
        predictors: Sequence = DEFAULT_PREDICTORS,
        target=DEFAULT_TARGET,
        fallback: Sequence | None = None,
    ) -> ReducedSchema:
        if fallback is None:
            fallback = [n for n in ("male", AGE_GROUP) if n in predictors]
        return cls(schema, tuple(_expand(schema, predictors)), schema.index(target), tuple(_expand(schema, fallback)))

    @property
    def sub(self) -> VariableSchema:
        return self.schema.subschema(self.predictors)

    @property
    def outcome_schema(self) -> VariableSchema:
        """Predictors plus target, the space the predictive prior is spread over."""
        return self.schema.subschema(list(self.predictors) + [self.target])

    @property
    def width(self) -> int:
        return len(self.predictors)

    def project(self, bits: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Full ``(n, k)`` bit matrix -> (reduced codes, target bits)."""
        bits = np.asarray(bits)
        return self.sub.pack(bits[:, list(self.predictors)]), bits[:, self.target].astype(np.int8)

    def project_codes(self, codes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        k = self.schema.k
        codes = np.asarray(codes, dtype=np.uint64)
        out = np.zeros(len(codes), dtype=np.uint64)
        p = self.width
        for pos, idx in enumerate(self.predictors):
            bit = (codes >> np.uint64(k - 1 - idx)) & np.uint64(1)
            out |= bit << np.uint64(p - 1 - pos)
        y = ((codes >> np.uint64(k - 1 - self.target)) & np.uint64(1)).astype(np.int8)
        return out, y

    def fallback_codes(self, reduced_codes: np.ndarray) -> np.ndarray:
        p = self.width
        out = np.zeros(len(reduced_codes), dtype=np.uint64)
        nf = len(self.fallback)
        for pos, idx in enumerate(self.fallback):
            rpos = self.predictors.index(idx)
            bit = (reduced_codes >> np.uint64(p - 1 - rpos)) & np.uint64(1)
            out |= bit << np.uint64(nf - 1 - pos)
        return out

    # text form: one digit per binary variable, one 1-based level digit per group

    def encode(self, code: int) -> str:
        sub = self.sub
        bits = sub.unpack(np.array([code], dtype=np.uint64))[0]
        out, done = [], set()
        for i, v in enumerate(sub.variables):
            if i in done:
                continue
            if v.group is None:
                out.append(str(bits[i]))
            else:
                members = sub.group_members(v.group)
                done.update(members)
                level = [j for j, m in enumerate(members) if bits[m]]
                out.append(str(level[0] + 1) if len(level) == 1 else "?")
        return "".join(out)

    def decode(self, text: str) -> int:
        sub = self.sub
        bits: list[int] = []
        digits = list(text.strip())
        pos = 0
        done: set[int] = set()
        for i, v in enumerate(sub.variables):
            if i in done:
                continue
            if pos >= len(digits):
                raise SchemaViolation(f"footprint {text!r} too short")
            d = digits[pos]
            pos += 1
            if v.group is None:
                if d not in "01":
                    raise SchemaViolation(f"footprint {text!r}: {v.name} must be 0 or 1")
                bits.append(int(d))
            else:
                members = sub.group_members(v.group)
                done.update(members)
                if not d.isdigit() or not 1 <= int(d) <= len(members):
                    raise SchemaViolation(f"footprint {text!r}: {v.group} must be 1..{len(members)}")
                bits.extend(int(int(d) == j + 1) for j in range(len(members)))
        if pos != len(digits):
            raise SchemaViolation(f"footprint {text!r} too long")
        return int(sub.pack(np.array([bits]))[0])

    def label(self) -> str:
        sub = self.sub
        names, done = [], set()
        for i, v in enumerate(sub.variables):
            if i in done:
                continue
            if v.group is None:
                names.append(v.name)
            else:
                done.update(sub.group_members(v.group))
                names.append(v.group)
        return " ".join(names)

    def to_json(self) -> dict:
        names = self.schema.names
        return {
            "predictors": [names[i] for i in self.predictors],
            "target": names[self.target],
            "fallback": [names[i] for i in self.fallback],
        }


@dataclass(frozen=True)
class ConfusionMatrix:
    """Entries are reals because cross-validation averages matrices."""

    tn: float = 0.0
    fp: float = 0.0
    fn: float = 0.0
    tp: float = 0.0

    @classmethod
    def from_predictions(cls, predicted: np.ndarray, actual: np.ndarray) -> ConfusionMatrix:
        predicted = np.asarray(predicted, dtype=bool)
        actual = np.asarray(actual, dtype=bool)
        return cls(
            float(np.sum(~predicted & ~actual)),
            float(np.sum(predicted & ~actual)),
            float(np.sum(~predicted & actual)),
            float(np.sum(predicted & actual)),
        )

    @classmethod
    def mean(cls, matrices: Sequence[ConfusionMatrix]) -> ConfusionMatrix:
        arr = np.array([m.as_array() for m in matrices])
        return cls(*arr.mean(axis=0).tolist())

    def as_array(self) -> np.ndarray:
        return np.array([self.tn, self.fp, self.fn, self.tp])

    @property
    def total(self) -> float:
        return self.tn + self.fp + self.fn + self.tp

    @property
    def tpr(self) -> float | None:
        pos = self.tp + self.fn
        return self.tp / pos if pos > 0 else None

    @property
    def tnr(self) -> float | None:
        neg = self.tn + self.fp
        return self.tn / neg if neg > 0 else None

    def column_percentages(self) -> dict:
        """Percent of each actual class by predicted class; undefined columns omitted."""
        out = {}
        neg, pos = self.tn + self.fp, self.tp + self.fn
        if neg > 0:
            out["alive"] = {"pred_alive": 100 * self.tn / neg, "pred_death": 100 * self.fp / neg}
        if pos > 0:
            out["death"] = {"pred_alive": 100 * self.fn / pos, "pred_death": 100 * self.tp / pos}
        return out

    def to_dict(self) -> dict:
        d = {"tn": self.tn, "fp": self.fp, "fn": self.fn, "tp": self.tp}
        if self.tpr is not None:
            d["tpr"] = self.tpr
        if self.tnr is not None:
            d["tnr"] = self.tnr
        d["column_percent"] = self.column_percentages()
        return d


@dataclass(frozen=True)
class Prediction:
    mean: float
    posterior: EventPosterior
    provenance: str


@dataclass(frozen=True, eq=False)
class PredictorModel:
    reduced: ReducedSchema
    keys: np.ndarray
    alive: np.ndarray
    death: np.ndarray
    fb_keys: np.ndarray
    fb_alive: np.ndarray
    fb_death: np.ndarray
    prior: PriorConfig = field(default_factory=PriorConfig)
    cut_point: float | None = None
    flags: tuple[str, ...] = ()

    @property
    def training_size(self) -> int:
        return int(self.alive.sum() + self.death.sum())

    def with_cut_point(self, c: float) -> PredictorModel:
        if not 0 < c < 1:
            raise ValueError("cut-point must lie in (0, 1)")
        return PredictorModel(
            self.reduced, self.keys, self.alive, self.death,
            self.fb_keys, self.fb_alive, self.fb_death, self.prior, float(c), self.flags,
        )

    # prior mass attached to each tier of the predictive

    def _prior_terms(self) -> tuple[float, float, float]:
        osch = self.reduced.outcome_schema
        space = self.prior.space
        S = osch.admissible_count(space)
        nu = float(self.prior.nu)
        target_pos = osch.k - 1
        # a fallback cell fixes the fallback variables (whole groups) and the target
        req = {target_pos: 1}
        for i in self.reduced.fallback:
            req[self.reduced.predictors.index(i)] = 0
        for _, members in osch.groups:
            if any(m in req for m in members):
                req.update({m: int(j == 0) for j, m in enumerate(members)})
        exact = nu / S
        fallback = nu * osch.count_matching(osch.event(req), space) / S
        prior_only = nu * osch.count_matching(osch.event({target_pos: 1}), space) / S
        return exact, fallback, prior_only

    def predict_mean(self, codes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized posterior predictive means and provenance codes (0/1/2)."""
        codes = np.asarray(codes, dtype=np.uint64)
        t_exact, t_fb, t_prior = self._prior_terms()
        a = np.full(len(codes), t_prior)
        b = np.full(len(codes), t_prior)
        prov = np.full(len(codes), PRIOR, dtype=np.int8)

        fb = self.reduced.fallback_codes(codes)
        if len(self.fb_keys):
            pos = np.minimum(np.searchsorted(self.fb_keys, fb), len(self.fb_keys) - 1)
            hit = self.fb_keys[pos] == fb
            a[hit] = t_fb + self.fb_death[pos[hit]]
            b[hit] = t_fb + self.fb_alive[pos[hit]]
            prov[hit] = FALLBACK
        if len(self.keys):
            pos = np.minimum(np.searchsorted(self.keys, codes), len(self.keys) - 1)
            hit = self.keys[pos] == codes
            a[hit] = t_exact + self.death[pos[hit]]
            b[hit] = t_exact + self.alive[pos[hit]]
            prov[hit] = EXACT
        return a / (a + b), prov

    def classify(self, codes: np.ndarray, cut_point: float | None = None) -> np.ndarray:
        c = self.cut_point if cut_point is None else cut_point
        if c is None:
            raise PredictorError("model has no cut-point")
        return self.predict_mean(codes)[0] > c

    def to_json(self) -> dict:
        rows = [
            [self.reduced.encode(int(c)), int(a), int(d)]
            for c, a, d in zip(self.keys, self.alive, self.death)
        ]
        return {
            "format": "mvbern-predictor/1",
            "schema": self.reduced.schema.to_json(),
            "reduced": self.reduced.to_json(),
            "prior": {"nu": float(self.prior.nu), "space": self.prior.space},
            "cut_point": self.cut_point,
            "flags": list(self.flags),
            "contingency": rows,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    @classmethod
    def load(cls, path) -> PredictorModel:
        d = json.loads(Path(path).read_text())
        if d.get("format") != "mvbern-predictor/1":
            raise PredictorError(f"{path}: not a predictor model file")
        schema = VariableSchema.from_json(d["schema"])
        r = d["reduced"]
        reduced = ReducedSchema.from_names(schema, r["predictors"], r["target"], r["fallback"])
        prior = PriorConfig(d["prior"]["nu"], d["prior"]["space"])
        rows = d["contingency"]
        codes = np.array([reduced.decode(t) for t, _, _ in rows], dtype=np.uint64)
        alive = np.array([a for _, a, _ in rows], dtype=np.int64)
        death = np.array([x for _, _, x in rows], dtype=np.int64)
        codes = np.repeat(codes, 2)
        y = np.tile(np.array([0, 1], dtype=np.int8), len(rows))
        w = np.column_stack([alive, death]).ravel()
        model = _fit_weighted(codes, y, w, reduced, prior)
        if d.get("cut_point") is not None:
            model = model.with_cut_point(d["cut_point"])
        return model

    def contingency_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([self.reduced.label(), "alive", "death"])
        for c, a, d in zip(self.keys, self.alive, self.death):
            writer.writerow([self.reduced.encode(int(c)), int(a), int(d)])
        return buf.getvalue()


def _fit_weighted(codes, y, weights, reduced: ReducedSchema, prior: PriorConfig) -> PredictorModel:
    codes = np.asarray(codes, dtype=np.uint64)
    y = np.asarray(y, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.int64)

    def tally(c):
        combined = (c << np.uint64(1)) | y.astype(np.uint64)
        keys, inverse = np.unique(combined, return_inverse=True)
        totals = np.bincount(inverse.ravel(), weights=weights, minlength=len(keys)).astype(np.int64)
        cells = keys >> np.uint64(1)
        is_death = (keys & np.uint64(1)).astype(bool)
        ukeys, pos = np.unique(cells, return_inverse=True)
        alive = np.zeros(len(ukeys), dtype=np.int64)
        death = np.zeros(len(ukeys), dtype=np.int64)
        np.add.at(alive, pos[~is_death], totals[~is_death])
        np.add.at(death, pos[is_death], totals[is_death])
        keep = (alive + death) > 0
        return ukeys[keep], alive[keep], death[keep]

    keys, alive, death = tally(codes)
    fb_keys, fb_alive, fb_death = tally(reduced.fallback_codes(codes))
    flags = () if weights.sum() > 0 else ("prior-only",)
    if flags:
        log.warning("empty training data: predictions come from the prior alone")
    return PredictorModel(reduced, keys, alive, death, fb_keys, fb_alive, fb_death, prior, None, flags)


def fit(codes, outcomes, reduced: ReducedSchema, prior: PriorConfig | None = None) -> PredictorModel:
    """Tally (alive, death) per reduced footprint and per fallback cell.

    ``codes`` are reduced footprint codes (see :meth:`ReducedSchema.project`)
    or an ``(n, width)`` bit matrix over the predictors.
    """
    prior = prior or PriorConfig()
    codes = np.asarray(codes)
    if codes.ndim == 2:
        codes = reduced.sub.pack(codes)
    outcomes = np.asarray(outcomes)
    if len(codes) != len(outcomes):
        raise ValueError("codes and outcomes differ in length")
    if len(outcomes) and not np.all((outcomes == 0) | (outcomes == 1)):
        raise ValueError("outcomes must be 0/1")
    return _fit_weighted(codes, outcomes, np.ones(len(codes), dtype=np.int64), reduced, prior)


def fit_table(table: ActiveOutcomeTable, reduced: ReducedSchema, prior: PriorConfig | None = None) -> PredictorModel:
    """Fit directly from an active-outcome table (counts act as weights)."""
    codes, y = reduced.project_codes(table.keys)
    return _fit_weighted(codes, y, table.counts, reduced, prior or table.prior)


def predict_proba(model: PredictorModel, footprint) -> Prediction:
    """Posterior predictive for one reduced footprint (code, text form or bits)."""
    reduced = model.reduced
    if isinstance(footprint, str):
        code = reduced.decode(footprint)
    elif isinstance(footprint, Footprint):
        code = footprint.code
    elif isinstance(footprint, (int, np.integer)):
        code = int(footprint)
    else:
        bits = np.asarray(footprint)[None, :]
        if not reduced.sub.validate_bits(bits)[0]:
            raise SchemaViolation("footprint violates the reduced schema")
        code = int(reduced.sub.pack(bits)[0])
    if not reduced.sub.validate_codes(np.array([code], dtype=np.uint64))[0]:
        raise SchemaViolation(f"footprint {code} violates the reduced schema")
    mean, prov = model.predict_mean(np.array([code], dtype=np.uint64))
    t = model._prior_terms()[int(prov[0])]
    # recover (alpha, beta) for the tier actually used
    if prov[0] == EXACT:
        i = int(np.searchsorted(model.keys, np.uint64(code)))
        a, b = t + model.death[i], t + model.alive[i]
    elif prov[0] == FALLBACK:
        fb = reduced.fallback_codes(np.array([code], dtype=np.uint64))[0]
        i = int(np.searchsorted(model.fb_keys, fb))
        a, b = t + model.fb_death[i], t + model.fb_alive[i]
    else:
        a = b = t
    post = EventPosterior(float(a), float(b), "conditional", f"{reduced.schema.names[reduced.target]}|{reduced.encode(code)}")
    return Prediction(float(mean[0]), post, PROVENANCE[int(prov[0])])


def predictive_posterior(table: ActiveOutcomeTable, known, target=DEFAULT_TARGET) -> EventPosterior:
    """Predictive for a full footprint with some bits unknown.

    The unknown bits (e.g. hospitalization) are summed out:
    ``alpha* = eta(known, target=1)``, ``beta* = eta(known, target=0)``.
    """
    return conditional(table, {target: 1}, known)


# -- cut-point search ------------------------------------------------------

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


@dataclass(frozen=True)
class RocSweep:
    thresholds: np.ndarray
    tpr: np.ndarray
    tnr: np.ndarray

    @property
    def objective(self) -> np.ndarray:
        return self.tpr + self.tnr

    @property
    def best(self) -> int:
        # first maximum on ascending thresholds = smallest threshold
        return int(np.argmax(self.objective))

    def auc(self) -> float:
        fpr = 1 - self.tnr
        order = np.lexsort((self.tpr, fpr))
        return float(_trapezoid(self.tpr[order], fpr[order]))


def roc_sweep(scores: np.ndarray, labels: np.ndarray) -> RocSweep:
    """TPR/TNR of ``score > c`` at 0, 1 and midpoints between distinct scores."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(bool)
    values, inverse = np.unique(scores, return_inverse=True)
    pos = np.bincount(inverse, weights=labels, minlength=len(values))
    neg = np.bincount(inverse, weights=~labels, minlength=len(values))
    P, N = pos.sum(), neg.sum()
    mids = (values[:-1] + values[1:]) / 2
    lo = min(0.0, values[0] - 1.0) if len(values) and values[0] <= 0 else 0.0
    hi = max(1.0, values[-1] + 1.0) if len(values) and values[-1] >= 1 else 1.0
    thresholds = np.concatenate([[lo], mids, [hi]])
    # predicted positive counts for threshold just below values[i:]
    tp_above = np.concatenate([np.cumsum(pos[::-1])[::-1], [0.0]])
    fp_above = np.concatenate([np.cumsum(neg[::-1])[::-1], [0.0]])
    tpr = tp_above / P if P > 0 else np.full(len(thresholds), np.nan)
    tnr = (N - fp_above) / N if N > 0 else np.full(len(thresholds), np.nan)
    return RocSweep(thresholds, tpr, tnr)


@dataclass
class CutpointResult:
    c_hat: float
    max_tpr_plus_tnr: float
    auc: float
    split_cutpoints: np.ndarray
    split_maxima: np.ndarray
    split_auc: np.ndarray
    roc_points: np.ndarray
    seed: int
    skipped: int = 0
    split_scores: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "c_hat": self.c_hat,
            "max_tpr_plus_tnr": self.max_tpr_plus_tnr,
            "auc": self.auc,
            "splits": len(self.split_cutpoints),
            "skipped": self.skipped,
            "split_cutpoints": self.split_cutpoints.tolist(),
            "split_maxima": self.split_maxima.tolist(),
            "split_auc": self.split_auc.tolist(),
            "roc": self.roc_points.tolist(),
        }


def default_test_size(n: int) -> int:
    if n >= REFERENCE_N:
        return REFERENCE_TEST
    return max(1, round(n * REFERENCE_TEST / REFERENCE_N))


def optimize_cutpoint(
    codes: np.ndarray,
    outcomes: np.ndarray,
    reduced: ReducedSchema,
    prior: PriorConfig | None = None,
    *,
    splits: int = 100,
    test_size: int | None = None,
    seed: int = 0,
    threads: int = 1,
    keep_scores: bool = False,
) -> CutpointResult:
    """Repeated random train/prediction splits; mean of per-split optimal cut-points.

    Each split fits on the training part, scores the prediction part and picks
    the threshold maximizing TPR + TNR.  Splits whose prediction part holds a
    single class are skipped.
    """
    prior = prior or PriorConfig()
    codes = np.asarray(codes, dtype=np.uint64)
    y = np.asarray(outcomes).astype(np.int8)
    n = len(codes)
    if n == 0 or y.min() == y.max():
        raise PredictorError("cut-point search needs both outcome classes")
    t = test_size if test_size is not None else default_test_size(n)
    if not 0 < t < n:
        raise PredictorError(f"test size {t} must be in 1..{n - 1}")

    def one(split: int):
        perm = np.random.default_rng([seed, split]).permutation(n)
        test, train = perm[:t], perm[t:]
        model = fit(codes[train], y[train], reduced, prior)
        scores, _ = model.predict_mean(codes[test])
        labels = y[test]
        if labels.min() == labels.max():
            return None
        sweep = roc_sweep(scores, labels)
        b = sweep.best
        return sweep.thresholds[b], sweep.objective[b], sweep.auc(), scores, labels

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(one, range(splits)))
    else:
        results = [one(i) for i in range(splits)]
    kept = [r for r in results if r is not None]
    skipped = len(results) - len(kept)
    if skipped:
        log.warning("skipped %d single-class splits", skipped)
    if not kept:
        raise PredictorError("every split had a single-class prediction set")
    cuts = np.array([r[0] for r in kept])
    maxima = np.array([r[1] for r in kept])
    aucs = np.array([r[2] for r in kept])
    pooled = roc_sweep(np.concatenate([r[3] for r in kept]), np.concatenate([r[4] for r in kept]))
    roc = np.column_stack([pooled.thresholds, 1 - pooled.tnr, pooled.tpr])
    return CutpointResult(
        float(cuts.mean()),
        float(maxima.mean()),
        float(aucs.mean()),
        cuts,
        maxima,
        aucs,
        roc,
        seed,
        skipped,
        [(r[3], r[4]) for r in kept] if keep_scores else [],
    )


# -- cross-validation ------------------------------------------------------


@dataclass
class CVResult:
    matrix: ConfusionMatrix
    per_repeat: list[ConfusionMatrix]
    per_fold: np.ndarray  # (repeats, folds, 4) raw counts tn, fp, fn, tp
    folds: int
    repeats: int
    cut_point: float
    seed: int

    def to_dict(self) -> dict:
        return {
            "matrix": self.matrix.to_dict(),
            "per_repeat": [m.to_dict() for m in self.per_repeat],
            "folds": self.folds,
            "repeats": self.repeats,
            "cut_point": self.cut_point,
            "seed": self.seed,
        }


def cross_validate(
    codes: np.ndarray,
    outcomes: np.ndarray,
    reduced: ReducedSchema,
    prior: PriorConfig | None = None,
    *,
    cut_point: float,
    folds: int = 20,
    repeats: int = 20,
    seed: int = 0,
    threads: int = 1,
) -> CVResult:
    """Repeated k-fold cross-validated confusion matrix.

    Within a repeat every fold is held out once and the held-out matrices are
    averaged; the repeat averages are then averaged.  Each repeat shuffles with
    its own stream seeded by ``(seed, repeat)``, and results are collected in
    fixed order so thread count never changes the output.
    """
    prior = prior or PriorConfig()
    codes = np.asarray(codes, dtype=np.uint64)
    y = np.asarray(outcomes).astype(np.int8)
    n = len(codes)
    if folds < 2:
        raise PredictorError("need at least two folds")
    minority = int(min(y.sum(), n - y.sum())) if n else 0
    if folds > minority:
        raise PredictorError(f"{folds} folds exceed the minority class count {minority}")

    assignments = [
        np.array_split(np.random.default_rng([seed, r]).permutation(n), folds) for r in range(repeats)
    ]

    def one(job):
        r, f = job
        held = assignments[r][f]
        mask = np.ones(n, dtype=bool)
        mask[held] = False
        model = fit(codes[mask], y[mask], reduced, prior)
        pred = model.classify(codes[held], cut_point)
        return ConfusionMatrix.from_predictions(pred, y[held]).as_array()

    jobs = [(r, f) for r in range(repeats) for f in range(folds)]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            counts = list(pool.map(one, jobs))
    else:
        counts = [one(j) for j in jobs]
    per_fold = np.array(counts).reshape(repeats, folds, 4)
    per_repeat = [ConfusionMatrix(*per_fold[r].mean(axis=0).tolist()) for r in range(repeats)]
    return CVResult(ConfusionMatrix.mean(per_repeat), per_repeat, per_fold, folds, repeats, cut_point, seed)
