"""Posterior summaries of event probabilities.

Aggregating Dirichlet weights over the outcomes of an event gives a Beta
variable, and the ratio of two nested aggregates (``w_AB / w_B``) is again
Beta and independent of ``w_B``.  Means, variances and credible intervals of
marginal, joint and conditional risks therefore come out in closed form from
event masses.  Pairwise correlation needs the joint law of ``(w_js, w_j, w_s)``
and is estimated by Monte Carlo from a four-cell Dirichlet.
"""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import squareform
from scipy.special import betaincinv

from .schema import Event, VariableSchema
from .table import ActiveOutcomeTable, event_mass

log = logging.getLogger(__name__)

DEFAULT_SAMPLES = 10_000


class UndefinedConditionalError(ValueError):
    """The conditioning event has zero posterior mass."""


class InconsistentMassError(ValueError):
    """Event masses do not form a valid Dirichlet parameter vector."""


class ExpFitError(RuntimeError):
    def __init__(self, message, a=None, b=None):
        super().__init__(message)
        self.a, self.b = a, b


@dataclass(frozen=True)
class EventPosterior:
    """Beta(alpha, beta) posterior of an event probability.

    ``beta == 0`` is a point mass at one (self-conditioning); ``alpha == 0``
    a point mass at zero (flagged ``empty``).
    """

    alpha: float
    beta: float
    kind: str = "marginal"
    query: str = ""
    flags: tuple[str, ...] = ()
    support: int = 0

    @property
    def mean(self) -> float:
        total = self.alpha + self.beta
        return float(self.alpha / total) if total > 0 else math.nan

    @property
    def variance(self) -> float:
        total = self.alpha + self.beta
        if total <= 0:
            return math.nan
        a, b = float(self.alpha), float(self.beta)
        return a * b / ((a + b) ** 2 * (a + b + 1))

    def interval(self, level: float = 0.95) -> tuple[float, float]:
        """Equal-tailed credible interval."""
        if self.alpha + self.beta <= 0:
            return (math.nan, math.nan)
        if self.beta == 0:
            return (1.0, 1.0)
        if self.alpha == 0:
            return (0.0, 0.0)
        tail = (1 - level) / 2
        a, b = float(self.alpha), float(self.beta)
        return float(betaincinv(a, b, tail)), float(betaincinv(a, b, 1 - tail))

    def to_dict(self) -> dict:
        lo, hi = self.interval()
        return {
            "query": self.query,
            "kind": self.kind,
            "alpha": float(self.alpha),
            "beta": float(self.beta),
            "mean": self.mean,
            "variance": self.variance,
            "ci95": [lo, hi],
            "support": self.support,
            "flags": list(self.flags),
        }


def marginal(table: ActiveOutcomeTable, event) -> EventPosterior:
    """Posterior of ``P(event)``: Beta(eta, alpha0 - eta)."""
    schema = table.schema
    event = schema.event(event)
    mass = event_mass(table, event)
    flags = ("empty",) if mass.empty else ()
    return EventPosterior(
        mass.total, table.alpha0 - mass.total, "marginal", schema.describe(event), flags, mass.count
    )


def conditional(table: ActiveOutcomeTable, target, given, *, min_support: int = 1) -> EventPosterior:
    """Posterior of ``P(target | given)``: Beta(eta_joint, eta_given - eta_joint).

    Raises :class:`UndefinedConditionalError` when ``given`` has no mass, which
    with a positive prior only happens for a contradictory conditioning event.
    """
    schema = table.schema
    target, given = schema.event(target), schema.event(given)
    joint = target & given
    m_given = event_mass(table, given)
    if m_given.total <= 0:
        raise UndefinedConditionalError(f"conditioning event {schema.describe(given)} has zero mass")
    m_joint = event_mass(table, joint)
    flags = []
    if m_joint.empty:
        flags.append("empty")
    if m_given.count < min_support:
        flags.append("low-support")
    query = f"{schema.describe(target)}|{schema.describe(given)}"
    return EventPosterior(
        m_joint.total,
        m_given.total - m_joint.total,
        "conditional",
        query,
        tuple(flags),
        m_given.count,
    )


def cross_events(schema: VariableSchema, *factors: Sequence) -> list[Event]:
    """Conjunctions over the cartesian product of factor levels.

    Each factor is a list of event specs; the result is ordered with the last
    factor varying fastest.
    """
    out = []
    for combo in itertools.product(*factors):
        ev = Event()
        for part in combo:
            ev = ev & schema.event(part)
        out.append(ev)
    return out


@dataclass
class RiskTable:
    rows: list[str]
    columns: list[str]
    means: np.ndarray
    posteriors: list[list[EventPosterior | None]]
    errors: list[list[str | None]] = field(default_factory=list)

    def low_support(self) -> np.ndarray:
        return np.array(
            [[p is not None and "low-support" in p.flags for p in row] for row in self.posteriors]
        )

    def formatted(self, percent: bool = False) -> list[list[str]]:
        out = []
        for row in self.means:
            if percent:
                out.append(["" if math.isnan(v) else f"{100 * v:.1f}" for v in row])
            else:
                out.append(["" if math.isnan(v) else repr(float(v)) for v in row])
        return out


def risk_table(
    table: ActiveOutcomeTable,
    rows: Sequence,
    columns: Sequence,
    target=None,
    *,
    row_labels: Sequence[str] | None = None,
    column_labels: Sequence[str] | None = None,
    min_support: int = 1,
) -> RiskTable:
    """Matrix of posterior mean risks.

    With ``target`` given, cell ``(i, c)`` is ``E[P(target | rows[i], columns[c])]``
    (mortality by condition, sex and age).  Without it the cell is
    ``E[P(rows[i] | columns[c])]`` (symptom prevalence heat-map).  A cell whose
    conditional is undefined holds NaN and its error text; the table is still
    produced.
    """
    schema = table.schema
    row_events = [schema.event(r) for r in rows]
    col_events = [schema.event(c) for c in columns]
    target_event = schema.event(target) if target is not None else None
    means = np.full((len(row_events), len(col_events)), np.nan)
    posts: list[list[EventPosterior | None]] = []
    errors: list[list[str | None]] = []
    for i, rev in enumerate(row_events):
        prow, erow = [], []
        for c, cev in enumerate(col_events):
            try:
                if target_event is None:
                    post = conditional(table, rev, cev, min_support=min_support)
                else:
                    post = conditional(table, target_event, rev & cev, min_support=min_support)
            except UndefinedConditionalError as exc:
                prow.append(None)
                erow.append(str(exc))
                continue
            means[i, c] = post.mean
            prow.append(post)
            erow.append(None)
        posts.append(prow)
        errors.append(erow)
    return RiskTable(
        list(row_labels) if row_labels else [schema.describe(e) for e in row_events],
        list(column_labels) if column_labels else [schema.describe(e) for e in col_events],
        means,
        posts,
        errors,
    )


def mortality_decomposition(
    table: ActiveOutcomeTable, v: float, factors: Sequence, outcome
) -> np.ndarray:
    """Expected number of ``outcome`` cases jointly with each factor among ``v`` people.

    ``v * E[p(outcome, factor | data)]``; by the chain rule this equals the
    product of the successive conditional means times ``v``.
    """
    schema = table.schema
    outcome = schema.event(outcome)
    return np.array([v * marginal(table, outcome & schema.event(f)).mean for f in factors], dtype=float)


# -- correlation -----------------------------------------------------------


@dataclass(frozen=True)
class CorrelationEstimate:
    pair: tuple[int, int]
    mean_correlation: float
    mc_standard_error: float
    samples: int
    rejected: int = 0


def _dirichlet_params(table: ActiveOutcomeTable, j: int, s: int) -> np.ndarray:
    eta_j = float(event_mass(table, {j: 1}).total)
    eta_s = float(event_mass(table, {s: 1}).total)
    eta_js = float(event_mass(table, {j: 1, s: 1}).total)
    alpha0 = float(table.alpha0)
    params = np.array([eta_js, eta_j - eta_js, eta_s - eta_js, alpha0 + eta_js - eta_j - eta_s])
    # differences of exact masses may round to a hair below zero
    tol = 1e-9 * alpha0
    if np.any(params < -tol) or params.sum() <= 0:
        raise InconsistentMassError(f"invalid Dirichlet parameters {params.tolist()} for pair ({j}, {s})")
    return np.clip(params, 0.0, None)


def correlation(
    table: ActiveOutcomeTable,
    j,
    s,
    n_samples: int = DEFAULT_SAMPLES,
    seed=0,
) -> CorrelationEstimate:
    """Monte Carlo posterior mean of ``Corr(Y_j, Y_s)``.

    Draws ``(w_js, w_j-s, w_s-j, rest)`` from their Dirichlet posterior via
    normalized Gamma variates and averages the plug-in correlation.  ``seed``
    is anything :func:`numpy.random.default_rng` accepts.  A zero parameter
    (structurally impossible cell, e.g. two levels of one group) yields a
    component fixed at zero.
    """
    schema = table.schema
    j, s = schema.index(j), schema.index(s)
    if j == s:
        return CorrelationEstimate((j, s), 1.0, 0.0, 0)
    params = _dirichlet_params(table, j, s)
    rng = np.random.default_rng(seed)
    g = rng.standard_gamma(np.broadcast_to(params, (n_samples, 4)))
    total = g.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        w = g / total[:, None]
        wj = w[:, 0] + w[:, 1]
        ws = w[:, 0] + w[:, 2]
        ok = (total > 0) & (wj > 0) & (wj < 1) & (ws > 0) & (ws < 1)
        xi = (w[:, 0] - wj * ws) / np.sqrt(wj * (1 - wj) * ws * (1 - ws))
    rejected = int(n_samples - ok.sum())
    if rejected:
        log.info("pair (%d, %d): rejected %d degenerate samples", j, s, rejected)
    xi = np.clip(xi[ok], -1.0, 1.0)
    if len(xi) == 0:
        raise InconsistentMassError(f"pair ({j}, {s}): every Monte Carlo sample was degenerate")
    se = float(xi.std(ddof=1) / math.sqrt(len(xi))) if len(xi) > 1 else math.nan
    return CorrelationEstimate((j, s), float(xi.mean()), se, len(xi), rejected)


@dataclass
class CorrelationMatrix:
    names: list[str]
    indices: list[int]
    matrix: np.ndarray
    standard_errors: np.ndarray
    labels: np.ndarray
    linkage: np.ndarray

    def groups(self) -> list[list[str]]:
        out: dict[int, list[str]] = {}
        for name, lab in zip(self.names, self.labels):
            out.setdefault(int(lab), []).append(name)
        return [out[k] for k in sorted(out)]


def cluster_correlations(corr: np.ndarray, n_groups: int) -> tuple[np.ndarray, np.ndarray]:
    """Average-linkage clustering on ``1 - corr``; labels numbered by first member."""
    p = len(corr)
    if p == 1:
        return np.array([1]), np.empty((0, 4))
    dist = np.clip(1.0 - (corr + corr.T) / 2, 0.0, 2.0)
    np.fill_diagonal(dist, 0.0)
    z = linkage(squareform(dist, checks=False), method="average")
    raw = fcluster(z, t=min(n_groups, p), criterion="maxclust")
    relabel: dict[int, int] = {}
    for lab in raw:
        relabel.setdefault(int(lab), len(relabel) + 1)
    return np.array([relabel[int(x)] for x in raw]), z


def correlation_matrix(
    table: ActiveOutcomeTable,
    variables: Sequence | None = None,
    n_samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    *,
    n_groups: int = 6,
    threads: int = 1,
) -> CorrelationMatrix:
    """Pairwise posterior correlations plus a hierarchical clustering.

    Each pair ``(j, s)`` draws from its own stream seeded by ``(seed, j, s)``
    so results do not depend on the subset, ordering or thread count.
    """
    schema = table.schema
    idx = [schema.index(v) for v in (variables if variables is not None else range(schema.k))]
    p = len(idx)
    pairs = [(a, b) for a in range(p) for b in range(a + 1, p)]

    def run(pair):
        a, b = pair
        j, s = sorted((idx[a], idx[b]))
        return correlation(table, j, s, n_samples, seed=[seed, j, s])

    if threads > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(run, pairs))
    else:
        results = [run(pr) for pr in pairs]
    corr = np.eye(p)
    se = np.zeros((p, p))
    for (a, b), est in zip(pairs, results):
        corr[a, b] = corr[b, a] = est.mean_correlation
        se[a, b] = se[b, a] = est.mc_standard_error
    labels, z = cluster_correlations(corr, n_groups)
    return CorrelationMatrix([schema.names[i] for i in idx], idx, corr, se, labels, z)


# -- exponential risk curve ---------------------------------------------------


@dataclass(frozen=True)
class ExpFit:
    a: float
    b: float
    residual_sum: float
    method: str = "nls"
    iterations: int = 0

    def __call__(self, x):
        return self.a * np.exp(self.b * np.asarray(x, dtype=float))


def fit_exponential(x, y, method: str = "nls", *, max_iter: int = 200, tol: float = 1e-14) -> ExpFit:
    """Least-squares fit of ``y = a * exp(b * x)``.

    ``method="nls"`` minimizes squared residuals on the original scale by
    damped Gauss-Newton, warm-started from the log-linear fit (or from
    ``a=1, b=0`` when some ``y <= 0``).  ``method="loglinear"`` returns the
    ordinary regression of ``log y`` on ``x``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise ValueError("x and y must be 1-d arrays of equal length >= 2")

    def ssr(a, b):
        return float(np.sum((y - a * np.exp(b * x)) ** 2))

    positive = bool(np.all(y > 0))
    if method == "loglinear":
        if not positive:
            raise ExpFitError("log-linear fit needs strictly positive y")
        b, loga = np.polyfit(x, np.log(y), 1)
        return ExpFit(float(np.exp(loga)), float(b), ssr(np.exp(loga), b), "loglinear")
    if method != "nls":
        raise ValueError(f"unknown method {method!r}")

    if positive:
        b, loga = np.polyfit(x, np.log(y), 1)
        a = float(np.exp(loga))
    else:
        a, b = 1.0, 0.0
    b = float(b)
    current = ssr(a, b)
    for it in range(1, max_iter + 1):
        e = np.exp(b * x)
        resid = y - a * e
        jac = np.column_stack([e, a * x * e])
        step, *_ = np.linalg.lstsq(jac, resid, rcond=None)
        lam = 1.0
        while lam > 1e-10:
            na, nb = a + lam * step[0], b + lam * step[1]
            trial = ssr(na, nb)
            if trial <= current:
                break
            lam /= 2
        else:
            break
        done = abs(na - a) <= tol * max(1.0, abs(a)) and abs(nb - b) <= tol * max(1.0, abs(b))
        a, b, prev, current = na, nb, current, trial
        if done or prev - current <= tol * max(prev, 1e-300):
            return ExpFit(a, b, current, "nls", it)
    # converged if the gradient vanished even though no strict decrease was possible
    e = np.exp(b * x)
    grad = np.column_stack([e, a * x * e]).T @ (y - a * e)
    if np.all(np.abs(grad) <= 1e-8 * max(1.0, float(np.abs(y).max()) ** 2)):
        return ExpFit(a, b, current, "nls", max_iter)
    raise ExpFitError(f"Gauss-Newton did not converge in {max_iter} iterations", a, b)
