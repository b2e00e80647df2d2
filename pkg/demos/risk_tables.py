"""Posterior risk tables on synthetic clinical footprints.

Run: python3 demos/risk_tables.py
"""

# %%
import numpy as np

from mvbern import PriorConfig, build_table, conditional, fit_exponential, marginal, risk_table
from mvbern.layout import COMORBIDITIES, SYMPTOMS, footprint_schema
from mvbern.synth import PaperlikeGenerator

# %% 200,000 synthetic patients over the 35-bit footprint
schema = footprint_schema()
bits = PaperlikeGenerator().sample_bits(200_000, seed=7)
table = build_table(bits, schema, PriorConfig(nu=0.5))
print(f"n={table.n}  distinct footprints m={table.m}  sample space S=2^{table.sample_space.bit_length() - 1}")

# %% headline rates: Beta posteriors of single events
for label, event in [
    ("death", {"death": 1}),
    ("hospitalized", {"hospitalized": 1}),
    ("no symptoms", {name: 0 for name in SYMPTOMS}),
]:
    post = marginal(table, event)
    lo, hi = post.interval()
    print(f"{label:>14}: {100 * post.mean:5.1f} per 100  (95% CI {100 * lo:.1f} to {100 * hi:.1f})")

# %% a single cell: P(death | diabetes, male, age >= 60)
post = conditional(table, {"death": 1}, {"diabetes": 1, "male": 1, "age": "age_ge60"})
print("\nP(death | diabetes, male, 60+) ~ Beta(%.1f, %.1f), mean %.3f" % (post.alpha, post.beta, post.mean))

# %% risk by comorbidity, sex and age band (percent, one decimal)
columns = [{"male": s, "age": a} for s in (1, 0) for a in range(1, 5)]
labels = [f"{'M' if s else 'F'}{a}" for s in (1, 0) for a in range(1, 5)]
rows = [{c: 1} for c in COMORBIDITIES] + [{c: 0 for c in COMORBIDITIES}]
names = list(COMORBIDITIES) + ["no comorbidity"]
rt = risk_table(table, rows, columns, {"death": 1}, row_labels=names, column_labels=labels)
print("\n" + " " * 24 + " ".join(f"{c:>6}" for c in rt.columns))
for name, cells in zip(rt.rows, rt.formatted(percent=True)):
    print(f"{name:>24}" + " ".join(f"{c:>6}" for c in cells))

# %% risk without comorbidities grows roughly exponentially with the age band
for sex, offset in (("male", 0), ("female", 4)):
    y = 100 * rt.means[-1, offset : offset + 4]
    fit = fit_exponential(np.arange(1, 5), y)
    print(f"{sex}: risk ~ {fit.a:.3f} * exp({fit.b:.3f} x), residual sum {fit.residual_sum:.3g}")
