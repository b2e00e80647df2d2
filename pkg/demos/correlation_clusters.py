"""Posterior correlations between binary variables and their clusters.

Run: python3 demos/correlation_clusters.py
"""

# %%
import numpy as np

from mvbern import build_table, correlation, correlation_matrix
from mvbern.synth import PaperlikeGenerator, blocks_model, oracle_correlation, sample

# %% planted structure: two blocks of four coupled bits
model = blocks_model((4, 4), flip=0.1)
table = build_table(sample(model, 100_000, seed=1), model.schema)
cm = correlation_matrix(table, n_samples=10_000, seed=0, n_groups=2)
np.set_printoptions(precision=2, suppress=True)
print(cm.matrix)
print("true within-block correlation:", round(oracle_correlation(model, 0, 1), 3))
print("clusters:", cm.groups())

# %% one pair in detail, with its Monte Carlo standard error
est = correlation(table, "b1_1", "b1_2", n_samples=10_000, seed=[0, 0, 1])
print(f"corr(b1_1, b1_2) = {est.mean_correlation:.4f} +/- {est.mc_standard_error:.1e} (Monte Carlo)")

# %% the clinical layout: six groups of comorbidities, symptoms and outcomes
gen = PaperlikeGenerator()
table = build_table(gen.sample_bits(100_000, seed=2), gen.schema)
variables = gen.schema.names[5:]  # skip sex and age band
cm = correlation_matrix(table, variables, n_samples=2_000, seed=0, n_groups=6)
for i, group in enumerate(cm.groups(), 1):
    print(f"group {i}: {', '.join(group)}")
