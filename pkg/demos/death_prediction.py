"""Predicting death from a six-variable reduced footprint.

Run: python3 demos/death_prediction.py
"""

# %%
from mvbern import ReducedSchema, cross_validate, fit, optimize_cutpoint, predict_proba
from mvbern.synth import PaperlikeGenerator

gen = PaperlikeGenerator()
bits = gen.sample_bits(200_000, seed=3)

# %% sex, age band, diabetes, hypertension, difficulty breathing, hospitalization
reduced = ReducedSchema.from_names(gen.schema)
codes, died = reduced.project(bits)
model = fit(codes, died, reduced)
print(model.contingency_csv().splitlines()[0])
for line in sorted(model.contingency_csv().splitlines()[1:], key=lambda r: -int(r.split(",")[2]))[:5]:
    print(line)

# %% posterior predictive of one footprint: male, 40-60, no diabetes or
# hypertension, difficulty breathing, hospitalized
p = predict_proba(model, "130011")
print(f"\n130011: P(death) = {p.mean:.3f} ({p.provenance} cell)")

# a footprint absent from training borrows its (sex, age band) cell
seen = set(model.keys.tolist())
unseen = next(int(c) for c in reduced.sub.admissible_codes() if int(c) not in seen)
p = predict_proba(model, unseen)
print(f"{reduced.encode(unseen)}: P(death) = {p.mean:.3f} ({p.provenance} cell)")

# %% cut-point maximizing TPR + TNR over 100 random splits
tune = optimize_cutpoint(codes, died, reduced, splits=100, seed=0)
print(f"\ncut-point {tune.c_hat:.3f}, max TPR+TNR {tune.max_tpr_plus_tnr:.3f}, AUC {tune.auc:.3f}")

# %% 20-fold cross-validation repeated 20 times at that cut-point
cv = cross_validate(codes, died, reduced, cut_point=tune.c_hat, folds=20, repeats=20, seed=0)
m = cv.matrix
print(f"averaged held-out matrix: TN {m.tn:.1f}  FP {m.fp:.1f}  FN {m.fn:.1f}  TP {m.tp:.1f}")
print(f"TPR {100 * m.tpr:.1f}%  TNR {100 * m.tnr:.1f}%")
