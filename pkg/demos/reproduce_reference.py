"""Headline numbers from the Mexican open COVID-19 case file.

The file is not bundled.  Point the script at a local copy whose columns
match the bundled mapping (symptom columns come from the extended extract):

    python3 demos/reproduce_reference.py path/to/cases.csv

The reference analysis spread its prior over all 2^k bit patterns, so the
table is built with the ``naive2k`` prior space.
"""

import sys

import numpy as np

from mvbern import (
    PriorConfig,
    ReducedSchema,
    build_table,
    bundled_mapping,
    conditional,
    cross_validate,
    fit_exponential,
    ingest,
    marginal,
    optimize_cutpoint,
    risk_table,
)
from mvbern.layout import COMORBIDITIES

EXPECTED = {
    "P(death | diabetes, male, 60+) %": 42.9,
    "deaths per 100": 10,
    "hospitalized per 100": 22,
    "cut-point": 0.112,
    "max TPR+TNR": 1.777,
    "AUC": 0.935,
    "CV TPR %": 92.7,
    "CV TNR %": 84.9,
    "exp fit a (males)": 1.1,
    "exp fit b (males)": 0.88,
}


def main(path):
    res = ingest(path, bundled_mapping())
    print(res.report.to_dict())
    table = build_table(res.codes, res.schema, PriorConfig(0.5, "naive2k"))
    got = {
        "P(death | diabetes, male, 60+) %": 100
        * conditional(table, {"death": 1}, {"diabetes": 1, "male": 1, "age": 4}).mean,
        "deaths per 100": 100 * marginal(table, {"death": 1}).mean,
        "hospitalized per 100": 100 * marginal(table, {"hospitalized": 1}).mean,
    }
    reduced = ReducedSchema.from_names(res.schema)
    codes, y = reduced.project_codes(res.codes)
    tune = optimize_cutpoint(codes, y, reduced, table.prior, splits=100, seed=0)
    cv = cross_validate(codes, y, reduced, table.prior, cut_point=tune.c_hat, folds=20, repeats=20, seed=0)
    rt = risk_table(table, [{c: 0 for c in COMORBIDITIES}], [{"male": 1, "age": a} for a in range(1, 5)],
                    {"death": 1})
    fit = fit_exponential(np.arange(1, 5), 100 * rt.means[0])
    got.update({
        "cut-point": tune.c_hat,
        "max TPR+TNR": tune.max_tpr_plus_tnr,
        "AUC": tune.auc,
        "CV TPR %": 100 * cv.matrix.tpr,
        "CV TNR %": 100 * cv.matrix.tnr,
        "exp fit a (males)": fit.a,
        "exp fit b (males)": fit.b,
    })
    for key, ref in EXPECTED.items():
        print(f"{key:>34}: {got[key]:9.4f}   reference {ref}")


if __name__ == "__main__":
    if len(sys.argv) != 2:
        sys.exit(__doc__)
    main(sys.argv[1])
