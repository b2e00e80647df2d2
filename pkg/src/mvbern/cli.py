"""Command line interface: ``mvbern <subcommand> ...``.

Standard output carries data only (JSON or CSV); logs go to standard error.
Exit codes: 0 success, 1 configuration error, 2 data error, 3 numeric error.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import os
import sys
from fractions import Fraction

import numpy as np
import yaml

from . import __version__
from .inference import (
    DEFAULT_SAMPLES,
    ExpFitError,
    InconsistentMassError,
    UndefinedConditionalError,
    correlation_matrix,
    cross_events,
    fit_exponential,
    marginal,
    mortality_decomposition,
    risk_table,
)
from .ingest import (
    IngestError,
    MappingError,
    bundled_mapping,
    bundled_mapping_text,
    emit_csv,
    ingest,
    load_mapping,
    parse_mapping,
)
from .layout import DEFAULT_PREDICTORS, DEFAULT_TARGET
from .predictor import (
    PredictorError,
    PredictorModel,
    ReducedSchema,
    cross_validate,
    fit_table,
    optimize_cutpoint,
    predict_proba,
)
from .schema import SchemaError, SchemaViolation, VariableSchema
from .synth import PRESETS, OracleRangeError, preset_bits
from .table import ActiveOutcomeTable, PriorConfig, TableFormatError, build_table

log = logging.getLogger("mvbern")

TABLE_ENV = "MVBERN_TABLE"

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3


class CliError(Exception):
    def __init__(self, message, code=EXIT_CONFIG):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


# -- helpers -----------------------------------------------------------------


def _nu(text: str):
    try:
        value = Fraction(text) if "/" in text else float(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"invalid concentration {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError("nu must be positive")
    return value


def _threads(text: str) -> int:
    n = int(text)
    return n if n > 0 else (os.cpu_count() or 1)


def _split(text: str | None) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()] if text else []


def _load_table(args) -> ActiveOutcomeTable:
    path = args.table or os.environ.get(TABLE_ENV)
    if not path:
        raise CliError(f"no table given (use --table or set {TABLE_ENV})")
    schema = load_mapping(args.mapping).schema() if getattr(args, "mapping", None) else None
    table = ActiveOutcomeTable.load(path, schema)
    if args.nu is not None or args.prior_space is not None:
        table = table.with_prior(
            PriorConfig(args.nu if args.nu is not None else table.prior.nu, args.prior_space or table.prior.space)
        )
    return table


def _meta(args, table: ActiveOutcomeTable | None = None, seed=None) -> dict:
    meta = {"command": args.command, "version": __version__}
    if table is not None:
        meta.update(
            nu=float(table.prior.nu),
            prior_space=table.prior.space,
            S=table.sample_space,
            m=table.m,
            n=table.n,
        )
    if seed is not None:
        meta["seed"] = seed
    return meta


def _emit(args, meta: dict, data, rows: list[list] | None = None) -> None:
    out = sys.stdout
    if args.format == "csv" and rows is not None:
        for key, value in meta.items():
            out.write(f"# {key}={value}\n")
        writer = csv.writer(out, lineterminator="\n")
        writer.writerows(rows)
    else:
        json.dump({"meta": meta, "data": data}, out, indent=2, default=_json_default)
        out.write("\n")


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Fraction):
        return float(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _fmt(value: float, percent: bool) -> str:
    if value != value:
        return ""
    return f"{100 * value:.1f}" if percent else repr(float(value))


def _expand_rows(schema: VariableSchema, spec: list[str]) -> list[tuple[str, dict]]:
    """Row specs: variable names, kinds (all variables of that kind), or ``no:<kind>``."""
    rows: list[tuple[str, dict]] = []
    kinds = set(schema.kinds())
    for item in spec:
        if item.startswith("no:"):
            kind = item[3:]
            if kind not in kinds:
                raise CliError(f"unknown variable kind {kind!r}")
            rows.append((f"no {kind}", {i: 0 for i in schema.of_kind(kind)}))
        elif item in kinds and item not in schema.names:
            rows += [(schema.names[i], {i: 1}) for i in schema.of_kind(item)]
        else:
            rows.append((item, {schema.index(item): 1}))
    return rows


def _factor_levels(schema: VariableSchema, name: str) -> list[tuple[str, dict]]:
    groups = {g for g, _ in schema.groups}
    if name in groups:
        return [(schema.names[m], {m: 1}) for m in schema.group_members(name)]
    i = schema.index(name)
    return [(f"{name}=1", {i: 1}), (f"{name}=0", {i: 0})]


def _by_columns(schema: VariableSchema, by: list[str]) -> tuple[list[str], list]:
    if not by:
        return ["all"], [{}]
    levels = [_factor_levels(schema, b) for b in by]
    labels = [",".join(lab for lab, _ in combo) for combo in itertools.product(*levels)]
    events = cross_events(schema, *[[ev for _, ev in lv] for lv in levels])
    return labels, events


def _reduced(args, schema: VariableSchema) -> ReducedSchema:
    preds = _split(args.predictors) or list(DEFAULT_PREDICTORS)
    fallback = _split(args.fallback) if args.fallback else None
    return ReducedSchema.from_names(schema, preds, args.target, fallback)


# -- subcommands -------------------------------------------------------------


def _generic_mapping(schema: VariableSchema) -> dict:
    entries, seen = [], set()
    for v in schema.variables:
        if v.group is None:
            entries.append({"name": v.name, "kind": v.kind, "source": v.name, "positive": ["1"], "negative": ["0"]})
        elif v.group not in seen:
            seen.add(v.group)
            members = [schema.names[m] for m in schema.group_members(v.group)]
            entries.append(
                {
                    "group": v.group,
                    "kind": v.kind,
                    "source": v.group,
                    "members": [{"name": m, "codes": [str(j + 1)]} for j, m in enumerate(members)],
                }
            )
    return {"delimiter": ",", "variables": entries}


def cmd_simulate(args) -> int:
    schema, bits = preset_bits(args.preset, args.n, args.seed)
    if args.preset == "paperlike":
        mapping = bundled_mapping()
        mapping_text = bundled_mapping_text()
    else:
        doc = _generic_mapping(schema)
        mapping = parse_mapping(doc)
        mapping_text = yaml.safe_dump(doc, sort_keys=False)
    if args.write_mapping:
        with open(args.write_mapping, "w") as fh:
            fh.write(mapping_text)
    if args.out in (None, "-"):
        emit_csv(bits, mapping, sys.stdout)
    else:
        emit_csv(bits, mapping, args.out)
        log.info("wrote %d rows to %s", args.n, args.out)
    return 0


def cmd_ingest(args) -> int:
    mapping = load_mapping(args.mapping) if args.mapping else bundled_mapping()
    source = sys.stdin if args.data == "-" else args.data
    result = ingest(source, mapping, args.filter)
    prior = PriorConfig(args.nu if args.nu is not None else 0.5, args.prior_space or "true")
    table = build_table(result.codes, result.schema, prior, threads=args.threads)
    if args.out:
        table.save(args.out)
    meta = _meta(args, table)
    _emit(args, meta, result.report.to_dict())
    return 0


def cmd_fit(args) -> int:
    table = _load_table(args)
    reduced = _reduced(args, table.schema)
    model = fit_table(table, reduced, table.prior)
    if args.cutpoint is not None:
        model = model.with_cut_point(args.cutpoint)
    if args.out:
        model.save(args.out)
    if args.contingency:
        with open(args.contingency, "w") as fh:
            fh.write(model.contingency_csv())
    data = {
        "reduced": reduced.to_json(),
        "cells": len(model.keys),
        "training_size": model.training_size,
        "cut_point": model.cut_point,
    }
    rows = [row.split(",") for row in model.contingency_csv().splitlines()]
    _emit(args, _meta(args, table), data, rows)
    return 0


def cmd_summarize(args) -> int:
    table = _load_table(args)
    schema = table.schema
    spec = _split(args.rows) or schema.names + [f"no:{k}" for k in ("comorbidity", "symptom") if k in schema.kinds()]
    data, rows = {}, [["event", "mean", "ci_low", "ci_high"]]
    for label, event in _expand_rows(schema, spec):
        post = marginal(table, event)
        lo, hi = post.interval(args.level)
        data[label] = {"alpha": float(post.alpha), "beta": float(post.beta), "mean": post.mean, "ci": [lo, hi]}
        rows.append([label, _fmt(post.mean, args.percent), _fmt(lo, args.percent), _fmt(hi, args.percent)])
    _emit(args, _meta(args, table), data, rows)
    return 0


def _risk_like(args, target) -> int:
    table = _load_table(args)
    schema = table.schema
    row_spec = _expand_rows(schema, _split(args.rows))
    by = _split(args.by)
    col_labels, col_events = _by_columns(schema, by)
    rt = risk_table(
        table,
        [ev for _, ev in row_spec],
        col_events,
        target,
        row_labels=[lab for lab, _ in row_spec],
        column_labels=col_labels,
        min_support=args.min_support,
    )
    cells = rt.formatted(args.percent)
    rows = [["event"] + rt.columns] + [[lab] + r for lab, r in zip(rt.rows, cells)]
    data = {
        "rows": rt.rows,
        "columns": rt.columns,
        "means": [[None if v != v else (100 * v if args.percent else v) for v in r] for r in rt.means],
        "low_support": rt.low_support().tolist(),
        "errors": rt.errors,
    }
    if getattr(args, "fit_exp", None):
        data["expfit"] = _expfits(rt, schema, by, args.fit_exp)
    _emit(args, _meta(args, table), data, rows)
    return 0


def _expfits(rt, schema: VariableSchema, by: list[str], method: str) -> list[dict]:
    groups = [g for g, _ in schema.groups]
    if not by or by[-1] not in groups:
        raise CliError("--fit-exp needs a one-hot group (the age band) as the last --by factor")
    levels = len(schema.group_members(by[-1]))
    fits = []
    x = np.arange(1, levels + 1)
    for i, row in enumerate(rt.rows):
        for start in range(0, len(rt.columns), levels):
            y = 100 * rt.means[i, start : start + levels]
            if np.any(np.isnan(y)):
                continue
            f = fit_exponential(x, y, method)
            cell = rt.columns[start].rsplit(",", 1)[0] if "," in rt.columns[start] else "all"
            fits.append({"row": row, "cell": cell, "a": f.a, "b": f.b, "residual_sum": f.residual_sum})
    return fits


def cmd_risk(args) -> int:
    return _risk_like(args, {args.target: 1})


def cmd_heatmap(args) -> int:
    return _risk_like(args, None)


def cmd_mortality(args) -> int:
    table = _load_table(args)
    schema = table.schema
    factor_spec = _expand_rows(schema, _split(args.factors))
    col_labels, col_events = _by_columns(schema, _split(args.by))
    outcome = {args.outcome: 1}
    matrix = np.column_stack(
        [
            mortality_decomposition(table, args.v, [schema.event(ev) & schema.event(cev) for _, ev in factor_spec], outcome)
            for cev in col_events
        ]
    )
    labels = [lab for lab, _ in factor_spec]
    rows = [["factor"] + col_labels] + [[lab] + [repr(float(v)) for v in r] for lab, r in zip(labels, matrix)]
    data = {"v": args.v, "rows": labels, "columns": col_labels, "expected": matrix}
    _emit(args, _meta(args, table), data, rows)
    return 0


def cmd_correlate(args) -> int:
    table = _load_table(args)
    schema = table.schema
    variables = [lab for lab, _ in _expand_rows(schema, _split(args.variables))] if args.variables else None
    cm = correlation_matrix(
        table, variables, args.samples, args.seed, n_groups=args.groups, threads=args.threads
    )
    rows = [["variable", "cluster"] + cm.names]
    for name, lab, r in zip(cm.names, cm.labels, cm.matrix):
        rows.append([name, int(lab)] + [repr(float(v)) for v in r])
    data = {
        "variables": cm.names,
        "matrix": cm.matrix,
        "mc_standard_error": cm.standard_errors,
        "clusters": cm.labels,
        "groups": cm.groups(),
        "samples": args.samples,
    }
    _emit(args, _meta(args, table, args.seed), data, rows)
    return 0


def cmd_predict(args) -> int:
    model = PredictorModel.load(args.model)
    results, rows = [], [["footprint", "mean", "alpha", "beta", "provenance", "predicted_death"]]
    for fp in args.footprint:
        pred = predict_proba(model, fp)
        out = {
            "footprint": fp,
            "mean": pred.mean,
            "alpha": pred.posterior.alpha,
            "beta": pred.posterior.beta,
            "provenance": pred.provenance,
        }
        if model.cut_point is not None:
            out["predicted_death"] = bool(pred.mean > model.cut_point)
        results.append(out)
        rows.append([fp, repr(pred.mean), repr(pred.posterior.alpha), repr(pred.posterior.beta), pred.provenance,
                     out.get("predicted_death", "")])
    meta = {"command": "predict", "version": __version__, "nu": float(model.prior.nu),
            "prior_space": model.prior.space, "cut_point": model.cut_point}
    _emit(args, meta, results, rows)
    return 0


def _training_arrays(table: ActiveOutcomeTable, reduced: ReducedSchema):
    return reduced.project_codes(table.records())


def cmd_tune(args) -> int:
    table = _load_table(args)
    reduced = _reduced(args, table.schema)
    codes, y = _training_arrays(table, reduced)
    res = optimize_cutpoint(
        codes, y, reduced, table.prior, splits=args.splits, test_size=args.test_size,
        seed=args.seed, threads=args.threads,
    )
    data = res.to_dict()
    if not args.roc:
        data.pop("roc")
    rows = [["threshold", "fpr", "tpr"]] + [[repr(float(v)) for v in r] for r in res.roc_points]
    _emit(args, _meta(args, table, args.seed), data, rows)
    return 0


def cmd_cv(args) -> int:
    table = _load_table(args)
    reduced = _reduced(args, table.schema)
    cut = args.cutpoint
    if cut is None and args.model:
        cut = PredictorModel.load(args.model).cut_point
    if cut is None:
        raise CliError("cv needs --cutpoint (or --model with a stored cut-point)")
    codes, y = _training_arrays(table, reduced)
    res = cross_validate(
        codes, y, reduced, table.prior, cut_point=cut, folds=args.folds, repeats=args.repeats,
        seed=args.seed, threads=args.threads,
    )
    m = res.matrix
    pct = m.column_percentages()
    rows = [
        ["predicted", "actual_alive", "actual_death", "pct_alive", "pct_death"],
        ["alive", repr(m.tn), repr(m.fn), _pct(pct, "alive", "pred_alive"), _pct(pct, "death", "pred_alive")],
        ["death", repr(m.fp), repr(m.tp), _pct(pct, "alive", "pred_death"), _pct(pct, "death", "pred_death")],
    ]
    _emit(args, _meta(args, table, args.seed), res.to_dict(), rows)
    return 0


def _pct(pct: dict, col: str, row: str) -> str:
    return f"{pct[col][row]:.1f}" if col in pct else ""


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("json", "csv"), default="json", help="output format (default json)")
    common.add_argument("--percent", action="store_true", help="probabilities as percentages with one decimal")
    common.add_argument("--threads", type=_threads, default=os.cpu_count() or 1,
                        help="worker threads; results do not depend on it (default: all cores)")
    common.add_argument("--log-level", default="WARNING", help="log level for standard error")

    tabled = argparse.ArgumentParser(add_help=False)
    tabled.add_argument("--table", help=f"fitted table file (default ${TABLE_ENV})")
    tabled.add_argument("--mapping", help="refuse the table unless its schema matches this mapping")
    tabled.add_argument("--nu", type=_nu, help="override the prior concentration stored in the table")
    tabled.add_argument("--prior-space", choices=("true", "naive2k"),
                        help="'naive2k' spreads the prior over 2^k outcomes as in the reference analysis")

    seeded = argparse.ArgumentParser(add_help=False)
    seeded.add_argument("--seed", type=int, default=0, help="random seed (default 0)")

    predictive = argparse.ArgumentParser(add_help=False)
    predictive.add_argument("--predictors", help=f"comma list (default {','.join(DEFAULT_PREDICTORS)})")
    predictive.add_argument("--target", default=DEFAULT_TARGET)
    predictive.add_argument("--fallback", help="variables of the fallback cell (default male,age)")

    parser = _Parser(prog="mvbern", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mvbern {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common, seeded], help="write synthetic data as CSV")
    p.add_argument("--preset", choices=PRESETS, default="paperlike")
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.add_argument("--write-mapping", help="also write the mapping that reads the CSV back")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ingest", parents=[common], help="CSV + mapping -> fitted table; report on stdout")
    p.add_argument("--data", required=True, help="delimited text file ('-' for stdin)")
    p.add_argument("--mapping", help="YAML column mapping (default: bundled Mexican open-data mapping)")
    p.add_argument("--filter", help="row filter, e.g. 'RESULTADO_LAB==1' (overrides the mapping's)")
    p.add_argument("--out", help="table file to write")
    p.add_argument("--nu", type=_nu, help="prior concentration (default 0.5)")
    p.add_argument("--prior-space", choices=("true", "naive2k"))
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("fit", parents=[common, tabled, predictive], help="build a predictor model from a table")
    p.add_argument("--cutpoint", type=float, help="store this cut-point in the model")
    p.add_argument("--out", help="model file (JSON)")
    p.add_argument("--contingency", help="write the reduced contingency table as CSV")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("summarize", parents=[common, tabled], help="posterior marginal rates")
    p.add_argument("--rows", help="variables, kinds or no:<kind> (default: every variable)")
    p.add_argument("--level", type=float, default=0.95, help="credible level (default 0.95)")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("risk", parents=[common, tabled], help="E[P(target | row, by-cell)] table")
    p.add_argument("--target", default=DEFAULT_TARGET)
    p.add_argument("--rows", default="comorbidity,symptom,hospitalized,no:comorbidity,no:symptom")
    p.add_argument("--by", default="male,age", help="factors crossed into columns (default male,age)")
    p.add_argument("--min-support", type=int, default=1)
    p.add_argument("--fit-exp", choices=("nls", "loglinear"), help="fit a*exp(b*x) across age levels per row")
    p.set_defaults(func=cmd_risk)

    p = sub.add_parser("heatmap", parents=[common, tabled], help="E[P(row | by-cell)] table")
    p.add_argument("--rows", default="symptom")
    p.add_argument("--by", default="male,age")
    p.add_argument("--min-support", type=int, default=1)
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("mortality", parents=[common, tabled], help="v * E[p(outcome, factor)]")
    p.add_argument("--v", type=float, default=100_000)
    p.add_argument("--outcome", default=DEFAULT_TARGET)
    p.add_argument("--factors", default="comorbidity,symptom,hospitalized")
    p.add_argument("--by", default="", help="optional factors crossed into columns, e.g. male,age")
    p.set_defaults(func=cmd_mortality)

    p = sub.add_parser("correlate", parents=[common, tabled, seeded], help="posterior correlation matrix + clusters")
    p.add_argument("--variables", help="variables or kinds (default: all)")
    p.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)
    p.add_argument("--groups", type=int, default=6)
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("predict", parents=[common], help="posterior predictive for reduced footprints")
    p.add_argument("--model", required=True)
    p.add_argument("--footprint", required=True, action="append", help="e.g. 130011 (repeatable)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("tune", parents=[common, tabled, seeded, predictive], help="optimal cut-point search")
    p.add_argument("--splits", type=int, default=100)
    p.add_argument("--test-size", type=int, help="prediction set size (default scales 100,000 of 1,584,280)")
    p.add_argument("--roc", action="store_true", help="include pooled ROC points in JSON output")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("cv", parents=[common, tabled, seeded, predictive], help="repeated k-fold confusion matrix")
    p.add_argument("--folds", type=int, default=20)
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--cutpoint", type=float)
    p.add_argument("--model", help="take the cut-point from a fitted model")
    p.set_defaults(func=cmd_cv)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        log.error("%s", exc)
        return exc.code
    except (MappingError, SchemaError, FileNotFoundError, OracleRangeError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except (SchemaViolation, IngestError, TableFormatError, PredictorError) as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except (ExpFitError, InconsistentMassError, UndefinedConditionalError, FloatingPointError) as exc:
        log.error("numeric error: %s", exc)
        return EXIT_NUMERIC


def main() -> None:
    try:
        code = run()
        sys.stdout.flush()
    except BrokenPipeError:
        # downstream closed early (e.g. `| head`); silence the flush at exit
        devnull = os.open(os.devnull, os.O_WRONLY)
        os.dup2(devnull, sys.stdout.fileno())
        code = 0
    sys.exit(code)


if __name__ == "__main__":
    main()
