import io

import numpy as np
import pytest

from mvbern.ingest import (
    IngestError,
    MappingError,
    bundled_mapping,
    emit_csv_text,
    ingest,
    parse_filter,
    parse_mapping,
)
from mvbern.layout import footprint_schema
from mvbern.synth import PaperlikeGenerator

SMALL = {
    "variables": [
        {"name": "male", "source": "SEX", "positive": ["2"], "negative": ["1"], "missing": ["99"]},
        {
            "group": "age",
            "source": "AGE",
            "members": [
                {"name": "lt20", "lower": 0, "upper": 20},
                {"name": "a20_40", "lower": 20, "upper": 40},
                {"name": "a40_60", "lower": 40, "upper": 60},
                {"name": "ge60", "lower": 60},
            ],
        },
        {"name": "fever", "source": "FEVER", "positive": ["1"], "negative": ["2"], "missing": ["97", "98", "99"]},
    ]
}


def _run(text, doc=SMALL, **kw):
    return ingest(io.StringIO(text), parse_mapping(doc), **kw)


def test_missing_symptom_drops_row():
    res = _run("SEX,AGE,FEVER\n2,30,1\n1,70,99\n1,5,2\n")
    r = res.report
    assert (r.rows_kept, r.rows_dropped_missing) == (2, 1)
    assert r.missing_rates["FEVER"] == pytest.approx(1 / 3)


def test_age_binning_one_hot():
    res = _run("SEX,AGE,FEVER\n1,60,2\n1,39,2\n1,20,2\n1,0,2\n")
    assert res.bits[:, 1:5].tolist() == [[0, 0, 0, 1], [0, 1, 0, 0], [0, 1, 0, 0], [1, 0, 0, 0]]


def test_unrecognized_token_is_not_missing():
    res = _run("SEX,AGE,FEVER\n2,30,7\n2,abc,1\n2,30,1\n")
    r = res.report
    assert (r.rows_kept, r.rows_dropped_invalid, r.rows_dropped_missing) == (1, 2, 0)
    assert r.invalid_counts == {"FEVER": 1, "AGE": 1}


def test_fail_strictness_names_the_line():
    doc = dict(SMALL, strictness="fail")
    with pytest.raises(IngestError, match="line 3"):
        _run("SEX,AGE,FEVER\n2,30,1\n2,30,99\n", doc)


def test_filter_applies_before_mapping():
    text = "SEX,AGE,FEVER,LAB\n2,30,1,1\n2,30,1,2\n1,30,99,2\n"
    res = _run(text, row_filter="LAB==1")
    assert (res.report.rows_kept, res.report.rows_dropped_filter) == (1, 2)
    assert [p.values for p in parse_filter("A==1|2 & B!=x")] == [frozenset({"1", "2"}), frozenset({"x"})]
    with pytest.raises(MappingError):
        parse_filter("A>1")


def test_configuration_errors_before_reading():
    with pytest.raises(MappingError):
        _run("SEX,AGE\n1,1\n")  # FEVER column absent
    bad = {"variables": [{"name": "x", "source": "X", "positive": ["1"], "negative": ["1"]}]}
    with pytest.raises(MappingError):
        parse_mapping(bad)
    overlap = {
        "variables": [
            {"group": "g", "source": "A", "members": [{"name": "a", "lower": 0, "upper": 30},
                                                      {"name": "b", "lower": 20}]}
        ]
    }
    with pytest.raises(MappingError):
        parse_mapping(overlap)
    from mvbern.schema import VariableSchema

    with pytest.raises(MappingError):
        ingest(io.StringIO("SEX,AGE,FEVER\n"), parse_mapping(SMALL), schema=VariableSchema.from_spec(["male", "cough"]))


def test_bundled_mapping_matches_layout():
    assert bundled_mapping().schema().fingerprint() == footprint_schema().fingerprint()


def test_round_trip_is_bit_identical():
    mapping = bundled_mapping()
    bits = PaperlikeGenerator().sample_bits(10_000, seed=4)
    res = ingest(io.StringIO(emit_csv_text(bits, mapping)), mapping)
    assert res.report.rows_kept == 10_000
    assert np.array_equal(res.bits, bits)


def test_planted_missing_rates_are_reported():
    mapping = bundled_mapping()
    bits = PaperlikeGenerator().sample_bits(4000, seed=5)
    lines = emit_csv_text(bits, mapping).splitlines()
    header = lines[0].split(",")
    col = header.index("DIABETES")
    rng = np.random.default_rng(0)
    hit = rng.random(len(lines) - 1) < 0.05
    for i in np.flatnonzero(hit):
        cells = lines[i + 1].split(",")
        cells[col] = "98"
        lines[i + 1] = ",".join(cells)
    res = ingest(io.StringIO("\n".join(lines) + "\n"), mapping)
    assert res.report.rows_dropped_missing == hit.sum()
    assert res.report.missing_rates["DIABETES"] == pytest.approx(hit.mean())
    assert np.array_equal(res.bits, bits[~hit])


def test_non_utf8_bytes_in_unmapped_columns(tmp_path):
    path = tmp_path / "x.csv"
    path.write_bytes("SEX,AGE,FEVER,NOTE\n2,30,1,caf\xe9\n".encode("latin-1"))
    res = ingest(path, parse_mapping(SMALL))
    assert res.report.rows_kept == 1
