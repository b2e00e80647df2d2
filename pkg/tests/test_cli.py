import hashlib
import json
import subprocess
import sys

import pytest

from mvbern import cli
from mvbern.inference import ExpFitError


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert cli.run(["simulate", "--n", "20000", "--seed", "7", "--out", str(d / "data.csv")]) == 0
    return d


def _run(capsys, argv):
    code = cli.run(argv)
    out = capsys.readouterr().out
    return code, out


@pytest.fixture(scope="module")
def table(workdir):
    path = workdir / "t.mvb"
    assert cli.run(["ingest", "--data", str(workdir / "data.csv"), "--out", str(path)]) == 0
    return path


def test_help_exits_zero():
    proc = subprocess.run([sys.executable, "-m", "mvbern.cli", "risk", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "usage" in proc.stdout


def test_ingest_report_and_metadata(capsys, workdir, table):
    code, out = _run(capsys, ["ingest", "--data", str(workdir / "data.csv"), "--nu", "1/2"])
    doc = json.loads(out)
    assert code == 0
    assert doc["data"]["rows_kept"] == 20000
    assert doc["meta"]["S"] == 2**33 and doc["meta"]["n"] == 20000 and doc["meta"]["nu"] == 0.5


def test_summarize_percent_and_env_table(capsys, table, monkeypatch):
    monkeypatch.setenv(cli.TABLE_ENV, str(table))
    code, out = _run(capsys, ["summarize", "--rows", "death,hospitalized,no:symptom", "--format", "csv", "--percent"])
    assert code == 0
    rows = [line.split(",") for line in out.splitlines() if not line.startswith("#")]
    assert rows[0] == ["event", "mean", "ci_low", "ci_high"]
    assert [r[0] for r in rows[1:]] == ["death", "hospitalized", "no symptom"]
    assert all(len(r[1].split(".")[1]) == 1 for r in rows[1:])


def test_risk_heatmap_mortality_correlate(capsys, table):
    code, out = _run(capsys, ["risk", "--table", str(table), "--rows", "diabetes,no:comorbidity", "--fit-exp", "nls"])
    doc = json.loads(out)
    assert code == 0 and len(doc["data"]["columns"]) == 8 and len(doc["data"]["expfit"]) == 4
    code, out = _run(capsys, ["heatmap", "--table", str(table), "--rows", "fever", "--format", "csv"])
    assert code == 0 and out.splitlines()[-1].startswith("fever,")
    code, out = _run(capsys, ["mortality", "--table", str(table), "--factors", "diabetes,hospitalized"])
    exp = json.loads(out)["data"]["expected"]
    assert code == 0 and exp[1][0] > exp[0][0]
    code, out = _run(capsys, ["correlate", "--table", str(table), "--variables", "comorbidity", "--samples", "300",
                              "--groups", "3"])
    doc = json.loads(out)
    assert code == 0 and len(doc["data"]["matrix"]) == 9 and doc["meta"]["seed"] == 0


def test_pipeline_is_reproducible_across_runs_and_threads(capsys, workdir, table):
    model = workdir / "m.json"
    assert cli.run(["fit", "--table", str(table), "--out", str(model), "--cutpoint", "0.11"]) == 0
    capsys.readouterr()
    digests = set()
    for threads in ("1", "3", "1"):
        code, out = _run(capsys, ["cv", "--table", str(table), "--model", str(model), "--folds", "5",
                                  "--repeats", "2", "--seed", "5", "--threads", threads])
        assert code == 0
        digests.add(hashlib.sha256(out.encode()).hexdigest())
    assert len(digests) == 1
    code, out = _run(capsys, ["tune", "--table", str(table), "--splits", "3", "--seed", "1"])
    assert code == 0 and 0 < json.loads(out)["data"]["c_hat"] < 1
    code, out = _run(capsys, ["predict", "--model", str(model), "--footprint", "130011", "--footprint", "040111"])
    preds = json.loads(out)["data"]
    assert code == 0 and [p["footprint"] for p in preds] == ["130011", "040111"]
    assert all("predicted_death" in p for p in preds)


def test_exit_codes(capsys, workdir, table, monkeypatch):
    monkeypatch.delenv(cli.TABLE_ENV, raising=False)
    assert cli.run(["summarize"]) == cli.EXIT_CONFIG
    assert cli.run(["summarize", "--table", str(workdir / "absent.mvb")]) == cli.EXIT_CONFIG
    with pytest.raises(SystemExit) as err:
        cli.run(["summarize", "--bogus"])
    assert err.value.code == cli.EXIT_CONFIG
    bad = workdir / "bad.mvb"
    bad.write_bytes(b"nonsense")
    assert cli.run(["summarize", "--table", str(bad)]) == cli.EXIT_DATA
    model = workdir / "m2.json"
    cli.run(["fit", "--table", str(table), "--out", str(model)])
    assert cli.run(["predict", "--model", str(model), "--footprint", "190011"]) == cli.EXIT_DATA

    other = workdir / "other.yaml"
    cli.run(["simulate", "--preset", "independent", "--n", "5", "--out", str(workdir / "i.csv"),
             "--write-mapping", str(other)])
    assert cli.run(["summarize", "--table", str(table), "--mapping", str(other)]) == cli.EXIT_CONFIG

    def boom(*a, **k):
        raise ExpFitError("no convergence", 1.0, 0.0)

    monkeypatch.setattr(cli, "fit_exponential", boom)
    assert cli.run(["risk", "--table", str(table), "--rows", "diabetes", "--fit-exp", "nls"]) == cli.EXIT_NUMERIC
    capsys.readouterr()


def test_simulated_preset_round_trips_through_its_mapping(capsys, workdir):
    csv_path, mapping = workdir / "b.csv", workdir / "b.yaml"
    assert cli.run(["simulate", "--preset", "blocks", "--n", "500", "--seed", "2", "--out", str(csv_path),
                    "--write-mapping", str(mapping)]) == 0
    code, out = _run(capsys, ["ingest", "--data", str(csv_path), "--mapping", str(mapping)])
    assert code == 0 and json.loads(out)["data"]["rows_kept"] == 500
