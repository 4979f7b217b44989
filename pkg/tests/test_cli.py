import csv
import io
import json
import math
from pathlib import Path

import pytest

from lyaplab import cli, exact, mccoywu, spectral
from lyaplab.exact import ModelParams

GOLDEN = Path(__file__).parent / "golden"

GOLDEN_RUNS = {
    "exact_lyapunov": ["exact", "lyapunov", "--sigma", "1", "--alpha", "0.5", "--grid", "0.01:10:7:log"],
    "exact_variance": ["exact", "variance", "--sigma", "1", "--alpha", "0.5", "--eps", "0.5"],
    "exact_expand": ["exact", "expand", "--alpha", "6", "--jmax", "5"],
    "exact_density": ["exact", "density", "--sigma", "1", "--alpha", "0.7", "--eps", "0.4", "--grid", "0.1:10:5:log"],
    "spec_zeros": ["spec", "zeros", "--x", "0.001", "--count", "7"],
    "spec_residue": ["spec", "residue", "--x", "0.001", "--n", "1"],
    "mw_f": ["mw", "f", "--eta", "0.5", "--grid", "-0.5:0.5:5"],
    "mw_fsimple": ["mw", "fsimple", "--alpha", "0.1", "--mode", "closed-form"],
    "mw_taylor": ["mw", "taylor", "--nmax", "12", "--method", "pole-dominant"],
    "mw_betac": ["mw", "betac", "--e1", "1", "--e2-law", "uniform", "--e2-lo", "0.5", "--e2-hi", "1.5"],
    "mw_map": ["mw", "map", "--e1", "1", "--e2-law", "uniform", "--e2-lo", "0.5", "--e2-hi", "1.5",
               "--grid", "0.4:0.6:3"],
    "sim_hypotheses": ["sim", "hypotheses", "--law", "lognormal", "--sigma", "1", "--alpha", "0.5",
                       "--grid", "1e-4:1e-2:3:log"],
}


def run(argv, capsys):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.reader(io.StringIO(text)))


def values_close(a, b):
    try:
        x, y = float(a), float(b)
    except ValueError:
        return a == b
    if math.isnan(x) or math.isnan(y):
        return math.isnan(x) and math.isnan(y)
    return math.isclose(x, y, rel_tol=1e-10, abs_tol=1e-14)


@pytest.mark.parametrize("name", sorted(GOLDEN_RUNS))
def test_golden(name, capsys):
    code, out, _ = run(GOLDEN_RUNS[name], capsys)
    assert code == 0
    got = rows(out)
    want = rows((GOLDEN / f"{name}.csv").read_text())
    assert got[0] == want[0]
    assert len(got) == len(want)
    for g, w in zip(got[1:], want[1:]):
        assert all(values_close(a, b) for a, b in zip(g, w)), (g, w)


def test_lyapunov_row(capsys):
    code, out, err = run(["exact", "lyapunov", "--sigma", "1", "--alpha", "0.5", "--eps", "0.25"], capsys)
    assert code == 0
    r = list(csv.DictReader(io.StringIO(out)))
    assert len(r) == 1
    assert float(r[0]["x"]) == 1.0
    assert float(r[0]["L"]) == pytest.approx(exact.lyapunov(ModelParams(1, 0.5, 0.25)), rel=1e-15)
    assert err.startswith("# manifest ")


def test_zeros_table(capsys):
    code, out, _ = run(["spec", "zeros", "--x", "0.1", "--count", "3"], capsys)
    nus = [float(r["nu"]) for r in csv.DictReader(io.StringIO(out))]
    assert [abs(a - b) <= 0.01 for a, b in zip(nus, (1.14, 2.04, 2.85))] == [True] * 3


def test_seventeen_digits(capsys):
    _, out, _ = run(["exact", "lyapunov", "--sigma", "1", "--alpha", "0.3", "--eps", "0.3"], capsys)
    r = list(csv.DictReader(io.StringIO(out)))[0]
    assert float(r["L"]) == exact.lyapunov(ModelParams(1, 0.3, 0.3))


def test_complex_columns(capsys):
    _, out, _ = run(["mw", "fsimple", "--alpha", "0.2", "--alpha-im", "0.1", "--mode", "closed-form"], capsys)
    r = list(csv.DictReader(io.StringIO(out)))[0]
    v = complex(mccoywu.big_f_simplified(complex(0.2, 0.1), "closed-form"))
    assert float(r["F_re"]) == v.real and float(r["F_im"]) == v.imag


def test_json(capsys):
    code, out, _ = run(["spec", "zeros", "--x", "0.01", "--count", "2", "--format", "json"], capsys)
    doc = json.loads(out)
    assert set(doc) == {"manifest", "records"}
    assert doc["manifest"]["program"] == "lyaplab"
    assert doc["records"][1]["nu"] == spectral.zeros_of_k(0.01, 2)[1].nu


def test_csv_sidecar_and_replay(tmp_path, capsys):
    out = tmp_path / "run.csv"
    code, _, _ = run(["exact", "variance", "--sigma", "1", "--alpha", "0.5", "--eps", "0.3",
                      "--output", str(out)], capsys)
    assert code == 0
    manifest = tmp_path / "run.csv.manifest.json"
    assert manifest.exists()
    again = tmp_path / "again.csv"
    code, _, _ = run(["exact", "variance", "--config", str(manifest), "--output", str(again)], capsys)
    assert code == 0
    assert out.read_text() == again.read_text()


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "p.cfg"
    cfg.write_text("# comment\nsigma = 1\nalpha=0.5\neps=0.25\n")
    _, a, _ = run(["exact", "lyapunov", "--config", str(cfg)], capsys)
    _, b, _ = run(["exact", "lyapunov", "--config", str(cfg), "--eps", "0.5"], capsys)
    assert float(list(csv.DictReader(io.StringIO(a)))[0]["eps"]) == 0.25
    assert float(list(csv.DictReader(io.StringIO(b)))[0]["eps"]) == 0.5


def test_product_reproducible(capsys):
    argv = ["sim", "product", "--law", "lognormal", "--sigma", "1", "--alpha", "0.5", "--eps", "1",
            "--delta", "1e-3", "--steps", "200000", "--seed", "7", "--jobs", "1"]
    _, a, _ = run(argv, capsys)
    _, b, _ = run(argv, capsys)
    assert a == b
    r = list(csv.DictReader(io.StringIO(a)))[0]
    assert float(r["err"]) > 0
    assert abs(float(r["rate"]) - exact.lyapunov(ModelParams(1, 0.5, 1))) < 5 * float(r["err"])


@pytest.mark.parametrize("argv", [
    ["exact", "lyapunov", "--sigma", "-1", "--alpha", "0.5", "--eps", "0.2"],
    ["exact", "lyapunov", "--sigma", "1", "--alpha", "0.5"],
    ["exact", "nope"],
    ["spec", "zeros", "--x", "2", "--count", "1"],
    ["exact", "lyapunov", "--sigma", "1", "--alpha", "0.5", "--grid", "1:2"],
])
def test_usage_errors(argv, capsys):
    code, out, err = run(argv, capsys)
    assert code == 2
    assert err.strip()


def test_numerical_error_exit(capsys):
    # a free-energy run whose budget cannot reach 10% accuracy
    code, _, err = run(["sim", "clt", "--sigma", "1", "--alpha", "0.5", "--eps", "0.5",
                        "--steps", "1000", "--replicas", "10"], capsys)
    assert code == 3
    assert err.strip()


def test_jobs_env_override(monkeypatch, capsys):
    monkeypatch.setenv("LYAPLAB_JOBS", "1")
    code, out, _ = run(["mw", "free-energy", "--e1", "1", "--e2-law", "uniform", "--e2-lo", "0.5",
                        "--e2-hi", "1.5", "--beta-factor", "1.2", "--grid", "0.1:3.14:3",
                        "--budget", "20000", "--seed", "1", "--jobs", "8", "--format", "json"], capsys)
    assert code == 0
    assert json.loads(out)["records"][0]["err"] > 0


def test_help_lists_groups(capsys):
    assert cli.main(["--help"]) == 0
    assert "exact" in capsys.readouterr().out


def test_negative_grid(capsys):
    code, out, _ = run(["mw", "f", "--eta", "0.5", "--grid", "-0.5:0.5:3"], capsys)
    assert code == 0
    r = list(csv.DictReader(io.StringIO(out)))
    assert float(r[0]["alpha"]) == -0.5
    # reflection through the CLI path: F(-a) - F(a) = 2 eta a
    assert float(r[0]["F"]) - float(r[2]["F"]) == pytest.approx(0.5, abs=1e-8)
