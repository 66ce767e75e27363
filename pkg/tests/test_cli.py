import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from commonshock import random_params
from commonshock.cdph import joint_pmf, shifted_pmf
from commonshock.cli import EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main
from commonshock.files import dump_model, read_model, write_model
from oracles import scalar_model


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out.strip(), err.strip()


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def scalar_file(tmp_path):
    path = tmp_path / "scalar.json"
    write_model(path, scalar_model())
    return path


@pytest.fixture
def poisson_csv(tmp_path, capsys):
    out = tmp_path / "sim"
    code, _, _ = run(["simulate", "--generator", "biv-poisson", "--lambda-n1", 5, "--lambda-n2", 4,
                      "--lambda-z", 2, "--count", 1500, "--seed", 3, "--output-dir", out], capsys)
    assert code == EXIT_OK
    return out / "draws.csv"


class TestEval:
    def test_pmf(self, scalar_file, capsys):
        assert run(["eval", "--input", scalar_file, "pmf", 2, 2], capsys)[1] == "0.1875"

    def test_pgf(self, scalar_file, capsys):
        assert float(run(["eval", "--input", scalar_file, "pgf", 1, 1], capsys)[1]) == pytest.approx(1.0, abs=1e-12)

    def test_moment_consistency(self, scalar_file, capsys):
        get = lambda *q: float(run(["eval", "--input", scalar_file, *q], capsys)[1])  # noqa: E731
        m1, m2 = get("moment", 1, 0), get("moment", 0, 1)
        assert m1 == pytest.approx(10 / 3, abs=1e-12)
        assert get("min-mean") + get("max-mean") == pytest.approx(m1 + m2, abs=1e-8)
        assert get("sum-mean") == pytest.approx(m1 + m2, abs=1e-8)

    def test_closure_pmfs(self, scalar_file, capsys):
        assert float(run(["eval", "--input", scalar_file, "max-pmf", 2], capsys)[1]) == pytest.approx(0.1875)
        assert float(run(["eval", "--input", scalar_file, "sum-pmf", 3], capsys)[1]) == 0.0

    def test_grid(self, scalar_file, tmp_path, capsys):
        code, out, _ = run(["eval", "--input", scalar_file, "grid", "--output-dir", tmp_path / "g",
                            "--trunc-tol", 1e-10], capsys)
        assert code == EXIT_OK and float(out) > 1 - 1e-9
        rows = read_rows(tmp_path / "g" / "pmf_grid.csv")
        assert float(rows[0]["value"]) == pytest.approx(0.1875)

    def test_bad_queries(self, scalar_file, capsys):
        assert run(["eval", "--input", scalar_file, "pmf", 2], capsys)[0] == EXIT_USAGE
        assert run(["eval", "--input", scalar_file, "pgf", 2, 0.5], capsys)[0] == EXIT_USAGE
        assert run(["eval", "--input", scalar_file, "moment", -1, 0], capsys)[0] == EXIT_USAGE
        assert run(["eval", "--input", scalar_file, "nonsense"], capsys)[0] == EXIT_USAGE

    def test_dph_file(self, scalar_file, tmp_path, capsys):
        run(["construct", "max", "--input", scalar_file, "--output-dir", tmp_path / "m"], capsys)
        model = tmp_path / "m" / "model.json"
        assert float(run(["eval", "--input", model, "pmf", 2], capsys)[1]) == pytest.approx(0.1875)
        assert float(run(["eval", "--input", model, "pgf", 1], capsys)[1]) == pytest.approx(1.0)


class TestFit:
    def test_trace_and_model(self, poisson_csv, tmp_path, capsys):
        out = tmp_path / "fit"
        code, _, _ = run(["fit", "--input", poisson_csv, "--shift", 1, 0, 1, 0, "--dims", 2, 1,
                          "--output-dir", out], capsys)
        assert code == EXIT_OK
        trace = [float(r["log_likelihood"]) for r in read_rows(out / "trace.csv")]
        assert len(trace) == 500
        assert np.all(np.diff(trace) >= -1e-9)
        params, prov = read_model(out / "model.json")
        assert params.dims == (2, 1) and prov["iterations"] == 500 and prov["seed"] == 0

    def test_determinism(self, poisson_csv, tmp_path, capsys):
        outs = []
        for k in range(2):
            out = tmp_path / f"run{k}"
            run(["fit", "--input", poisson_csv, "--shift", 1, 0, 1, 0, "--iters", 40, "--seed", 9,
                 "--output-dir", out], capsys)
            outs.append(((out / "model.json").read_bytes(), (out / "trace.csv").read_bytes()))
        assert outs[0] == outs[1]

    def test_empty_file(self, tmp_path, capsys):
        empty = tmp_path / "empty.csv"
        empty.write_text("")
        code, _, err = run(["fit", "--input", empty, "--output-dir", tmp_path / "o"], capsys)
        assert code == EXIT_DATA and "empty.csv" in err

    def test_line_numbered_diagnostic(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("n1,n2\n2,3\n4,x\n")
        code, _, err = run(["fit", "--input", bad, "--output-dir", tmp_path / "o"], capsys)
        assert code == EXIT_DATA and "bad.csv:3" in err

    def test_off_lattice(self, tmp_path, capsys):
        bad = tmp_path / "zero.csv"
        bad.write_text("n1,n2\n0,3\n")
        code, _, err = run(["fit", "--input", bad, "--output-dir", tmp_path / "o"], capsys)
        assert code == EXIT_DATA and "lattice" in err

    def test_weights_column(self, tmp_path, capsys):
        data = tmp_path / "w.csv"
        data.write_text("n1,n2,weight\n2,2,3\n3,4,1\n")
        code, _, _ = run(["fit", "--input", data, "--dims", 1, 1, "--iters", 5, "--output-dir", tmp_path / "o"], capsys)
        assert code == EXIT_OK

    def test_frequency_table(self, tmp_path, capsys):
        table = tmp_path / "t.csv"
        table.write_text("n1\\n2,0,1,2\n0,50,10,2\n1,12,20,5\n2,1,4,9\n")
        code, _, _ = run(["fit", "--input", table, "--table", "--shift", 1, 0, 1, 0, "--iters", 10,
                          "--output-dir", tmp_path / "o"], capsys)
        assert code == EXIT_OK

    def test_exhausted_retries_is_numeric_failure(self, tmp_path, capsys, monkeypatch):
        import commonshock.estimate as est
        from commonshock import CdphParams
        dead = CdphParams([1.0], [[0.0]], [[1.0]], [[0.0]], [[0.0]])
        monkeypatch.setattr(est, "random_params", lambda *a, **k: dead)
        data = tmp_path / "d.csv"
        data.write_text("n1,n2\n3,3\n")
        code, _, err = run(["fit", "--input", data, "--dims", 1, 1, "--output-dir", tmp_path / "o"], capsys)
        assert code == EXIT_NUMERIC and "numerical" in err


class TestSimulate:
    def test_latent_columns(self, scalar_file, capsys):
        code, out, _ = run(["simulate", "--input", scalar_file, "--latent", "--count", 200, "--seed", 1], capsys)
        rows = list(csv.DictReader(out.splitlines()))
        assert code == EXIT_OK and len(rows) == 200
        for r in rows:
            assert int(r["tau1"]) == int(r["m"]) + int(r["z1"])
            assert int(r["tau2"]) == int(r["m"]) + int(r["z2"])

    def test_lindley(self, tmp_path, capsys):
        code, _, _ = run(["simulate", "--generator", "poisson-lindley", "--theta", 2, "--rates", 2, 3,
                          "--count", 10000, "--output-dir", tmp_path], capsys)
        assert code == EXIT_OK and len(read_rows(tmp_path / "draws.csv")) == 10000

    @pytest.mark.parametrize("lz", [1, 2, 3])
    def test_poisson_studies(self, lz, capsys):
        code, out, _ = run(["simulate", "--generator", "biv-poisson", "--lambda-n1", 5, "--lambda-n2", 4,
                            "--lambda-z", lz, "--count", 50], capsys)
        assert code == EXIT_OK and len(out.splitlines()) == 51

    def test_unknown_generator(self, capsys):
        assert run(["simulate", "--generator", "gamma"], capsys)[0] == EXIT_USAGE

    def test_determinism(self, scalar_file, capsys):
        a = run(["simulate", "--input", scalar_file, "--count", 100, "--seed", 5], capsys)[1]
        b = run(["simulate", "--input", scalar_file, "--count", 100, "--seed", 5], capsys)[1]
        assert a == b


class TestConstruct:
    def test_max(self, scalar_file, tmp_path, capsys):
        run(["construct", "max", "--input", scalar_file, "--output-dir", tmp_path], capsys)
        params, _ = read_model(tmp_path / "model.json")
        assert params.dim == 4

    def test_mixture_single(self, scalar_file, tmp_path, capsys):
        run(["construct", "mixture", "--input", scalar_file, "--weights", 1.0, "--output-dir", tmp_path], capsys)
        params, _ = read_model(tmp_path / "model.json")
        for n1 in range(2, 7):
            for n2 in range(2, 7):
                assert joint_pmf(params, n1, n2) == joint_pmf(scalar_model(), n1, n2)

    def test_vecsum(self, scalar_file, tmp_path, capsys):
        run(["construct", "vecsum", "--input", scalar_file, scalar_file, "--output-dir", tmp_path], capsys)
        params, _ = read_model(tmp_path / "model.json")
        assert params.dims == (2, 2)

    def test_errors(self, scalar_file, tmp_path, capsys):
        shifted = tmp_path / "shifted.json"
        write_model(shifted, scalar_model((1, 0, 1, 0)))
        assert run(["construct", "mixture", "--input", scalar_file, shifted, "--weights", 0.5, 0.5,
                    "--output-dir", tmp_path / "o"], capsys)[0] == EXIT_DATA
        assert run(["construct", "mixture", "--input", scalar_file, scalar_file, "--weights", 0.5, 0.6,
                    "--output-dir", tmp_path / "o"], capsys)[0] == EXIT_DATA
        assert run(["construct", "mixture", "--input", scalar_file, "--output-dir", tmp_path / "o"],
                   capsys)[0] == EXIT_USAGE


class TestReproduce:
    def test_poisson_structure(self, tmp_path, capsys):
        code, _, _ = run(["reproduce", "poisson-2", "--output-dir", tmp_path], capsys)
        assert code == EXIT_OK
        for dims in ("2_1", "3_2", "4_3"):
            sub = tmp_path / f"dims_{dims}"
            assert read_model(sub / "model.json")[0].shift == (1.0, 0.0, 1.0, 0.0)
            assert len(read_rows(sub / "trace.csv")) == 500
            for name in ("empirical_grid.csv", "fitted_grid.csv", "difference_grid.csv",
                         "marginal1.csv", "marginal2.csv", "common_shock.csv", "metrics.json"):
                assert (sub / name).exists()
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert set(summary["fits"]) == {"2,1", "3,2", "4,3"}

    def test_lindley_has_shock_panel(self, tmp_path, capsys):
        assert run(["reproduce", "lindley", "--iters", 20, "--output-dir", tmp_path], capsys)[0] == EXIT_OK
        rows = read_rows(tmp_path / "dims_4_3" / "common_shock.csv")
        assert sum(float(r["probability"]) for r in rows) > 0.99

    def test_userdata(self, tmp_path, capsys):
        table = tmp_path / "table.csv"
        table.write_text("n1/n2,0,1,2,3\n0,300,40,8,1\n1,60,90,20,4\n2,10,25,30,8\n3,2,5,9,12\n")
        code, _, _ = run(["reproduce", "userdata", "--input", table, "--table", "--iters", 30,
                          "--output-dir", tmp_path / "o"], capsys)
        assert code == EXIT_OK
        assert (tmp_path / "o" / "dims_4_3" / "fitted_grid.csv").exists()

    def test_userdata_requires_input(self, tmp_path, capsys):
        assert run(["reproduce", "userdata", "--output-dir", tmp_path], capsys)[0] == EXIT_USAGE


class TestModelFile:
    def test_round_trip_bytes_and_pmf(self, tmp_path, rng):
        params = random_params(3, 2, rng, shift=(0.5, 1.0, 2.0, -3.0))
        text = dump_model(params, {"seed": 1})
        path = tmp_path / "m.json"
        path.write_text(text)
        loaded, prov = read_model(path)
        assert dump_model(loaded, prov) == text
        for f in ("alpha", "P", "U", "Q1", "Q2"):
            assert np.array_equal(getattr(loaded, f), getattr(params, f))
        probes = [(0.5 * (i + 0) + 1.0, 2.0 * j - 3.0) for i in range(5) for j in range(5)]
        for x1, x2 in probes:
            assert shifted_pmf(loaded, x1, x2) == shifted_pmf(params, x1, x2)

    def test_invalid_files(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{"schema_version": 1, "kind": "cdph", "alpha": [1], "P": [[1.0]], '
                       '"U": [[0.0]], "Q1": [[0.5]], "Q2": [[0.5]], "shift": [1, 2, 1, 2]}')
        assert run(["eval", "--input", bad, "pmf", 2, 2], capsys)[0] == EXIT_DATA
        bad.write_text("{not json")
        assert run(["eval", "--input", bad, "pmf", 2, 2], capsys)[0] == EXIT_DATA
        assert run(["eval", "--input", tmp_path / "missing.json", "pmf", 2, 2], capsys)[0] == EXIT_DATA


def test_exit_codes_are_distinct():
    assert len({EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC}) == 4


def test_console_entry_point(scalar_file):
    res = subprocess.run([sys.executable, "-m", "commonshock", "eval", "--input", str(scalar_file), "pmf", "3", "2"],
                         capture_output=True, text=True, check=True)
    assert res.stdout.strip() == "0.046875"
    res = subprocess.run([sys.executable, "-m", "commonshock", "fit"], capture_output=True, text=True)
    assert res.returncode == EXIT_USAGE
