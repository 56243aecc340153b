"""Command-line interface: flags, formats, exit codes, determinism."""

import json

import numpy as np
import pytest

from voikit import generate_psa, LinearGaussianSpec, read_psa_csv, write_psa_csv
from voikit.cli import main


@pytest.fixture(scope="module")
def lin_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "lin.csv"
    write_psa_csv(path, generate_psa(LinearGaussianSpec(), 2_000, seed=1))
    return str(path)


@pytest.fixture(scope="module")
def toy_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "toy.csv"
    rc = main([
        "simulate", "--model", "toy", "--sims", "2000", "--seed", "3",
        "--k", "20000", "--out", str(path),
    ])
    assert rc == 0
    return str(path)


def _run(capsys, argv):
    rc = main(argv)
    captured = capsys.readouterr()
    return rc, captured.out, captured.err


class TestEvppiCommand:
    def test_so_with_explicit_bins(self, capsys, lin_csv):
        rc, out, _ = _run(capsys, [
            "evppi", "--file", lin_csv, "--method", "so",
            "--params", "phi", "--bins", "40",
        ])
        assert rc == 0
        payload = json.loads(out)
        assert payload["method"] == "SO"
        assert payload["diagnostics"]["bins"] == 40
        assert 0.25 < payload["value"] < 0.55

    def test_so_defaults_to_bias_selection(self, capsys, lin_csv):
        rc, out, _ = _run(capsys, [
            "evppi", "--file", lin_csv, "--method", "so", "--params", "phi",
        ])
        assert rc == 0
        payload = json.loads(out)
        assert payload["diagnostics"]["bin_selection"] == "bias-threshold"
        assert payload["diagnostics"]["bins"] >= 1
        assert "chosen_bias" in payload["diagnostics"]

    def test_sad_requires_changes(self, capsys, lin_csv):
        rc, _, err = _run(capsys, [
            "evppi", "--file", lin_csv, "--method", "sad", "--params", "phi",
        ])
        assert rc == 1
        assert "--changes" in err

    def test_sad_zero_changes_warns_non_influential(self, capsys, lin_csv):
        rc, out, _ = _run(capsys, [
            "evppi", "--file", lin_csv, "--method", "sad",
            "--params", "phi", "--changes", "0",
        ])
        assert rc == 0
        payload = json.loads(out)
        assert payload["value"] == 0.0
        assert any("non-influential" in w for w in payload["warnings"])

    def test_single_param_methods_reject_subsets(self, capsys, lin_csv):
        rc, _, err = _run(capsys, [
            "evppi", "--file", lin_csv, "--method", "so", "--params", "phi,psi",
        ])
        assert rc == 1
        assert "single parameter" in err

    def test_unknown_parameter_listed(self, capsys, lin_csv):
        rc, _, err = _run(capsys, [
            "evppi", "--file", lin_csv, "--method", "gam", "--params", "zeta",
        ])
        assert rc == 1
        assert "zeta" in err and "phi" in err

    def test_malformed_csv_names_column(self, capsys, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("param:x,nb:0,nb:1\n1,2,3\n1,oops,3\n", encoding="utf-8")
        rc, _, err = _run(capsys, [
            "evppi", "--file", str(bad), "--method", "gam", "--params", "x",
        ])
        assert rc == 1
        assert "nb:0" in err

    def test_gam_with_bootstrap(self, capsys, lin_csv):
        rc, out, _ = _run(capsys, [
            "evppi", "--file", lin_csv, "--method", "gam", "--params", "phi",
            "--bootstrap", "20", "--seed", "5",
        ])
        assert rc == 0
        payload = json.loads(out)
        assert payload["std_error"] > 0

    def test_missing_file(self, capsys):
        rc, _, err = _run(capsys, [
            "evppi", "--file", "no-such.csv", "--method", "gam", "--params", "x",
        ])
        assert rc == 1


class TestCompareCommand:
    def test_table_columns_in_report_order(self, capsys, lin_csv):
        rc, out, _ = _run(capsys, [
            "compare", "--file", lin_csv, "--params", "phi;psi",
            "--bootstrap", "0", "--changes", "1",
        ])
        assert rc == 0
        header = out.splitlines()[0].split()
        assert header == ["parameter", "SO", "SAD", "GP", "GAM"]

    def test_mc_column_needs_model(self, capsys, lin_csv):
        rc, out, _ = _run(capsys, [
            "compare", "--file", lin_csv, "--params", "phi",
            "--bootstrap", "0", "--changes", "1", "--format", "json",
            "--model", "linear-gaussian", "--mc-outer", "200", "--mc-inner", "50",
            "--k", "0",
        ])
        assert rc == 0
        payload = json.loads(out)
        assert payload["methods"] == ["SO", "SAD", "GP", "GAM", "MC"]
        cells = payload["rows"][0]["cells"]
        assert "value" in cells["MC"]

    def test_sad_cell_reports_missing_changes(self, capsys, lin_csv):
        rc, out, _ = _run(capsys, [
            "compare", "--file", lin_csv, "--params", "phi",
            "--bootstrap", "0", "--format", "json",
        ])
        assert rc == 0
        payload = json.loads(out)
        assert payload["rows"][0]["cells"]["SAD"] == {"error": "changes not provided"}

    def test_multi_param_subset_marks_single_param_methods(self, capsys, lin_csv):
        rc, out, _ = _run(capsys, [
            "compare", "--file", lin_csv, "--params", "phi,psi",
            "--bootstrap", "0", "--format", "json",
        ])
        assert rc == 0
        payload = json.loads(out)
        cells = payload["rows"][0]["cells"]
        assert cells["SO"] == {"error": "single-parameter method"}
        assert "value" in cells["GAM"]

    def test_json_and_table_agree_after_rounding(self, capsys, lin_csv):
        args = [
            "compare", "--file", lin_csv, "--params", "phi",
            "--bootstrap", "0", "--changes", "1",
        ]
        rc, table_out, _ = _run(capsys, args)
        assert rc == 0
        rc, json_out, _ = _run(capsys, args + ["--format", "json"])
        assert rc == 0
        payload = json.loads(json_out)
        gam_value = payload["rows"][0]["cells"]["GAM"]["value"]
        row = table_out.splitlines()[1].split()
        assert row[4] == f"{round(gam_value, 2):.2f}"

    def test_fast_methods_cluster_on_oracle(self, capsys, tmp_path):
        # generated linear-Gaussian file: every fast method lands on the
        # closed form 1/sqrt(2 pi) within joint bootstrap noise (paired
        # with the segmentation estimate of the same target)
        path = tmp_path / "oracle.csv"
        write_psa_csv(path, generate_psa(LinearGaussianSpec(), 4_000, seed=31))
        rc, out, _ = _run(capsys, [
            "compare", "--file", str(path), "--params", "phi",
            "--changes", "1", "--bootstrap", "60", "--seed", "2",
            "--format", "json",
        ])
        assert rc == 0
        cells = json.loads(out)["rows"][0]["cells"]
        target = 1.0 / np.sqrt(2.0 * np.pi)
        ref_se = cells["SAD"]["std_error"]
        for method in ("SO", "SAD", "GP", "GAM"):
            cell = cells[method]
            assert abs(cell["value"] - target) <= 2.0 * (cell["std_error"] + ref_se), method

    def test_identical_columns_give_all_zero_row(self, capsys, tmp_path):
        col = np.random.default_rng(0).normal(size=300)
        lines = ["param:x,nb:0,nb:1"]
        lines += [
            f"{float(x)!r},{float(v)!r},{float(v)!r}" for x, v in zip(col, col[::-1])
        ]
        path = tmp_path / "same.csv"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        rc, out, _ = _run(capsys, [
            "compare", "--file", str(path), "--params", "x",
            "--bootstrap", "0", "--changes", "1", "--format", "json",
        ])
        assert rc == 0
        cells = json.loads(out)["rows"][0]["cells"]
        for method in ("SO", "SAD", "GP", "GAM"):
            assert cells[method]["value"] == pytest.approx(0.0, abs=1e-9)


class TestSweepCommand:
    def test_nb_only_file_is_rejected(self, capsys, lin_csv):
        rc, _, err = _run(capsys, [
            "sweep", "--file", lin_csv, "--params", "phi",
        ])
        assert rc == 1
        assert "effect/cost" in err

    def test_model_sweep_reports_flip_point(self, capsys):
        rc, out, _ = _run(capsys, [
            "sweep", "--model", "toy", "--params", "risk_reduction",
            "--k-grid", "10000:30000:5000", "--sims", "2000", "--seed", "4",
        ])
        assert rc == 0
        payload = json.loads(out)
        assert payload["k_grid"] == [10000, 15000, 20000, 25000, 30000]
        assert len(payload["evpi"]) == 5
        assert len(payload["evppi"]["risk_reduction"]) == 5
        assert payload["k_star"] == pytest.approx(20_000, rel=0.25)

    def test_single_point_grid(self, capsys, toy_csv):
        rc, out, _ = _run(capsys, [
            "sweep", "--file", toy_csv, "--params", "risk_reduction",
            "--k-list", "20000", "--k", "20000",
        ])
        assert rc == 0
        payload = json.loads(out)
        assert len(payload["evpi"]) == 1
        assert "k_star" not in payload

    def test_evpi_dominates_evppi_pointwise(self, capsys, toy_csv):
        rc, out, _ = _run(capsys, [
            "sweep", "--file", toy_csv, "--params", "risk_reduction",
            "--k-grid", "10000:30000:10000", "--k", "20000",
        ])
        assert rc == 0
        payload = json.loads(out)
        for e, p in zip(payload["evpi"], payload["evppi"]["risk_reduction"]):
            assert p <= e + 1e-9

    def test_bad_grid(self, capsys, toy_csv):
        rc, _, err = _run(capsys, [
            "sweep", "--file", toy_csv, "--params", "risk_reduction",
            "--k-grid", "5:1:2",
        ])
        assert rc == 1


class TestVistoolCommand:
    def test_curve_csv_to_stdout(self, capsys, lin_csv):
        rc, out, _ = _run(capsys, [
            "vistool", "--file", lin_csv, "--param", "phi",
        ])
        assert rc == 0
        lines = out.splitlines()
        assert lines[0] == "phi,cumsum"
        assert len(lines) == 2_001
        assert float(lines[1].split(",")[1]) == 0.0

    def test_missing_param_lists_available(self, capsys, lin_csv):
        rc, _, err = _run(capsys, [
            "vistool", "--file", lin_csv, "--param", "missing",
        ])
        assert rc == 1
        assert "phi" in err and "psi" in err

    def test_out_file(self, capsys, lin_csv, tmp_path):
        dest = tmp_path / "curve.csv"
        rc, out, _ = _run(capsys, [
            "vistool", "--file", lin_csv, "--param", "phi", "--out", str(dest),
        ])
        assert rc == 0
        assert dest.read_text(encoding="utf-8").startswith("phi,cumsum")


class TestSimulateCommand:
    def test_round_trip_and_sidecar(self, capsys, tmp_path):
        out_path = tmp_path / "sim.csv"
        rc, _, _ = _run(capsys, [
            "simulate", "--model", "linear-gaussian", "--sims", "300",
            "--seed", "7", "--out", str(out_path),
        ])
        assert rc == 0
        sample = read_psa_csv(out_path)
        direct = generate_psa(LinearGaussianSpec(), 300, seed=7)
        assert np.array_equal(sample.params, direct.params)
        assert np.array_equal(sample.nb, direct.nb)
        sidecar = json.loads(
            (tmp_path / "sim.csv.provenance.json").read_text(encoding="utf-8")
        )
        assert sidecar["seed"] == 7
        assert sidecar["spec"]["model"] == "linear_gaussian"

    def test_same_seed_same_bytes(self, capsys, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for path in (a, b):
            rc, _, _ = _run(capsys, [
                "simulate", "--model", "toy", "--sims", "100",
                "--seed", "9", "--out", str(path),
            ])
            assert rc == 0
        assert a.read_bytes() == b.read_bytes()

    def test_different_seeds_differ(self, capsys, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for seed, path in ((1, a), (2, b)):
            rc, _, _ = _run(capsys, [
                "simulate", "--model", "toy", "--sims", "100",
                "--seed", str(seed), "--out", str(path),
            ])
            assert rc == 0
        assert a.read_bytes() != b.read_bytes()

    def test_unwritable_path(self, capsys):
        rc, _, err = _run(capsys, [
            "simulate", "--model", "toy", "--sims", "100",
            "--out", "/no/such/dir/x.csv",
        ])
        assert rc == 1

    def test_spec_json_model(self, capsys, tmp_path):
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(
            json.dumps({"model": "linear_gaussian", "a": 1.0, "b": 2.0}),
            encoding="utf-8",
        )
        out_path = tmp_path / "sim.csv"
        rc, _, _ = _run(capsys, [
            "simulate", "--model", str(spec_path), "--sims", "50",
            "--seed", "0", "--out", str(out_path),
        ])
        assert rc == 0
        sample = read_psa_csv(out_path)
        direct = generate_psa(LinearGaussianSpec(a=1.0, b=2.0), 50, seed=0)
        assert np.array_equal(sample.nb, direct.nb)


class TestUsageErrors:
    def test_unknown_method_flag(self, capsys, lin_csv):
        with pytest.raises(SystemExit) as e:
            main(["evppi", "--file", lin_csv, "--method", "ols", "--params", "phi"])
        assert e.value.code == 1

    def test_unknown_command(self, capsys):
        with pytest.raises(SystemExit) as e:
            main(["frobnicate"])
        assert e.value.code == 1
