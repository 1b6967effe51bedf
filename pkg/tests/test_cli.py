"""Command line: config round trip, exit codes, CSV outputs and manifests."""

import csv
import json

import numpy as np
import pytest

from semireg.cli import (ConfigError, config_hash, read_config, resolve, run, sweep_dimension,
                         system_from_config, write_config)

MUTATION = ["--builtin", "mutation", "--kappa", "1", "--mbar", "0.5", "--dim", "1"]


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0] == "# semireg csv v1"
    return list(csv.DictReader(lines[1:]))


class TestConfig:
    def test_round_trip(self, tmp_path):
        cfg = resolve("estimate", {"builtin": "migration", "kappa": "1.5", "dim": "2",
                                   "x": "0.25, 0.5", "alpha": "1 0", "t": "0.1"}, {})
        write_config(cfg, tmp_path / "a.ini")
        back = resolve("estimate", {}, read_config(tmp_path / "a.ini"))
        assert back == cfg
        assert back["x"] == [0.25, 0.5] and back["alpha"] == [1, 0] and back["kappa"] == 1.5

    def test_float_repr_lossless(self, tmp_path):
        cfg = resolve("certify", {"builtin": "wright-fisher", "t": repr(1 / 3)}, {})
        write_config(cfg, tmp_path / "c.ini")
        assert read_config(tmp_path / "c.ini")["t"] == 1 / 3

    def test_precedence(self, tmp_path):
        (tmp_path / "c.ini").write_text("[system]\nbuiltin = wright-fisher\n\n[run]\nt = 2.0\n"
                                        "n_paths = 10\n")
        cfg = resolve("certify", {"t": "0.5"}, read_config(tmp_path / "c.ini"))
        assert cfg["t"] == 0.5 and cfg["n_paths"] == 10 and cfg["m"] == 1

    def test_command_defaults(self):
        assert resolve("sweep", {}, {})["dt"] == 2e-3
        assert resolve("certify", {}, {})["dt"] is None
        assert resolve("sweep", {"dt": "0.01"}, {})["dt"] == 0.01

    def test_error_has_line_and_field(self, tmp_path):
        p = tmp_path / "bad.ini"
        p.write_text("[system]\nbuiltin = wright-fisher\n\n[run]\nt = 1.0\nn_paths = lots\n")
        with pytest.raises(ConfigError, match=r"bad\.ini:6: \[run\] field 'n_paths'"):
            read_config(p)

    def test_unknown_and_misplaced(self, tmp_path):
        p = tmp_path / "u.ini"
        p.write_text("[run]\nfoo = 1\n")
        with pytest.raises(ConfigError, match="u.ini:2.*unknown field 'foo'"):
            read_config(p)
        p.write_text("[run]\nkappa = 1\n")
        with pytest.raises(ConfigError, match=r"belongs in \[system\]"):
            read_config(p)

    def test_hash_ignores_workers(self):
        a = resolve("certify", {"builtin": "wright-fisher", "workers": "1"}, {})
        b = resolve("certify", {"builtin": "wright-fisher", "workers": "8"}, {})
        c = resolve("certify", {"builtin": "wright-fisher", "seed": "1"}, {})
        assert config_hash(a, "certify") == config_hash(b, "certify") != config_hash(c, "certify")

    def test_inline_system(self):
        sys_ = system_from_config({"dim": 2, "drift": "x2 - x1; x1 - x2",
                                   "sqdiff": "x1*(1-x1); x1*(1-x1)"})
        assert sys_.dim == 2
        with pytest.raises(ConfigError):
            system_from_config({"dim": 2, "drift": "x2 - x1", "sqdiff": "x1*(1-x1)"})
        with pytest.raises(ConfigError):
            system_from_config({"dim": 1, "builtin": "wright-fisher", "drift": "0"})


class TestExamples:
    def test_constants(self, tmp_path, capsys):
        assert run(["constants", "--builtin", "wright-fisher", "--dim", "8",
                    "--out", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / "constants.csv")
        vals = {(r["name"], r["index"]): float(r["value"]) for r in rows}
        assert vals[("mu", "2")] == pytest.approx(1.0) and vals[("mu", "3")] == pytest.approx(3.0)
        assert all(vals[("lambda", str(m))] == 0.0 for m in range(4))
        assert "grid_resolution" in rows[0]

    def test_validate(self, tmp_path, capsys):
        assert run(["validate", "--builtin", "migration", "--kappa", "1", "--dim", "4",
                    "--out", str(tmp_path)]) == 0
        assert capsys.readouterr().out.startswith("admissible")

    def test_certify(self, tmp_path, capsys):
        code = run(["certify", *MUTATION, "--f", "x1", "--m", "1", "--t", "1",
                    "--n-paths", "4096", "--out", str(tmp_path)])
        assert code == 0
        assert capsys.readouterr().out.startswith("PASS")
        rows = read_csv(tmp_path / "certificate.csv")
        assert set(rows[0]) == {"alpha", "point", "value", "se", "bound_share"}


class TestExitCodes:
    @pytest.mark.parametrize("argv", [
        ["frobnicate"],
        ["certify", "--builtin", "nope"],
        ["certify", *MUTATION, "--m", "3"],
        ["certify", *MUTATION, "--workers", "0"],
        ["certify", *MUTATION, "--n-paths", "many"],
        ["certify", "--drift", "x1", "--sqdiff", "x1*(1-"],
        ["estimate", "--builtin", "wright-fisher", "--dim", "2", "--x", "0.5"],
        ["validate", "--builtin", "mutation", "--mbar", "1.5"],
        ["certify", "--config", "/nonexistent/semireg.ini"],
    ])
    def test_usage_errors(self, argv, tmp_path, capsys):
        assert run([*argv, "--out", str(tmp_path)]) == 2

    def test_inadmissible(self, tmp_path, capsys):
        code = run(["validate", "--drift", "0.1", "--sqdiff", "x1*(1-x1)", "--out", str(tmp_path)])
        assert code == 1
        out = capsys.readouterr().out
        assert out.startswith("inadmissible") and "drift-inward" in out
        assert read_csv(tmp_path / "validation.csv")[0]["invariant"] == "drift-inward"

    def test_certification_failure(self, tmp_path, capsys):
        # the bound is tight (factor 1, true norm 1); clamping bias at the default dt = t/10
        # pushes the near-boundary derivative estimate above it
        code = run(["certify", "--builtin", "wright-fisher", "--f", "x1", "--m", "1",
                    "--t", "0.5", "--n-paths", "2000", "--out", str(tmp_path)])
        assert code == 1
        assert capsys.readouterr().out.startswith("FAIL")

    def test_success_commands(self, tmp_path, capsys):
        runs = {
            "flow": ["flow", "--builtin", "logistic-drift", "--c", "1", "--x", "0.3", "--t", "1"],
            "simulate1d": ["simulate1d", "--builtin", "wright-fisher", "--a", "x1*(1-x1)",
                           "--x0", "0.3", "--t", "0.5", "--n-paths", "2048"],
            "resolvent": ["resolvent", "--builtin", "wright-fisher", "--a", "x1*(1-x1)",
                          "--phi", "x1^2", "--lam", "2", "--m", "0", "--nodes", "200"],
            "estimate": ["estimate", *MUTATION, "--f", "x1", "--x", "0.2", "--t", "1",
                         "--dt", "0.01", "--n-paths", "2048"],
            "trotter": ["trotter", *MUTATION, "--f", "x1", "--n", "4", "--grid-points", "41"],
        }
        files = {"flow": "flow.csv", "simulate1d": "ensemble.csv", "resolvent": "resolvent.csv",
                 "estimate": "estimate.csv", "trotter": "trotter.csv"}
        for name, argv in runs.items():
            out = tmp_path / name
            assert run([*argv, "--out", str(out)]) == 0, name
            assert (out / files[name]).exists()
            assert json.loads((out / "manifest.json").read_text())["exit_code"] == 0
        stats = {r["stat"]: r for r in read_csv(tmp_path / "simulate1d" / "ensemble.csv")}
        assert set(stats) >= {"mean", "variance", "absorbed_fraction"}
        assert abs(float(stats["mean"]["value"]) - 0.3) <= 3 * float(stats["mean"]["se"])


class TestManifest:
    def test_contents(self, tmp_path, capsys):
        run(["certify", *MUTATION, "--f", "x1", "--t", "0.5", "--n-paths", "1024",
             "--seed", "17", "--out", str(tmp_path)])
        man = json.loads((tmp_path / "manifest.json").read_text())
        assert man["root_seed"] == 17 and man["command"] == "certify"
        assert set(man["outputs"]) == {"certificate.csv"}
        assert len(man["config_hash"]) == 64 and man["semireg_version"]

    def test_rerun_from_config_is_byte_identical(self, tmp_path, capsys):
        first, second = tmp_path / "a", tmp_path / "b"
        run(["certify", *MUTATION, "--f", "x1", "--t", "0.5", "--n-paths", "1500",
             "--dt", "0.05", "--seed", "3", "--out", str(first)])
        run(["certify", "--config", str(first / "config.ini"), "--out", str(second)])
        assert (first / "certificate.csv").read_bytes() == (second / "certificate.csv").read_bytes()
        a = json.loads((first / "manifest.json").read_text())
        b = json.loads((second / "manifest.json").read_text())
        assert a["config_hash"] == b["config_hash"] and a["outputs"] == b["outputs"]

    def test_seed_changes_output(self, tmp_path, capsys):
        for s in ("1", "2"):
            run(["estimate", *MUTATION, "--f", "x1", "--x", "0.2", "--t", "0.5", "--dt", "0.05",
                 "--n-paths", "1024", "--seed", s, "--out", str(tmp_path / s)])
        assert ((tmp_path / "1" / "estimate.csv").read_bytes()
                != (tmp_path / "2" / "estimate.csv").read_bytes())


class TestSweep:
    def test_lambda_column_and_factors(self):
        rows, reports = sweep_dimension("migration", {"kappa": 1.0}, [1, 2, 4, 8, 16], ms=(0, 1, 2),
                                        certify_m=None)
        assert reports == {}
        lam1 = [r[2] for r in rows if r[1] == 1]
        np.testing.assert_allclose(lam1, [0, 1, 1.5, 1.75, 1.875], atol=1e-12)
        assert all(r[4] == 1.0 for r in rows if r[1] == 0)
        assert all(r[4] <= np.exp((4 * 2 + 1) * 0.5) for r in rows if r[1] == 2)
        assert all(r[5] is None for r in rows)

    def test_cli_sweep(self, tmp_path, capsys):
        code = run(["sweep", "--builtin", "migration", "--kappa", "1", "--dims", "1,2",
                    "--ms", "0,1", "--dt", "0.05", "--n-paths", "1024", "--budget", "1e8",
                    "--out", str(tmp_path)])
        rows = read_csv(tmp_path / "sweep.csv")
        assert [(r["dim"], r["m"]) for r in rows] == [("1", "0"), ("1", "1"), ("2", "0"),
                                                      ("2", "1")]
        assert rows[0]["estimate"] == "" and rows[1]["pass"] in ("true", "false")
        assert code == (0 if all(r["pass"] == "true" for r in rows if r["m"] == "1") else 1)
