import json
import shutil
import subprocess
from pathlib import Path

import jsonschema
import numpy as np
import pytest

from _instances import nlp_1d
from tiltnewton.cli import main
from tiltnewton.exceptions import ConfigInvalid
from tiltnewton.experiment import (
    REPORT_SCHEMA,
    compare_sqp_subproblems,
    load_config,
    run_experiment,
    validate_config,
)
from tiltnewton.problems import NLPData, make_nlp

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run_config(name, outdir):
    return run_experiment(load_config(CONFIGS / name), outdir=outdir)


class TestShippedConfigs:
    def test_quadratic(self, tmp_path):
        rep = run_config("quadratic.json", tmp_path)
        (run,) = rep["runs"]
        assert run["status"] == "Stationary" and run["iterations"] == 1
        assert rep["probes"][0]["report"]["violations"] == 0

    def test_example46(self, tmp_path):
        rep = run_config("example46.json", tmp_path)
        assert rep["runs"][0]["status"] == "Diverged"
        assert rep["runs"][0]["oscillating"]
        assert rep["probes"][0]["report"]["verdict"] is False

    def test_elqp_variants_agree(self, tmp_path):
        rep = run_config("elqp.json", tmp_path)
        assert all(r["status"] == "Stationary" for r in rep["runs"])
        finals = np.array([r["final_x"] for r in rep["runs"]])
        assert np.max(np.abs(finals - finals[0])) <= 1e-8
        assert len({r["label"] for r in rep["runs"]}) == len(rep["runs"]) // 2

    def test_line_search_runs_get_mu_advisory(self, tmp_path):
        rep = run_config("elqp.json", tmp_path)
        advised = [r for r in rep["runs"] if "mu_advisory" in r]
        assert advised and all(r["mu_advisory"]["mu"] == 0.05 for r in advised)
        tilt = next(p for p in rep["probes"] if p["type"] == "tilt")["report"]
        ell = next(p for p in rep["probes"] if p["type"] == "constants")["report"]["estimated_ell"]
        bound = 1.0 / (4 * ell * tilt["estimated_kappa"])
        assert advised[0]["mu_advisory"]["bound"] == pytest.approx(bound)

    def test_output_files(self, tmp_path):
        run_config("elqp.json", tmp_path)
        names = {p.name for p in tmp_path.iterdir()}
        assert {"report.json", "rates.csv", "timings.json"} <= names
        assert any(n.startswith("trace_") for n in names)
        header = (tmp_path / "rates.csv").read_text().splitlines()[0]
        assert header == "variant,start,k,log10_error"

    @pytest.mark.parametrize("name", ["quadratic.json", "example46.json", "elqp.json",
                                      "nlp_sqp.json"])
    def test_report_matches_schema(self, name, tmp_path):
        run_config(name, tmp_path)
        report = json.loads((tmp_path / "report.json").read_text())
        jsonschema.validate(report, REPORT_SCHEMA)

    def test_deterministic_bytes(self, tmp_path):
        run_config("elqp.json", tmp_path / "a")
        run_config("elqp.json", tmp_path / "b")
        assert (tmp_path / "a" / "report.json").read_bytes() == \
            (tmp_path / "b" / "report.json").read_bytes()


class TestConfigValidation:
    def test_unknown_variant(self):
        with pytest.raises(ConfigInvalid, match="variant"):
            validate_config({"problem": {"kind": "SmoothC2", "Q": [[1]]},
                             "variants": [{"variant": "Quasi"}]})

    def test_nothing_to_do(self):
        with pytest.raises(ConfigInvalid):
            validate_config({"problem": {"kind": "SmoothC2", "Q": [[1]]}})

    def test_tilt_probe_needs_kappa(self):
        with pytest.raises(ConfigInvalid):
            validate_config({"problem": {"kind": "SmoothC2", "Q": [[1]]},
                             "probes": [{"type": "tilt"}]})

    def test_bad_json_reports_line(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text('{\n  "problem": {}\n  "variants": []\n}\n')
        with pytest.raises(ConfigInvalid, match="line 3"):
            load_config(path)

    def test_problem_file_relative_to_config(self, tmp_path):
        (tmp_path / "p.json").write_text(json.dumps({"kind": "SmoothC2", "Q": [[2.0]]}))
        (tmp_path / "c.json").write_text(json.dumps({
            "problem_file": "p.json", "starts": [[1.0]],
            "variants": [{"variant": "Coderivative"}]}))
        rep = run_experiment(load_config(tmp_path / "c.json"), outdir=tmp_path / "out")
        assert rep["runs"][0]["status"] == "Stationary"


class TestCompareSQP:
    def test_strongly_active(self):
        rec = compare_sqp_subproblems(nlp_1d(), [0.02], r=0.1)
        red, sqp = rec["reduced"], rec["sqp"]
        assert red["A_eq"] == [[1.0]] and red["strongly_active"] == [0]
        assert sqp["A_in"] == [[1.0]] and sqp["b_in"] == pytest.approx([-0.02])
        assert red["step"] == pytest.approx([-0.02], abs=1e-12)
        assert sqp["step"] == pytest.approx([-0.02], abs=1e-12)

    def test_inactive_drops_constraint(self):
        rec = compare_sqp_subproblems(nlp_1d(), [-0.5], r=0.1)
        red, sqp = rec["reduced"], rec["sqp"]
        assert red["point"] == pytest.approx([-0.25])
        assert red["A_eq"] == [] and red["A_in"] == []
        # the envelope is quadratic here, so the reduced step lands on its minimizer 1
        assert red["step"] == pytest.approx([1.5], abs=1e-10)
        # the linearized constraint keeps the SQP step inside x <= 0
        assert sqp["step"] == pytest.approx([0.5], abs=1e-10)

    def test_unconstrained_steps_coincide(self):
        inst = make_nlp(NLPData.quadratic(2, {"P": np.diag([1.0, 4.0]), "a": [1.0, -2.0]}))
        rec = compare_sqp_subproblems(inst, [0.3, 0.7], r=0.2)
        np.testing.assert_allclose(rec["reduced"]["step"], rec["sqp"]["step"], atol=1e-10)


class TestCommandLine:
    def test_run_exit_zero(self, tmp_path, capsys):
        assert main(["run", str(CONFIGS / "quadratic.json"), "--outdir", str(tmp_path)]) == 0
        assert "Stationary" in capsys.readouterr().out

    def test_probe_prints_json(self, capsys):
        assert main(["probe", str(CONFIGS / "quadratic.json"), "--seed", "3"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["probes"][0]["status"] == "ok"

    def test_compare_sqp(self, capsys):
        assert main(["compare-sqp", str(CONFIGS / "nlp_sqp.json")]) == 0
        assert "reduced" in json.loads(capsys.readouterr().out)

    def test_compare_sqp_requires_section(self, capsys):
        assert main(["compare-sqp", str(CONFIGS / "quadratic.json")]) == 2

    def test_invalid_config_exit_two(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"problem": {"kind": "SmoothC2", "Q": [[1]]},
                                    "variants": [{"variant": "Nope"}]}))
        assert main(["run", str(path), "--outdir", str(tmp_path)]) == 2
        assert "invalid config" in capsys.readouterr().err

    def test_runtime_error_exit_one(self, tmp_path, capsys):
        path = tmp_path / "nlp.json"
        cfg = json.loads((CONFIGS / "nlp_sqp.json").read_text())
        cfg["variants"] = [{"variant": "Coderivative"}]
        path.write_text(json.dumps(cfg))
        assert main(["run", str(path), "--outdir", str(tmp_path / "o")]) == 1

    @pytest.mark.skipif(shutil.which("tiltnewton") is None, reason="console script not installed")
    def test_console_script(self, tmp_path):
        proc = subprocess.run(["tiltnewton", "run", str(CONFIGS / "example46.json"),
                               "--outdir", str(tmp_path)], capture_output=True, text=True)
        assert proc.returncode == 0
        assert "oscillating" in proc.stdout
