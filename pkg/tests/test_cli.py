"""End-to-end checks of the sgdflow command line."""

import json
import os
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

import sgdflow
from sgdflow import read_csv_columns
from sgdflow.cli import (ANALYSIS_NAMES, CONFIG_SCHEMA, ConfigError,
                         load_config, main, parse_config)

CONFIGS = Path(sgdflow.__file__).parent / "configs"


def tiny_config(output_dir, **overrides):
    """A fast five-analysis config; overrides patch top-level sections."""
    cfg = {
        "generator": {
            "regime": "empirical",
            "n": 20,
            "d": 5,
            "spectrum": {"kind": "power_law", "exponent": 1.0},
            "noise": {"kind": "additive", "sigma_sq": 0.25},
            "seed": 5,
        },
        "gamma": {"fraction_of_stability": 0.3},
        "theta0": {"kind": "unit_offset", "scale": 2.0, "seed": 11},
        "plan": {
            "dynamics": "sde_empirical",
            "t_end": 5.0,
            "dt": 0.05,
            "ensemble_size": 32,
            "seed": 9,
            "save_points": 20,
            "time_averages": True,
        },
        "analyses": [
            {"name": "w2", "projections": 32},
            {"name": "localization"},
            {"name": "ergodic"},
            {"name": "tails"},
            {"name": "quartic", "probes": 200},
        ],
        "output_dir": str(output_dir),
    }
    cfg.update(overrides)
    return cfg


def write_config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg, indent=2))
    return path


class TestConfigValidation:
    def test_bundled_configs_parse(self):
        fig1 = load_config(CONFIGS / "fig1.json")
        assert fig1.regime == "empirical"
        assert [name for name, _ in fig1.analyses] == ["parametric",
                                                       "nonparametric"]
        assert fig1.t_end_mode == "over_mu_effective"
        fig3 = load_config(CONFIGS / "fig3.json")
        assert fig3.time_averages
        assert [name for name, _ in fig3.analyses] == ["localization",
                                                       "ergodic", "decay"]

    def test_every_problem_is_reported_with_its_path(self, tmp_path):
        cfg = tiny_config(tmp_path / "out")
        cfg["generator"]["n"] = 0
        cfg["generator"]["regime"] = "imperial"
        cfg["gamma"] = {"value": 0.1, "fraction_of_stability": 0.3}
        cfg["plan"]["t_end"] = -1
        cfg["extra"] = True
        with pytest.raises(ConfigError) as err:
            parse_config(cfg)
        joined = "\n".join(err.value.errors)
        for needle in ("$.generator.n", "$.generator.regime", "$.gamma",
                       "$.plan.t_end", "$.extra"):
            assert needle in joined

    def test_unknown_analysis_params_rejected(self, tmp_path):
        cfg = tiny_config(tmp_path / "out",
                          analyses=[{"name": "parametric", "probes": 5}])
        with pytest.raises(ConfigError, match=r"analyses\[0\]"):
            parse_config(cfg)

    def test_explicit_spectrum_length_must_match_d(self, tmp_path):
        cfg = tiny_config(tmp_path / "out")
        cfg["generator"]["spectrum"] = {"kind": "explicit", "values": [1.0, 0.5]}
        with pytest.raises(ConfigError, match="does not match d=5"):
            parse_config(cfg)

    def test_ergodic_requires_time_averages(self, tmp_path):
        cfg = tiny_config(tmp_path / "out")
        cfg["plan"]["time_averages"] = False
        with pytest.raises(ConfigError, match="time_averages"):
            parse_config(cfg)

    def test_tails_needs_an_empirical_generator(self, tmp_path):
        cfg = tiny_config(tmp_path / "out",
                          analyses=[{"name": "tails"}])
        cfg["generator"]["regime"] = "population"
        cfg["plan"]["dynamics"] = "sde_population"
        with pytest.raises(ConfigError, match="tails needs an empirical"):
            parse_config(cfg)

    def test_quartic_needs_twice_as_many_rows_as_columns(self, tmp_path):
        cfg = tiny_config(tmp_path / "out",
                          analyses=[{"name": "quartic"}])
        cfg["generator"]["n"] = 9
        with pytest.raises(ConfigError, match="n >= 2d"):
            parse_config(cfg)

    def test_effective_horizon_needs_constant_schedule(self, tmp_path):
        cfg = tiny_config(tmp_path / "out", analyses=[])
        cfg["plan"]["t_end"] = {"over_mu_effective": 10.0}
        cfg["schedule"] = {"kind": "polynomial_decay", "alpha": 2.0}
        with pytest.raises(ConfigError, match="constant schedule"):
            parse_config(cfg)

    def test_constant_bounds_reject_decaying_schedule(self, tmp_path):
        cfg = tiny_config(tmp_path / "out",
                          analyses=[{"name": "parametric"}])
        cfg["schedule"] = {"kind": "polynomial_decay", "alpha": 2.0}
        with pytest.raises(ConfigError, match="decay instead"):
            parse_config(cfg)

    def test_save_points_and_stride_conflict(self, tmp_path):
        cfg = tiny_config(tmp_path / "out")
        cfg["plan"]["save_stride"] = 10
        with pytest.raises(ConfigError, match="mutually exclusive"):
            parse_config(cfg)

    def test_unreadable_or_broken_files(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "nope.json")
        broken = tmp_path / "broken.json"
        broken.write_text("{\"generator\": ")
        with pytest.raises(ConfigError, match="invalid JSON"):
            load_config(broken)

    def test_schema_agrees_with_the_validator(self):
        props = CONFIG_SCHEMA["properties"]
        assert set(CONFIG_SCHEMA["required"]) == {"generator", "gamma", "plan",
                                                  "analyses", "output_dir"}
        assert set(props) == {"generator", "gamma", "theta0", "plan",
                              "schedule", "analyses", "output_dir"}
        names = props["analyses"]["items"]["properties"]["name"]["enum"]
        assert tuple(names) == ANALYSIS_NAMES


class TestRunCommand:
    def test_tiny_run_writes_everything(self, tmp_path):
        out = tmp_path / "out"
        path = write_config(tmp_path, tiny_config(out))
        assert main(["run", str(path)]) == 0
        expected = {"trajectory.csv", "ta_trajectory.csv", "w2.csv",
                    "localization.csv", "ergodic.csv", "tails.csv",
                    "quartic.csv", "plot.py", "summary.json"}
        assert {p.name for p in out.iterdir()} == expected
        doc = json.loads((out / "summary.json").read_text())
        assert doc["total_violations"] == 0
        assert sorted(doc["artifacts"]) == sorted(expected)
        assert doc["instance"]["n"] == 20
        assert doc["analyses"]["quartic"]["c_hat"] > 0
        cols = read_csv_columns(out / "trajectory.csv")
        assert cols["t"][0] == 0.0
        assert np.all(np.diff(cols["t"]) > 0)

    def test_rerun_reproduces_csv_bytes(self, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        path_a = write_config(tmp_path, tiny_config(out_a), "a.json")
        path_b = write_config(tmp_path, tiny_config(out_b), "b.json")
        assert main(["run", str(path_a)]) == 0
        assert main(["run", str(path_b)]) == 0
        for name in ("trajectory.csv", "ta_trajectory.csv", "w2.csv",
                     "localization.csv", "ergodic.csv", "tails.csv",
                     "quartic.csv", "plot.py"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    def test_bound_violations_exit_two(self, tmp_path):
        out = tmp_path / "out"
        cfg = tiny_config(out, analyses=[{"name": "parametric"}])
        cfg["plan"]["t_end"] = 60.0
        cfg["plan"]["time_averages"] = False
        cfg["plan"]["ensemble_size"] = 64
        cfg["plan"]["save_points"] = 30
        path = write_config(tmp_path, cfg)
        assert main(["run", str(path)]) == 2
        doc = json.loads((out / "summary.json").read_text())
        assert doc["total_violations"] >= 1
        assert doc["analyses"]["parametric"]["violations"] >= 1

    def test_config_errors_exit_one_with_diagnostics(self, tmp_path, capsys):
        cfg = tiny_config(tmp_path / "out")
        cfg["gamma"] = {}
        path = write_config(tmp_path, cfg)
        assert main(["run", str(path)]) == 1
        err = capsys.readouterr().err
        assert "config error at $.gamma" in err

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_runtime_errors_exit_one(self, tmp_path, capsys):
        cfg = tiny_config(tmp_path / "out",
                          analyses=[{"name": "localization"}])
        cfg["gamma"] = {"fraction_of_stability": 3.5}
        cfg["plan"]["t_end"] = 1.0
        cfg["plan"]["ensemble_size"] = 8
        cfg["plan"]["time_averages"] = False
        path = write_config(tmp_path, cfg)
        assert main(["run", str(path)]) == 1
        assert "error:" in capsys.readouterr().err

    def test_empty_analyses_report_only_the_trajectory(self, tmp_path):
        out = tmp_path / "deep" / "er" / "out"
        cfg = tiny_config(out, analyses=[])
        cfg["plan"]["time_averages"] = False
        path = write_config(tmp_path, cfg)
        assert main(["run", str(path)]) == 0
        assert {p.name for p in out.iterdir()} == {"trajectory.csv", "plot.py",
                                                   "summary.json"}

    def test_usage_errors_exit_one(self, tmp_path):
        assert main([]) == 1
        assert main(["frobnicate"]) == 1
        path = write_config(tmp_path, tiny_config(tmp_path / "out"))
        assert main(["verify", str(path), "--only", "x"]) == 1

    def test_help_exits_zero(self):
        assert main(["--help"]) == 0


class TestVerifyCommand:
    def test_subset_verdicts_written(self, tmp_path):
        out = tmp_path / "out"
        path = write_config(tmp_path, tiny_config(out))
        assert main(["verify", str(path), "--only", "12"]) == 0
        doc = json.loads((out / "verdicts.json").read_text())
        assert doc["tamper"] == 1.0
        assert doc["all_passed"] is True
        assert [c["number"] for c in doc["criteria"]] == [12]
        assert doc["criteria"][0]["passed"] is True

    def test_tampered_bounds_fail(self, tmp_path):
        out = tmp_path / "out"
        path = write_config(tmp_path, tiny_config(out))
        assert main(["verify", str(path), "--tamper", "0.5",
                     "--only", "13"]) == 2
        doc = json.loads((out / "verdicts.json").read_text())
        assert doc["tamper"] == 0.5
        assert doc["all_passed"] is False


class TestSchemaCommand:
    def test_schema_prints_valid_json(self, capsys):
        assert main(["schema"]) == 0
        doc = json.loads(capsys.readouterr().out)
        names = doc["properties"]["analyses"]["items"]["properties"]["name"]["enum"]
        assert tuple(names) == ANALYSIS_NAMES

    def test_console_script_installed(self):
        exe = shutil.which("sgdflow")
        assert exe, "console script not on PATH"
        proc = subprocess.run([exe, "schema"], capture_output=True, text=True)
        assert proc.returncode == 0
        assert json.loads(proc.stdout)["title"] == "sgdflow experiment config"


def run_bundled(name, cwd):
    env = dict(os.environ, SGDFLOW_THREADS="1")
    return subprocess.run(
        [sys.executable, "-m", "sgdflow.cli", "run", str(CONFIGS / name)],
        cwd=cwd, env=env, capture_output=True, text=True)


class TestBundledFigures:
    def test_fig1_noiseless_run(self, tmp_path):
        proc = run_bundled("fig1.json", tmp_path)
        assert proc.returncode == 0, proc.stderr
        out = tmp_path / "out" / "fig1"
        doc = json.loads((out / "summary.json").read_text())
        assert doc["total_violations"] == 0
        assert set(doc["analyses"]) == {"parametric", "nonparametric"}
        cols = read_csv_columns(out / "trajectory.csv")
        assert cols["value"][-1] < 1e-6 * cols["value"][0]

    def test_fig3_variance_reduction_story(self, tmp_path):
        proc = run_bundled("fig3.json", tmp_path)
        assert proc.returncode == 0, proc.stderr
        out = tmp_path / "out" / "fig3"
        doc = json.loads((out / "summary.json").read_text())
        assert doc["total_violations"] == 0

        def late_quarter_ratio(name, col):
            v = read_csv_columns(out / name)[col]
            tail = v[3 * v.size // 4:]
            return tail[-1] / tail[0]

        # Constant-step curve plateaus; averaging and decay keep improving.
        assert late_quarter_ratio("trajectory.csv", "value") > 0.5
        assert late_quarter_ratio("ta_trajectory.csv", "value") < 0.3
        assert late_quarter_ratio("decay.csv", "empirical") < 0.3
