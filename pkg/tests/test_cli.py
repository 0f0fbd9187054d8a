"""End-to-end tests for the command-line layer: config, plots, commands."""

import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from bifurc import __version__
from bifurc.cli import main
from bifurc.config import (
    RunConfig,
    build_config,
    dump_config,
    env_overrides,
    load_preset,
)
from bifurc.errors import ConfigError
from bifurc.experiments import TrajectoryLog, write_trajectory_csv
from bifurc.gmm_probe import CriticalityReading
from bifurc.svgplot import line_chart
from bifurc.errors import ValidationError


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def tree_digest(root):
    """Name -> sha256 for every file under root (flat)."""
    out = {}
    for p in sorted(root.iterdir()):
        out[p.name] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out


class TestConfigLayer:
    def test_defaults_present(self):
        cfg = RunConfig()
        assert cfg.get_int("probe", "k") == 10
        assert cfg.get_float("probe", "lr_means") == 5e-3
        assert cfg.get_float("probe", "lr_logbeta") == 1e-2
        assert cfg.get_float("probe", "log_beta_init") == -2.5
        assert cfg.seeds() == [0]

    def test_unknown_key_is_named(self):
        with pytest.raises(ConfigError, match=r"probe\.not_a_key"):
            RunConfig({"probe": {"not_a_key": "3"}})

    def test_unknown_section_is_named(self):
        with pytest.raises(ConfigError, match=r"\[warp\]"):
            RunConfig({"warp": {"k": "3"}})

    def test_bad_value_names_key(self):
        cfg = RunConfig({"probe": {"k": "many"}})
        with pytest.raises(ConfigError, match=r"probe\.k"):
            cfg.get_int("probe", "k")

    def test_hash_ignores_run_section(self):
        a = RunConfig({"run": {"out": "x", "seeds": "0"}})
        b = RunConfig({"run": {"out": "y", "seeds": "4,5"}})
        c = RunConfig({"probe": {"k": "3"}})
        assert a.config_hash == b.config_hash
        assert a.config_hash != c.config_hash
        assert len(a.config_hash) == 12

    def test_env_overrides_parse_and_reject(self):
        assert env_overrides({"BIFURC_PROBE__LR_MEANS": "0.5"}) == {
            "probe": {"lr_means": "0.5"}
        }
        assert env_overrides({"HOME": "/root"}) == {}
        with pytest.raises(ConfigError):
            env_overrides({"BIFURC_NOSEPARATOR": "1"})

    def test_layer_precedence(self, tmp_path):
        ini = tmp_path / "run.ini"
        ini.write_text("[probe]\nk = 3\nlr_means = 0.11\n")
        cfg = build_config(
            overlay={"probe": {"k": "7", "lr_logbeta": "0.9"}},
            path=ini,
            environ={"BIFURC_PROBE__LR_MEANS": "0.22"},
            flags={"probe": {"k": "5"}},
        )
        assert cfg.get_int("probe", "k") == 5  # flag beats file beats overlay
        assert cfg.get_float("probe", "lr_means") == 0.22  # env beats file
        assert cfg.get_float("probe", "lr_logbeta") == 0.9  # overlay beats default

    def test_preset_bundled_and_unknown(self):
        sections = load_preset("appendix-d3")
        assert sections["sde"]["modes"] == "200"
        assert sections["run"]["seeds"] == "0,1,2,3,4"
        with pytest.raises(ConfigError, match="unknown preset"):
            load_preset("no-such-preset")

    def test_list_and_optional_accessors(self):
        cfg = RunConfig({"escape": {"gammas": "0.0, 1e-3"}, "sde": {"eps0": ""}})
        assert cfg.get_float_list("escape", "gammas") == [0.0, 1e-3]
        assert cfg.get_optional_float("sde", "eps0") is None
        with pytest.raises(ConfigError):
            cfg.get_choice("hessian", "source", {"nope"})

    def test_malformed_ini_rejected(self, tmp_path):
        bad = tmp_path / "bad.ini"
        bad.write_text("probe]\nk = 1\n")
        with pytest.raises(ConfigError, match="malformed"):
            build_config(path=bad)

    def test_dump_config_lists_sections(self):
        text = dump_config(RunConfig())
        assert "[probe]" in text and "lr_means = 5e-3" in text


class TestSvgPlot:
    def test_rejects_empty_and_mismatched(self, tmp_path):
        with pytest.raises(ValidationError):
            line_chart(tmp_path / "a.svg", [])
        with pytest.raises(ValidationError):
            line_chart(tmp_path / "b.svg", [("s", [1, 2], [1])])
        with pytest.raises(ValidationError):
            line_chart(tmp_path / "c.svg", [("s", [1.0], [float("nan")])])

    def test_writes_polyline_and_legend(self, tmp_path):
        p = tmp_path / "chart.svg"
        line_chart(
            p,
            [("alpha", [0, 1, 2], [0.0, 1.0, float("nan")]), ("dot", [5], [5.0])],
            title="t < check & escape",
            x_label="x",
            y_label="y",
        )
        text = p.read_text()
        assert "<polyline" in text and "<circle" in text
        assert "alpha" in text and "t &lt; check &amp; escape" in text

    def test_deterministic_bytes(self, tmp_path):
        a, b = tmp_path / "a.svg", tmp_path / "b.svg"
        series = [("s", [0.0, 1.0], [2.0, 3.0])]
        line_chart(a, series)
        line_chart(b, series)
        assert a.read_bytes() == b.read_bytes()


class TestExitCodes:
    def test_unknown_config_key_exits_2_naming_it(self, tmp_path, capsys):
        ini = tmp_path / "run.ini"
        ini.write_text("[probe]\nnot_a_key = 3\n")
        code = main(["toy", "bimodal", "--config", str(ini), "--out", str(tmp_path)])
        assert code == 2
        assert "probe.not_a_key" in capsys.readouterr().err

    def test_unknown_preset_exits_2(self, tmp_path, capsys):
        code = main(["sde", "coupled", "--preset", "ghost", "--out", str(tmp_path)])
        assert code == 2
        assert "ghost" in capsys.readouterr().err

    def test_missing_input_exits_4(self, tmp_path, capsys):
        code = main(["classify", "--input", "/nope/missing.csv", "--out", str(tmp_path)])
        assert code == 4

    def test_missing_columns_exit_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("step,foo\n1,2\n")
        code = main(["classify", "--input", str(bad), "--out", str(tmp_path)])
        assert code == 2
        assert "header" in capsys.readouterr().err

    def test_zero_seed_sweep_exits_2(self, tmp_path, capsys):
        code = main(["toy", "bimodal", "--seeds", "0", "--out", str(tmp_path)])
        assert code == 2

    def test_bad_subcommand_is_usage_error(self):
        with pytest.raises(SystemExit) as err:
            main(["toy", "spiral"])
        assert err.value.code == 2

    def test_module_entry_point_reports_version(self):
        proc = subprocess.run(
            [sys.executable, "-m", "bifurc", "--version"],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0
        assert proc.stdout.strip() == f"bifurc {__version__}"


class TestClassifyCommand:
    @pytest.mark.parametrize(
        "fixture,label",
        [
            ("exemplar_full_v.csv", "FullV"),
            ("exemplar_fold_back.csv", "FoldBack"),
            ("exemplar_no_arc.csv", "NoArc"),
        ],
    )
    def test_bundled_exemplars(self, tmp_path, capsys, fixture, label):
        code = main(["classify", "--input", fixture, "--out", str(tmp_path)])
        assert code == 0
        stdout_payload = json.loads(capsys.readouterr().out)
        assert stdout_payload["label"] == label
        file_payload = read_json(tmp_path / "classify.json")
        assert file_payload == stdout_payload
        assert file_payload["version"] == __version__
        assert len(file_payload["config_hash"]) == 12

    def test_constant_nc1_is_no_arc(self, tmp_path, capsys):
        log = TrajectoryLog("flat", 0)
        for i in range(40):
            r = -1.0 + 2.0 * i / 39
            log.append(
                CriticalityReading(
                    step=i, log_beta=r, log_beta_c=0.0, log_ratio=r,
                    nc1=10.0, order_parameter=1e-3,
                )
            )
        path = tmp_path / "flat.csv"
        write_trajectory_csv(log, path)
        code = main(["classify", "--input", str(path), "--out", str(tmp_path)])
        assert code == 0
        assert json.loads(capsys.readouterr().out)["label"] == "NoArc"


class TestEscapeCommands:
    def test_fit_reproduces_bundled_report(self, tmp_path, capsys):
        code = main(["escape", "fit", "--input", "table5.csv", "--out", str(tmp_path)])
        assert code == 0
        rep = read_json(tmp_path / "escape-fit.json")
        assert rep["delta_aic"] == pytest.approx(19.26, abs=0.1)
        assert rep["power_law"]["intercept"] == pytest.approx(9.11, abs=0.01)
        assert rep["power_law"]["slope"] == pytest.approx(-1.225, abs=0.005)
        assert rep["kramers"]["intercept"] == pytest.approx(11.65, abs=0.02)
        assert (tmp_path / "escape-fit.svg").exists()

    def test_sweep_gamma_zero_only_warns_and_exits_0(self, tmp_path, capsys):
        ini = tmp_path / "run.ini"
        ini.write_text("[escape]\ngammas = 0.0\nseeds_per_gamma = 2\n")
        code = main(["escape", "sweep", "--config", str(ini), "--out", str(tmp_path)])
        captured = capsys.readouterr()
        assert code == 0
        assert "censored" in captured.err
        payload = read_json(tmp_path / "escape-sweep.json")
        assert payload["fit"] is None
        assert payload["warning"] is not None
        assert payload["per_gamma"] == [
            {
                "gamma": 0.0,
                "tau_mean": None,
                "tau_std": None,
                "n_seeds": 2,
                "n_censored": 2,
            }
        ]
        first = (tmp_path / "escape-sweep.csv").read_text().splitlines()[0]
        assert "config=" in first and "version=" in first

    def test_fit_with_too_few_levels_exits_3(self, tmp_path, capsys):
        csv = tmp_path / "short.csv"
        csv.write_text(
            "gamma,tau_mean,tau_std,n_seeds,censored\n"
            "1e-4,100.0,1.0,3,0\n"
            "1e-3,10.0,1.0,3,0\n"
        )
        code = main(["escape", "fit", "--input", str(csv), "--out", str(tmp_path)])
        assert code == 3


class TestSdeCommands:
    def test_pitchfork_saturates(self, tmp_path):
        code = main(["sde", "pitchfork", "--out", str(tmp_path)])
        assert code == 0
        payload = read_json(tmp_path / "sde-pitchfork_summary.json")
        assert payload["saturation_amplitude"] == pytest.approx(1.0)
        assert abs(payload["per_seed"]["0"]["final_epsilon"]) == pytest.approx(
            1.0, abs=0.02
        )
        rows = (tmp_path / "sde-pitchfork_seed0.csv").read_text().splitlines()
        assert rows[0].startswith("# experiment=sde-pitchfork")
        assert rows[1] == "t,epsilon"
        assert float(rows[2].split(",")[1]) == pytest.approx(1e-3)

    def test_coupled_preset_five_seeds_persistence_band(self, tmp_path):
        code = main(
            ["sde", "coupled", "--preset", "appendix-d3", "--seeds", "5", "--out", str(tmp_path)]
        )
        assert code == 0
        payload = read_json(tmp_path / "sde-coupled_summary.json")
        assert payload["seeds"] == [0, 1, 2, 3, 4]
        assert 0.93 <= payload["mean_spearman_rho"] <= 0.97
        assert payload["min_spearman_rho"] > 0.90
        assert payload["prediction"]["expected_cosine"] > 0.5
        for seed in range(5):
            assert (tmp_path / f"sde-coupled_seed{seed}.csv").exists()


class TestToyCommands:
    def test_endogenous_crossing_is_finite(self, tmp_path):
        code = main(["toy", "endogenous", "--out", str(tmp_path)])
        assert code == 0
        payload = read_json(tmp_path / "toy-endogenous_summary.json")
        run = payload["per_seed"]["0"]
        assert isinstance(run["crossing_step"], int)
        assert run["activation_steps"]
        assert run["hypothesis_failures"] == []

    def test_reverse_tracking_error_within_four_percent(self, tmp_path):
        code = main(["toy", "reverse", "--out", str(tmp_path)])
        assert code == 0
        payload = read_json(tmp_path / "toy-reverse_summary.json")
        assert payload["reverse_tracking_error"] <= 0.04
        run = payload["per_seed"]["0"]
        assert 1.0 <= run["forward"]["overshoot_ratio"] <= 1.6
        assert run["reverse"]["branch_overlap"] <= 0.10
        assert (tmp_path / "toy-reverse_seed0_forward.csv").exists()
        assert (tmp_path / "toy-reverse_seed0_reverse.csv").exists()
        assert (tmp_path / "toy-reverse.svg").exists()

    def test_hierarchy_zero_sub_spacing_single_event(self, tmp_path):
        ini = tmp_path / "run.ini"
        ini.write_text("[data]\nsub_spacing = 0.0\n")
        code = main(["toy", "hierarchy", "--config", str(ini), "--out", str(tmp_path)])
        assert code == 0
        payload = read_json(tmp_path / "toy-hierarchy_summary.json")
        run = payload["per_seed"]["0"]
        assert len(run["events"]) == 1
        assert not run["second_stage_gate"]

    def test_identical_config_and_seed_byte_identical(self, tmp_path):
        ini = tmp_path / "run.ini"
        ini.write_text("[data]\nn = 300\n\n[experiment]\nsteps = 400\n")
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        for out in (out_a, out_b):
            assert main(
                ["toy", "unimodal", "--config", str(ini), "--seed", "3", "--out", str(out)]
            ) == 0
        assert tree_digest(out_a) == tree_digest(out_b)
        names = set(tree_digest(out_a))
        assert names == {
            "toy-unimodal_seed3.csv",
            "toy-unimodal_seed3.json",
            "toy-unimodal_summary.json",
            "toy-unimodal.svg",
        }

    def test_multi_seed_sweep_merges_in_seed_order(self, tmp_path):
        ini = tmp_path / "run.ini"
        ini.write_text("[data]\nn = 300\n\n[experiment]\nsteps = 400\n")
        code = main(
            ["toy", "unimodal", "--config", str(ini), "--seeds", "3", "--out", str(tmp_path / "o")]
        )
        assert code == 0
        payload = read_json(tmp_path / "o" / "toy-unimodal_summary.json")
        assert payload["seeds"] == [0, 1, 2]
        assert sorted(payload["per_seed"]) == ["0", "1", "2"]
        for seed in range(3):
            log_json = read_json(tmp_path / "o" / f"toy-unimodal_seed{seed}.json")
            assert log_json["seed"] == seed


class TestCalibrateHessian:
    def test_default_bimodal_routes_agree(self, tmp_path):
        code = main(["calibrate-hessian", "--out", str(tmp_path)])
        assert code == 0
        rep = read_json(tmp_path / "hessian_report.json")
        assert rep["crossing_gap"] <= 1e-4
        assert rep["finite_difference_gap"] <= 1e-4
        assert rep["max_abs_hessian_difference"] <= 1e-4
        assert (tmp_path / "hessian_scan.svg").exists()

    def test_identity_covariance_critical_precision_is_one(self, tmp_path, monkeypatch):
        monkeypatch.setenv("BIFURC_HESSIAN__SOURCE", "identity")
        code = main(["calibrate-hessian", "--out", str(tmp_path)])
        assert code == 0
        rep = read_json(tmp_path / "hessian_report.json")
        assert rep["beta_critical_analytic"] == 1.0
        assert round(rep["beta_critical_numeric"], 4) == 1.0
        assert rep["beta_critical_finite_difference"] is None
