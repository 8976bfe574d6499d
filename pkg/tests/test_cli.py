import csv
import io
import json

import pytest

from lineshape_memory import cli
from lineshape_memory.cli import (
    COMPARE_COLUMNS,
    EXIT_CONFIG,
    EXIT_NUMERICAL,
    EXIT_OK,
    ConfigError,
    ExperimentConfig,
    main,
    resolve_jobs,
    run_experiment,
)

FIG2 = {
    "experiment": "fig2_susceptibility",
    "seed": 0,
    "fast": True,
    "grids": {"gamma_i": 50.0, "omega_c": 10.0, "lineshapes": ["rectangular", "gaussian", "lorentzian"],
              "n_points": 401},
}


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


class TestConfig:
    def test_valid(self):
        cfg = ExperimentConfig.from_dict(FIG2)
        assert cfg.experiment == "fig2_susceptibility" and cfg.fast

    def test_missing_required_names_path(self):
        bad = {**FIG2, "grids": {"gamma_i": 50.0, "lineshapes": ["gaussian"]}}
        with pytest.raises(ConfigError, match=r"\$\.grids"):
            ExperimentConfig.from_dict(bad)

    def test_wrong_type_names_field(self):
        bad = {**FIG2, "grids": {**FIG2["grids"], "gamma_i": -1.0}}
        with pytest.raises(ConfigError, match=r"\$\.grids\.gamma_i"):
            ExperimentConfig.from_dict(bad)

    def test_unknown_experiment(self):
        with pytest.raises(ConfigError, match=r"\$\.experiment"):
            ExperimentConfig.from_dict({**FIG2, "experiment": "fig9"})

    def test_bad_start_pattern(self):
        cfg = {"experiment": "lineshape_opt",
               "grids": {"d": 5, "tau_gamma": 1, "theta": 8.6, "delay": -0.25, "duration": 1.25,
                         "starts": ["triangle"]}}
        with pytest.raises(ConfigError, match=r"starts\[0\]"):
            ExperimentConfig.from_dict(cfg)

    def test_spline_span_accepted(self):
        cfg = {"experiment": "lineshape_opt",
               "grids": {"d": 5, "tau_gamma": 1, "theta": 8.6, "delay": -0.25, "duration": 1.25,
                         "starts": ["random2"], "spline_span": 3.0}}
        assert ExperimentConfig.from_dict(cfg).grids["spline_span"] == 3.0
        with pytest.raises(ConfigError, match="spline_span"):
            ExperimentConfig.from_dict({**cfg, "grids": {**cfg["grids"], "spline_span": 0}})

    def test_spline_span_flag(self):
        args = cli.build_parser().parse_args(["lineshape-opt", "--fast", "--spline-span", "3"])
        assert args.spline_span == 3.0 and args.fast

    def test_demo_configs_validate(self):
        from pathlib import Path

        configs = sorted((Path(__file__).parents[1] / "demos" / "configs").glob("*.json"))
        assert len(configs) == 5
        assert {ExperimentConfig.load(c).experiment for c in configs} == set(cli.EXPERIMENTS)

    def test_digest_stable(self):
        assert ExperimentConfig.from_dict(FIG2).digest() == ExperimentConfig.from_dict(dict(FIG2)).digest()

    def test_unreadable_file(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text("{not json")
        assert main(["run", str(path)]) == EXIT_CONFIG


class TestJobs:
    def test_flag(self, monkeypatch):
        monkeypatch.delenv("LML_JOBS", raising=False)
        assert resolve_jobs(None) == 1 and resolve_jobs(3) == 3

    def test_env_overrides_flag(self, monkeypatch):
        monkeypatch.setenv("LML_JOBS", "2")
        assert resolve_jobs(4) == 2

    def test_bad_env(self, monkeypatch):
        monkeypatch.setenv("LML_JOBS", "many")
        with pytest.raises(ConfigError):
            resolve_jobs(None)


class TestSubcommands:
    def test_afc(self, capsys):
        assert main(["afc", "--d", "5", "--optimize"]) == EXIT_OK
        out = json.loads(capsys.readouterr().out)
        assert set(out) >= {"d", "finesse", "d_eff", "eta"}
        assert 0 < out["eta"] < 1

    def test_afc_conflicting_flags(self):
        assert main(["afc", "--d", "5", "--finesse", "3", "--optimize"]) == EXIT_CONFIG

    def test_missing_required_flag(self):
        assert main(["afc"]) == EXIT_CONFIG

    def test_unknown_subcommand(self):
        assert main(["teleport"]) == EXIT_CONFIG

    def test_susceptibility_columns(self, capsys):
        assert main(["susceptibility", "--lineshape", "gaussian", "--grid-points", "201"]) == EXIT_OK
        rows = _rows(capsys.readouterr().out)
        assert list(rows[0]) == ["delta", "re_chi", "im_chi", "im_chi_normalized", "group_metric"]
        assert len(rows) == 201

    def test_unknown_lineshape(self):
        assert main(["susceptibility", "--lineshape", "triangle"]) == EXIT_CONFIG

    def test_simulate_summary_and_trace(self, capsys, tmp_path):
        trace = tmp_path / "t.csv"
        assert main(["simulate", "--d", "5", "--tau-gamma", "1", "--trace", str(trace)]) == EXIT_OK
        out = json.loads(capsys.readouterr().out)
        assert out["efficiency"] == pytest.approx(0.8194, abs=2e-3)
        assert 0 <= out["leakage"] < 0.1 and 0.8 < out["stored_norm"] <= 1
        rows = _rows(trace.read_text())
        assert list(rows[0]) == cli.TRACE_COLUMNS
        assert {r["phase"] for r in rows} == {"storage", "retrieval"}

    def test_simulate_bad_grid(self):
        assert main(["simulate", "--nz", "0"]) == EXIT_CONFIG


@pytest.mark.slow
class TestCompare:
    def test_columns_and_per_tau_scaling(self, capsys):
        argv = ["compare", "--d", "5", "--tau-gamma", "4", "--max-power", "2", "--power-per-tau",
                "--power-convention", "peak", "--restarts", "0"]
        assert main(argv) == EXIT_OK
        rows = _rows(capsys.readouterr().out)
        assert list(rows[0]) == COMPARE_COLUMNS
        assert float(rows[0]["max_power"]) == pytest.approx(0.5)
        assert rows[0]["winner"] in {"EIT", "AFC"}


class TestRunExperiment:
    def test_fig2_outputs_and_manifest(self, tmp_path):
        cfg = ExperimentConfig.from_dict({**FIG2, "output_dir": str(tmp_path)})
        manifest = run_experiment(cfg)
        assert not manifest.failed
        names = {f"susceptibility_{n}.csv" for n in FIG2["grids"]["lineshapes"]} | {"eit_metrics.json"}
        assert set(manifest.outputs) == names
        on_disk = json.loads((tmp_path / "manifest.json").read_text())
        assert on_disk["inputs_sha256"] == cfg.digest()
        assert "numpy" in on_disk["versions"]

    def test_byte_identical_reruns(self, tmp_path):
        a = run_experiment(ExperimentConfig.from_dict({**FIG2, "output_dir": str(tmp_path / "a")}))
        b = run_experiment(ExperimentConfig.from_dict({**FIG2, "output_dir": str(tmp_path / "b")}))
        assert a.outputs == b.outputs
        for name in a.outputs:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_partial_failure_keeps_completed_cells(self, tmp_path, monkeypatch):
        real = cli.compute_curve

        def flaky(ls, *args, **kwargs):
            if ls.kind.value.lower() == "gaussian":
                raise ArithmeticError("injected")
            return real(ls, *args, **kwargs)

        monkeypatch.setattr(cli, "compute_curve", flaky)
        cfg = ExperimentConfig.from_dict({**FIG2, "output_dir": str(tmp_path)})
        manifest = run_experiment(cfg)
        assert [c["cell"] for c in manifest.failed] == ["gaussian"]
        assert "injected" in manifest.failed[0]["error"]
        assert (tmp_path / "susceptibility_rectangular.csv").exists()
        assert (tmp_path / "susceptibility_lorentzian.csv").exists()

    def test_run_exit_code_on_failure(self, tmp_path, monkeypatch):
        monkeypatch.setattr(cli, "compute_curve", lambda *a, **k: (_ for _ in ()).throw(ArithmeticError("x")))
        path = tmp_path / "c.json"
        path.write_text(json.dumps({**FIG2, "output_dir": str(tmp_path / "out")}))
        assert main(["run", str(path)]) == EXIT_NUMERICAL

    def test_sweep_rejects_other_experiments(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps(FIG2))
        assert main(["sweep", str(path)]) == EXIT_CONFIG


@pytest.mark.slow
def test_fast_and_full_presets_agree_on_winners():
    from lineshape_memory.optimizer import OptimizerConfig

    kw = dict(power_per_tau=True, convention="peak")
    fast = cli.compare_eit_afc(5.0, [4.0], [1.0, 8.0], config=OptimizerConfig(restarts=1), **kw)
    full = cli.compare_eit_afc(5.0, [4.0], [1.0, 8.0], config=OptimizerConfig(restarts=3), **kw)
    assert [r["winner"] for r in fast] == [r["winner"] for r in full] == ["AFC", "EIT"]
