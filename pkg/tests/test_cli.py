import os

import numpy as np
import pytest

from survtau.cli import (
    RESULT_COLUMNS,
    ExperimentConfig,
    ModelSettings,
    ResultRow,
    emit_report,
    load_csv_dataset,
    main,
    parse_config,
    run_experiment,
    write_dataset_csv,
)
from survtau.synthetic import ScenarioSpec, generate
from survtau.weighting import WeightScheme


def write_config(path, extra="", body=None):
    text = body if body is not None else (
        "scenario = 1\n"
        "setting = low_censoring\n"
        "n = 400\n"
        "test_n = 200\n"
        "schemes = none, c\n"
        "horizons = 0, 1\n"
        "seeds = 1\n"
        "nuisances = true\n"
        "second_stage.hidden = 8\n"
        "second_stage.epochs = 2\n"
        "second_stage.batch_size = 64\n"
        "second_stage.learning_rate = 0.1\n"
        "second_stage.val_fraction = 0.0\n"
        + extra)
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestParseConfig:
    def test_full_round_trip(self, tmp_path):
        path = write_config(tmp_path / "exp.cfg", extra=(
            "# a comment line\n"
            "\n"
            "rho_cap = 50\n"
            "clamp_negative_rho = yes\n"
            "crossfit_k = 3\n"
            "probe.n = 500\n"
            "probe.t = 2\n"
            "probe.epsilons = 0.02, 0.04\n"
            "probe.direction_seeds = 0, 7\n"
            "probe.schemes = none, plugin\n"))
        cfg = parse_config(path)
        assert cfg.scenario == 1
        assert cfg.setting == "low_censoring"
        assert cfg.schemes == (WeightScheme.NONE, WeightScheme.C)
        assert cfg.horizons == (0, 1)
        assert cfg.nuisances == "true"
        assert cfg.rho_cap == 50.0
        assert cfg.clamp_negative_rho is True
        assert cfg.crossfit_k == 3
        assert cfg.second_stage.hidden == (8,)
        assert cfg.second_stage.epochs == 2
        # untouched sections keep their defaults
        assert cfg.hazard.epochs == ExperimentConfig().hazard.epochs
        assert cfg.probe.n == 500
        assert cfg.probe.epsilons == (0.02, 0.04)
        assert cfg.probe.direction_seeds == (0, 7)
        assert cfg.probe.schemes == ("none", "plugin")

    def test_duplicate_key_rejected_with_line_number(self, tmp_path):
        path = write_config(tmp_path / "exp.cfg", extra="n = 500\n")
        with pytest.raises(ValueError, match="duplicate key 'n'"):
            parse_config(path)

    def test_unknown_key_rejected(self, tmp_path):
        path = write_config(tmp_path / "exp.cfg", extra="bogus = 1\n")
        with pytest.raises(ValueError, match="unknown config key 'bogus'"):
            parse_config(path)

    def test_unknown_section_and_field(self, tmp_path):
        path = write_config(tmp_path / "a.cfg", extra="optimizer.lr = 1\n")
        with pytest.raises(ValueError, match="unknown section 'optimizer'"):
            parse_config(path)
        path = write_config(tmp_path / "b.cfg", extra="hazard.momentum = 0.9\n")
        with pytest.raises(ValueError, match="unknown key 'momentum'"):
            parse_config(path)

    def test_line_without_assignment_rejected(self, tmp_path):
        path = write_config(tmp_path / "exp.cfg", body="just some words\n")
        with pytest.raises(ValueError, match="expected key = value"):
            parse_config(path)

    def test_bad_scheme_name_points_at_field(self, tmp_path):
        path = write_config(tmp_path / "exp.cfg", body="schemes = bogus\n")
        with pytest.raises(ValueError, match="schemes"):
            parse_config(path)

    def test_bad_boolean(self, tmp_path):
        path = write_config(tmp_path / "exp.cfg",
                            extra="clamp_negative_rho = maybe\n")
        with pytest.raises(ValueError, match="expected a boolean"):
            parse_config(path)


class TestConfigValidation:
    def test_rejects_bad_settings(self):
        cases = [
            (dict(nuisances="bootstrap"), "nuisances"),
            (dict(seeds=()), "seeds"),
            (dict(schemes=()), "schemes"),
            (dict(horizons=()), "horizons"),
            (dict(threads=0), "threads"),
            (dict(crossfit_k=1), "crossfit_k"),
            (dict(clip_eps=0.7), "clip_eps"),
            (dict(rho_guard=0.0), "rho_guard"),
            (dict(rho_cap=1e-4), "rho_cap"),
            (dict(data="x.csv"), "t_max"),
            (dict(data="x.csv", t_max=5, nuisances="true"), "nuisances"),
            (dict(setting="weird"), "setting"),
        ]
        for kw, key in cases:
            with pytest.raises(ValueError, match=key):
                ExperimentConfig(**kw).validated()


class TestDatasetCsv:
    def test_round_trip(self, tmp_path):
        d, _ = generate(ScenarioSpec(1, "full", 50, 3))
        path = str(tmp_path / "d.csv")
        write_dataset_csv(d, path)
        back = load_csv_dataset(path, t_max=d.t_max)
        np.testing.assert_array_equal(back.x, d.x)
        np.testing.assert_array_equal(back.a, d.a)
        np.testing.assert_array_equal(back.t_tilde, d.t_tilde)
        np.testing.assert_array_equal(back.delta_s, d.delta_s)
        np.testing.assert_array_equal(back.delta_g, d.delta_g)
        assert back.t_max == d.t_max

    def test_t_max_inferred_from_times(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("x0,a,t_tilde,delta_s,delta_g\n"
                        "0.1,1,2,1,0\n0.2,0,4,0,1\n", encoding="utf-8")
        d = load_csv_dataset(str(path))
        assert d.t_max == 4

    def test_malformed_inputs(self, tmp_path):
        empty = tmp_path / "empty.csv"
        empty.write_text("", encoding="utf-8")
        with pytest.raises(ValueError, match="empty file"):
            load_csv_dataset(str(empty))

        header_only = tmp_path / "h.csv"
        header_only.write_text("x0,a,t_tilde,delta_s,delta_g\n", encoding="utf-8")
        with pytest.raises(ValueError, match="empty dataset"):
            load_csv_dataset(str(header_only))

        bad_header = tmp_path / "bh.csv"
        bad_header.write_text("x0,arm,t,ds,dg\n0.1,1,2,1,0\n", encoding="utf-8")
        with pytest.raises(ValueError, match="malformed header"):
            load_csv_dataset(str(bad_header))

        short_row = tmp_path / "sr.csv"
        short_row.write_text("x0,a,t_tilde,delta_s,delta_g\n0.1,1,2\n",
                             encoding="utf-8")
        with pytest.raises(ValueError, match="sr.csv:2"):
            load_csv_dataset(str(short_row))

        bad_field = tmp_path / "bf.csv"
        bad_field.write_text("x0,a,t_tilde,delta_s,delta_g\n0.1,1,two,1,0\n",
                             encoding="utf-8")
        with pytest.raises(ValueError, match="bf.csv:2"):
            load_csv_dataset(str(bad_field))


def result_row(scheme, horizon, seed, pehe, setting="full"):
    return ResultRow(scheme=scheme, setting=setting, horizon=horizon, seed=seed,
                     pehe=pehe, theta_hat=0.0, n_guarded=0, n_negative_rho=0,
                     train_loss_final=0.1, val_loss_final=float("nan"))


class TestEmitReport:
    def test_csv_schema_and_summary_cell(self, tmp_path):
        rows = [result_row("none", 0, 1, 1e-4), result_row("none", 0, 2, 3e-4),
                result_row("c", 0, 1, 1e-4), result_row("c", 0, 2, 1e-4)]
        paths = emit_report(rows, str(tmp_path))
        with open(paths["results"], encoding="utf-8") as fh:
            header = fh.readline().strip()
        assert header == ",".join(RESULT_COLUMNS)
        with open(paths["summary"], encoding="utf-8") as fh:
            summary = fh.read()
        # mean 2e-4, population sd 1e-4, reported in 1e-4 units
        assert "| none | 2.00 ± 1.00 | 2.00 ± 1.00 |" in summary
        assert "| c | 1.00 ± 0.00 | 1.00 ± 0.00 |" in summary

    def test_rows_sorted_for_determinism(self, tmp_path):
        rows = [result_row("none", 1, 2, 2e-4), result_row("c", 0, 1, 1e-4),
                result_row("none", 0, 1, 3e-4)]
        paths = emit_report(rows, str(tmp_path))
        with open(paths["results"], encoding="utf-8") as fh:
            schemes = [line.split(",")[0] for line in fh.readlines()[1:]]
        assert schemes == ["c", "none", "none"]

    def test_ratio_file_needs_a_baseline_and_a_rival(self, tmp_path):
        only_base = [result_row("none", 0, 1, 1e-4)]
        assert "ratios" not in emit_report(only_base, str(tmp_path / "a"))
        both = [result_row("none", 0, 1, 2e-4), result_row("c", 0, 1, 1e-4)]
        paths = emit_report(both, str(tmp_path / "b"))
        with open(paths["ratios"], encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        assert lines[0] == "setting,scheme,horizon,ratio"
        assert lines[1] == "full,c,0,0.5"

    def test_nan_pehe_renders_as_na_and_skips_ratios(self, tmp_path):
        rows = [result_row("none", 0, 1, float("nan")),
                result_row("c", 0, 1, float("nan"))]
        paths = emit_report(rows, str(tmp_path))
        with open(paths["summary"], encoding="utf-8") as fh:
            assert "n/a" in fh.read()
        with open(paths["ratios"], encoding="utf-8") as fh:
            assert fh.read().splitlines() == ["setting,scheme,horizon,ratio"]


def tiny_run_config(out_dir, seeds=(1,)):
    return ExperimentConfig(
        scenario=1, setting="low_censoring", n=400, test_n=200,
        schemes=(WeightScheme.NONE, WeightScheme.C), horizons=(0, 1),
        seeds=seeds, nuisances="true",
        second_stage=ModelSettings(hidden=(8,), epochs=2, batch_size=64,
                                   learning_rate=0.1, dropout=0.0,
                                   val_fraction=0.0),
        out_dir=out_dir)


class TestRunExperiment:
    def test_smoke_and_determinism(self, tmp_path):
        rows_a, paths_a = run_experiment(tiny_run_config(str(tmp_path / "a")))
        rows_b, paths_b = run_experiment(tiny_run_config(str(tmp_path / "b")))
        assert len(rows_a) == 4  # 2 schemes x 2 horizons x 1 seed
        with open(paths_a["results"], "rb") as fh:
            bytes_a = fh.read()
        with open(paths_b["results"], "rb") as fh:
            bytes_b = fh.read()
        assert bytes_a == bytes_b
        assert all(np.isfinite(r.pehe) for r in rows_a)

    def test_thread_count_does_not_change_bytes(self, tmp_path):
        cfg1 = tiny_run_config(str(tmp_path / "one"), seeds=(1, 2))
        cfg2 = dataclasses_replace_threads(tiny_run_config(str(tmp_path / "two"),
                                                           seeds=(1, 2)), 2)
        _, paths1 = run_experiment(cfg1)
        _, paths2 = run_experiment(cfg2)
        for name in ("results", "summary", "ratios"):
            with open(paths1[name], "rb") as fh:
                one = fh.read()
            with open(paths2[name], "rb") as fh:
                two = fh.read()
            assert one == two, name

    def test_horizon_outside_grid_rejected(self, tmp_path):
        cfg = tiny_run_config(str(tmp_path))
        cfg = type(cfg)(**{**cfg.__dict__, "horizons": (0, 9)})
        with pytest.raises(ValueError, match="horizons"):
            run_experiment(cfg)


def dataclasses_replace_threads(cfg, threads):
    import dataclasses
    return dataclasses.replace(cfg, threads=threads)


class TestMain:
    def test_gen_then_validate(self, tmp_path, capsys):
        out = str(tmp_path / "d.csv")
        assert main(["gen", "--scenario", "1", "--setting", "full",
                     "--n", "30", "--seed", "5", "--out", out]) == 0
        assert main(["validate", "--data", out]) == 0
        assert "ok: 30 rows" in capsys.readouterr().out

    def test_validate_flags_bad_rows(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("x0,a,t_tilde,delta_s,delta_g\n0.1,2,1,1,0\n",
                        encoding="utf-8")
        assert main(["validate", "--data", str(path)]) == 1
        assert "invalid" in capsys.readouterr().out

    def test_run_subcommand_with_overrides(self, tmp_path, capsys):
        cfg_path = write_config(tmp_path / "exp.cfg")
        out = str(tmp_path / "results")
        assert main(["run", "--config", cfg_path, "--out", out,
                     "--threads", "1"]) == 0
        assert os.path.exists(os.path.join(out, "results.csv"))
        assert "result rows" in capsys.readouterr().out

    def test_probe_meanzero_writes_report(self, tmp_path, capsys):
        cfg_path = write_config(tmp_path / "exp.cfg", extra=(
            "probe.n = 2000\nprobe.t = 2\nprobe.bins = 4\n"))
        out = str(tmp_path / "probe")
        assert main(["probe", "--kind", "meanzero", "--config", cfg_path,
                     "--out", out]) == 0
        assert os.path.exists(os.path.join(out, "probe_meanzero.txt"))
        assert "max |z|" in capsys.readouterr().out

    def test_probe_ortho_writes_csv(self, tmp_path, capsys):
        cfg_path = write_config(tmp_path / "exp.cfg", extra=(
            "probe.n = 300\nprobe.t = 2\nprobe.direction_seeds = 0\n"
            "probe.schemes = none, plugin\n"))
        out = str(tmp_path / "probe")
        assert main(["probe", "--kind", "ortho", "--config", cfg_path,
                     "--out", out]) == 0
        path = os.path.join(out, "probe_ortho.csv")
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        assert lines[0] == "scheme,t,direction_seed,slope"
        assert len(lines) == 3
        assert lines[1].startswith("none,2,0,")
        assert lines[2].startswith("plugin,2,0,")

    def test_errors_exit_with_code_two(self, tmp_path, capsys):
        cfg_path = write_config(tmp_path / "exp.cfg", extra="bogus = 1\n")
        assert main(["run", "--config", cfg_path]) == 2
        assert "error:" in capsys.readouterr().err
        assert main(["run", "--config", str(tmp_path / "missing.cfg")]) == 2
