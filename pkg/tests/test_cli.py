import csv
import json

import numpy as np
import pytest

from uotsd import InvalidInputError
from uotsd.cli import main
from uotsd.experiments import load_config, run_experiment, validate_config
from uotsd.solvers import TRACE_HEADER

VERIFY_MICRO = {"experiment": "verify", "n_instances": 2, "n_batches": 100,
                "draws_per_instance": 5, "pairs_per_instance": 3}


def _write_cfg(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


class TestConfigValidation:
    def test_unknown_experiment(self):
        with pytest.raises(InvalidInputError, match="experiment"):
            validate_config({"experiment": "warp_drive"})

    def test_unknown_top_key(self):
        with pytest.raises(InvalidInputError, match="unknown config key"):
            validate_config({"experiment": "verify", "n_instnaces": 3})

    @pytest.mark.parametrize("section,key", [
        ("params", "epsilonn"), ("solver", "step"), ("mixture", "sigma"),
    ])
    def test_unknown_nested_key(self, section, key):
        cfg = {"experiment": "pasgd_rate", section: {key: 1}}
        with pytest.raises(InvalidInputError, match=section):
            validate_config(cfg)

    def test_baselines_alias(self):
        cfg = validate_config({"experiment": "baselines"})
        assert cfg["experiment"] == "anag_scale"

    def test_load_config_bad_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(InvalidInputError, match="invalid JSON"):
            load_config(path)


class TestExitCodes:
    def test_missing_config_is_usage_error(self, tmp_path, capsys):
        assert main(["pasgd_rate", "--output", str(tmp_path)]) == 2
        assert "error:" in capsys.readouterr().err

    def test_bad_json_is_usage_error(self, tmp_path, capsys):
        path = tmp_path / "broken.json"
        path.write_text("{oops")
        assert main(["eps_sweep", "--config", str(path)]) == 2
        assert "invalid JSON" in capsys.readouterr().err

    def test_subcommand_mismatch(self, tmp_path, capsys):
        cfg = _write_cfg(tmp_path, {"experiment": "eps_sweep"})
        assert main(["anag_scale", "--config", cfg,
                     "--output", str(tmp_path)]) == 2
        assert "declares experiment" in capsys.readouterr().err

    def test_unknown_key_rejected(self, tmp_path, capsys):
        cfg = _write_cfg(tmp_path, {"experiment": "verify", "bogus": 1})
        assert main(["verify", "--config", cfg]) == 2
        assert "unknown config key" in capsys.readouterr().err


class TestVerifyCommand:
    def test_green_battery_exit_zero(self, tmp_path, capsys):
        cfg = _write_cfg(tmp_path, VERIFY_MICRO)
        out = tmp_path / "runs"
        assert main(["verify", "--config", cfg, "--output", str(out)]) == 0
        text = capsys.readouterr().out
        assert "all checks passed" in text
        assert "[FAIL]" not in text
        assert text.count("[PASS]") >= 10
        summary = json.loads((out / "verify" / "summary.json").read_text())
        assert summary["schema"] == 1
        assert summary["scale"] == "desk"
        assert summary["all_passed"] is True
        report = (out / "verify" / "seed0000" / "report.txt").read_text()
        assert report.count("[PASS]") == len(summary["checks"])

    def test_seed_override_names_run_dir(self, tmp_path):
        cfg = _write_cfg(tmp_path, VERIFY_MICRO)
        out = tmp_path / "runs"
        assert main(["verify", "--config", cfg, "--output", str(out),
                     "--seed", "5"]) == 0
        assert (out / "verify" / "seed0005" / "report.txt").exists()


ANAG_MICRO = {"experiment": "anag_scale", "sizes": [6], "dim": 2,
              "tol": 1e-6, "params": {"epsilon": 0.5, "rho1": 1.0, "rho2": 1.0},
              "methods": ["anag", "gd_adaptive"]}


class TestAnagScaleCommand:
    def test_baselines_alias_runs(self, tmp_path, capsys):
        cfg = _write_cfg(tmp_path, {**ANAG_MICRO, "experiment": "baselines"})
        out = tmp_path / "runs"
        assert main(["anag_scale", "--config", cfg, "--output", str(out)]) == 0
        assert "summary written under" in capsys.readouterr().out
        summary = json.loads((out / "anag_scale" / "summary.json").read_text())
        assert summary["experiment"] == "anag_scale"
        entry = summary["by_size"]["6"]
        assert entry["anag"]["converged"]
        assert entry["gd_adaptive"]["converged"]
        assert summary["anag_iteration_ratio"] == 1.0

    def test_trace_schema(self, tmp_path):
        cfg = _write_cfg(tmp_path, ANAG_MICRO)
        out = tmp_path / "runs"
        assert main(["anag_scale", "--config", cfg, "--output", str(out)]) == 0
        with open(out / "anag_scale" / "n6_anag" / "trace.csv") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = list(reader)
        assert ",".join(header) == TRACE_HEADER
        assert rows, "trace must not be empty"
        assert int(rows[-1][0]) >= 1


EPS_MICRO = {"experiment": "eps_sweep", "n_target": 8, "n_source_samples": 20,
             "seeds": [1], "eps_list": [0.5, 0.1],
             "mixture": {"modes": 2, "dim": 2},
             "solver": {"max_iters": 300, "batch_size": 4},
             "ground_truth_tol": 1e-9}


class TestEpsSweepCommand:
    def test_micro_run(self, tmp_path):
        cfg = _write_cfg(tmp_path, EPS_MICRO)
        out = tmp_path / "runs"
        assert main(["eps_sweep", "--config", cfg, "--output", str(out)]) == 0
        summary = json.loads((out / "eps_sweep" / "summary.json").read_text())
        assert set(summary["by_epsilon"]) == {"0.5", "0.1"}
        for entry in summary["by_epsilon"].values():
            assert entry["ground_truth_converged"]
            assert np.isfinite(entry["median_final_gap"])
        assert (out / "eps_sweep" / "eps0.5_seed0001" / "trace.csv").exists()

    def test_deterministic_summaries(self, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        run_experiment(dict(EPS_MICRO), out_a)
        run_experiment(dict(EPS_MICRO), out_b)
        sa = (out_a / "eps_sweep" / "summary.json").read_bytes()
        sb = (out_b / "eps_sweep" / "summary.json").read_bytes()
        assert sa == sb

    def test_traces_identical_up_to_wall_clock(self, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        run_experiment(dict(EPS_MICRO), out_a)
        run_experiment(dict(EPS_MICRO), out_b)
        rel = "eps_sweep/eps0.1_seed0001/trace.csv"
        for path_a, path_b in [(out_a / rel, out_b / rel)]:
            rows_a = list(csv.reader(open(path_a)))
            rows_b = list(csv.reader(open(path_b)))
            assert [r[:6] for r in rows_a] == [r[:6] for r in rows_b]


PASGD_MICRO = {"experiment": "pasgd_rate", "n_target": 10,
               "n_source_samples": 30, "seeds": [1, 2], "c_scales": [1.0],
               "mixture": {"modes": 2, "dim": 2},
               "solver": {"max_iters": 200, "batch_size": 4},
               "fit_window": [10, 200], "ground_truth_tol": 1e-9,
               "params": {"epsilon": 0.1}}


class TestPasgdRateCommand:
    def test_micro_run(self, tmp_path):
        cfg = _write_cfg(tmp_path, PASGD_MICRO)
        out = tmp_path / "runs"
        assert main(["pasgd_rate", "--config", cfg, "--output", str(out)]) == 0
        summary = json.loads((out / "pasgd_rate" / "summary.json").read_text())
        assert summary["ground_truth_converged"]
        scale = summary["by_scale"]["1"]
        assert np.isfinite(scale["slope_averaged_gap"])
        assert len(scale["checkpoints"]) == len(scale["mean_gap_curve"])
        assert (out / "pasgd_rate" / "c1_seed0002" / "summary.json").exists()

    def test_seed_flag_restricts_run(self, tmp_path):
        cfg = _write_cfg(tmp_path, PASGD_MICRO)
        out = tmp_path / "runs"
        assert main(["pasgd_rate", "--config", cfg, "--output", str(out),
                     "--seed", "3"]) == 0
        runs = {p.name for p in (out / "pasgd_rate").iterdir() if p.is_dir()}
        assert runs == {"c1_seed0003"}


def _tiny_image(path, base):
    from PIL import Image

    rng = np.random.default_rng(base)
    arr = rng.integers(0, 256, size=(4, 4, 3), dtype=np.uint8)
    Image.fromarray(arr, "RGB").save(path)


class TestColorTransferCommand:
    def test_micro_run(self, tmp_path):
        from PIL import Image

        src, dst = tmp_path / "src.png", tmp_path / "dst.png"
        _tiny_image(src, 1)
        _tiny_image(dst, 2)
        cfg = _write_cfg(tmp_path, {
            "experiment": "color_transfer", "source_image": str(src),
            "target_image": str(dst), "rhos": [0.5, 5.0],
            "max_iters": 300, "batch_size": 8,
            "params": {"epsilon": 0.01},
        })
        out = tmp_path / "runs"
        assert main(["color_transfer", "--config", cfg,
                     "--output", str(out)]) == 0
        summary = json.loads((out / "color_transfer" / "summary.json").read_text())
        assert set(summary["by_rho"]) == {"0.5", "5"}
        for entry in summary["by_rho"].values():
            img = Image.open(out / "color_transfer" /
                             entry["recolored"].split("/", 1)[1])
            assert img.size == (4, 4)
            assert img.mode == "RGB"
            assert 0.0 <= entry["mass_fraction"] <= 1.0 + 1e-9

    def test_missing_images_rejected(self, tmp_path, capsys):
        cfg = _write_cfg(tmp_path, {"experiment": "color_transfer"})
        assert main(["color_transfer", "--config", cfg,
                     "--output", str(tmp_path)]) == 2
        assert "source_image" in capsys.readouterr().err
