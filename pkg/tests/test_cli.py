"""Config validation, experiment orchestration, and CLI surfaces."""

import csv
import json

import numpy as np
import pytest

from gossipquant.cli import bits_to_target, main
from gossipquant.config import materialize, parse_config
from gossipquant.engine import MetricsLog
from gossipquant.errors import ConfigError


def write_config(tmp_path, overrides=None, **top):
    cfg = {
        "name": "t",
        "seed": 3,
        "nodes": 4,
        "rounds": 4,
        "dataset": {"kind": "synthetic", "n": 80, "p": 4, "classes": 2, "separation": 3.0},
        "quantizer": {"kind": "lloyd_max", "s": 8},
    }
    cfg.update(top)
    if overrides:
        cfg.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


class TestParseConfig:
    def test_minimal_defaults(self, tmp_path):
        path = tmp_path / "min.json"
        path.write_text(json.dumps({"dataset": {"kind": "synthetic", "n": 40, "p": 2, "classes": 2}}))
        spec = parse_config(path)
        assert spec.tau == 4
        assert spec.eta == 0.001
        assert spec.batch_size == 32
        assert spec.topology["kind"] == "ring"
        assert len(spec.arms) == 1 and spec.arms[0].name == "default"

    def test_idx_dataset_default_eta(self, tmp_path):
        path = tmp_path / "idx.json"
        path.write_text(json.dumps({"dataset": {"kind": "idx", "images": "a", "labels": "b"}}))
        assert parse_config(path).eta == 0.002

    def test_unknown_key_named(self, tmp_path):
        path = write_config(tmp_path, {"learnig_rate": 0.1})
        with pytest.raises(ConfigError, match="learnig_rate"):
            parse_config(path)

    def test_nested_unknown_key_named(self, tmp_path):
        path = write_config(tmp_path, {"quantizer": {"kind": "qsgd", "levels": 4}})
        with pytest.raises(ConfigError, match="levels"):
            parse_config(path)

    def test_tau_constraint_message(self, tmp_path):
        path = write_config(tmp_path, {"tau": 0})
        with pytest.raises(ConfigError, match="tau >= 1"):
            parse_config(path)

    def test_type_mismatch_named(self, tmp_path):
        path = write_config(tmp_path, {"rounds": "ten"})
        with pytest.raises(ConfigError, match="rounds"):
            parse_config(path)

    def test_duplicate_arm_names_rejected(self, tmp_path):
        path = write_config(tmp_path, {"arms": [{"name": "a"}, {"name": "a"}]})
        with pytest.raises(ConfigError, match="unique"):
            parse_config(path)

    def test_output_dir_env_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("GOSSIPQUANT_OUTPUT_DIR", "/tmp/elsewhere")
        spec = parse_config(write_config(tmp_path))
        assert spec.output_dir == "/tmp/elsewhere"


class TestRunExperiment:
    def test_identical_arms_identical_logs(self, tmp_path):
        path = write_config(tmp_path, {
            "arms": [
                {"name": "a", "quantizer": {"kind": "qsgd", "s": 8}},
                {"name": "b", "quantizer": {"kind": "qsgd", "s": 8}},
            ],
        })
        out = tmp_path / "out"
        assert main(["run", str(path), "--output-dir", str(out)]) == 0
        assert (out / "a.jsonl").read_bytes() == (out / "b.jsonl").read_bytes()

    def test_quantizer_ordering_on_shared_data(self, tmp_path):
        path = write_config(tmp_path, {
            "rounds": 6,
            "eta": 0.05,
            "arms": [
                {"name": "fitted", "quantizer": {"kind": "lloyd_max", "s": 8}},
                {"name": "uniform", "quantizer": {"kind": "qsgd", "s": 8}},
            ],
        })
        out = tmp_path / "out"
        assert main(["run", str(path), "--output-dir", str(out)]) == 0
        fitted = MetricsLog.from_jsonl(out / "fitted.jsonl")
        uniform = MetricsLog.from_jsonl(out / "uniform.jsonl")
        assert np.mean(fitted.series("mean_distortion")) < np.mean(uniform.series("mean_distortion"))

    def test_csv_is_projection_of_jsonl(self, tmp_path):
        path = write_config(tmp_path)
        out = tmp_path / "out"
        assert main(["run", str(path), "--output-dir", str(out)]) == 0
        log = MetricsLog.from_jsonl(out / "default.jsonl")
        with open(out / "summary.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == len(log.records)
        for row, record in zip(rows, log.records):
            assert int(row["round"]) == record["round"]
            assert float(row["global_loss"]) == pytest.approx(record["global_loss"])
            assert int(row["bits_total"]) == record["bits_total"]
            assert float(row["s_mean"]) == pytest.approx(float(np.mean(record["s"])))

    def test_compare_rebuilds_summary(self, tmp_path, capsys):
        path = write_config(tmp_path)
        out = tmp_path / "out"
        main(["run", str(path), "--output-dir", str(out)])
        first = capsys.readouterr().out
        assert main(["compare", str(out)]) == 0
        second = capsys.readouterr().out
        assert first.splitlines()[-1] == second.splitlines()[-1]

    def test_heldout_accuracy_recorded(self, tmp_path):
        path = write_config(tmp_path, {
            "dataset": {"kind": "synthetic", "n": 200, "p": 4, "classes": 2,
                        "separation": 6.0, "test_n": 50},
            "rounds": 8,
            "eta": 0.1,
        })
        out = tmp_path / "out"
        assert main(["run", str(path), "--output-dir", str(out)]) == 0
        log = MetricsLog.from_jsonl(out / "default.jsonl")
        assert 0.5 <= log.final["test_accuracy"] <= 1.0

    def test_bits_to_target_prefers_cheap_rounds(self, tmp_path):
        # the exact-transmission arm needs fewer rounds but pays far more
        # bits per round than a coarse fitted codebook
        path = write_config(tmp_path, {
            "rounds": 10,
            "eta": 0.05,
            "dataset": {"kind": "synthetic", "n": 120, "p": 4, "classes": 2, "separation": 4.0},
            "arms": [
                {"name": "full", "quantizer": {"kind": "lloyd_max", "s": 16000}},
                {"name": "coarse", "quantizer": {"kind": "lloyd_max", "s": 16}},
            ],
        })
        out = tmp_path / "out"
        assert main(["run", str(path), "--output-dir", str(out)]) == 0
        full = MetricsLog.from_jsonl(out / "full.jsonl")
        coarse = MetricsLog.from_jsonl(out / "coarse.jsonl")
        target = 1.1 * min(full.final["global_loss"], coarse.final["global_loss"])
        full_bits, full_rounds = bits_to_target(full, target)
        coarse_bits, coarse_rounds = bits_to_target(coarse, target)
        assert full_rounds <= coarse_rounds
        assert full.records[0]["bits_total"] > coarse.records[0]["bits_total"]


class TestOtherCommands:
    def test_fit_quantizer(self, tmp_path, capsys):
        samples = tmp_path / "samples.txt"
        samples.write_text("\n".join(str(x) for x in np.linspace(0, 1, 2001)))
        assert main(["fit-quantizer", str(samples), "--levels", "2"]) == 0
        out = json.loads(capsys.readouterr().out)
        np.testing.assert_allclose(out["levels"], [0.25, 0.75], atol=1e-3)
        assert out["converged"]

    def test_zeta_command(self, tmp_path, capsys):
        edges = tmp_path / "ring4.txt"
        edges.write_text("0 1\n1 2\n2 3\n3 0\n")
        assert main(["zeta", str(edges)]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["n"] == 4
        assert out["connected"] and out["doubly_stochastic"]
        assert 0.0 <= out["zeta"] < 1.0

    def test_bounds_command(self, tmp_path, capsys):
        path = write_config(tmp_path, {
            "analysis": {"L": 1.0, "sigma2": 1.0, "delta2": 0.0, "f_gap": 1.0, "budget_bits": 1e6},
        })
        assert main(["bounds", str(path)]) == 0
        out = json.loads(capsys.readouterr().out)
        for key in ("lr_stability_cap", "gradient_norm_bound", "optimal_level_count"):
            assert key in out and np.isfinite(out[key])

    def test_bounds_requires_analysis_section(self, tmp_path, capsys):
        path = write_config(tmp_path)
        assert main(["bounds", str(path)]) == 2

    def test_run_bad_config_exit_code(self, tmp_path):
        path = write_config(tmp_path, {"tau": 0})
        assert main(["run", str(path)]) == 2

    def test_compare_empty_dir(self, tmp_path):
        assert main(["compare", str(tmp_path)]) == 2
