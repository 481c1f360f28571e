import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from artifactqc.config import RunConfig, apply_override, config_from_dict, load_config
from artifactqc.cli import (
    cmd_score,
    cmd_simulate,
    cmd_train_encoder,
    cmd_train_flow,
    main,
)
from artifactqc.errors import TauOutOfRange
from artifactqc.phantom import generate_dataset, generate_phantom, load_manifest
from artifactqc.volio import load_volume


class TestPhantom:
    def test_deterministic(self):
        a = generate_phantom(shape=(12, 12, 8), seed=9)
        b = generate_phantom(shape=(12, 12, 8), seed=9)
        assert np.array_equal(a.voxels, b.voxels)

    def test_nonnegative_and_structured(self):
        vol = generate_phantom(shape=(24, 24, 12), seed=3)
        assert vol.voxels.min() >= 0.0
        center = vol.voxels[:, :, 6]
        assert center.max() > 0.3  # tissue present in the middle

    def test_center_slices_nonempty(self):
        vol = generate_phantom(shape=(24, 24, 12), seed=4)
        for z in range(3, 9):
            assert vol.voxels[:, :, z].sum() > 0


class TestGenerateDataset:
    def test_counts_and_labels(self, tmp_path):
        entries = generate_dataset(tmp_path, count=10, corrupt_fraction=0.0, seed=5,
                                   shape=(12, 12, 8))
        assert len(entries) == 10
        assert all(e.label == "low" for e in entries)
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert len(manifest["volumes"]) == 10
        assert all(v["spec"] is None for v in manifest["volumes"])

    def test_corrupted_volumes_differ_from_originals(self, tmp_path):
        from artifactqc.seeds import derive_seed

        entries = generate_dataset(tmp_path, count=8, corrupt_fraction=0.5, seed=6,
                                   shape=(12, 12, 8))
        bad = [e for e in entries if e.label != "low"]
        assert len(bad) == 4
        for e in bad:
            written = load_volume(tmp_path / f"{e.volume_id}.mqcv")
            index = int(e.volume_id.split("_")[1])
            pristine = generate_phantom(shape=(12, 12, 8), seed=derive_seed(6, index))
            assert np.max(np.abs(written.voxels - pristine.voxels)) > 0
            assert e.spec is not None and e.spec.severity >= 0.5

    def test_manifest_round_trip(self, tmp_path):
        generate_dataset(tmp_path, count=4, corrupt_fraction=0.25, seed=7, shape=(12, 12, 8))
        labels = load_manifest(tmp_path)
        assert len(labels) == 4
        assert set(labels.values()) <= {"low", "medium", "high"}


class TestConfig:
    def test_defaults_valid(self):
        config = RunConfig()
        assert config.tau == 0.05
        assert config.encoder.input_size == (64, 64)

    def test_tau_validated(self):
        with pytest.raises(TauOutOfRange):
            config_from_dict({"tau": 1.5})

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValueError):
            config_from_dict({"speling_mistake": 1})
        with pytest.raises(ValueError):
            config_from_dict({"flow_train": {"step": 10}})

    def test_image_size_propagates_to_encoder(self):
        config = config_from_dict({"image_size": [32, 32]})
        assert config.encoder.input_size == (32, 32)

    def test_override_nested_keys(self):
        config = RunConfig()
        apply_override(config, "flow_train.steps", "123")
        apply_override(config, "tau", "0.03")
        apply_override(config, "encoder.growth_rate", "6")
        apply_override(config, "paths.out_dir", "/tmp/elsewhere")
        assert config.flow_train.steps == 123
        assert config.tau == 0.03
        assert config.encoder.growth_rate == 6
        assert config.paths.out_dir == "/tmp/elsewhere"

    def test_override_unknown_key_rejected(self):
        with pytest.raises(ValueError):
            apply_override(RunConfig(), "flow_train.bogus", "1")

    def test_output_dir_must_differ_from_data_dirs(self):
        with pytest.raises(ValueError):
            config_from_dict({"paths": {"train_dir": "x", "out_dir": "x"}})

    def test_load_config_json(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"tau": 0.1, "flow_train": {"steps": 50}}))
        config = load_config(path)
        assert config.tau == 0.1
        assert config.flow_train.steps == 50


def _small_config(base: Path) -> RunConfig:
    return config_from_dict(
        {
            "image_size": [24, 24],
            "slice_count": 6,
            "encoder": {
                "dense_blocks": 1,
                "layers_per_block": 2,
                "growth_rate": 4,
                "negatives": 4,
                "grad_accum_queries": 1,
            },
            "encoder_train": {"steps": 8, "lr": 1e-3, "seed": 5},
            "flow_train": {"steps": 60, "lr": 2e-3, "batch_size": 10, "seed": 6},
            "simulate": {"count": 10, "corrupt_fraction": 0.2, "depth": 10, "seed": 7},
            "paths": {
                "train_dir": str(base / "train"),
                "eval_dir": str(base / "eval"),
                "out_dir": str(base / "out"),
            },
        }
    )


@pytest.fixture(scope="module")
def pipeline_run(tmp_path_factory):
    """One full simulate -> train -> score run at miniature scale."""
    base = tmp_path_factory.mktemp("pipe")
    config = _small_config(base)
    cmd_simulate(config)
    cmd_simulate(config, data_dir=config.paths.eval_dir, count=8, seed=99)
    cmd_train_encoder(config)
    cmd_train_flow(config)
    summary = cmd_score(config)
    return base, config, summary


class TestPipelineComposition:
    def test_runs_end_to_end_from_empty_dir(self, pipeline_run):
        base, config, summary = pipeline_run
        out = Path(config.paths.out_dir)
        for name in (
            "encoder.mqcp",
            "encoder_loss.csv",
            "flow.mqcp",
            "flow.json",
            "flow_loss.csv",
            "reference_embeddings.csv",
            "records.csv",
            "metrics.json",
            "scatter.svg",
        ):
            assert (out / name).exists(), name
        assert summary["scored"] == 8

    def test_loss_csv_row_counts(self, pipeline_run):
        base, config, _ = pipeline_run
        out = Path(config.paths.out_dir)
        with open(out / "encoder_loss.csv", newline="") as fh:
            assert len(list(csv.reader(fh))) == config.encoder_train.steps + 1
        with open(out / "flow_loss.csv", newline="") as fh:
            assert len(list(csv.reader(fh))) == config.flow_train.steps + 1

    def test_flow_loss_improves(self, pipeline_run):
        base, config, _ = pipeline_run
        out = Path(config.paths.out_dir)
        with open(out / "flow_loss.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        losses = [float(r["loss"]) for r in rows]
        assert losses[-1] < losses[0]

    def test_records_one_row_per_volume(self, pipeline_run):
        base, config, _ = pipeline_run
        with open(Path(config.paths.out_dir) / "records.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 8
        assert all(r["verdict"] in ("pass", "fail") for r in rows)
        assert all(r["label"] in ("low", "medium", "high") for r in rows)

    def test_metrics_present_with_labels(self, pipeline_run):
        base, config, _ = pipeline_run
        metrics = json.loads((Path(config.paths.out_dir) / "metrics.json").read_text())
        assert "sensitivity" in metrics and "specificity" in metrics
        assert metrics["tau"] == config.tau


class TestDeterminism:
    def test_identical_seeds_identical_artifacts(self, tmp_path):
        outputs = []
        for run in ("one", "two"):
            base = tmp_path / run
            config = _small_config(base)
            cmd_simulate(config)
            cmd_simulate(config, data_dir=config.paths.eval_dir, count=6, seed=99)
            cmd_train_encoder(config)
            cmd_train_flow(config)
            cmd_score(config)
            out = Path(config.paths.out_dir)
            outputs.append(
                {
                    name: (out / name).read_bytes()
                    for name in (
                        "encoder.mqcp",
                        "flow.mqcp",
                        "flow.json",
                        "encoder_loss.csv",
                        "flow_loss.csv",
                        "reference_embeddings.csv",
                        "records.csv",
                        "metrics.json",
                    )
                }
            )
        for name in outputs[0]:
            assert outputs[0][name] == outputs[1][name], f"{name} differs between runs"


class TestCliEntry:
    def test_selftest_command(self, capsys):
        assert main(["selftest"]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out and "FAIL" not in out.replace("FAILURES", "")

    def test_unknown_override_fails_cleanly(self, tmp_path):
        code = main(
            ["--out", str(tmp_path / "o"), "simulate", "--count", "1", "--bogus.key", "3"]
        )
        assert code == 1

    def test_subprocess_entry(self, tmp_path):
        result = subprocess.run(
            [sys.executable, "-m", "artifactqc.cli", "selftest"],
            capture_output=True,
            text=True,
            timeout=300,
        )
        assert result.returncode == 0
        assert "all checks passed" in result.stdout

    def test_simulate_flags(self, tmp_path):
        data = tmp_path / "data"
        code = main(
            [
                "--out", str(tmp_path / "out"),
                "simulate",
                "--data-dir", str(data),
                "--count", "3",
                "--corrupt-fraction", "0.0",
                "--simulate.depth", "8",
                "--image_size", "12,12",
            ]
        )
        assert code == 0
        assert len(list(data.glob("*.mqcv"))) == 3
        vol = load_volume(sorted(data.glob("*.mqcv"))[0])
        assert vol.dims == (12, 12, 8)
