"""End-to-end command line behavior on tiny datasets."""

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from triview.cli import EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, main


def run(argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def synth_dirs(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    code = run([
        "gen-synth", "--out", root, "--seed", "3",
        "--n-train", "24", "--n-val", "8", "--n-test", "8",
        "--length", "16", "--f-lo", "3", "--f-hi", "5", "--freq-offset", "1",
    ])
    assert code == EXIT_OK
    return root


class TestGenSynth:
    def test_writes_both_domains_and_spec(self, synth_dirs):
        assert (synth_dirs / "source" / "data.jsonl").is_file()
        assert (synth_dirs / "target" / "meta.json").is_file()
        spec = json.loads((synth_dirs / "spec.json").read_text())
        assert spec["seed"] == 3 and spec["length"] == 16

    def test_same_seed_byte_identical(self, tmp_path, synth_dirs):
        code = run([
            "gen-synth", "--out", tmp_path, "--seed", "3",
            "--n-train", "24", "--n-val", "8", "--n-test", "8",
            "--length", "16", "--f-lo", "3", "--f-hi", "5", "--freq-offset", "1",
        ])
        assert code == EXIT_OK
        for rel in ("source/data.jsonl", "target/data.jsonl", "source/meta.json"):
            assert (tmp_path / rel).read_bytes() == (synth_dirs / rel).read_bytes()

    def test_aliasing_spec_rejected(self, tmp_path):
        code = run(["gen-synth", "--out", tmp_path, "--length", "16", "--f-hi", "9"])
        assert code == EXIT_VALIDATION


class TestTrainCommands:
    def test_finetune_random_init_writes_artifacts(self, synth_dirs, tmp_path):
        out = tmp_path / "ft"
        code = run([
            "finetune", "--data", synth_dirs / "target", "--checkpoint", "none",
            "--out", out, "--seed", "0", "--max-epochs", "1", "--batch-size", "8",
            "--set", "train.length=16", "--set", "train.hidden=8",
            "--set", "train.num_layers=1", "--set", "train.num_heads=2",
        ])
        assert code == EXIT_OK
        for name in ("config.json", "steps.csv", "epochs.csv", "metrics.json", "model.ckpt"):
            assert (out / name).exists(), name
        cfg = json.loads((out / "config.json").read_text())
        assert cfg["train"]["length"] == 16
        assert cfg["seeds"] == [0]
        with open(out / "steps.csv") as fh:
            header = next(csv.reader(fh))
        assert header == ["step", "l_cl_t", "l_cl_d", "l_cl_f", "l_ce", "l_total", "lr"]

    def test_pretrain_then_finetune_then_eval(self, synth_dirs, tmp_path):
        pre = tmp_path / "pre"
        small = ["--set", "train.length=16", "--set", "train.hidden=8",
                 "--set", "train.num_layers=1", "--set", "train.num_heads=2"]
        code = run(["pretrain", "--data", synth_dirs / "source", "--out", pre,
                    "--seed", "1", "--max-epochs", "1", "--batch-size", "8", *small])
        assert code == EXIT_OK
        ft = tmp_path / "ft"
        code = run(["finetune", "--data", synth_dirs / "target",
                    "--checkpoint", pre / "model.ckpt", "--out", ft, "--seed", "1",
                    "--max-epochs", "1", "--batch-size", "8", *small])
        assert code == EXIT_OK
        ev = tmp_path / "ev"
        code = run(["eval", "--data", synth_dirs / "target",
                    "--checkpoint", ft / "model.ckpt", "--split", "val", "--out", ev])
        assert code == EXIT_OK
        metrics = json.loads((ev / "metrics.json").read_text())
        assert 0.0 <= metrics["accuracy"] <= 1.0

    def test_freeze_and_views_flags(self, synth_dirs, tmp_path):
        out = tmp_path / "ft"
        code = run([
            "finetune", "--data", synth_dirs / "target", "--checkpoint", "none",
            "--freeze-encoders", "--views", "d,f", "--out", out, "--seed", "0",
            "--max-epochs", "1", "--batch-size", "8",
            "--set", "train.length=16", "--set", "train.hidden=8",
            "--set", "train.num_layers=1", "--set", "train.num_heads=2",
        ])
        assert code == EXIT_OK
        cfg = json.loads((out / "config.json").read_text())
        assert cfg["train"]["freeze_encoders"] is True
        assert cfg["train"]["views"] == ["d", "f"]

    def test_identical_seeds_identical_metrics(self, synth_dirs, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            code = run([
                "finetune", "--data", synth_dirs / "target", "--checkpoint", "none",
                "--out", out, "--seed", "7", "--max-epochs", "2", "--batch-size", "8",
                "--set", "train.length=16", "--set", "train.hidden=8",
                "--set", "train.num_layers=1", "--set", "train.num_heads=2",
            ])
            assert code == EXIT_OK
            outs.append(out)
        a = (outs[0] / "metrics.json").read_bytes()
        b = (outs[1] / "metrics.json").read_bytes()
        assert a == b
        assert (outs[0] / "steps.csv").read_bytes() == (outs[1] / "steps.csv").read_bytes()

    def test_validation_error_exit_code(self, tmp_path):
        assert run(["finetune", "--data", tmp_path / "missing", "--checkpoint", "none"]) \
            == EXIT_VALIDATION

    def test_flag_overrides_config_file(self, synth_dirs, tmp_path):
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps({
            "data": str(synth_dirs / "target"),
            "train": {"length": 16, "hidden": 8, "num_layers": 1, "num_heads": 2,
                      "max_epochs": 5, "batch_size": 8},
        }))
        out = tmp_path / "run"
        code = run(["finetune", "--config", cfg_file, "--checkpoint", "none",
                    "--out", out, "--seed", "0", "--max-epochs", "1"])
        assert code == EXIT_OK
        cfg = json.loads((out / "config.json").read_text())
        assert cfg["train"]["max_epochs"] == 1  # flag beats file
        assert cfg["train"]["hidden"] == 8      # file beats default


class TestAblate:
    def test_view_grid(self, synth_dirs, tmp_path):
        out = tmp_path / "abl"
        grid = json.dumps({"lam": [0.0, 0.1]})
        code = run([
            "ablate", "--data", synth_dirs / "target", "--grid", grid,
            "--seeds", "0,1", "--out", out,
            "--max-epochs", "1", "--batch-size", "8", "--step-budget", "2",
            "--set", "train.length=16", "--set", "train.hidden=8",
            "--set", "train.num_layers=1", "--set", "train.num_heads=2",
        ])
        assert code == EXIT_OK
        runs = (out / "runs.csv").read_text().strip().splitlines()
        assert len(runs) == 1 + 4  # header + 2 lams x 2 seeds
        aggs = (out / "aggregates.csv").read_text().strip().splitlines()
        assert len(aggs) == 1 + 2
        md = (out / "aggregates.md").read_text().strip().splitlines()
        assert len(md) == 2 + 2
        # markdown table mirrors the CSV contents
        csv_first = aggs[1].split(",")
        md_first = [c.strip() for c in md[2].strip("|").split("|")]
        assert csv_first == md_first


class TestGradcheckCommand:
    def test_clean_build_passes(self, capsys):
        code = run(["gradcheck"])
        out = capsys.readouterr().out
        assert code == EXIT_OK
        assert "model-end-to-end" in out
        assert "PASS" in out and "FAIL" not in out
        assert "max_rel_err" in out


class TestExtractViews:
    def test_writes_one_csv_per_view(self, synth_dirs, tmp_path):
        out = tmp_path / "views"
        code = run(["extract-views", "--data", synth_dirs / "target",
                    "--indices", "0,2", "--out", out])
        assert code == EXIT_OK
        for name in ("temporal", "derivative", "frequency"):
            path = out / f"{name}.csv"
            assert path.is_file()
            with open(path) as fh:
                rows = list(csv.reader(fh))
            assert rows[0] == ["sample0_ch0", "sample2_ch0"]
            assert len(rows) == 1 + 16

    def test_bad_index(self, synth_dirs, tmp_path):
        code = run(["extract-views", "--data", synth_dirs / "target",
                    "--indices", "999", "--out", tmp_path / "x"])
        assert code == EXIT_VALIDATION


class TestConvertCsv:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        csv_dir = tmp_path / "raw"
        csv_dir.mkdir()
        for i in range(4):
            rows = rng.standard_normal((6, 2))
            with open(csv_dir / f"s{i}.csv", "w", newline="") as fh:
                csv.writer(fh).writerows(rows.tolist())
        labels = tmp_path / "labels.csv"
        labels.write_text("".join(f"s{i},{i % 2}\n" for i in range(4)))
        out = tmp_path / "ds"
        code = run(["convert-csv", "--input", csv_dir, "--out", out,
                    "--classes", "2", "--labels", labels, "--splits", "2,1,1"])
        assert code == EXIT_OK
        from triview import dataio

        ds = dataio.load_dataset(out)
        assert len(ds) == 4 and ds.channel_count == 2
        assert len(ds.split("train")) == 2
        assert ds.samples[0].label in (0, 1)

    def test_ragged_csv_rejected(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("1,2\n3\n")
        code = run(["convert-csv", "--input", bad, "--out", tmp_path / "ds"])
        assert code == EXIT_VALIDATION
