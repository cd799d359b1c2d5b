"""End-to-end command-line surface, run in-process against tiny datasets."""

import json
import os

import numpy as np
import pytest

from dinakan.cli import main
from dinakan.data import make_pattern_dataset, save_dataset_idx


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    ds = make_pattern_dataset(24, 3, size=16, seed=0)
    save_dataset_idx(ds, root / "imgs.idx", root / "labs.idx")
    stages = [
        {"channels": 8, "n_local": 1, "groups": 1, "has_global": False,
         "pool_ratio": 1, "dilation": 1, "embed_stride": 1},
        {"channels": 8, "n_local": 1, "groups": 1, "has_global": True,
         "pool_ratio": 2, "dilation": 1, "embed_stride": 1},
        {"channels": 16, "n_local": 1, "groups": 1, "has_global": True,
         "pool_ratio": 1, "dilation": 1, "embed_stride": 2},
        {"channels": 16, "n_local": 0, "groups": 1, "has_global": True,
         "pool_ratio": 1, "dilation": 1, "embed_stride": 1},
    ]
    config = {
        "model": {
            "name": "nano", "num_classes": 3, "input_size": 16,
            "stem_channels": [8, 8], "stem_strides": [2, 1],
            "stages": stages, "head_dim": 4, "dtype": "float32", "seed": 0,
        },
        "train": {"epochs": 2, "batch_size": 8, "decay_epochs": [], "seed": 0},
    }
    (root / "config.json").write_text(json.dumps(config))
    rc = main([
        "train", "--config", str(root / "config.json"),
        "--data-images", str(root / "imgs.idx"), "--data-labels", str(root / "labs.idx"),
        "--out", str(root / "model.ckpt"), "--log", str(root / "train.csv"),
    ])
    assert rc == 0
    return root


class TestTrainEval:
    def test_train_wrote_log_and_checkpoint(self, workspace):
        log = (workspace / "train.csv").read_text().splitlines()
        assert log[0] == "epoch,lr,loss,train_acc"
        assert len(log) == 3
        assert (workspace / "model.ckpt").exists()

    def test_eval_reports_metrics(self, workspace, capsys):
        rc = main([
            "eval", "--checkpoint", str(workspace / "model.ckpt"),
            "--data-images", str(workspace / "imgs.idx"),
            "--data-labels", str(workspace / "labs.idx"),
        ])
        out = capsys.readouterr().out
        assert rc == 0
        assert out.startswith("metric,value")
        assert "bacc," in out

    def test_resume_runs(self, workspace, tmp_path):
        config = json.loads((workspace / "config.json").read_text())
        config["train"]["epochs"] = 3
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(config))
        rc = main([
            "train", "--config", str(cfg_path),
            "--data-images", str(workspace / "imgs.idx"),
            "--data-labels", str(workspace / "labs.idx"),
            "--resume", str(workspace / "model.ckpt"),
            "--out", str(tmp_path / "resumed.ckpt"), "--log", str(tmp_path / "log.csv"),
        ])
        assert rc == 0
        lines = (tmp_path / "log.csv").read_text().splitlines()
        assert lines[1].startswith("2,")  # continued at epoch 2


class TestAnalysisCommands:
    def test_params_and_flops(self, workspace, capsys):
        assert main(["params", "--checkpoint", str(workspace / "model.ckpt")]) == 0
        out = capsys.readouterr().out
        assert out.startswith("metric,value\nparameters,")
        assert main(["flops", "--checkpoint", str(workspace / "model.ckpt")]) == 0
        out = capsys.readouterr().out
        assert "macs," in out

    def test_rf_report(self, workspace, capsys):
        rc = main(["rf", "--pattern", "dilated", "--k", "3", "--tokens", "100",
                   "--schedule", "4,2,1"])
        out = capsys.readouterr().out
        assert rc == 0
        assert out.splitlines()[0] == "layer,dilation,analytic_rf"
        assert "empirical,15,15" in out

    def test_cosine_profile(self, workspace, capsys):
        rc = main([
            "cosine", "--checkpoint", str(workspace / "model.ckpt"),
            "--data-images", str(workspace / "imgs.idx"),
            "--data-labels", str(workspace / "labs.idx"), "--n-images", "4",
        ])
        out = capsys.readouterr().out
        assert rc == 0
        assert out.startswith("layer_index_normalized,cosine_distance")

    def test_gradcam_writes_pgm(self, workspace, tmp_path, capsys):
        rc = main([
            "gradcam", "--checkpoint", str(workspace / "model.ckpt"),
            "--data-images", str(workspace / "imgs.idx"),
            "--data-labels", str(workspace / "labs.idx"),
            "--layer", "stage3.group0.global1", "--index", "1",
            "--out", str(tmp_path / "map.pgm"),
        ])
        assert rc == 0
        assert (tmp_path / "map.pgm").read_bytes().startswith(b"P5\n")

    def test_gradcam_default_target_is_prediction(self, workspace, tmp_path, capsys):
        rc = main([
            "gradcam", "--checkpoint", str(workspace / "model.ckpt"),
            "--data-images", str(workspace / "imgs.idx"),
            "--data-labels", str(workspace / "labs.idx"),
            "--layer", "stage2.group0.global1", "--target", "-1",
            "--out", str(tmp_path / "pred.pgm"),
        ])
        out = capsys.readouterr().out
        assert rc == 0
        target = int(out.splitlines()[1].split(",")[1])
        assert 0 <= target < 3

    def test_gradcam_unknown_layer_lists_names(self, workspace, capsys):
        rc = main([
            "gradcam", "--checkpoint", str(workspace / "model.ckpt"),
            "--data-images", str(workspace / "imgs.idx"),
            "--data-labels", str(workspace / "labs.idx"),
            "--layer", "bogus",
        ])
        err = capsys.readouterr().err
        assert rc == 1
        assert "stem0" in err  # the error enumerates the recorded layers


class TestRobustnessPipeline:
    def test_corrupt_then_report(self, workspace, tmp_path, capsys):
        rc = main([
            "corrupt", "--data-images", str(workspace / "imgs.idx"),
            "--data-labels", str(workspace / "labs.idx"),
            "--out-dir", str(tmp_path / "corr"), "--kinds", "gaussian_noise,contrast_down",
            "--seed", "3", "--out", str(tmp_path / "manifest.csv"),
        ])
        assert rc == 0
        manifest = (tmp_path / "manifest.csv").read_text().splitlines()
        assert len(manifest) == 1 + 2 * 5
        kind, severity, img_path, lab_path = manifest[1].split(",")
        assert os.path.exists(img_path) and os.path.exists(lab_path)

        results = ["clean,0,0.25"]
        for name in ("gaussian_noise", "contrast_down"):
            for s in range(1, 6):
                results.append(f"{name},{s},{0.25 + 0.05 * s:.3f}")
        (tmp_path / "results.csv").write_text("\n".join(results) + "\n")
        baseline = ["clean,0,0.3"]
        for name in ("gaussian_noise", "contrast_down"):
            for s in range(1, 6):
                baseline.append(f"{name},{s},{0.3 + 0.08 * s:.3f}")
        (tmp_path / "baseline.csv").write_text("\n".join(baseline) + "\n")
        (tmp_path / "cats.csv").write_text("gaussian_noise,noise\ncontrast_down,color\n")

        rc = main([
            "robustness", "--results", str(tmp_path / "results.csv"),
            "--baseline", str(tmp_path / "baseline.csv"),
            "--categories", str(tmp_path / "cats.csv"),
            "--out", str(tmp_path / "report.csv"),
        ])
        assert rc == 0
        report = (tmp_path / "report.csv").read_text()
        assert "summary,rBE," in report
        assert "category_BE,color," in report
        # degradation sums: model 0.05*(1..5)=0.75, baseline 0.08*(1..5)=1.2
        rbe_line = [l for l in report.splitlines()
                    if l.startswith("corruption_rBE,gaussian_noise")][0]
        assert float(rbe_line.split(",")[2]) == pytest.approx(0.75 / 1.2, abs=1e-6)


class TestEvalToRobustnessChain:
    def test_eval_outputs_feed_the_report(self, workspace, tmp_path, capsys):
        # corrupt the dataset, evaluate the trained model on each severity,
        # assemble the results table from the eval outputs, aggregate
        rc = main([
            "corrupt", "--data-images", str(workspace / "imgs.idx"),
            "--data-labels", str(workspace / "labs.idx"),
            "--out-dir", str(tmp_path / "c"), "--kinds", "gaussian_noise", "--seed", "1",
        ])
        capsys.readouterr()
        assert rc == 0

        def bacc_of(images, labels):
            rc = main(["eval", "--checkpoint", str(workspace / "model.ckpt"),
                       "--data-images", images, "--data-labels", labels])
            assert rc == 0
            out = capsys.readouterr().out
            return float([l for l in out.splitlines() if l.startswith("bacc,")][0].split(",")[1])

        rows = [f"clean,0,{1.0 - bacc_of(str(workspace / 'imgs.idx'), str(workspace / 'labs.idx')):.6f}"]
        for severity in range(1, 6):
            images = str(tmp_path / "c" / f"gaussian_noise_s{severity}-images.idx")
            labels = str(tmp_path / "c" / f"gaussian_noise_s{severity}-labels.idx")
            rows.append(f"gaussian_noise,{severity},{1.0 - bacc_of(images, labels):.6f}")
        (tmp_path / "results.csv").write_text("\n".join(rows) + "\n")

        baseline = ["clean,0,0.4"] + [f"gaussian_noise,{s},{0.4 + 0.05 * s:.2f}"
                                      for s in range(1, 6)]
        (tmp_path / "baseline.csv").write_text("\n".join(baseline) + "\n")
        rc = main(["robustness", "--results", str(tmp_path / "results.csv"),
                   "--baseline", str(tmp_path / "baseline.csv"),
                   "--out", str(tmp_path / "report.csv")])
        assert rc == 0
        report = (tmp_path / "report.csv").read_text()
        assert "summary,BE," in report and "corruption_rBE,gaussian_noise," in report


class TestErrorContract:
    def test_missing_file_is_one_line_error(self, capsys):
        rc = main(["eval", "--checkpoint", "/nonexistent.ckpt",
                   "--data-images", "x", "--data-labels", "y"])
        err = capsys.readouterr().err
        assert rc == 1
        assert err.count("\n") == 1
        assert err.startswith("error,")

    def test_bad_config_variant(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"model": {"variant": "giant"}}))
        rc = main(["params", "--config", str(cfg)])
        err = capsys.readouterr().err
        assert rc == 1 and "error,ValueError" in err
