import csv
import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from lesionsr.cli import main
from lesionsr.corpus import load_roi_pairs
from lesionsr.metrics import bilinear_upsample
from lesionsr.mos_bundle import load_bundle, load_key


def tree_bytes(root):
    root = Path(root)
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def write_train_config(path, train_dir, val_dir, out_dir, max_steps=40):
    config = {
        "data": {"train_dir": str(train_dir), "val_dir": str(val_dir)},
        "output": {"out_dir": str(out_dir)},
        "training": {
            "variant": "MS_GAN",
            "epochs": 20,
            "max_steps": max_steps,
            "batch_size": 4,
            "lr_initial": 1e-3,
            "lr_after_midpoint": 1e-4,
            "seed": 0,
            "adv": {"n_critic": 2, "gp_lambda": 10.0, "clip_c": 0.01},
            "generator": {"kind": "multiscale", "scale": 4, "channels": 8,
                          "n_res_blocks_trunk": 2, "n_res_blocks_stage2": 1},
            "critic": {"kind": "wgangp_critic", "base_channels": 4, "input_size": 24},
            "perceptual": {"weights_source": "fixed_random", "layer_index": 1, "seed": 0},
        },
    }
    Path(path).write_text(yaml.safe_dump(config))
    return config


def make_bilinear_sr_dir(data_dir, out_dir):
    """An independent 'method' directory: bilinear outputs in inference format."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for pair in load_roi_pairs(data_dir):
        up = bilinear_upsample(pair.lr, pair.scale)
        np.save(out / f"{pair.slice_id}.npy", up.pixels)
        (out / f"{pair.slice_id}.json").write_text(json.dumps({
            "box": [pair.box.x0, pair.box.y0, pair.box.w, pair.box.h],
            "scale": pair.scale, "norm_mean": pair.hr.norm_mean, "norm_std": pair.hr.norm_std,
        }))
    return out


class TestSynthData:
    def test_deterministic_byte_identical(self, tmp_path):
        for name in ("a", "b"):
            assert main(["synth-data", "--n", "4", "--size", "32", "--seed", "1",
                         "--out", str(tmp_path / name)]) == 0
        a, b = tree_bytes(tmp_path / "a"), tree_bytes(tmp_path / "b")
        # the run manifest embeds its own out_dir; the corpus payload must match
        a_manifest = json.loads(a.pop("run_manifest.json"))
        b_manifest = json.loads(b.pop("run_manifest.json"))
        assert a == b
        assert a_manifest["config_hash"] == b_manifest["config_hash"]

    def test_manifest_present(self, tmp_path):
        main(["synth-data", "--n", "2", "--size", "32", "--seed", "0", "--out", str(tmp_path / "c")])
        manifest = json.loads((tmp_path / "c" / "run_manifest.json").read_text())
        assert manifest["command"] == "synth-data"
        assert manifest["seed"] == 0
        assert manifest["config_hash"]

    def test_hash_stable_under_key_order(self):
        from lesionsr.cli import config_hash

        assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})


class TestPrepare:
    def test_split_counts(self, tmp_path):
        main(["synth-data", "--n", "10", "--size", "48", "--seed", "2", "--out", str(tmp_path / "c")])
        assert main(["prepare", "--corpus", str(tmp_path / "c"), "--scale", "4", "--margin", "2",
                     "--train-fraction", "0.8", "--seed", "0", "--out", str(tmp_path / "p")]) == 0
        train_pairs = load_roi_pairs(tmp_path / "p" / "train")
        val_pairs = load_roi_pairs(tmp_path / "p" / "val")
        assert len(train_pairs) == 8 and len(val_pairs) == 2
        assert {p.slice_id for p in train_pairs}.isdisjoint({p.slice_id for p in val_pairs})
        for p in train_pairs + val_pairs:
            assert p.hr.normalized and p.dr is not None


class TestExitCodes:
    def test_unknown_flag_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["synth-data", "--nope", "1"])
        assert exc.value.code == 2

    def test_missing_file(self, tmp_path):
        assert main(["train", "--config", str(tmp_path / "none.yaml")]) == 2

    def test_malformed_data(self, tmp_path):
        bad = tmp_path / "bad"
        bad.mkdir()
        (bad / "manifest.json").write_text("{broken")
        assert main(["prepare", "--corpus", str(bad), "--out", str(tmp_path / "o")]) == 3


class TestPipeline:
    @pytest.fixture(scope="class")
    def pipeline(self, tmp_path_factory):
        """synth -> prepare -> train -> infer -> evaluate -> mos-prepare."""
        root = tmp_path_factory.mktemp("pipeline")
        assert main(["synth-data", "--n", "10", "--size", "48", "--seed", "3",
                     "--out", str(root / "corpus")]) == 0
        assert main(["prepare", "--corpus", str(root / "corpus"), "--scale", "4",
                     "--margin", "2", "--train-fraction", "0.8", "--seed", "0",
                     "--out", str(root / "prepared")]) == 0
        config = root / "train.yaml"
        write_train_config(config, root / "prepared" / "train", root / "prepared" / "val",
                           root / "run", max_steps=50)
        assert main(["train", "--config", str(config)]) == 0
        ckpt = root / "run" / "checkpoints" / "final.pt"
        assert ckpt.exists()
        assert main(["infer", "--checkpoint", str(ckpt), "--data", str(root / "prepared" / "val"),
                     "--out", str(root / "sr")]) == 0
        assert main(["evaluate", "--data", str(root / "prepared" / "val"),
                     "--sr", f"ms_gan={root / 'sr'}", "--out", str(root / "eval")]) == 0
        return root

    def test_training_artifacts(self, pipeline):
        run = pipeline / "run"
        assert (run / "config.json").exists()
        records = [json.loads(l) for l in (run / "history.jsonl").read_text().splitlines()]
        steps = [r for r in records if r["kind"] == "step"]
        assert len(steps) == 50
        assert all(np.isfinite(list(r["terms"].values())).all() for r in steps)

    def test_infer_outputs(self, pipeline):
        val_pairs = load_roi_pairs(pipeline / "prepared" / "val")
        for pair in val_pairs:
            arr = np.load(pipeline / "sr" / f"{pair.slice_id}.npy")
            assert arr.shape == pair.hr.shape
            meta = json.loads((pipeline / "sr" / f"{pair.slice_id}.json").read_text())
            assert meta["box"] == [pair.box.x0, pair.box.y0, pair.box.w, pair.box.h]

    def test_evaluate_report_parseable(self, pipeline):
        with (pipeline / "eval" / "summary.csv").open() as f:
            rows = list(csv.DictReader(f))
        methods = {r["method"] for r in rows}
        assert methods == {"bilinear", "ms_gan"}
        for row in rows:
            assert np.isfinite(float(row["psnr_mean"]))
            assert -1.0 <= float(row["ssim_mean"]) <= 1.0
        assert (pipeline / "eval" / "figures" / "metrics.png").stat().st_size > 0
        assert (pipeline / "eval" / "figures" / "examples.png").stat().st_size > 0
        assert (pipeline / "eval" / "per_image.csv").exists()

    def test_mos_prepare_counts_and_key(self, pipeline):
        second = make_bilinear_sr_dir(pipeline / "prepared" / "val", pipeline / "sr_bilinear")
        out = pipeline / "bundle"
        assert main(["mos-prepare", "--data", str(pipeline / "prepared" / "val"),
                     "--input", f"ms_gan={pipeline / 'sr'}",
                     "--input", f"bilinear={second}",
                     "--n-images", "2", "--seed", "7", "--out", str(out)]) == 0
        items = load_bundle(out)
        assert len(items) == 2 * 3  # 2 images x (2 methods + ground truth)
        key = load_key(out)
        assert set(key) == set(items)
        methods = {v["method"] for v in key.values()}
        assert methods == {"ms_gan", "bilinear", "ground_truth"}
        for item_id in items:
            assert (out / "items" / f"{item_id}.png").stat().st_size > 0

    def test_evaluate_with_checkpoint_directly(self, pipeline, tmp_path):
        out = tmp_path / "eval2"
        assert main(["evaluate", "--data", str(pipeline / "prepared" / "val"),
                     "--checkpoint", str(pipeline / "run" / "checkpoints" / "final.pt"),
                     "--label", "direct", "--out", str(out)]) == 0
        with (out / "summary.csv").open() as f:
            methods = {r["method"] for r in csv.DictReader(f)}
        assert methods == {"bilinear", "direct"}

    def test_train_set_override(self, pipeline, tmp_path):
        config = tmp_path / "cfg.yaml"
        write_train_config(config, pipeline / "prepared" / "train", pipeline / "prepared" / "val",
                           tmp_path / "run2")
        assert main(["train", "--config", str(config), "--set", "training.max_steps=3"]) == 0
        records = [json.loads(l) for l in (tmp_path / "run2" / "history.jsonl").read_text().splitlines()]
        assert len([r for r in records if r["kind"] == "step"]) == 3
