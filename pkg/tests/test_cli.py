"""Command-line workflow: synth -> extract -> split -> train -> evaluate."""

from __future__ import annotations

import json
import shutil

import pytest
from click.testing import CliRunner
from PIL import Image

from sewergrade.checkpoint import load_checkpoint
from sewergrade.cli import cli


def run(*args, env=None):
    result = CliRunner().invoke(
        cli, [str(a) for a in args], env=env, auto_envvar_prefix="SEWERGRADE"
    )
    return result


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_corpus")
    result = run("synth", "--videos-per-class", 2, "--seed", 11, "--out", root)
    assert result.exit_code == 0, result.output
    return root


@pytest.fixture(scope="module")
def extracted(corpus_dir, tmp_path_factory):
    out_root = tmp_path_factory.mktemp("extracted")
    for video_dir in sorted(p for p in corpus_dir.iterdir() if p.is_dir()):
        result = run(
            "extract-frames", "--in", video_dir, "--out", out_root / video_dir.name
        )
        assert result.exit_code == 0, result.output
    return out_root


@pytest.fixture(scope="module")
def trained(extracted, tmp_path_factory):
    """A checkpoint fitted from the CLI on a two-video mini split."""
    work = tmp_path_factory.mktemp("cli_train")
    manifest = work / "split.jsonl"
    rows = [
        {
            "id": "video_c0_000",
            "frames_dir": str(extracted / "video_c0_000"),
            "raw_label": "clean",
            "split": "train",
        },
        {
            "id": "video_c2_000",
            "frames_dir": str(extracted / "video_c2_000"),
            "raw_label": "dirty",
            "split": "validation",
        },
    ]
    manifest.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    config = work / "config.json"
    config.write_text(
        json.dumps({"learning_rate": 1e-3, "epochs": 1, "batch_size": 16})
    )
    ckpt = work / "grader.swnt"
    result = run(
        "train", "--manifest", manifest, "--config", config, "--out", ckpt
    )
    assert result.exit_code == 0, result.output
    return work, manifest, ckpt


class TestSynth:
    def test_corpus_layout(self, corpus_dir):
        video_dirs = sorted(p.name for p in corpus_dir.iterdir() if p.is_dir())
        assert len(video_dirs) == 8
        assert video_dirs[0] == "video_c0_000"
        assert (corpus_dir / "manifest.jsonl").exists()
        frames = list((corpus_dir / video_dirs[0]).glob("*.png"))
        assert len(frames) == 65

    def test_videos_per_class_is_required(self, tmp_path):
        result = run("synth", "--out", tmp_path)
        assert result.exit_code == 2

    def test_env_var_supplies_seed_and_flag_wins(self, tmp_path):
        outs = {name: tmp_path / name for name in ("a", "b", "c")}
        env = {"SEWERGRADE_SYNTH_SEED": "9"}
        base = ("synth", "--classes", 1, "--videos-per-class", 1)
        assert run(*base, "--out", outs["a"], env=env).exit_code == 0
        assert run(*base, "--out", outs["b"], "--seed", 9).exit_code == 0
        assert run(*base, "--out", outs["c"], "--seed", 3, env=env).exit_code == 0
        frame = "video_c0_000/frame_0000.png"
        from_env = (outs["a"] / frame).read_bytes()
        from_flag = (outs["b"] / frame).read_bytes()
        overridden = (outs["c"] / frame).read_bytes()
        assert from_env == from_flag
        assert overridden != from_env


class TestExtractFrames:
    def test_writes_thirty_png_and_sidecar(self, extracted):
        out = extracted / "video_c1_000"
        frames = sorted(out.glob("frame_*.png"))
        assert len(frames) == 30
        with Image.open(frames[0]) as img:
            assert img.size == (150, 150)
        sidecar = json.loads((out / "selection.json").read_text())
        assert sidecar["frames"] == 30
        segment = sidecar["segment"]
        assert segment["start"] == 0
        assert segment["end"] > 0
        assert segment["low_confidence"] is False

    def test_missing_input_dir(self, tmp_path):
        result = run("extract-frames", "--in", tmp_path / "nope", "--out", tmp_path)
        assert result.exit_code == 2


class TestPrepareDataset:
    def test_split_manifest_is_written(self, corpus_dir, tmp_path):
        result = run(
            "prepare-dataset",
            "--manifest",
            corpus_dir / "manifest.jsonl",
            "--seed",
            5,
            "--train-fraction",
            0.5,
            "--out",
            tmp_path,
        )
        assert result.exit_code == 0, result.output
        rows = [
            json.loads(line)
            for line in (tmp_path / "split_manifest.jsonl").read_text().splitlines()
        ]
        assert len(rows) == 8
        assert {row["split"] for row in rows} == {"train", "validation"}
        assert sum(row["split"] == "train" for row in rows) == 4
        assert "train 4 / validation 4" in result.output


class TestTrain:
    def test_checkpoint_and_report(self, trained):
        work, _, ckpt = trained
        network, metadata = load_checkpoint(ckpt)
        assert network.spec.input_shape == (150, 150, 3)
        report = json.loads((work / "grader.report.json").read_text())
        assert report["epochs_run"] == 1
        assert len(report["history"]) == 1
        assert report["history"][0]["val_accuracy"] is not None

    def test_unknown_config_field(self, tmp_path, corpus_dir):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"learning_rat": 1e-3}))
        result = run(
            "train",
            "--manifest",
            corpus_dir / "manifest.jsonl",
            "--config",
            config,
            "--out",
            tmp_path / "x.swnt",
        )
        assert result.exit_code == 1
        assert "bad training config" in result.output


class TestEvaluate:
    def test_report_and_metrics_json(self, trained, tmp_path):
        _, manifest, ckpt = trained
        html = tmp_path / "report.html"
        metrics_path = tmp_path / "metrics.json"
        result = run(
            "evaluate",
            "--ckpt",
            ckpt,
            "--manifest",
            manifest,
            "--out",
            html,
            "--json",
            metrics_path,
        )
        assert result.exit_code == 0, result.output
        assert "confusion" in html.read_text()
        metrics = json.loads(metrics_path.read_text())
        assert metrics["images"] == 30 and metrics["videos"] == 1
        for scope in ("image", "video"):
            rates = metrics[scope]
            assert 0.0 <= rates["accuracy"] <= 1.0
            total = rates["accuracy"] + rates["neighbor_rate"] + rates["severe_rate"]
            assert abs(total - 1.0) < 1e-12

    def test_refuses_empty_split(self, trained, tmp_path):
        work, manifest, ckpt = trained
        result = run(
            "evaluate",
            "--ckpt",
            ckpt,
            "--manifest",
            manifest,
            "--split",
            "train",
            "--out",
            tmp_path / "r.html",
        )
        # The mini manifest has a train side, so flip to a manifest without.
        only_val = tmp_path / "val_only.jsonl"
        rows = [
            json.loads(line) for line in manifest.read_text().splitlines()
        ]
        only_val.write_text(
            json.dumps(next(r for r in rows if r["split"] == "validation")) + "\n"
        )
        result = run(
            "evaluate",
            "--ckpt",
            ckpt,
            "--manifest",
            only_val,
            "--split",
            "train",
            "--out",
            tmp_path / "r.html",
        )
        assert result.exit_code == 1
        assert "no train samples" in result.output


class TestExplain:
    def test_heatmaps_and_ledger(self, trained, extracted, tmp_path):
        _, _, ckpt = trained
        frames_dir = tmp_path / "two_frames"
        frames_dir.mkdir()
        source = extracted / "video_c0_000"
        for name in ("frame_000.png", "frame_001.png"):
            shutil.copy(source / name, frames_dir / name)
        out = tmp_path / "heat"
        result = run(
            "explain",
            "--ckpt",
            ckpt,
            "--frames",
            frames_dir,
            "--class",
            0,
            "--out",
            out,
        )
        assert result.exit_code == 0, result.output
        assert (out / "frame_000_heat.png").exists()
        assert (out / "frame_001_heat.png").exists()
        with Image.open(out / "mean_heat.png") as img:
            assert img.size == (150, 150)
        ledger = json.loads((out / "relevance.json").read_text())
        assert ledger["target_class"] == 0
        assert len(ledger["frames"]) == 2
        for entry in ledger["frames"]:
            assert {"frame", "score", "input_sum", "absorbed"} <= set(entry)

    def test_empty_frames_dir(self, trained, tmp_path):
        _, _, ckpt = trained
        empty = tmp_path / "empty"
        empty.mkdir()
        result = run(
            "explain", "--ckpt", ckpt, "--frames", empty, "--class", 0,
            "--out", tmp_path / "heat",
        )
        assert result.exit_code == 1
        assert "no PNG frames" in result.output


class TestServe:
    def test_wires_service_and_rules(self, tmp_path, monkeypatch):
        captured = {}

        def fake_run(app, host, port):
            captured.update(app=app, host=host, port=port)

        monkeypatch.setattr("uvicorn.run", fake_run)
        rules = tmp_path / "rules.json"
        rules.write_text(json.dumps({"confidence_threshold": 0.55}))
        result = run(
            "serve",
            "--state",
            tmp_path / "state",
            "--rules",
            rules,
            "--port",
            9005,
        )
        assert result.exit_code == 0, result.output
        assert (captured["host"], captured["port"]) == ("127.0.0.1", 9005)
        service = captured["app"].state.service
        assert service.rules.confidence_threshold == 0.55
        assert (tmp_path / "state" / "models").is_dir()
        routes = {route.path for route in captured["app"].routes}
        assert {"/inspections", "/queue", "/models/production"} <= routes

    def test_bad_rules_file(self, tmp_path):
        rules = tmp_path / "rules.json"
        rules.write_text(json.dumps({"threshold": 0.5}))
        result = run("serve", "--state", tmp_path / "state", "--rules", rules)
        assert result.exit_code == 1
        assert "bad rules file" in result.output


def test_help_lists_every_command():
    result = run("--help")
    assert result.exit_code == 0
    for name in (
        "extract-frames",
        "prepare-dataset",
        "synth",
        "train",
        "explain",
        "evaluate",
        "serve",
    ):
        assert name in result.output
