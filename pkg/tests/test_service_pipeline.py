"""Retraining pipeline against a real synthetic corpus, end to end."""

from __future__ import annotations

import hashlib
import json

import numpy as np
import pytest

from sewergrade.checkpoint import load_checkpoint
from sewergrade.errors import DatasetError, ServiceError
from sewergrade.service import (
    DefaultPipelineRunner,
    ModelStatus,
    PipelineConfig,
    PIPELINE_STEPS,
)
from sewergrade.synthetic import generate_dataset
from sewergrade.training import TrainConfig
from service_fakes import make_service


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    """Two labeled videos per class, rendered once for the whole module."""
    root = tmp_path_factory.mktemp("corpus")
    records, _ = generate_dataset(root, videos_per_class=2, seed=11)
    return records


def ingest(service, records) -> bytes:
    lines = [
        json.dumps(
            {"id": r.id, "frames_dir": r.frames_dir, "raw_label": r.raw_label.value}
        )
        for r in records
    ]
    text = "\n".join(lines) + "\n"
    service.manifest_path.write_text(text)
    return text.encode()


def quick_config() -> PipelineConfig:
    return PipelineConfig(
        train_fraction=0.5,
        rounding="half_up",
        train=TrainConfig(learning_rate=1e-3, batch_size=16, epochs=1, seed=0),
    )


class TestDefaultRunner:
    def test_unknown_step_is_refused(self, tmp_path):
        runner = DefaultPipelineRunner(tmp_path)
        with pytest.raises(ServiceError, match="bogus"):
            runner("bogus", {})

    def test_empty_manifest_fails_the_first_step(self, tmp_path):
        svc = make_service(
            tmp_path, pipeline_runner=DefaultPipelineRunner(tmp_path)
        )
        run = svc.run_pipeline()
        assert run.status == "failed"
        assert len(run.steps) == 1 and not run.steps[0].ok
        assert "ingestion manifest is empty" in run.error

    def test_full_run_produces_a_working_candidate(self, tmp_path, corpus):
        runner = DefaultPipelineRunner(tmp_path, seed=3, config=quick_config())
        svc = make_service(tmp_path, pipeline_runner=runner, seed=3)
        manifest_bytes = ingest(svc, corpus)

        run = svc.run_pipeline()
        assert run.status == "succeeded"
        assert [s.name for s in run.steps] == list(PIPELINE_STEPS)
        assert all(s.ok for s in run.steps)

        balance = run.steps[0].detail
        assert balance["balanced_videos"] == 8
        assert balance["train_videos"] == 4
        assert balance["validation_videos"] == 4
        assert run.steps[1].detail["videos"] == 8
        assert run.steps[2].detail["images"] == 240
        training = run.steps[3].detail
        assert training["train_images"] == 120
        assert training["validation_images"] == 120
        assert training["epochs_run"] == 1

        entry = svc.list_models()[0]
        assert entry.status is ModelStatus.CANDIDATE
        assert run.candidate_version == entry.version
        expected = hashlib.sha256(b"3" + manifest_bytes).hexdigest()
        assert run.inputs_hash == expected == entry.manifest_hash
        for key in ("image_accuracy", "video_accuracy"):
            assert 0.0 <= entry.metrics[key] <= 1.0

        network, metadata = load_checkpoint(entry.checkpoint_path)
        assert metadata["run_id"] == run.id
        assert network.spec.input_shape == (150, 150, 3)

        report = tmp_path / "reports" / f"{run.id}.html"
        assert report.exists()
        page = report.read_text()
        assert "confusion" in page and "video" in page

        frame_root = tmp_path / "runs" / run.id / "frames"
        video_dirs = sorted(p for p in frame_root.iterdir() if p.is_dir())
        assert len(video_dirs) == 8
        assert all(len(list(d.glob("*.png"))) == 30 for d in video_dirs)

        # Same manifest, same seed: a rerun reproduces the weights bit
        # for bit, which is what makes a run auditable after the fact.
        rerun = svc.run_pipeline()
        assert rerun.status == "succeeded"
        second = svc.list_models()[1]
        assert second.version == entry.version + 1
        net_a, _ = load_checkpoint(entry.checkpoint_path)
        net_b, _ = load_checkpoint(second.checkpoint_path)
        for name, value in net_a.params().items():
            assert np.array_equal(value, net_b.params()[name]), name
