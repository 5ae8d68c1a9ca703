"""Voting, confusion arithmetic, and the review report."""

import json

import numpy as np
import pytest

from sewergrade import evaluation as ev
from sewergrade.model import CLASS_NAMES, Prediction


def pred(class_index: int, confidence: float = 0.9) -> Prediction:
    probs = [(1 - confidence) / 3] * 4
    probs[class_index] = confidence
    return Prediction(
        class_index=class_index,
        class_name=CLASS_NAMES[class_index],
        probabilities=tuple(probs),
        confidence=confidence,
    )


def preds_from_tally(tally) -> list[Prediction]:
    out = []
    for class_index, count in enumerate(tally):
        out.extend(pred(class_index) for _ in range(count))
    return out


class TestClassifyVideo:
    def test_plain_majority(self):
        vp = ev.classify_video("v", preds_from_tally([10, 0, 20, 0]))
        assert vp.class_name == "dirty"
        assert vp.tally == (10, 0, 20, 0)
        assert not vp.tie

    def test_tie_goes_to_dirtier_class(self):
        vp = ev.classify_video("v", preds_from_tally([15, 0, 15, 0]))
        assert vp.class_name == "dirty"
        assert vp.tie

    def test_tally_sums_to_frame_count(self):
        frames = preds_from_tally([7, 3, 11, 9])
        vp = ev.classify_video("v", frames)
        assert sum(vp.tally) == len(frames) == 30

    def test_confidence_averages_winning_frames_only(self):
        frames = [pred(0, 0.5), pred(0, 0.7), pred(2, 0.99)]
        vp = ev.classify_video("v", frames)
        assert vp.class_index == 0
        assert vp.confidence == pytest.approx(0.6)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            ev.classify_video("v", [])

    def test_matches_brute_force_on_random_tallies(self):
        """Oracle: scan counts by hand, break ties by taking the highest
        class index among the maxima."""
        rng = np.random.default_rng(42)
        for _ in range(1000):
            tally = rng.multinomial(30, [0.25] * 4)
            vp = ev.classify_video("v", preds_from_tally(tally))
            top = max(tally)
            expected = max(i for i, c in enumerate(tally) if c == top)
            assert vp.class_index == expected
            assert vp.tie == (sum(c == top for c in tally) > 1)


class TestConfusionMatrix:
    def test_perfect_predictions_normalize_to_identity(self):
        pairs = [(i, i) for i in range(4) for _ in range(3)]
        matrix = ev.confusion_matrix(pairs)
        assert np.array_equal(matrix.normalized, np.eye(4))

    def test_single_off_diagonal_count(self):
        matrix = ev.confusion_matrix([(2, 0)])
        assert matrix.counts[2, 0] == 1
        assert matrix.counts.sum() == 1

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(0)
        pairs = [(int(rng.integers(4)), int(rng.integers(4))) for _ in range(200)]
        matrix = ev.confusion_matrix(pairs)
        sums = matrix.normalized.sum(axis=1)
        assert np.allclose(sums, 1.0, atol=1e-9)

    def test_empty_row_flagged_and_zero(self):
        matrix = ev.confusion_matrix([(0, 0), (1, 2)])
        assert matrix.empty_rows == (False, False, True, True)
        assert not matrix.normalized[2].any()

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            ev.confusion_matrix([(0, 4)])
        with pytest.raises(ValueError):
            ev.confusion_matrix([(-1, 0)])


class TestAccuracyMetrics:
    def test_identity_matrix(self):
        matrix = ev.confusion_matrix([(i, i) for i in range(4)])
        metrics = ev.accuracy_metrics(matrix)
        assert metrics.accuracy == 1.0
        assert metrics.neighbor_rate == 0.0
        assert metrics.severe_rate == 0.0

    def test_hand_counted_matrix(self):
        counts = [[2, 1, 0, 0], [0, 2, 1, 0], [0, 0, 3, 0], [0, 0, 0, 3]]
        pairs = [
            (i, j) for i in range(4) for j in range(4) for _ in range(counts[i][j])
        ]
        metrics = ev.accuracy_metrics(ev.confusion_matrix(pairs))
        assert metrics.accuracy == pytest.approx(10 / 12)
        assert metrics.neighbor_rate == pytest.approx(2 / 12)

    def test_three_measures_sum_to_one(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            pairs = [
                (int(rng.integers(4)), int(rng.integers(4)))
                for _ in range(int(rng.integers(1, 60)))
            ]
            m = ev.accuracy_metrics(ev.confusion_matrix(pairs))
            assert m.accuracy + m.neighbor_rate + m.severe_rate == 1.0

    def test_empty_matrix_rejected(self):
        with pytest.raises(ValueError):
            ev.accuracy_metrics(ev.confusion_matrix([]))


class TestEvaluationReport:
    def build_inputs(self, tmp_path, with_frames=True):
        from PIL import Image

        images = []
        rng = np.random.default_rng(0)
        for i in range(12):
            truth = i % 4
            path = None
            if with_frames:
                path = tmp_path / f"frame_{i}.png"
                Image.fromarray(
                    rng.integers(0, 255, (150, 150, 3), dtype=np.uint8)
                ).save(path)
                path = str(path)
            predicted = truth if i < 8 else (truth + 1) % 4
            images.append(
                ev.ImageEvaluation(
                    video_id=f"v{i}", truth=truth, prediction=pred(predicted), path=path
                )
            )
        videos = [
            (i % 4, ev.classify_video(f"v{i}", preds_from_tally([0, 0, 0, 5])))
            for i in range(4)
        ]
        return images, videos

    def test_report_contains_both_matrices_and_metrics(self, tmp_path):
        images, videos = self.build_inputs(tmp_path)
        out = tmp_path / "report.html"
        summary = ev.evaluation_report(images, videos, out)
        text = out.read_text()
        assert 'id="image-matrix"' in text
        assert 'id="video-matrix"' in text
        payload = json.loads(
            text.split('<script type="application/json" id="metrics">')[1].split(
                "</script>"
            )[0]
        )
        direct = ev.accuracy_metrics(
            ev.confusion_matrix([(e.truth, e.prediction.class_index) for e in images])
        )
        assert payload["image"]["accuracy"] == direct.accuracy
        assert summary.image_metrics == direct

    def test_sampling_respects_available_frames(self, tmp_path):
        images, videos = self.build_inputs(tmp_path)
        out = tmp_path / "report.html"
        ev.evaluation_report(images, videos, out, samples_per_class=50)
        # 12 frames exist in total, so at most 12 can be embedded
        assert out.read_text().count("data:image/png;base64,") <= 12

    def test_reference_constants_shown_for_context(self, tmp_path):
        images, videos = self.build_inputs(tmp_path, with_frames=False)
        out = tmp_path / "report.html"
        ev.evaluation_report(images, videos, out)
        text = out.read_text()
        assert "0.537" in text and "0.557" in text and "0.347" in text

    def test_unwritable_path_rejected(self, tmp_path):
        images, videos = self.build_inputs(tmp_path, with_frames=False)
        with pytest.raises(OSError):
            ev.evaluation_report(images, videos, tmp_path / "missing" / "report.html")

    def test_empty_inputs_rejected(self, tmp_path):
        images, videos = self.build_inputs(tmp_path, with_frames=False)
        with pytest.raises(ValueError):
            ev.evaluation_report([], videos, tmp_path / "r.html")
        with pytest.raises(ValueError):
            ev.evaluation_report(images, [], tmp_path / "r.html")
