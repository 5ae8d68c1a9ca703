"""Relevance propagation: conservation accounting and heatmap rendering."""

import numpy as np
import pytest

from sewergrade import lrp as L
from sewergrade.errors import ShapeError
from sewergrade.model import build_sewernet


@pytest.fixture(scope="module")
def charged_net():
    """Fresh network with a non-trivial output layer (the default build
    zeroes it, which would make every score 0)."""
    net = build_sewernet(seed=0)
    params = net.params()
    rng = np.random.default_rng(7)
    params["logits.weights"] = rng.normal(
        0.0, 0.05, params["logits.weights"].shape
    ).astype(np.float32)
    net.load_params(params)
    return net


@pytest.fixture(scope="module")
def biased_net(charged_net):
    net = build_sewernet(seed=0)
    params = {k: v.copy() for k, v in charged_net.params().items()}
    rng = np.random.default_rng(8)
    for name in params:
        if name.endswith(".bias"):
            params[name] = rng.normal(0.0, 0.02, params[name].shape).astype(np.float32)
    net.load_params(params)
    return net


def image(seed=0):
    return np.random.default_rng(seed).random((150, 150, 3), dtype=np.float32)


class TestDenseRule:
    def test_hand_example(self):
        """x=[1,2], w=[[1],[3]], zero bias: z=7 splits as [1*1, 2*3]."""
        x = np.array([1.0, 2.0])
        w = np.array([[1.0], [3.0]])
        b = np.zeros(1)
        z = x @ w
        r_in, absorbed = L.dense_relevance(x, w, b, z, np.array([7.0]))
        assert np.allclose(r_in, [1.0, 6.0])
        assert absorbed == 0.0
        assert r_in.sum() == pytest.approx(7.0)

    def test_bias_absorbs_its_share(self):
        x = np.array([1.0, 2.0])
        w = np.array([[1.0], [3.0]])
        b = np.array([3.0])
        z = x @ w + b  # 10
        r_in, absorbed = L.dense_relevance(x, w, b, z, np.array([10.0]))
        assert r_in.sum() + absorbed == pytest.approx(10.0)
        assert absorbed == pytest.approx(3.0)

    def test_dead_unit_guard(self):
        x = np.zeros(2)
        w = np.ones((2, 1))
        z = np.zeros(1)
        r_in, absorbed = L.dense_relevance(x, w, np.zeros(1), z, np.array([5.0]))
        assert np.all(np.isfinite(r_in))
        assert np.all(r_in == 0)

    def test_epsilon_rule_never_divides_by_zero(self):
        x = np.zeros(3)
        w = np.ones((3, 2))
        z = np.zeros(2)
        r_in, _ = L.dense_relevance(
            x, w, np.zeros(2), z, np.ones(2), rule=L.RULE_EPSILON, epsilon=1e-6
        )
        assert np.all(np.isfinite(r_in))


class TestConservation:
    def test_zero_bias_sum_equals_logit(self, charged_net):
        for seed in range(3):
            for target in (0, 3):
                rmap = L.lrp(charged_net, image(seed), target, rule=L.RULE_ZERO)
                assert rmap.score != 0.0
                rel_err = abs(rmap.input_sum - rmap.score) / abs(rmap.score)
                assert rel_err <= 1e-4, (seed, target, rel_err)
                assert rmap.absorbed == 0.0

    def test_bias_accounting_identity(self, biased_net):
        for seed in range(2):
            rmap = L.lrp(biased_net, image(seed), 1, rule=L.RULE_ZERO)
            rel_err = abs(rmap.input_sum + rmap.absorbed - rmap.score) / abs(rmap.score)
            assert rel_err <= 1e-4
            assert rmap.absorbed != 0.0

    def test_epsilon_converges_to_zero_rule(self, charged_net):
        img = image(4)
        base = L.lrp(charged_net, img, 2, rule=L.RULE_ZERO)
        gaps = []
        sum_gaps = []
        for eps in (1e-2, 1e-4, 1e-6):
            approx = L.lrp(charged_net, img, 2, rule=L.RULE_EPSILON, epsilon=eps)
            gaps.append(np.abs(approx.values - base.values).max())
            sum_gaps.append(abs(approx.input_sum - base.input_sum))
        assert gaps[0] > gaps[1] > gaps[2]
        assert gaps[2] < 0.01 * np.abs(base.values).max()
        # stabilizer leakage vanishes: totals agree to 1e-4 relative by 1e-6
        assert sum_gaps[2] <= 1e-4 * abs(base.score)

    def test_map_shape_and_dtype(self, charged_net):
        rmap = L.lrp(charged_net, image(0), 0)
        assert rmap.values.shape == (150, 150, 3)
        assert rmap.values.dtype == np.float64
        assert rmap.rule == L.RULE_ZERO

    def test_bad_target_rejected(self, charged_net):
        with pytest.raises(ValueError):
            L.lrp(charged_net, image(0), 4)
        with pytest.raises(ValueError):
            L.lrp(charged_net, image(0), -1)

    def test_bad_shape_rejected(self, charged_net):
        with pytest.raises(ShapeError):
            L.lrp(charged_net, np.zeros((10, 10, 3)), 0)

    def test_bad_rule_rejected(self, charged_net):
        with pytest.raises(ValueError):
            L.lrp(charged_net, image(0), 0, rule="lrp_gamma")
        with pytest.raises(ValueError):
            L.lrp(charged_net, image(0), 0, rule=L.RULE_EPSILON, epsilon=0.0)


class TestRenderHeatmap:
    def test_zero_map_is_neutral_white(self):
        out = L.render_heatmap(np.zeros((150, 150, 3)))
        assert out.shape == (150, 150, 3)
        assert out.dtype == np.uint8
        assert (out == 255).all()

    def test_single_positive_pixel_is_red(self):
        values = np.zeros((150, 150, 3))
        values[10, 20, 0] = 2.5
        out = L.render_heatmap(values)
        assert tuple(out[10, 20]) == (255, 0, 0)
        mask = np.ones((150, 150), dtype=bool)
        mask[10, 20] = False
        assert (out[mask] == 255).all()

    def test_negation_swaps_red_and_blue(self):
        rng = np.random.default_rng(3)
        values = rng.normal(size=(150, 150, 3))
        a = L.render_heatmap(values)
        b = L.render_heatmap(-values)
        assert np.array_equal(a[..., 0], b[..., 2])
        assert np.array_equal(a[..., 2], b[..., 0])
        assert np.array_equal(a[..., 1], b[..., 1])

    def test_per_map_normalization(self):
        rng = np.random.default_rng(4)
        values = rng.normal(size=(150, 150, 3))
        assert np.array_equal(L.render_heatmap(values), L.render_heatmap(values * 10))

    def test_accepts_relevance_map(self, charged_net):
        rmap = L.lrp(charged_net, image(1), 0)
        out = L.render_heatmap(rmap)
        assert out.shape == (150, 150, 3)


class TestExplainVideo:
    def test_identical_frames_mean_equals_single(self, charged_net):
        frames = np.broadcast_to(image(5), (4, 150, 150, 3)).copy()
        result = L.explain_video(charged_net, frames, 1)
        assert len(result.maps) == 4
        assert np.allclose(result.mean.values, result.maps[0].values)
        assert result.mean.score == pytest.approx(result.maps[0].score)

    def test_mean_is_elementwise_average(self, charged_net):
        frames = np.stack([image(s) for s in range(5)])
        result = L.explain_video(charged_net, frames, 2)
        stacked = np.stack([m.values for m in result.maps])
        assert np.allclose(result.mean.values, stacked.mean(axis=0))

    def test_frame_count_preserved(self, charged_net):
        frames = np.stack([image(s) for s in range(3)])
        result = L.explain_video(charged_net, frames, 0)
        assert len(result.maps) == 3

    def test_empty_stack_rejected(self, charged_net):
        with pytest.raises(ShapeError):
            L.explain_video(charged_net, np.zeros((0, 150, 150, 3)), 0)
