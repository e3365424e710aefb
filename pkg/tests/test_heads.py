import numpy as np
import pytest

from seesaw.gradcheck import numerical_gradient, relative_error
from seesaw.heads import (LinearHead, detection_score, foreground_probability, linear_backward, linear_forward,
                          load_checkpoint, objectness_head, parse_heads, save_checkpoint,
                          spatial_normalized_forward)
from seesaw.numerics import DegenerateNormError, ShapeError, softmax


def make_head(rng, c=4, d=3, normalized=True, tau=20.0):
    return LinearHead(rng.normal(size=(c, d)), rng.normal(size=c), tau=tau, normalized=normalized)


class TestLinearForward:
    def test_aligned_row_gives_tau(self):
        head = LinearHead([[2.0, 0.0], [0.0, 1.0]], [0.0, 0.0], tau=20.0, normalized=True)
        z = linear_forward(head, [5.0, 0.0])
        assert z[0] == 20.0
        assert z[1] == 0.0

    def test_scale_invariance(self, rng):
        head = make_head(rng)
        x = rng.normal(size=3)
        for c in (1e-3, 0.5, 7.0, 1e4):
            np.testing.assert_allclose(linear_forward(head, c * x), linear_forward(head, x), atol=1e-12)

    def test_plain_head(self):
        head = LinearHead([[1.0, 2.0], [3.0, 4.0]], [0.5, -0.5])
        np.testing.assert_array_equal(linear_forward(head, [1.0, 1.0]), [3.5, 6.5])

    def test_zero_weight_row_contributes_nothing(self):
        head = LinearHead([[0.0, 0.0], [1.0, 0.0]], [0.25, 0.0], normalized=True)
        z = linear_forward(head, [1.0, 1.0])
        assert z[0] == 0.25

    def test_dimension_mismatch(self, rng):
        with pytest.raises(ShapeError):
            linear_forward(make_head(rng), np.ones(5))

    def test_normalized_logits_bounded_by_tau(self, rng):
        head = make_head(rng, c=7, d=5, tau=13.0)
        X = rng.normal(size=(1000, 5)) * rng.uniform(0.01, 100, size=(1000, 1))
        assert np.all(np.abs(linear_forward(head, X) - head.b) <= head.tau * (1 + 1e-15))


class TestLinearBackward:
    @pytest.mark.parametrize("normalized", [False, True])
    def test_zero_upstream(self, rng, normalized):
        head = make_head(rng, normalized=normalized)
        for g in linear_backward(head, rng.normal(size=3), np.zeros(4)):
            assert not np.any(g)

    def test_plain_is_outer_product(self, rng):
        head = make_head(rng, normalized=False)
        x, g = rng.normal(size=3), rng.normal(size=4)
        gW, gb, gx = linear_backward(head, x, g)
        np.testing.assert_allclose(gW, np.outer(g, x), rtol=1e-15)
        np.testing.assert_array_equal(gb, g)
        np.testing.assert_allclose(gx, head.W.T @ g, rtol=1e-14)

    @pytest.mark.parametrize("normalized", [False, True])
    def test_finite_differences(self, rng, normalized):
        for _ in range(20):
            head = make_head(rng, normalized=normalized, tau=rng.uniform(1, 30))
            x, g = rng.normal(size=3), rng.normal(size=4)
            gW, gb, gx = linear_backward(head, x, g)

            def f_W(W):
                return float(g @ linear_forward(LinearHead(W, head.b, head.tau, normalized), x))

            def f_x(u):
                return float(g @ linear_forward(head, u))

            assert relative_error(gW, numerical_gradient(f_W, head.W)) < 1e-6
            assert relative_error(gx, numerical_gradient(f_x, x)) < 1e-6
            np.testing.assert_array_equal(gb, g)

    def test_batch_sums_parameter_gradients(self, rng):
        head = make_head(rng)
        X, G = rng.normal(size=(6, 3)), rng.normal(size=(6, 4))
        gW, gb, gx = linear_backward(head, X, G)
        parts = [linear_backward(head, x, g) for x, g in zip(X, G)]
        np.testing.assert_allclose(gW, sum(p[0] for p in parts), rtol=1e-12)
        np.testing.assert_allclose(gb, sum(p[1] for p in parts), rtol=1e-12)
        np.testing.assert_allclose(gx, np.stack([p[2] for p in parts]), rtol=1e-12)

    def test_degenerate_weight_row_raises(self):
        head = LinearHead([[0.0, 0.0], [1.0, 0.0]], [0.0, 0.0], normalized=True)
        with pytest.raises(DegenerateNormError):
            linear_backward(head, [1.0, 1.0], [1.0, 1.0])

    def test_degenerate_feature_raises(self, rng):
        with pytest.raises(DegenerateNormError):
            linear_backward(make_head(rng), np.zeros(3), np.ones(4))

    def test_parameter_grads_without_input_grad(self, rng):
        head = make_head(rng)
        gW, gb, gx = linear_backward(head, np.zeros(3), np.ones(4), need_input_grad=False)
        assert gx is None
        assert not np.any(gW)
        np.testing.assert_array_equal(gb, np.ones(4))


class TestDetectionScore:
    def test_identity(self):
        np.testing.assert_array_equal(detection_score([0.2, 0.8], 1.0), [0.2, 0.8])

    def test_zero(self):
        np.testing.assert_array_equal(detection_score([0.2, 0.8], 0.0), [0.0, 0.0])

    def test_hand_evaluated(self):
        np.testing.assert_allclose(detection_score([0.5, 0.5], 0.8), [0.4, 0.4])

    def test_sum_and_argmax(self, rng):
        for _ in range(200):
            sigma = softmax(rng.normal(0, 3, size=6))
            fg = rng.uniform(1e-9, 1)
            det = detection_score(sigma, fg)
            assert abs(det.sum() - fg) <= 1e-12
            assert np.argmax(det) == np.argmax(sigma)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            detection_score([1.0], 1.5)

    def test_objectness_head(self, rng):
        obj = objectness_head(4, rng=rng)
        assert obj.num_classes == 2 and obj.normalized
        fg = foreground_probability(obj, rng.normal(size=(10, 4)))
        assert np.all((fg > 0) & (fg < 1))


class TestSpatial:
    def test_one_by_one_map_equals_linear(self, rng):
        head = make_head(rng, c=5, d=4, tau=20.0)
        x = rng.normal(size=4)
        out = spatial_normalized_forward(head.W, head.b, head.tau, x.reshape(1, 1, 4))
        np.testing.assert_allclose(out[0, 0], linear_forward(head, x), atol=1e-12)

    def test_constant_map(self, rng):
        head = make_head(rng, c=3, d=2)
        X = np.broadcast_to(rng.normal(size=2), (4, 5, 2))
        out = spatial_normalized_forward(head.W, head.b, 20.0, X)
        assert np.all(out == out[0, 0])

    def test_per_location_scaling(self, rng):
        head = make_head(rng, c=3, d=4)
        X = rng.normal(size=(3, 5, 4))
        scale = rng.uniform(0.01, 100, size=(3, 5, 1))
        np.testing.assert_allclose(spatial_normalized_forward(head.W, head.b, 20.0, X * scale),
                                   spatial_normalized_forward(head.W, head.b, 20.0, X), atol=1e-12)

    def test_channel_mismatch(self, rng):
        head = make_head(rng, c=3, d=4)
        with pytest.raises(ShapeError):
            spatial_normalized_forward(head.W, head.b, 20.0, np.ones((2, 2, 3)))


class TestCheckpoint:
    def test_round_trip(self, rng, tmp_path):
        cls = make_head(rng, c=3, d=2, normalized=False)
        obj = objectness_head(2, tau=15.0, rng=rng)
        path = tmp_path / "ckpt.txt"
        save_checkpoint(path, cls, obj)
        text = path.read_text()
        assert text.splitlines()[0] == "head cls 3 2 20.0 false"
        assert text.splitlines()[5] == "head obj 2 2 15.0 true"
        loaded = load_checkpoint(path)
        for a, b in zip(loaded, (cls, obj)):
            np.testing.assert_array_equal(a.W, b.W)
            np.testing.assert_array_equal(a.b, b.b)
            assert (a.tau, a.normalized, a.name) == (b.tau, b.normalized, b.name)

    def test_truncated(self):
        with pytest.raises(ValueError):
            parse_heads("head cls 2 1 20.0 true\n1.0\n")
