"""Unit tests for the metrics module."""

import math

import numpy as np
import pytest

from densecheck.align import AlignmentParams
from densecheck.errors import ConfigError, EmptyMaskError
from densecheck.grids import FrameSample, VectorGrid
from densecheck.losses import (
    LossConfig,
    flow_aligned_difference,
    temporal_depth_loss,
    temporal_mask,
)
from densecheck.metrics import (
    DEFAULT_THRESHOLDS,
    acc_key,
    aggregate,
    depth_metrics,
    lower_median,
    normal_metrics,
    opw,
    pair_metrics,
    tc_abs,
    tc_mean,
    tc_rmse,
)
from tests.helpers import constant_normals, frame, random_normals, scalar, uniform_flow, zero_flow


def _tilted(angles_deg, height, width):
    """Normals tilted from (0,0,1) about the x axis, one angle per row."""
    a = np.radians(np.asarray(angles_deg, dtype=float))[:, None] * np.ones((height, width))
    return VectorGrid.from_array(np.stack([np.zeros_like(a), np.sin(a), np.cos(a)], axis=-1))


def _sample_loop(values, x, y):
    """Bilinear sample of an (H, W, C) array at one point, None when out of bounds."""
    h, w = values.shape[:2]
    if not (0.0 <= x <= w - 1 and 0.0 <= y <= h - 1):
        return None
    x0, y0 = int(math.floor(x)), int(math.floor(y))
    x1, y1 = min(x0 + 1, w - 1), min(y0 + 1, h - 1)
    fx, fy = x - x0, y - y0
    return (
        (1 - fx) * (1 - fy) * values[y0, x0]
        + fx * (1 - fy) * values[y0, x1]
        + (1 - fx) * fy * values[y1, x0]
        + fx * fy * values[y1, x1]
    )


def _warped_pairs(target, source, flow, mask, unit=False):
    """(target, warped) per pixel, in row-major order, via explicit loops."""
    h, w = target.shape[:2]
    pairs = []
    for y in range(h):
        for x in range(w):
            if mask is not None and mask[y, x] < 0.5:
                continue
            s = _sample_loop(source, x + flow[y, x, 0], y + flow[y, x, 1])
            if s is None:
                continue
            if unit:
                s = s / math.sqrt(sum(c * c for c in s))
            pairs.append((target[y, x], s))
    return pairs


def _angle(a, b):
    dot = max(-1.0, min(1.0, sum(float(p) * float(q) for p, q in zip(a, b))))
    return math.degrees(math.acos(dot))


class TestDepthMetrics:
    """Test cases for RMSE and AbsRel."""

    def test_identical(self):
        """Test pred == gt gives zeros."""
        g = scalar([[1.0, 2.0], [3.0, 4.0]])
        m = depth_metrics(g, g, aligned=False)
        assert (m.rmse, m.absrel, m.pixel_count) == (0.0, 0.0, 4)

    def test_two_pixels(self):
        """Test gt [1, 1] against pred [1, 3] gives RMSE sqrt(2) and AbsRel 1."""
        m = depth_metrics(scalar([[1.0, 3.0]]), scalar([[1.0, 1.0]]), aligned=False)
        assert m.rmse == pytest.approx(math.sqrt(2.0))
        assert m.absrel == pytest.approx(1.0)

    def test_nonpositive_gt_excluded(self):
        """Test zero-depth pixels are left out of AbsRel and counted."""
        m = depth_metrics(scalar([[0.0, 2.0]]), scalar([[0.0, 0.0]]), aligned=False)
        assert m.absrel is None
        assert m.nonpositive_count == 2
        assert m.absrel_count == 0
        assert m.rmse == pytest.approx(math.sqrt(2.0))

    def test_aligned_absorbs_affine(self):
        """Test a positive affine prediction scores 0 when aligned."""
        rng = np.random.default_rng(0)
        gt = scalar(rng.uniform(1, 5, (6, 6)))
        m = depth_metrics(scalar(0.25 * gt.values - 1.0), gt)
        assert m.rmse == pytest.approx(0.0, abs=1e-9)
        assert m.scale == pytest.approx(4.0)

    def test_precomputed_params(self):
        """Test given alignment params override per-image fitting."""
        params = AlignmentParams(2.0, 1.0, 2)
        m = depth_metrics(scalar([[1.0, 2.0]]), scalar([[3.0, 5.0]]), params=params)
        assert m.rmse == 0.0
        assert (m.scale, m.shift) == (2.0, 1.0)

    def test_loop_oracle(self):
        """Test a random masked 16x16 instance against a scalar loop."""
        for seed in range(25):
            rng = np.random.default_rng(seed)
            p = rng.uniform(0.5, 3, (16, 16))
            g = rng.uniform(0.5, 3, (16, 16))
            mk = rng.uniform(0, 1, (16, 16))
            m = depth_metrics(scalar(p), scalar(g), scalar(mk), aligned=False)

            sq, rel, n = 0.0, 0.0, 0
            for y in range(16):
                for x in range(16):
                    if mk[y, x] >= 0.5:
                        d = p[y, x] - g[y, x]
                        sq += d * d
                        rel += abs(d) / g[y, x]
                        n += 1
            assert m.pixel_count == n
            assert m.rmse == pytest.approx(math.sqrt(sq / n), rel=1e-9)
            assert m.absrel == pytest.approx(rel / n, rel=1e-9)

    def test_empty(self):
        """Test an empty evaluation set raises."""
        with pytest.raises(EmptyMaskError):
            depth_metrics(scalar([[1.0]]), scalar([[1.0]]), scalar([[0.0]]))

    def test_to_dict_fields(self):
        """Test the serialized field names."""
        m = depth_metrics(scalar([[1.0, 3.0]]), scalar([[1.0, 1.0]]), aligned=False)
        assert set(m.to_dict()) == {
            "rmse",
            "absrel",
            "pixel_count",
            "absrel_count",
            "nonpositive_count",
            "scale",
            "shift",
            "degenerate",
        }


class TestNormalMetrics:
    """Test cases for angular error statistics."""

    def test_identical(self):
        """Test identical fields give 0 error and full accuracy."""
        n = random_normals(np.random.default_rng(0), 4, 4)
        m = normal_metrics(n, n)
        assert m.mean_deg == pytest.approx(0.0, abs=1e-5)
        assert all(v == 1.0 for v in m.acc.values())

    def test_orthogonal(self):
        """Test orthogonal fields give 90 degrees and zero accuracy."""
        m = normal_metrics(constant_normals([0, 0, 1], 3, 3), constant_normals([0, 1, 0], 3, 3))
        assert m.mean_deg == pytest.approx(90.0)
        assert m.median_deg == pytest.approx(90.0)
        assert all(v == 0.0 for v in m.acc.values())

    def test_two_level_field(self):
        """Test half at 10 and half at 40 degrees: mean 25, every acc 0.5."""
        pred = _tilted([10.0, 10.0, 40.0, 40.0], 4, 3)
        gt = constant_normals([0, 0, 1], 4, 3)
        m = normal_metrics(pred, gt)
        assert m.mean_deg == pytest.approx(25.0)
        assert m.median_deg == pytest.approx(10.0)
        assert m.acc == {11.25: 0.5, 22.5: 0.5, 30.0: 0.5}

    def test_acc_non_decreasing(self):
        """Test accuracy never drops as the threshold grows."""
        rng = np.random.default_rng(1)
        m = normal_metrics(
            random_normals(rng, 8, 8), random_normals(rng, 8, 8), thresholds=(5, 20, 60, 180.1)
        )
        values = [m.acc[t] for t in sorted(m.acc)]
        assert values == sorted(values)
        assert values[-1] == 1.0

    def test_unsorted_thresholds(self):
        """Test thresholds must increase."""
        n = constant_normals([0, 0, 1], 2, 2)
        with pytest.raises(ConfigError):
            normal_metrics(n, n, thresholds=(30.0, 11.25))

    def test_loop_oracle(self):
        """Test random instances against a scalar loop."""
        for seed in range(25):
            rng = np.random.default_rng(seed)
            pred = random_normals(rng, 16, 16)
            gt = random_normals(rng, 16, 16)
            m = normal_metrics(pred, gt)
            angles = sorted(
                _angle(pred.values[y, x], gt.values[y, x]) for y in range(16) for x in range(16)
            )
            assert m.mean_deg == pytest.approx(sum(angles) / len(angles), rel=1e-9)
            assert m.median_deg == pytest.approx(angles[(len(angles) - 1) // 2], rel=1e-9)
            for t in DEFAULT_THRESHOLDS:
                assert m.acc[t] == sum(a < t for a in angles) / len(angles)

    def test_to_dict_keys(self):
        """Test accuracy columns use stable names."""
        n = constant_normals([0, 0, 1], 2, 2)
        data = normal_metrics(n, n).to_dict()
        assert {"acc_11_25", "acc_22_5", "acc_30"} <= set(data)
        assert acc_key(11.25) == "acc_11_25"

    def test_lower_median(self):
        """Test the even-count median takes the lower middle value."""
        assert lower_median(np.array([4.0, 1.0, 3.0, 2.0])) == 2.0
        assert lower_median(np.array([5.0, 1.0, 3.0])) == 3.0


class TestTemporalMetrics:
    """Test cases for OPW, TC-RMSE, TC-Mean and TC-Abs."""

    def test_static(self):
        """Test identical frames with zero flow give 0."""
        d = scalar(np.random.default_rng(0).uniform(1, 2, (5, 5)))
        z = zero_flow(5, 5)
        assert opw(d, d, z) == 0.0
        assert tc_rmse(d, d, z) == 0.0

    def test_offset(self):
        """Test a constant offset c gives |c| for OPW and TC-RMSE."""
        d = scalar(np.full((4, 4), 1.0))
        z = zero_flow(4, 4)
        assert opw(d, scalar(np.full((4, 4), 0.75)), z) == pytest.approx(0.25)
        assert tc_rmse(d, scalar(np.full((4, 4), 1.25)), z) == pytest.approx(0.25)

    def test_orthogonal_normals(self):
        """Test orthogonal frames give 90 degrees TC-Mean."""
        nk = constant_normals([0, 0, 1], 3, 3)
        nk1 = constant_normals([1, 0, 0], 3, 3)
        assert tc_mean(nk, nk1, zero_flow(3, 3)) == pytest.approx(90.0)
        assert opw(nk, nk1, zero_flow(3, 3)) == pytest.approx(2.0)

    def test_tc_abs_rotating_gt(self):
        """Test a static prediction against gt rotating 5 degrees per frame."""
        pred = constant_normals([0, 0, 1], 3, 3)
        gt_k = _tilted([0.0] * 3, 3, 3)
        gt_k1 = _tilted([5.0] * 3, 3, 3)
        assert tc_abs(pred, pred, gt_k, gt_k1, zero_flow(3, 3)) == pytest.approx(5.0)
        assert tc_abs(gt_k, gt_k1, gt_k, gt_k1, zero_flow(3, 3)) == 0.0

    def test_warp_out_of_frame(self):
        """Test a flow leaving the frame everywhere raises."""
        d = scalar(np.ones((3, 3)))
        with pytest.raises(EmptyMaskError):
            opw(d, d, uniform_flow(10, 0, 3, 3))

    def test_loop_oracles(self):
        """Test every temporal metric against per-pixel loops with subpixel flow."""
        for seed in range(25):
            rng = np.random.default_rng(seed)
            dk = rng.uniform(1, 2, (16, 16))
            dk1 = rng.uniform(1, 2, (16, 16))
            nk = random_normals(rng, 16, 16)
            nk1 = random_normals(rng, 16, 16)
            gk = random_normals(rng, 16, 16)
            gk1 = random_normals(rng, 16, 16)
            flow = rng.uniform(-2, 2, (16, 16, 2))
            mk = rng.uniform(0, 1, (16, 16))
            fwd = VectorGrid.from_array(flow)
            mask = scalar(mk)

            depth_pairs = _warped_pairs(dk[..., None], dk1[..., None], flow, mk)
            diffs = [float(t[0] - s[0]) for t, s in depth_pairs]
            assert opw(scalar(dk), scalar(dk1), fwd, mask) == pytest.approx(
                sum(abs(d) for d in diffs) / len(diffs), rel=1e-9
            )
            assert tc_rmse(scalar(dk), scalar(dk1), fwd, mask) == pytest.approx(
                math.sqrt(sum(d * d for d in diffs) / len(diffs)), rel=1e-9
            )

            normal_pairs = _warped_pairs(nk.values, nk1.values, flow, mk, unit=True)
            angles = [_angle(t, s) for t, s in normal_pairs]
            assert tc_mean(nk, nk1, fwd, mask) == pytest.approx(
                sum(angles) / len(angles), rel=1e-9
            )
            l1 = [float(np.sum(np.abs(t - s))) for t, s in normal_pairs]
            assert opw(nk, nk1, fwd, mask) == pytest.approx(sum(l1) / len(l1), rel=1e-9)

            gt_pairs = _warped_pairs(gk.values, gk1.values, flow, mk, unit=True)
            gaps = [abs(_angle(*p) - _angle(*g)) for p, g in zip(normal_pairs, gt_pairs)]
            assert tc_abs(nk, nk1, gk, gk1, fwd, mask) == pytest.approx(
                sum(gaps) / len(gaps), rel=1e-9
            )

    def test_pair_metrics_foreground(self):
        """Test foreground restriction and the all-pixels mode."""
        rng = np.random.default_rng(3)
        normals = random_normals(rng, 6, 6)
        fg = np.zeros((6, 6))
        fg[:, :3] = 1.0
        f = frame(np.full((6, 6), 2.0), normals, fg)
        masked = pair_metrics(f, f, f, f, zero_flow(6, 6))
        full = pair_metrics(f, f, f, f, zero_flow(6, 6), foreground=False)
        assert masked.pixel_count == 18
        assert full.pixel_count == 36
        assert masked.opw == 0.0
        assert masked.tc_mean_deg == pytest.approx(0.0, abs=1e-5)
        assert masked.tc_abs_deg == pytest.approx(0.0, abs=1e-9)

    def test_pair_metrics_share_temporal_loss_mask(self):
        """Test with a backward flow OPW and TC-RMSE cover the forward temporal term's pixels."""
        rng = np.random.default_rng(8)
        ys, xs = np.mgrid[0:12, 0:12].astype(float)
        depth = 2.0 + 0.01 * xs + rng.normal(0, 1e-3, (12, 12))
        depth[:, 10:] = np.nan
        fg = np.ones((12, 12))
        fg[:2] = 0.0
        normals = random_normals(rng, 12, 12)
        k = frame(depth, normals, fg)
        k1 = frame(depth + rng.normal(0, 1e-3, (12, 12)), normals, fg)
        fwd, bwd = uniform_flow(0.5, 0, 12, 12), uniform_flow(-0.5, 0, 12, 12)
        cfg = LossConfig(edge_threshold=0.5)

        shared = pair_metrics(k, k1, k, k1, fwd, bwd_flow=bwd, cfg=cfg)
        term = temporal_depth_loss(k.depth, k1.depth, fwd, bwd, cfg, k.mask, k1.mask)
        support = temporal_mask(fwd, bwd, k.depth, k.mask, cfg)
        pair = flow_aligned_difference(k.depth, k1.depth, fwd, support)
        diff = (pair.target - pair.warped)[pair.valid]

        assert shared.pixel_count == int(pair.valid.sum()) > 0
        assert shared.opw == pytest.approx(term.forward, rel=1e-12)
        assert shared.tc_rmse == pytest.approx(math.sqrt(np.mean(diff**2)), rel=1e-12)
        # the silhouette at column 10 and the round trip shrink the set
        assert shared.pixel_count < pair_metrics(k, k1, k, k1, fwd).pixel_count


def _jitter(normals, sigma, rng):
    """Unit normals perturbed by isotropic Gaussian noise of scale sigma."""
    n = normals.values + rng.normal(scale=sigma, size=normals.values.shape)
    return VectorGrid.from_array(n / np.linalg.norm(n, axis=2, keepdims=True))


def _half_pixel_pair(size=32):
    """GT frames of a ramp moving half a pixel to the right, with its exact flows."""
    ys, xs = np.mgrid[0:size, 0:size].astype(float)
    depth = 2.0 + 0.02 * xs + 0.01 * ys
    normals = constant_normals([0.2, -0.1, -1.0], size, size)
    gt_k = frame(depth, normals)
    gt_k1 = frame(depth - 0.01, normals)
    return gt_k, gt_k1, uniform_flow(0.5, 0, size, size), uniform_flow(-0.5, 0, size, size)


class TestNoiseMonotonicity:
    """Test cases for metric growth under prediction noise."""

    def test_depth_metrics_grow_with_sigma(self):
        """Test doubling depth noise raises RMSE and AbsRel."""
        rng = np.random.default_rng(0)
        gt = scalar(rng.uniform(1, 5, (32, 32)))

        def noisy(sigma):
            pred = scalar(gt.values + rng.normal(scale=sigma, size=gt.shape))
            return depth_metrics(pred, gt, aligned=False)

        low, high = noisy(0.01), noisy(0.02)
        assert low.rmse < high.rmse
        assert low.absrel < high.absrel

    def test_normal_metrics_grow_with_sigma(self):
        """Test doubling normal noise raises the angular errors and never raises accuracy."""
        rng = np.random.default_rng(1)
        gt = random_normals(rng, 32, 32)
        low = normal_metrics(_jitter(gt, 0.01, rng), gt)
        high = normal_metrics(_jitter(gt, 0.02, rng), gt)
        assert low.mean_deg < high.mean_deg
        assert low.median_deg < high.median_deg
        for t in DEFAULT_THRESHOLDS:
            assert high.acc[t] <= low.acc[t]

    def test_temporal_metrics_grow_with_sigma(self):
        """Test doubling independent per-frame noise raises every temporal metric."""
        rng = np.random.default_rng(2)
        gt_k, gt_k1, fwd, _ = _half_pixel_pair()

        def noisy(sigma):
            preds = [
                FrameSample(
                    scalar(g.depth.values + rng.normal(scale=sigma, size=g.depth.shape)),
                    _jitter(g.normal, sigma, rng),
                    g.mask,
                )
                for g in (gt_k, gt_k1)
            ]
            return pair_metrics(preds[0], preds[1], gt_k, gt_k1, fwd)

        low, high = noisy(0.01), noisy(0.02)
        for name in ("opw", "tc_rmse", "opw_normal", "tc_mean_deg", "tc_abs_deg"):
            assert getattr(low, name) < getattr(high, name), name

    def test_independent_noise_beats_constant_noise(self):
        """Test noise redrawn every frame scores worse than one noise image held fixed."""
        rng = np.random.default_rng(3)
        gt_k, gt_k1, fwd, _ = _half_pixel_pair()
        shape = gt_k.depth.shape
        sigma = 0.02

        def predict(depth_noise, normal_noise):
            return [
                FrameSample(
                    scalar(g.depth.values + dn),
                    VectorGrid.from_array(
                        (g.normal.values + nn)
                        / np.linalg.norm(g.normal.values + nn, axis=2, keepdims=True)
                    ),
                    g.mask,
                )
                for g, dn, nn in zip((gt_k, gt_k1), depth_noise, normal_noise)
            ]

        fixed_d = rng.normal(scale=sigma, size=shape)
        fixed_n = rng.normal(scale=sigma, size=shape + (3,))
        constant = predict([fixed_d, fixed_d], [fixed_n, fixed_n])
        independent = predict(
            [rng.normal(scale=sigma, size=shape) for _ in range(2)],
            [rng.normal(scale=sigma, size=shape + (3,)) for _ in range(2)],
        )

        held = pair_metrics(constant[0], constant[1], gt_k, gt_k1, fwd)
        redrawn = pair_metrics(independent[0], independent[1], gt_k, gt_k1, fwd)
        for name in ("opw", "tc_rmse", "opw_normal", "tc_mean_deg", "tc_abs_deg"):
            assert getattr(held, name) < getattr(redrawn, name), name


class TestAggregate:
    """Test cases for dataset-level aggregation."""

    def test_single_record(self):
        """Test one record aggregates to itself."""
        record = {"rmse": 0.5, "absrel": 0.1, "pixel_count": 10}
        assert aggregate([record]) == {"count": 1, "rmse": 0.5, "absrel": 0.1, "pixel_count": 10}

    def test_mean_of_two(self):
        """Test records (0, x) average to x / 2."""
        out = aggregate([{"rmse": 0.0, "mean_deg": 0.0}, {"rmse": 3.0, "mean_deg": 9.0}])
        assert out["rmse"] == 1.5
        assert out["mean_deg"] == 4.5

    def test_order_invariant(self):
        """Test permuting records leaves every field unchanged."""
        rng = np.random.default_rng(0)
        records = [
            {"opw": float(v), "tc_rmse": float(w), "pixel_count": int(n)}
            for v, w, n in zip(rng.uniform(size=20), rng.uniform(size=20), rng.integers(1, 50, 20))
        ]
        shuffled = [records[i] for i in rng.permutation(20)]
        assert aggregate(records) == aggregate(shuffled)
        assert aggregate(records, pooled=True) == aggregate(shuffled, pooled=True)

    def test_pooled(self):
        """Test pixel-weighted pooling, RMS fields pooled as root mean square."""
        records = [
            {"rmse": 1.0, "absrel": 1.0, "pixel_count": 1},
            {"rmse": 3.0, "absrel": 3.0, "pixel_count": 3},
        ]
        out = aggregate(records, pooled=True)
        assert out["rmse"] == pytest.approx(math.sqrt(7.0))
        assert out["absrel"] == pytest.approx(2.5)
        assert out["pixel_count"] == 4

    def test_pooled_absrel_uses_its_own_count(self):
        """Test pooled AbsRel is weighted by absrel_count, not pixel_count."""
        records = [
            {"absrel": 1.0, "pixel_count": 10, "absrel_count": 1},
            {"absrel": 3.0, "pixel_count": 10, "absrel_count": 3},
        ]
        out = aggregate(records, pooled=True)
        assert out["absrel"] == pytest.approx(2.5)
        assert out["absrel_count"] == 4
        assert aggregate(records)["absrel"] == pytest.approx(2.0)

    def test_none_values(self):
        """Test None entries are skipped; an all-None field stays None."""
        records = [{"absrel": None, "x": None, "frame": 0}, {"absrel": 0.4, "x": None, "frame": 1}]
        out = aggregate(records)
        assert out["absrel"] == 0.4
        assert out["x"] is None
        assert "frame" not in out

    def test_booleans_not_averaged(self):
        """Test flag fields are left out of the numeric summary."""
        out = aggregate([{"degenerate": True, "rmse": 1.0}])
        assert "degenerate" not in out

    def test_empty(self):
        """Test zero records raise."""
        with pytest.raises(EmptyMaskError):
            aggregate([])
