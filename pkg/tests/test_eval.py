"""IoU, greedy matching, PR curves, max F1, and the IoU-threshold sweep."""

import numpy as np
import pytest

from pvmap import evaluate as ev
from pvmap.errors import ShapeError, ValidationError
from pvmap.objects import DetectedObject


def block(r0, c0, h, w):
    rr, cc = np.mgrid[r0 : r0 + h, c0 : c0 + w]
    return np.stack([rr.ravel(), cc.ravel()], axis=1).astype(np.int32)


def det(pixels, conf):
    return DetectedObject(
        pixels,
        conf,
        (int(pixels[:, 0].min()), int(pixels[:, 1].min()), int(pixels[:, 0].max()), int(pixels[:, 1].max())),
        len(pixels),
    )


class TestIoU:
    def test_identity_and_disjoint(self):
        a = block(0, 0, 3, 3)
        assert ev.iou(a, a) == 1.0
        assert ev.iou(a, block(10, 10, 2, 2)) == 0.0

    def test_half_overlap_thirds(self):
        # 2x2 blocks offset by one column: 2 shared of 6 total
        assert ev.iou(block(0, 0, 2, 2), block(0, 1, 2, 2)) == pytest.approx(1 / 3)

    def test_brute_force_oracle(self, rng):
        for _ in range(30):
            a = rng.integers(0, 12, (rng.integers(1, 30), 2)).astype(np.int32)
            b = rng.integers(0, 12, (rng.integers(1, 30), 2)).astype(np.int32)
            sa = {tuple(p) for p in a.tolist()}
            sb = {tuple(p) for p in b.tolist()}
            assert ev.iou(a, b) == pytest.approx(len(sa & sb) / len(sa | sb))

    def test_symmetry(self, rng):
        a = rng.integers(0, 20, (40, 2)).astype(np.int32)
        b = rng.integers(0, 20, (25, 2)).astype(np.int32)
        assert ev.iou(a, b) == ev.iou(b, a)

    def test_both_empty_rejected(self):
        with pytest.raises(ValidationError):
            ev.iou(np.zeros((0, 2), np.int32), np.zeros((0, 2), np.int32))


class TestMatching:
    def test_perfect_single(self):
        t = block(2, 2, 4, 4)
        m = ev.match_detections([det(t, 0.9)], [t], 1.0)
        assert m.correct == [True]

    def test_duplicate_consumes_truth(self):
        truth = [block(0, 0, 4, 5)]
        d1 = det(block(0, 0, 4, 4), 0.9)  # IoU 16/20 = 0.8
        d2 = det(block(0, 1, 4, 4), 0.6)  # IoU 12/24 = 0.5... still >= 0.5
        m = ev.match_detections([d1, d2], truth, 0.5)
        assert m.correct == [True, False]
        assert m.truth_matched == [True]

    def test_low_iou_incorrect(self):
        d = det(block(0, 0, 2, 2), 0.8)  # IoU vs 4x5 truth = 4/20 = 0.2
        m = ev.match_detections([d], [block(0, 0, 4, 5)], 0.5)
        assert m.correct == [False]

    def test_never_more_correct_than_truths(self, rng):
        truth = [block(0, 0, 3, 3)]
        dets = [det(block(0, 0, 3, 3), 0.9), det(block(0, 0, 3, 3), 0.8)]
        m = ev.match_detections(dets, truth, 0.5)
        assert sum(m.correct) <= 1

    def test_bad_threshold_rejected(self):
        with pytest.raises(ValidationError):
            ev.match_detections([], [], 0.0)


class TestObjectPR:
    def test_hand_enumeration(self):
        curve = ev.object_pr([(0.9, True), (0.4, False)], 2)
        assert curve.taus.tolist() == [0.9, 0.4]
        assert curve.precision.tolist() == [1.0, 0.5]
        assert curve.recall.tolist() == [0.5, 0.5]

    def test_perfect_detector_hits_1_1(self):
        curve = ev.object_pr([(0.8, True), (0.7, True)], 2)
        assert curve.precision[-1] == 1.0 and curve.recall[-1] == 1.0

    def test_duplicate_confidences_collapse(self):
        curve = ev.object_pr([(0.5, True), (0.5, False), (0.3, True)], 3)
        assert curve.taus.tolist() == [0.5, 0.3]
        assert curve.precision[0] == pytest.approx(0.5)

    def test_empty_records_degenerate_point(self):
        curve = ev.object_pr([], 4)
        assert curve.precision.tolist() == [1.0] and curve.recall.tolist() == [0.0]

    def test_taus_strictly_decreasing_and_recall_monotone(self, rng):
        records = [(float(c), bool(k)) for c, k in zip(rng.random(50), rng.random(50) > 0.5)]
        curve = ev.object_pr(records, 30)
        assert (np.diff(curve.taus) < 0).all()
        assert (np.diff(curve.recall) >= 0).all()

    def test_zero_truth_rejected(self):
        with pytest.raises(ValidationError):
            ev.object_pr([(0.5, True)], 0)


class TestPixelPR:
    def test_perfect_map(self, rng):
        truth = (rng.random((24, 24)) > 0.7).astype(np.uint8)
        curve = ev.pixel_pr(truth.astype(np.float64), truth)
        at_half = np.argmin(np.abs(curve.taus - 0.5))
        assert curve.precision[at_half] == 1.0 and curve.recall[at_half] == 1.0
        assert ev.max_f1(curve) == 1.0

    def test_constant_half_map(self):
        truth = np.zeros((10, 10), np.uint8)
        truth[:3] = 1
        curve = ev.pixel_pr(np.full((10, 10), 0.5), truth)
        low = curve.taus <= 0.5
        assert np.allclose(curve.recall[low], 1.0)
        assert np.allclose(curve.precision[low], 0.3)

    def test_grid_matches_exhaustive_oracle(self, rng):
        pm = rng.random((16, 16))
        truth = (rng.random((16, 16)) > 0.6).astype(np.uint8)
        curve = ev.pixel_pr(pm, truth, levels=64)
        flat, lab = pm.ravel(), truth.ravel().astype(bool)
        for t, p, r in zip(curve.taus, curve.precision, curve.recall):
            above = flat >= t
            correct = int((above & lab).sum())
            assert r == pytest.approx(correct / lab.sum())
            if above.sum():
                assert p == pytest.approx(correct / above.sum())
            else:
                assert p == 1.0
        # grid quantization may only lose operating points, never invent them
        exhaustive = ev.object_pr(
            [(float(c), bool(k)) for c, k in zip(flat, lab)], int(lab.sum())
        )
        assert ev.max_f1(curve) <= ev.max_f1(exhaustive) + 1e-12
        assert ev.max_f1(curve) >= ev.max_f1(exhaustive) - 0.02

    def test_pools_across_scenes(self, rng):
        pms = [rng.random((8, 8)) for _ in range(3)]
        truths = [(rng.random((8, 8)) > 0.5).astype(np.uint8) for _ in range(3)]
        pooled = ev.pixel_pr(pms, truths)
        single = ev.pixel_pr(np.concatenate([p.ravel() for p in pms]).reshape(1, -1),
                             np.concatenate([t.ravel() for t in truths]).reshape(1, -1))
        assert np.allclose(pooled.precision, single.precision)
        assert np.allclose(pooled.recall, single.recall)

    def test_empty_truth_rejected(self, rng):
        with pytest.raises(ValidationError):
            ev.pixel_pr(rng.random((8, 8)), np.zeros((8, 8), np.uint8))

    def test_dims_mismatch_rejected(self, rng):
        with pytest.raises(ShapeError):
            ev.pixel_pr(rng.random((8, 8)), np.ones((9, 9), np.uint8))


class TestMaxF1:
    def test_perfect_point(self):
        assert ev.max_f1(ev.object_pr([(0.9, True)], 1)) == 1.0

    def test_harmonic_mean_of_equals(self):
        curve = ev.PRCurve(np.array([0.5]), np.array([0.5]), np.array([0.5]), 1, 1)
        assert ev.max_f1(curve) == pytest.approx(0.5)

    def test_hand_evaluated_two_points(self):
        curve = ev.PRCurve(
            np.array([0.9, 0.4]), np.array([1.0, 0.5]), np.array([0.5, 0.5]), 2, 2
        )
        assert ev.max_f1(curve) == pytest.approx(2 / 3)

    def test_zero_denominator_contributes_zero(self):
        curve = ev.PRCurve(np.array([0.5]), np.array([0.0]), np.array([0.0]), 1, 1)
        assert ev.max_f1(curve) == 0.0


class TestSweep:
    def test_perfect_detections_flat_at_one(self):
        truths = [block(0, 0, 4, 4), block(10, 10, 3, 5)]
        dets = [det(t, 0.9) for t in truths]
        rows = ev.iou_sweep(dets, truths, ev.DEFAULT_SWEEP)
        assert all(v == 1.0 for _, v in rows)

    def test_default_grid_includes_paper_thresholds(self):
        assert 0.1 in ev.DEFAULT_SWEEP and 0.5 in ev.DEFAULT_SWEEP

    def test_drop_between_04_and_05(self):
        # detection overlapping its truth at IoU 0.45: 9x5 block vs 9x11
        truth = [block(0, 0, 9, 11)]
        d = [det(block(0, 0, 9, 5), 0.9)]  # IoU = 45/99 = 0.4545
        rows = dict(ev.iou_sweep(d, truth, [0.4, 0.5]))
        assert rows[0.4] > 0.0 and rows[0.5] == 0.0

    def test_monotone_nonincreasing(self, rng):
        truths = [block(0, 0, 5, 5), block(20, 20, 6, 4), block(40, 5, 3, 9)]
        dets = [
            det(block(0, 1, 5, 5), 0.9),
            det(block(21, 20, 5, 4), 0.7),
            det(block(40, 40, 2, 2), 0.6),
        ]
        rows = ev.iou_sweep(dets, truths, ev.DEFAULT_SWEEP)
        vals = [v for _, v in rows]
        assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))

    def test_multi_scene_matching_stays_per_scene(self):
        t = block(0, 0, 4, 4)
        # scene 2's detection may not consume scene 1's truth
        rows = ev.iou_sweep([[det(t, 0.9)], [det(t, 0.8)]], [[t], []], [0.5])
        records, n_truth = ev.detection_records([[det(t, 0.9)], [det(t, 0.8)]], [[t], []], 0.5)
        assert n_truth == 1
        assert sorted(records) == [(0.8, False), (0.9, True)]

    def test_bad_grid_rejected(self):
        with pytest.raises(ValidationError):
            ev.iou_sweep([], [block(0, 0, 2, 2)], [0.5, 0.5])


class TestCSV:
    def test_pr_round_trip(self, tmp_path):
        curve = ev.object_pr([(0.9, True), (0.4, False)], 2)
        p = tmp_path / "pr.csv"
        ev.pr_to_csv(curve, p)
        again = ev.pr_from_csv(p)
        assert np.array_equal(again.taus, curve.taus)
        assert np.array_equal(again.precision, curve.precision)
        assert np.array_equal(again.recall, curve.recall)

    def test_sweep_round_trip(self, tmp_path):
        rows = [(0.1, 1.0), (0.5, 0.625)]
        p = tmp_path / "sweep.csv"
        ev.sweep_to_csv(rows, p)
        assert ev.sweep_from_csv(p) == rows

    def test_bad_header_rejected(self, tmp_path):
        p = tmp_path / "x.csv"
        p.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ValidationError):
            ev.pr_from_csv(p)
