import numpy as np
import pytest

from facepolicy.formats import write_fanim
from facepolicy.geom import FaceTemplate, VertexSequence
from facepolicy.metrics import (
    MetricError,
    RegionMask,
    evaluate,
    fdd,
    format_table,
    frame_error_curve,
    mve,
    upper_face_mask,
)


def seq_of(frames, template=None, fps=30.0):
    frames = np.asarray(frames, dtype=np.float64)
    template = FaceTemplate(template if template is not None else frames[0])
    return VertexSequence(frames, fps, template)


class TestMve:
    def test_identical_is_zero(self):
        rng = np.random.default_rng(0)
        x = seq_of(rng.normal(size=(4, 5, 3)))
        assert mve(x, x) == 0.0

    def test_unit_offset_is_one(self):
        rng = np.random.default_rng(1)
        gt = rng.normal(size=(3, 4, 3))
        pred = gt + np.array([1.0, 0.0, 0.0])
        assert abs(mve(seq_of(pred, gt[0]), seq_of(gt)) - 1.0) < 1e-12

    def test_matches_double_loop_oracle(self):
        rng = np.random.default_rng(2)
        gt = rng.normal(size=(3, 4, 3))
        pred = rng.normal(size=(3, 4, 3))
        total = 0.0
        for n in range(3):
            for v in range(4):
                d = pred[n, v] - gt[n, v]
                total += np.sqrt(d[0] ** 2 + d[1] ** 2 + d[2] ** 2)
        assert abs(mve(seq_of(pred, gt[0]), seq_of(gt)) - total / 12) < 1e-12

    def test_shape_mismatch_rejected(self):
        with pytest.raises(MetricError):
            mve(seq_of(np.zeros((2, 3, 3))), seq_of(np.zeros((3, 3, 3))))

    def test_nonnegative_and_zero_iff_equal(self):
        rng = np.random.default_rng(3)
        gt = rng.normal(size=(4, 6, 3))
        pred = gt.copy()
        pred[1, 2, 0] += 1e-9
        assert mve(seq_of(pred, gt[0]), seq_of(gt)) > 0.0


class TestFdd:
    def test_identical_is_zero(self):
        rng = np.random.default_rng(4)
        x = seq_of(rng.normal(size=(5, 6, 3)))
        mask = RegionMask(np.arange(6))
        assert fdd(x, x, x.template, mask) == 0.0

    def test_two_constant_sequences_give_zero(self):
        template = FaceTemplate(np.zeros((2, 3)))
        gt = seq_of(np.full((4, 2, 3), 1.0), template.vertices)
        pred = seq_of(np.full((4, 2, 3), 2.0), template.vertices)
        assert fdd(pred, gt, template, RegionMask(np.arange(2))) == 0.0

    def test_hand_computed_two_frame_case(self):
        # template at origin; gt displacement magnitudes {1,1} -> std 0;
        # pred {0,2} -> population std 1; FDD = 1
        template = FaceTemplate(np.zeros((1, 3)))
        gt = seq_of([[[1, 0, 0]], [[0, 1, 0]]], template.vertices)
        pred = seq_of([[[0, 0, 0]], [[2, 0, 0]]], template.vertices)
        value = fdd(pred, gt, template, RegionMask(np.array([0])))
        assert abs(value - 1.0) < 1e-12

    def test_antisymmetry(self):
        rng = np.random.default_rng(5)
        template = FaceTemplate(rng.normal(size=(5, 3)))
        gt = seq_of(rng.normal(size=(6, 5, 3)), template.vertices)
        pred = seq_of(rng.normal(size=(6, 5, 3)), template.vertices)
        mask = RegionMask(np.array([0, 2, 4]))
        f1 = fdd(pred, gt, template, mask)
        f2 = fdd(gt, pred, template, mask)
        assert abs(f1 + f2) < 1e-12

    def test_empty_mask_rejected(self):
        x = seq_of(np.zeros((2, 3, 3)))
        with pytest.raises(MetricError):
            fdd(x, x, x.template, RegionMask(np.array([], dtype=np.int64)))

    def test_mask_out_of_range_rejected(self):
        x = seq_of(np.zeros((2, 3, 3)))
        with pytest.raises(MetricError):
            fdd(x, x, x.template, RegionMask(np.array([5])))

    @pytest.mark.parametrize("c", [0.5, 2.0])
    def test_scale_equivariance(self, c):
        rng = np.random.default_rng(6)
        template = rng.normal(size=(5, 3))
        gt = rng.normal(size=(6, 5, 3))
        pred = rng.normal(size=(6, 5, 3))
        mask = RegionMask(np.arange(5))
        f = fdd(seq_of(pred, template), seq_of(gt, template),
                FaceTemplate(template), mask)
        fc = fdd(seq_of(c * pred, c * template), seq_of(c * gt, c * template),
                 FaceTemplate(c * template), mask)
        assert abs(fc - c * f) < 1e-9
        m = mve(seq_of(pred, template), seq_of(gt, template))
        mc = mve(seq_of(c * pred, c * template), seq_of(c * gt, c * template))
        assert abs(mc - c * m) < 1e-9


class TestUpperFaceMask:
    def test_top_half_of_vertical_extent(self):
        template = FaceTemplate(np.array([
            [0, 0.0, 0], [0, 0.4, 0], [0, 0.5, 0], [0, 1.0, 0],
        ]))
        mask = upper_face_mask(template)
        assert list(mask.indices) == [2, 3]


class TestEvaluate:
    def write_pair(self, d1, d2, name, pred, gt):
        write_fanim(d1 / name, pred)
        write_fanim(d2 / name, gt)

    def test_identical_directories_all_zero(self, tmp_path):
        pred_dir = tmp_path / "pred"
        gt_dir = tmp_path / "gt"
        pred_dir.mkdir(), gt_dir.mkdir()
        rng = np.random.default_rng(7)
        for i in range(2):
            x = seq_of(rng.normal(size=(4, 6, 3)).astype(np.float32))
            self.write_pair(pred_dir, gt_dir, f"s{i}.fanim", x, x)
        result = evaluate(pred_dir, gt_dir)
        assert len(result.rows) == 2
        assert all(r.mve_mm == 0.0 and r.fdd_mm == 0.0 for r in result.rows)
        assert result.unpaired == []

    def test_missing_pair_listed_and_excluded(self, tmp_path):
        pred_dir = tmp_path / "pred"
        gt_dir = tmp_path / "gt"
        pred_dir.mkdir(), gt_dir.mkdir()
        rng = np.random.default_rng(8)
        x = seq_of(rng.normal(size=(4, 6, 3)).astype(np.float32))
        self.write_pair(pred_dir, gt_dir, "a.fanim", x, x)
        write_fanim(pred_dir / "only_pred.fanim", x)
        write_fanim(gt_dir / "only_gt.fanim", x)
        result = evaluate(pred_dir, gt_dir)
        assert [r.name for r in result.rows] == ["a.fanim"]
        assert sorted(result.unpaired) == ["only_gt.fanim", "only_pred.fanim"]

    def test_aggregate_is_arithmetic_mean(self, tmp_path):
        pred_dir = tmp_path / "pred"
        gt_dir = tmp_path / "gt"
        pred_dir.mkdir(), gt_dir.mkdir()
        rng = np.random.default_rng(9)
        for i in range(2):
            gt = rng.normal(size=(5, 6, 3)).astype(np.float32).astype(np.float64)
            pred = gt + rng.normal(scale=0.1, size=gt.shape)
            self.write_pair(pred_dir, gt_dir, f"s{i}.fanim",
                            seq_of(pred.astype(np.float32), gt[0]), seq_of(gt))
        result = evaluate(pred_dir, gt_dir)
        assert abs(result.mean_mve
                   - (result.rows[0].mve_mm + result.rows[1].mve_mm) / 2) < 1e-12
        assert abs(result.mean_fdd
                   - (result.rows[0].fdd_mm + result.rows[1].fdd_mm) / 2) < 1e-12
        table = format_table(result)
        assert "mean" in table and "s0.fanim" in table
        as_dict = result.as_dict()
        assert as_dict["aggregate"]["mve_scaled_1e3"] == result.mean_mve * 1e3
        assert as_dict["aggregate"]["fdd_scaled_1e5"] == result.mean_fdd * 1e5


class TestFrameErrorCurve:
    def test_per_frame_means(self):
        gt = np.zeros((3, 2, 3))
        pred = np.zeros((3, 2, 3))
        pred[1, :, 0] = 2.0
        curve = frame_error_curve(seq_of(pred), seq_of(gt))
        assert np.allclose(curve, [0.0, 2.0, 0.0], atol=1e-15)
