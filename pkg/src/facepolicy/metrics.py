"""Evaluation metrics: mean vertex error and facial dynamics deviation.

MVE is the mean over frames and vertices of the per-vertex Euclidean error
in mm. FDD compares how much each masked (upper-face) vertex moves: for each
vertex the per-frame displacement magnitude from the template is reduced to
its population standard deviation over time, and FDD is the mean signed
difference of that dynamic between prediction and ground truth.

Table-style output reports raw mm values together with the conventional
scaled columns (FDD in 1e-5 mm, MVE in 1e-3 mm).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .formats import read_fanim
from .geom import FaceTemplate, VertexSequence


class MetricError(ValueError):
    """Raised for shape mismatches or empty masks."""


@dataclass(frozen=True)
class RegionMask:
    indices: np.ndarray
    name: str = "upper_face"

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.size > 0 and (idx.min() < 0 or np.unique(idx).size != idx.size):
            raise MetricError("mask indices must be unique and non-negative")
        object.__setattr__(self, "indices", idx)


def upper_face_mask(template: FaceTemplate, vertical_axis: int = 1) -> RegionMask:
    """Vertices in the top half of the template's vertical extent."""
    coord = template.vertices[:, vertical_axis]
    mid = (coord.min() + coord.max()) / 2.0
    return RegionMask(np.flatnonzero(coord >= mid))


def mve(pred: VertexSequence, gt: VertexSequence) -> float:
    """Mean per-vertex Euclidean error over all frames (mm)."""
    if pred.frames.shape != gt.frames.shape:
        raise MetricError(
            f"shape mismatch: pred {pred.frames.shape} vs gt {gt.frames.shape}"
        )
    return float(np.mean(np.linalg.norm(pred.frames - gt.frames, axis=2)))


def frame_error_curve(pred: VertexSequence, gt: VertexSequence) -> np.ndarray:
    """Per-frame mean vertex Euclidean error: [N]."""
    if pred.frames.shape != gt.frames.shape:
        raise MetricError(
            f"shape mismatch: pred {pred.frames.shape} vs gt {gt.frames.shape}"
        )
    return np.mean(np.linalg.norm(pred.frames - gt.frames, axis=2), axis=1)


def _dynamics(frames: np.ndarray, template: np.ndarray, indices: np.ndarray) -> np.ndarray:
    """Population std over time of displacement magnitude from the template."""
    disp = np.linalg.norm(frames[:, indices, :] - template[indices, :], axis=2)
    return np.std(disp, axis=0)  # ddof = 0


def fdd(pred: VertexSequence, gt: VertexSequence, template: FaceTemplate,
        mask: RegionMask) -> float:
    """Mean signed dynamics deviation over masked vertices (mm)."""
    if pred.frames.shape != gt.frames.shape:
        raise MetricError(
            f"shape mismatch: pred {pred.frames.shape} vs gt {gt.frames.shape}"
        )
    if mask.indices.size == 0:
        raise MetricError("empty region mask")
    if mask.indices.max() >= template.num_vertices:
        raise MetricError("mask index outside template")
    dyn_pred = _dynamics(pred.frames, template.vertices, mask.indices)
    dyn_gt = _dynamics(gt.frames, template.vertices, mask.indices)
    return float(np.mean(dyn_pred - dyn_gt))


@dataclass
class SequenceMetrics:
    name: str
    mve_mm: float
    fdd_mm: float


@dataclass
class EvalResult:
    rows: list[SequenceMetrics]
    unpaired: list[str]
    mask_name: str

    @property
    def mean_mve(self) -> float:
        return float(np.mean([r.mve_mm for r in self.rows])) if self.rows else float("nan")

    @property
    def mean_fdd(self) -> float:
        return float(np.mean([r.fdd_mm for r in self.rows])) if self.rows else float("nan")

    def as_dict(self) -> dict:
        return {
            "sequences": [
                {
                    "name": r.name,
                    "mve_mm": r.mve_mm,
                    "fdd_mm": r.fdd_mm,
                    "mve_scaled_1e3": r.mve_mm * 1e3,
                    "fdd_scaled_1e5": r.fdd_mm * 1e5,
                }
                for r in self.rows
            ],
            "aggregate": {
                "mve_mm": self.mean_mve,
                "fdd_mm": self.mean_fdd,
                "mve_scaled_1e3": self.mean_mve * 1e3,
                "fdd_scaled_1e5": self.mean_fdd * 1e5,
            },
            "unpaired": self.unpaired,
            "mask": self.mask_name,
            "units": {
                "mve_scaled_1e3": "multiples of 1e-3 mm",
                "fdd_scaled_1e5": "multiples of 1e-5 mm",
            },
        }


def evaluate(pred_dir: str | Path, gt_dir: str | Path,
             mask: RegionMask | None = None,
             vertical_axis: int = 1) -> EvalResult:
    """Score every .fanim pair matched by filename across the two dirs.

    Unpaired files are listed and excluded. Without an explicit mask, the
    upper-face mask is derived from each ground-truth template.
    """
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    pred_files = {p.name: p for p in sorted(pred_dir.glob("*.fanim"))}
    gt_files = {p.name: p for p in sorted(gt_dir.glob("*.fanim"))}
    names = sorted(set(pred_files) & set(gt_files))
    unpaired = sorted(set(pred_files) ^ set(gt_files))
    rows = []
    mask_name = mask.name if mask is not None else "upper_face(auto)"
    for name in names:
        pred = read_fanim(pred_files[name])
        gt = read_fanim(gt_files[name])
        m = mask if mask is not None else upper_face_mask(gt.template, vertical_axis)
        rows.append(SequenceMetrics(
            name=name,
            mve_mm=mve(pred, gt),
            fdd_mm=fdd(pred, gt, gt.template, m),
        ))
    return EvalResult(rows, unpaired, mask_name)


def format_table(result: EvalResult) -> str:
    """Aligned text table with raw and paper-scale columns."""
    header = f"{'sequence':<24} {'MVE(mm)':>12} {'FDD(mm)':>12} {'MVE*1e3':>10} {'FDD*1e5':>10}"
    lines = [header, "-" * len(header)]
    for r in result.rows:
        lines.append(
            f"{r.name:<24} {r.mve_mm:>12.6f} {r.fdd_mm:>12.6f} "
            f"{r.mve_mm * 1e3:>10.3f} {r.fdd_mm * 1e5:>10.3f}"
        )
    lines.append("-" * len(header))
    lines.append(
        f"{'mean':<24} {result.mean_mve:>12.6f} {result.mean_fdd:>12.6f} "
        f"{result.mean_mve * 1e3:>10.3f} {result.mean_fdd * 1e5:>10.3f}"
    )
    for name in result.unpaired:
        lines.append(f"unpaired (excluded): {name}")
    return "\n".join(lines)
