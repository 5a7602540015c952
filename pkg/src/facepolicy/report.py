"""Figure rendering for training logs and evaluation reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import EvalResult  # noqa: E402


def plot_loss_curve(losses: list[float], path: str | Path) -> None:
    """Per-step training loss on a log scale."""
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(np.arange(1, len(losses) + 1), losses, lw=0.8)
    ax.set_xlabel("optimizer step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.set_title("training loss")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_metric_bars(result: EvalResult, out_dir: str | Path) -> list[Path]:
    """Per-sequence MVE and FDD bar charts; returns written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    names = [r.name for r in result.rows]
    for key, values, mean in (
        ("mve", [r.mve_mm for r in result.rows], result.mean_mve),
        ("fdd", [r.fdd_mm for r in result.rows], result.mean_fdd),
    ):
        fig, ax = plt.subplots(figsize=(max(5, 0.6 * len(names) + 2), 4))
        ax.bar(np.arange(len(names)), values, color="#4878a8")
        ax.axhline(mean, color="#a84848", lw=1.2, label=f"mean = {mean:.6g}")
        ax.set_xticks(np.arange(len(names)))
        ax.set_xticklabels(names, rotation=45, ha="right", fontsize=8)
        ax.set_ylabel(f"{key.upper()} (mm)")
        ax.legend()
        fig.tight_layout()
        path = out_dir / f"{key}_per_sequence.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written


def plot_error_curves(curves: dict[str, np.ndarray], out_dir: str | Path) -> Path:
    """Per-frame mean vertex error for each evaluated pair."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(7, 4))
    for name, errs in curves.items():
        ax.plot(errs, lw=1.0, label=name)
    ax.set_xlabel("frame")
    ax.set_ylabel("mean vertex error (mm)")
    if len(curves) <= 12:
        ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    path = out_dir / "error_curves.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
