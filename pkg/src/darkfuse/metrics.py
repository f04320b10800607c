"""Image quality metrics, training objectives, and tabular reports."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputDomainError

# Value written to CSV in place of an infinite PSNR, keeping files numeric.
PSNR_SENTINEL_DB = 99.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass
class LossWeights:
    """Relative weights of the gradient and consistency terms."""

    grad: float = 10.0
    cons: float = 0.5

    def __post_init__(self):
        if self.grad < 0 or self.cons < 0:
            raise InputDomainError("loss weights must be >= 0")


def psnr(a: np.ndarray, b: np.ndarray, peak: float) -> float:
    """10 log10(peak^2 / MSE); +inf when the images are identical."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InputDomainError(f"shape mismatch: {a.shape} vs {b.shape}")
    if not peak > 0:
        raise InputDomainError("peak must be > 0")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _ssim_window() -> np.ndarray:
    half = SSIM_WINDOW // 2
    xs = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-0.5 * (xs / SSIM_SIGMA) ** 2)
    win = np.outer(k, k)
    return win / win.sum()


def ssim(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """Mean local SSIM over valid 11x11 Gaussian windows (sigma 1.5)."""
    from scipy.signal import correlate2d

    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InputDomainError(f"shape mismatch: {a.shape} vs {b.shape}")
    if min(a.shape) < SSIM_WINDOW:
        raise InputDomainError(f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW}")
    if not peak > 0:
        raise InputDomainError("peak must be > 0")

    win = _ssim_window()
    mu_a = correlate2d(a, win, mode="valid")
    mu_b = correlate2d(b, win, mode="valid")
    e_aa = correlate2d(a * a, win, mode="valid")
    e_bb = correlate2d(b * b, win, mode="valid")
    e_ab = correlate2d(a * b, win, mode="valid")
    var_a = e_aa - mu_a * mu_a
    var_b = e_bb - mu_b * mu_b
    cov = e_ab - mu_a * mu_b

    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def rec_loss(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean absolute pixel error."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise InputDomainError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    return float(np.mean(np.abs(pred - gt)))


def _sobel_pair(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    from scipy.ndimage import sobel

    gx = sobel(img, axis=1, mode="mirror")
    gy = sobel(img, axis=0, mode="mirror")
    return gx, gy


def grad_loss(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean absolute Sobel-gradient error, averaged over both components."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise InputDomainError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    pgx, pgy = _sobel_pair(pred)
    ggx, ggy = _sobel_pair(gt)
    return float(0.5 * (np.mean(np.abs(pgx - ggx)) + np.mean(np.abs(pgy - ggy))))


def total_loss(rec: float, grad: float, cons: float, weights: LossWeights) -> float:
    """rec + w_grad * grad + w_cons * cons."""
    for v in (rec, grad, cons):
        if not math.isfinite(v):
            raise InputDomainError("loss components must be finite")
    return rec + weights.grad * grad + weights.cons * cons


def region_snr_stats(
    snr: np.ndarray, regions: dict[str, np.ndarray]
) -> tuple[dict[str, float], list[str]]:
    """Mean SNR per labeled region; empty regions are flagged and skipped."""
    snr = np.asarray(snr, dtype=np.float64)
    means: dict[str, float] = {}
    empty: list[str] = []
    for name, mask in regions.items():
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != snr.shape:
            raise InputDomainError(f"region {name!r} mask shape mismatch")
        if not mask.any():
            empty.append(name)
            continue
        means[name] = float(snr[mask].mean())
    return means, empty


_BASE_COLUMNS = ["image_id", "psnr_db", "ssim", "l_rec", "l_grad", "l_cons", "l_total"]


@dataclass
class MetricReport:
    """Per-image metric rows plus aggregates, exportable as CSV.

    Rows are dicts keyed by the base CSV columns; any extra keys (ablation
    modes, denoising precision/recall) become additional columns.
    """

    rows: list[dict] = field(default_factory=list)

    def add_row(self, **kwargs) -> None:
        self.rows.append(dict(kwargs))

    def columns(self) -> list[str]:
        extras: list[str] = []
        for row in self.rows:
            for key in row:
                if key not in _BASE_COLUMNS and key not in extras:
                    extras.append(key)
        return _BASE_COLUMNS + extras

    def aggregate(self) -> dict[str, tuple[float, float]]:
        """(mean, std) per numeric column, infinities capped at the sentinel."""
        out: dict[str, tuple[float, float]] = {}
        for col in self.columns():
            vals = [
                _cap(row[col]) for row in self.rows
                if col in row and isinstance(row[col], (int, float))
            ]
            if vals:
                arr = np.asarray(vals, dtype=np.float64)
                out[col] = (float(arr.mean()), float(arr.std()))
        return out

    def mean(self, col: str) -> float:
        agg = self.aggregate()
        if col not in agg:
            raise InputDomainError(f"no numeric values for column {col!r}")
        return agg[col][0]

    def to_csv(self, path) -> None:
        cols = self.columns()
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(cols)
            for row in self.rows:
                writer.writerow([_fmt(row.get(c, "")) for c in cols])
            agg = self.aggregate()
            writer.writerow(
                ["mean"] + [_fmt(agg[c][0]) if c in agg else "" for c in cols[1:]]
            )
            writer.writerow(
                ["std"] + [_fmt(agg[c][1]) if c in agg else "" for c in cols[1:]]
            )


def _cap(value):
    if isinstance(value, float) and math.isinf(value):
        return PSNR_SENTINEL_DB if value > 0 else -PSNR_SENTINEL_DB
    return float(value)


def _fmt(value):
    if isinstance(value, float):
        return f"{_cap(value):.6f}"
    return value
