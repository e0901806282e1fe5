"""Image- and shape-fidelity metrics plus the batch evaluation report.

PSNR and SSIM compare generated images against ground truth; the T-pose
vertex error compares body shapes irrespective of global scale. Perceptual
(neural) scores are deliberately not computed here — a per-pair score file
from an external tool can be merged into the report instead.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import correlate1d

from .bodymodel import BodyModel, shaped_template

#: JSON marker used in place of an unrepresentable infinite PSNR.
PSNR_INFINITE_MARKER = "infinite"


class MetricError(Exception):
    pass


def _to_luma(image: np.ndarray) -> np.ndarray:
    """float64 grayscale; color inputs collapse via ITU-R BT.601 luma."""
    image = np.asarray(image)
    if image.ndim == 2:
        return image.astype(np.float64)
    if image.ndim == 3 and image.shape[2] == 3:
        r = image[..., 0].astype(np.float64)
        g = image[..., 1].astype(np.float64)
        b = image[..., 2].astype(np.float64)
        return 0.299 * r + 0.587 * g + 0.114 * b
    raise MetricError(f"expected HxW or HxWx3 image, got shape {image.shape}")


def psnr(generated: np.ndarray, ground_truth: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB against a 255 peak.

    Identical images return math.inf; reports serialize that as null with
    an explicit marker since JSON has no infinity.
    """
    a = _to_luma(generated)
    b = _to_luma(ground_truth)
    if a.shape != b.shape:
        raise MetricError(f"image dimensions differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0**2 / mse)


def _gaussian_kernel(window: int, sigma: float) -> np.ndarray:
    half = window // 2
    x = np.arange(window, dtype=np.float64) - half
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    return g / g.sum()


def ssim(
    generated: np.ndarray,
    ground_truth: np.ndarray,
    window: int = 11,
    sigma: float = 1.5,
    k1: float = 0.01,
    k2: float = 0.03,
    data_range: float = 255.0,
) -> float:
    """Mean structural similarity over all fully-valid Gaussian windows.

    Window statistics come from separable Gaussian filtering; only pixels
    whose window lies entirely inside the image contribute, which keeps the
    result identical to a per-window brute-force evaluation.
    """
    a = _to_luma(generated)
    b = _to_luma(ground_truth)
    if a.shape != b.shape:
        raise MetricError(f"image dimensions differ: {a.shape} vs {b.shape}")
    if min(a.shape) < window:
        raise MetricError(f"image {a.shape} is smaller than the {window}px window")

    g = _gaussian_kernel(window, sigma)

    def blur(img):
        return correlate1d(correlate1d(img, g, axis=0), g, axis=1)

    mu_a = blur(a)
    mu_b = blur(b)
    var_a = blur(a * a) - mu_a * mu_a
    var_b = blur(b * b) - mu_b * mu_b
    cov = blur(a * b) - mu_a * mu_b

    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    ssim_map = num / den

    half = window // 2
    valid = ssim_map[half : a.shape[0] - half, half : a.shape[1] - half]
    return float(valid.mean())


# ---------------------------------------------------------------------------
# shape error
# ---------------------------------------------------------------------------


def pve_t_vertices(v_pred: np.ndarray, v_gt: np.ndarray) -> float:
    """Scale-corrected mean per-vertex error in millimeters.

    Both vertex sets are centered on their centroids, the prediction is
    rescaled by the least-squares-optimal uniform factor, and the mean
    Euclidean distance is returned ×1000. Invariant to any uniform scaling
    of the prediction; not symmetric in its arguments.
    """
    v_pred = np.asarray(v_pred, dtype=np.float64)
    v_gt = np.asarray(v_gt, dtype=np.float64)
    if v_pred.shape != v_gt.shape or v_pred.ndim != 2 or v_pred.shape[1] != 3:
        raise MetricError(
            f"vertex arrays must both be (V, 3); got {v_pred.shape} vs {v_gt.shape}"
        )
    p = v_pred - v_pred.mean(axis=0)
    g = v_gt - v_gt.mean(axis=0)
    pp = float(np.sum(p * p))
    if pp == 0.0:
        raise MetricError("prediction collapses to a single point; scale is undefined")
    s = float(np.sum(p * g)) / pp
    dist = np.linalg.norm(s * p - g, axis=1)
    return float(dist.mean()) * 1000.0


def pve_t_sc(beta_pred, beta_gt, model: BodyModel) -> float:
    """Shape error between two coefficient vectors, evaluated on the
    unposed template (mm)."""
    v_pred = shaped_template(model, beta_pred).vertices
    v_gt = shaped_template(model, beta_gt).vertices
    return pve_t_vertices(v_pred, v_gt)


# ---------------------------------------------------------------------------
# batch evaluation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvalReport:
    """Per-pair metric rows plus their means.

    ``rows`` entries: name, ssim, psnr (None when infinite, flagged via
    "psnr_note"), pve_t_sc_mm, optional lpips. Means skip infinite PSNR
    rows and say how many were skipped, so they stay recomputable from the
    rows alone.
    """

    rows: list
    means: dict
    counts: dict

    def to_json(self) -> str:
        return json.dumps(
            {"rows": self.rows, "means": self.means, "counts": self.counts}, indent=2
        )

    def to_text(self) -> str:
        headers = ["name", "SSIM", "PSNR(dB)", "PVE-T-SC(mm)"]
        has_lpips = any("lpips" in r for r in self.rows)
        if has_lpips:
            headers.insert(3, "LPIPS")
        lines = []
        fmt_rows = []
        for r in self.rows:
            psnr_txt = "inf" if r["psnr"] is None else f"{r['psnr']:.4f}"
            row = [r["name"], f"{r['ssim']:.4f}", psnr_txt]
            if has_lpips:
                row.append(f"{r['lpips']:.4f}" if "lpips" in r else "-")
            row.append(f"{r['pve_t_sc_mm']:.4f}")
            fmt_rows.append(row)
        mean_row = ["mean", f"{self.means['ssim']:.4f}"]
        mean_row.append("inf" if self.means["psnr"] is None else f"{self.means['psnr']:.4f}")
        if has_lpips:
            mean_row.append(
                f"{self.means['lpips']:.4f}" if self.means.get("lpips") is not None else "-"
            )
        mean_row.append(f"{self.means['pve_t_sc_mm']:.4f}")
        fmt_rows.append(mean_row)

        widths = [max(len(h), *(len(r[i]) for r in fmt_rows)) for i, h in enumerate(headers)]
        lines.append("  ".join(h.ljust(w) for h, w in zip(headers, widths)))
        lines.append("  ".join("-" * w for w in widths))
        for row in fmt_rows:
            lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)))
        return "\n".join(lines)


def evaluate(
    pred_dir: str | Path,
    gt_dir: str | Path,
    fits_dir: str | Path,
    model: BodyModel,
    lpips_file: str | Path | None = None,
) -> EvalReport:
    """Score every prediction against its ground-truth counterpart.

    Directory layout: ``pred_dir`` and ``gt_dir`` hold identically named
    images; ``fits_dir`` holds one ``<name>.json`` per image with
    ``beta_pred`` and ``beta_gt`` arrays. ``lpips_file``, when given, maps
    image names to externally computed perceptual scores.
    """
    import cv2

    pred_dir, gt_dir, fits_dir = Path(pred_dir), Path(gt_dir), Path(fits_dir)
    pred_names = sorted(p.name for p in pred_dir.iterdir() if p.suffix.lower() == ".png")
    gt_names = sorted(p.name for p in gt_dir.iterdir() if p.suffix.lower() == ".png")
    missing_pred = set(gt_names) - set(pred_names)
    missing_gt = set(pred_names) - set(gt_names)
    if missing_pred:
        raise MetricError(f"missing prediction for {sorted(missing_pred)[0]!r}")
    if missing_gt:
        raise MetricError(f"missing ground truth for {sorted(missing_gt)[0]!r}")
    if not pred_names:
        raise MetricError("no .png pairs to evaluate")

    lpips_scores = {}
    if lpips_file is not None:
        lpips_scores = json.loads(Path(lpips_file).read_text())

    rows = []
    n_infinite = 0
    for name in pred_names:
        pred = cv2.imread(str(pred_dir / name), cv2.IMREAD_UNCHANGED)
        gt = cv2.imread(str(gt_dir / name), cv2.IMREAD_UNCHANGED)
        if pred is None:
            raise MetricError(f"unreadable prediction image {name!r}")
        if gt is None:
            raise MetricError(f"unreadable ground-truth image {name!r}")
        fit_path = fits_dir / (Path(name).stem + ".json")
        if not fit_path.exists():
            raise MetricError(f"missing fit document {fit_path.name!r}")
        fit = json.loads(fit_path.read_text())
        try:
            beta_pred = np.asarray(fit["beta_pred"], dtype=np.float64)
            beta_gt = np.asarray(fit["beta_gt"], dtype=np.float64)
        except KeyError as exc:
            raise MetricError(f"fit {fit_path.name!r} lacks field {exc}") from exc

        p = psnr(pred, gt)
        row = {
            "name": name,
            "ssim": ssim(pred, gt),
            "psnr": None if math.isinf(p) else p,
            "pve_t_sc_mm": pve_t_sc(beta_pred, beta_gt, model),
        }
        if math.isinf(p):
            row["psnr_note"] = PSNR_INFINITE_MARKER
            n_infinite += 1
        if name in lpips_scores:
            row["lpips"] = float(lpips_scores[name])
        rows.append(row)

    finite_psnr = [r["psnr"] for r in rows if r["psnr"] is not None]
    lpips_vals = [r["lpips"] for r in rows if "lpips" in r]
    means = {
        "ssim": float(np.mean([r["ssim"] for r in rows])),
        "psnr": float(np.mean(finite_psnr)) if finite_psnr else None,
        "pve_t_sc_mm": float(np.mean([r["pve_t_sc_mm"] for r in rows])),
    }
    if lpips_vals:
        means["lpips"] = float(np.mean(lpips_vals))
    counts = {
        "pairs": len(rows),
        "psnr_infinite": n_infinite,
        "lpips_scored": len(lpips_vals),
    }
    return EvalReport(rows=rows, means=means, counts=counts)
