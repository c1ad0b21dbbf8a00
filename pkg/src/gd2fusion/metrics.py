"""Fusion quality metrics on the BT.601 luminance plane scaled to [0, 255]."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

@dataclass
class MetricReport:
    ag: float
    ei: float
    sd: float
    sf: float
    mi: float | None = None

    def as_dict(self) -> dict:
        return asdict(self)


def luminance(image) -> np.ndarray:
    """(3, H, W) RGB in [0, 1] -> (H, W) luminance in [0, 255]; 2-D input is taken as [0, 1] gray."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 2:
        return arr * 255.0
    if arr.ndim == 3 and arr.shape[0] == 3:
        return (0.299 * arr[0] + 0.587 * arr[1] + 0.114 * arr[2]) * 255.0
    raise ValueError(f"expected (3, H, W) or (H, W) image, got shape {arr.shape}")


def metric_ag(y: np.ndarray) -> float:
    """Average gradient over the (M-1) x (N-1) forward-difference grid."""
    y = np.asarray(y, dtype=np.float64)
    if min(y.shape) < 2:
        return 0.0
    dx = y[:-1, 1:] - y[:-1, :-1]
    dy = y[1:, :-1] - y[:-1, :-1]
    return float(np.mean(np.sqrt((dx**2 + dy**2) / 2)))


def _sobel_pair(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # separable form: flat regions give exact zeros
    p = np.pad(y, 1, mode="reflect")
    dx = p[:, 2:] - p[:, :-2]
    dy = p[2:, :] - p[:-2, :]
    gx = dx[:-2] + 2 * dx[1:-1] + dx[2:]
    gy = dy[:, :-2] + 2 * dy[:, 1:-1] + dy[:, 2:]
    return gx, gy


def metric_ei(y: np.ndarray) -> float:
    y = np.asarray(y, dtype=np.float64)
    if min(y.shape) < 2:
        return 0.0
    gx, gy = _sobel_pair(y)
    return float(np.mean(np.sqrt(gx**2 + gy**2)))


def metric_sd(y: np.ndarray) -> float:
    return float(np.std(np.asarray(y, dtype=np.float64)))


def metric_sf(y: np.ndarray) -> float:
    y = np.asarray(y, dtype=np.float64)
    mn = y.size
    rf = np.sqrt(np.sum((y[:, 1:] - y[:, :-1]) ** 2) / mn)
    cf = np.sqrt(np.sum((y[1:, :] - y[:-1, :]) ** 2) / mn)
    return float(np.sqrt(rf**2 + cf**2))


def _quantize(y: np.ndarray) -> np.ndarray:
    return np.clip(np.round(y), 0, 255).astype(np.int64)


def mutual_information_bits(a: np.ndarray, b: np.ndarray) -> float:
    """MI of two [0, 255] planes from their 256-bin joint histogram, in bits."""
    qa, qb = _quantize(a).ravel(), _quantize(b).ravel()
    joint = np.bincount(qa * 256 + qb, minlength=256 * 256).reshape(256, 256).astype(np.float64)
    joint /= joint.sum()
    pa = joint.sum(axis=1)
    pb = joint.sum(axis=0)
    nz = joint > 0
    ratio = joint[nz] / (pa[:, None] * pb[None, :])[nz]
    return float(np.sum(joint[nz] * np.log(ratio)) / np.log(2.0))


def metric_mi(fused: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    return mutual_information_bits(fused, a) + mutual_information_bits(fused, b)


def evaluate(fused, ir=None, vi=None) -> MetricReport:
    """All metrics for one RGB image in [0, 1]; MI only when both sources are given."""
    y = luminance(fused)
    mi = None
    if ir is not None and vi is not None:
        mi = metric_mi(y, luminance(ir), luminance(vi))
    return MetricReport(metric_ag(y), metric_ei(y), metric_sd(y), metric_sf(y), mi)
