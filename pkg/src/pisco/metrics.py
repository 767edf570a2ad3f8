"""Image quality metrics and temporal-profile extraction.

PSNR follows the protocol of clipping each magnitude image at its own 99th
percentile and min-max scaling to [0, 1] before comparison; both inputs are
normalized independently, so the measure is not symmetric in general.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from scipy.signal import convolve2d

PSNR_CAP_DB = 100.0


@dataclasses.dataclass
class MetricReport:
    psnr: list            # per-frame dB
    ssim: list            # per-frame [0, 1]

    @property
    def mean_psnr(self):
        return float(np.mean(self.psnr))

    @property
    def mean_ssim(self):
        return float(np.mean(self.ssim))


def normalize_for_metrics(image):
    """Magnitude clipped at its 99th percentile, then min-max scaled to [0,1].

    A constant image has no usable range and maps to all zeros.
    """
    mag = np.abs(np.asarray(image))
    if mag.size == 0:
        raise ValueError("empty image")
    hi = np.percentile(mag, 99)
    clipped = np.minimum(mag, hi)
    lo, hi = clipped.min(), clipped.max()
    if hi <= lo:
        return np.zeros_like(clipped)
    return (clipped - lo) / (hi - lo)


def psnr(test, reference):
    """Peak signal-to-noise ratio in dB between independently normalized images."""
    test = np.asarray(test)
    reference = np.asarray(reference)
    if test.shape != reference.shape:
        raise ValueError("image shapes differ")
    a = normalize_for_metrics(test)
    b = normalize_for_metrics(reference)
    mse = float(np.mean((a - b) ** 2))
    if mse < 1e-10:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP_DB)


def _gaussian_window(size=8, sigma=1.5):
    ax = np.arange(size) - (size - 1) / 2.0
    gx, gy = np.meshgrid(ax, ax, indexing="ij")
    w = np.exp(-(gx**2 + gy**2) / (2.0 * sigma**2))
    return w / w.sum()


def ssim(test, reference, window_size=8, sigma=1.5, k1=0.01, k2=0.03):
    """Structural similarity with a Gaussian window, clamped to [0, 1].

    Inputs are normalized with the same clipping protocol as psnr, so the
    dynamic range is 1.
    """
    test = np.asarray(test)
    reference = np.asarray(reference)
    if test.shape != reference.shape:
        raise ValueError("image shapes differ")
    if min(test.shape) < window_size:
        raise ValueError(f"images must be at least {window_size}x{window_size}")
    a = normalize_for_metrics(test)
    b = normalize_for_metrics(reference)
    w = _gaussian_window(window_size, sigma)
    c1, c2 = k1**2, k2**2

    mu_a = convolve2d(a, w, mode="valid")
    mu_b = convolve2d(b, w, mode="valid")
    var_a = convolve2d(a * a, w, mode="valid") - mu_a**2
    var_b = convolve2d(b * b, w, mode="valid") - mu_b**2
    cov = convolve2d(a * b, w, mode="valid") - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    value = float(np.mean(num / den))
    return min(max(value, 0.0), 1.0)


def temporal_profile(frames, axis, index):
    """Stack one image line across time.

    Images are indexed [ix, iy]. axis='xt' extracts frames[f][:, index]
    (all x at a fixed y) giving an (n_x, n_frames) profile; axis='yt'
    extracts frames[f][index, :] giving (n_y, n_frames).
    """
    if len(frames) < 2:
        raise ValueError("need at least 2 frames")
    if axis == "xt":
        if not 0 <= index < frames[0].shape[1]:
            raise ValueError("profile index out of range")
        cols = [np.asarray(f)[:, index] for f in frames]
    elif axis == "yt":
        if not 0 <= index < frames[0].shape[0]:
            raise ValueError("profile index out of range")
        cols = [np.asarray(f)[index, :] for f in frames]
    else:
        raise ValueError(f"unknown profile axis: {axis!r}")
    return np.stack(cols, axis=1)


def report(test_frames, reference_frames):
    """Per-frame PSNR/SSIM between two aligned frame lists."""
    if len(test_frames) != len(reference_frames):
        raise ValueError("frame counts differ")
    psnrs = [psnr(t, r) for t, r in zip(test_frames, reference_frames)]
    ssims = [ssim(t, r) for t, r in zip(test_frames, reference_frames)]
    return MetricReport(psnr=psnrs, ssim=ssims)
