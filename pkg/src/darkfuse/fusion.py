"""Per-pixel reliability weighting and fixed-bank feature encoding.

Each modality gets an SNR map computed from its denoising residual; the two
maps are smoothed and passed through a two-way softmax to produce fusion
weights that sum to one at every pixel.  Features come from a deterministic
8-channel filter bank so the whole stage is verifiable against dense
convolution oracles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputDomainError
from .sensor import RawFrame, gaussian_blur_illumination

# Clamp bound applied to SNR maps before weighting, in dB.
SNR_CLAMP_DB = 80.0

# Floor on the squared signal term; keeps log10 finite while leaving
# zero-signal pixels astronomically unreliable (then clamped to -80 dB).
_SIGNAL_FLOOR = 1e-300

# Saturated softmax outputs are nudged this far into the open interval so
# neither modality is ever weighted exactly 0 or 1 in float64.
_WEIGHT_FLOOR = 1e-15

FEATURE_CHANNELS = 8
_BANDPASS_SIGMAS = (1.0, 2.0, 4.0, 8.0)


@dataclass
class FusionConfig:
    """Smoothing size and softmax temperature for the weight maps."""

    smoothing_size: int = 5
    temperature: float = 1.0

    def __post_init__(self):
        if self.smoothing_size < 1 or self.smoothing_size % 2 == 0:
            raise InputDomainError("smoothing_size must be odd and >= 1")
        if not self.temperature > 0:
            raise InputDomainError("temperature must be > 0")


@dataclass
class WeightMap:
    """Per-pixel modality weights; w_img + w_evt == 1 everywhere."""

    w_img: np.ndarray
    w_evt: np.ndarray

    def __post_init__(self):
        if self.w_img.shape != self.w_evt.shape:
            raise InputDomainError("weight maps must share a shape")


def snr_map(m_in: np.ndarray, m_den: np.ndarray, eps: float = 1e-8) -> np.ndarray:
    """Per-pixel reliability in dB from the denoising residual.

    10 * log10(m_in^2 / ((m_in - m_den)^2 + eps)).  Zero-signal pixels fall
    to a very negative (but finite) value.
    """
    m_in = np.asarray(m_in, dtype=np.float64)
    m_den = np.asarray(m_den, dtype=np.float64)
    if m_in.shape != m_den.shape:
        raise InputDomainError("snr_map inputs must share a shape")
    if not eps > 0:
        raise InputDomainError("eps must be > 0")
    signal = np.maximum(m_in * m_in, _SIGNAL_FLOOR)
    residual = (m_in - m_den) ** 2 + eps
    return 10.0 * np.log10(signal / residual)


def voxel_magnitude(voxel: np.ndarray) -> np.ndarray:
    """Per-pixel event magnitude: |polarity mass| summed over temporal bins."""
    voxel = np.asarray(voxel, dtype=np.float64)
    if voxel.ndim != 3:
        raise InputDomainError("voxel grid must be (B, H, W)")
    return np.abs(voxel).sum(axis=0)


def _smooth(snr: np.ndarray, size: int) -> np.ndarray:
    from scipy.ndimage import uniform_filter

    clamped = np.clip(snr, -SNR_CLAMP_DB, SNR_CLAMP_DB)
    if size == 1:
        return clamped
    return uniform_filter(clamped, size=size, mode="mirror")


def fusion_weights(snr_img: np.ndarray, snr_evt: np.ndarray, cfg: FusionConfig) -> WeightMap:
    """Dual-modality weights: box-smooth both SNR maps, two-way softmax.

    Computed as a logistic of the smoothed SNR difference, which keeps
    w_img + w_evt == 1 exactly in floating point.
    """
    snr_img = np.asarray(snr_img, dtype=np.float64)
    snr_evt = np.asarray(snr_evt, dtype=np.float64)
    if snr_img.shape != snr_evt.shape:
        raise InputDomainError("SNR maps must share a shape")
    s_img = _smooth(snr_img, cfg.smoothing_size)
    s_evt = _smooth(snr_evt, cfg.smoothing_size)
    w_img = _logistic((s_img - s_evt) / cfg.temperature)
    w_img = np.clip(w_img, _WEIGHT_FLOOR, 1.0 - _WEIGHT_FLOOR)
    return WeightMap(w_img=w_img, w_evt=1.0 - w_img)


def image_snr_weights(
    snr_img: np.ndarray, cfg: FusionConfig, reference_db: float | None = None
) -> WeightMap:
    """Single-modality ablation: weight by image SNR alone.

    The event map is replaced by a reference level (the scene mean of the
    smoothed image SNR when reference_db is None), so events take over
    exactly where the image falls below that reliability bar, regardless of
    how trustworthy the events actually are.
    """
    s_img = _smooth(np.asarray(snr_img, dtype=np.float64), cfg.smoothing_size)
    reference = float(s_img.mean()) if reference_db is None else float(reference_db)
    w_img = _logistic((s_img - reference) / cfg.temperature)
    w_img = np.clip(w_img, _WEIGHT_FLOOR, 1.0 - _WEIGHT_FLOOR)
    return WeightMap(w_img=w_img, w_evt=1.0 - w_img)


def direct_weights(shape: tuple[int, int]) -> WeightMap:
    """No-guidance ablation: both modalities weighted 0.5 everywhere."""
    half = np.full(shape, 0.5)
    return WeightMap(w_img=half, w_evt=half.copy())


def _logistic(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def encode_features(data: np.ndarray | RawFrame) -> np.ndarray:
    """Fixed 8-channel feature bank.

    Channels: [value, d/dx, d/dy, Laplacian, 4 Gaussian band-pass levels].
    A (B, H, W) voxel grid is first collapsed to its signed-count image.
    All stencils use mirrored borders.
    """
    if isinstance(data, RawFrame):
        img = data.values
    else:
        img = np.asarray(data, dtype=np.float64)
        if img.ndim == 3:
            img = img.sum(axis=0)
    if img.ndim != 2:
        raise InputDomainError("features expect a 2-D image or a (B, H, W) voxel grid")
    if not np.all(np.isfinite(img)):
        raise InputDomainError("feature input must be finite")

    padded = np.pad(img, 1, mode="reflect")
    dx = 0.5 * (padded[1:-1, 2:] - padded[1:-1, :-2])
    dy = 0.5 * (padded[2:, 1:-1] - padded[:-2, 1:-1])
    lap = (
        padded[1:-1, 2:] + padded[1:-1, :-2] + padded[2:, 1:-1] + padded[:-2, 1:-1]
        - 4.0 * img
    )
    blurs = [gaussian_blur_illumination(img, s) for s in _BANDPASS_SIGMAS]
    bandpass = [img - blurs[0]]
    for a, b in zip(blurs[:-1], blurs[1:]):
        bandpass.append(a - b)
    return np.stack([img, dx, dy, lap, *bandpass])


def apply_weights(features: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Broadcast a spatial weight map over all feature channels."""
    features = np.asarray(features, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if features.ndim != 3:
        raise InputDomainError("features must be (C, H, W)")
    if weights.shape != features.shape[1:]:
        raise InputDomainError(
            f"weight shape {weights.shape} does not match feature grid {features.shape[1:]}"
        )
    return features * weights[None, :, :]
