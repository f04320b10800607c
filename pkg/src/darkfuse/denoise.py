"""Cross-modal noise suppression for paired event streams and RAW frames.

The event filter uses the frame sensor's illumination prior: where the
estimated background-activity rate is high, the temporal support window
shrinks, demanding denser evidence before an event is kept.  The image
filter runs the other way: a joint-bilateral pass steered by the edge map
extracted from the denoised events, so high-contrast structure survives
while flat regions are smoothed.  The two directions are tied together by
an intensity-consistency objective relating accumulated event polarities
to the log ratio of consecutive denoised frames.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputDomainError, NoSignalError
from .sensor import BaRateModel, EventStream, RawFrame, gaussian_blur_illumination


@dataclass
class EventFilterParams:
    """Spatiotemporal support filter with illumination-adaptive window.

    An event is kept iff at least min_support other events fall within
    Chebyshev radius neighbor_radius and within +/- the effective window
    dt_eff(x, y) = base_window_ns / (1 + rate_adaptivity * ba_rate(x, y)).
    rate_adaptivity scales the estimated BA rate (events/pixel/second).
    """

    neighbor_radius: int = 1
    min_support: int = 2
    base_window_ns: float = 20_000_000.0
    rate_adaptivity: float = 0.0

    def __post_init__(self):
        if self.neighbor_radius < 0:
            raise InputDomainError("neighbor_radius must be >= 0")
        if self.min_support < 1:
            raise InputDomainError("min_support must be >= 1")
        if not self.base_window_ns > 0:
            raise InputDomainError("base_window_ns must be > 0")
        if self.rate_adaptivity < 0:
            raise InputDomainError("rate_adaptivity must be >= 0")


@dataclass
class ImageFilterParams:
    """Joint-bilateral image filter steered by an event edge map.

    spatial_sigma is shrunk pointwise to spatial_sigma * (1 - edge_attenuation
    * edge(x, y)); range_sigma acts on the [0, 1]-normalized guidance map.
    """

    spatial_sigma: float = 2.0
    range_sigma: float = 0.2
    edge_attenuation: float = 0.8

    def __post_init__(self):
        if not self.spatial_sigma > 0:
            raise InputDomainError("spatial_sigma must be > 0")
        if not self.range_sigma > 0:
            raise InputDomainError("range_sigma must be > 0")
        if not 0.0 <= self.edge_attenuation <= 1.0:
            raise InputDomainError("edge_attenuation must be in [0, 1]")


@dataclass
class ConsistencyConfig:
    """Contrast scale and log stabilizer for the consistency objective."""

    contrast_scale: float
    eps: float = 1e-6

    def __post_init__(self):
        if not self.contrast_scale > 0:
            raise InputDomainError("contrast_scale must be > 0")
        if not self.eps > 0:
            raise InputDomainError("eps must be > 0")


def estimate_ba_rate(illumination: np.ndarray, model: BaRateModel) -> np.ndarray:
    """Pointwise background-activity rate from the illumination prior."""
    return model.rate(illumination)


def denoise_events(
    events: EventStream,
    illumination: np.ndarray,
    model: BaRateModel,
    params: EventFilterParams,
) -> EventStream:
    """Keep events with sufficient spatiotemporal support.

    The support window is narrowed where the illumination-estimated BA rate
    is high, so bright regions (dense BA) are filtered more aggressively.
    Output records are a subset of the input, order and tags preserved.
    """
    n = len(events)
    if n == 0:
        return events.take(np.zeros(0, dtype=np.int64))
    illum = np.asarray(illumination, dtype=np.float64)
    if illum.shape != (events.height, events.width):
        raise InputDomainError("illumination shape must match sensor geometry")

    rate = estimate_ba_rate(illum, model)
    dt_eff = params.base_window_ns / (1.0 + params.rate_adaptivity * rate)
    dt_ev = dt_eff[events.y, events.x]

    t = events.t.astype(np.float64)
    left = np.searchsorted(t, t - dt_ev, side="left")
    right = np.searchsorted(t, t + dt_ev, side="right")

    r = params.neighbor_radius
    k = params.min_support
    x, y = events.x, events.y
    keep = np.zeros(n, dtype=bool)
    for i in range(n):
        lo, hi = left[i], right[i]
        cnt = np.count_nonzero(
            (np.abs(x[lo:hi] - x[i]) <= r) & (np.abs(y[lo:hi] - y[i]) <= r)
        ) - 1  # exclude the event itself
        keep[i] = cnt >= k
    return events.take(keep)


def event_edge_map(
    events: EventStream,
    window: tuple[int, int],
    blur_sigma: float = 1.0,
) -> np.ndarray:
    """Normalized edge-strength prior from accumulated event magnitudes.

    |signed count| per pixel, Gaussian-blurred, scaled by its 99th
    percentile and clipped to [0, 1].  An empty stream yields all zeros.
    """
    from .sensor import accumulate_events

    t0, t1 = int(window[0]), int(window[1])
    if not t0 < t1:
        raise InputDomainError("window must satisfy t0 < t1")
    mag = np.abs(accumulate_events(events, t0, t1))
    blurred = gaussian_blur_illumination(mag, blur_sigma)
    scale = np.percentile(blurred, 99.0)
    if scale <= 0:
        return np.zeros_like(blurred)
    return np.clip(blurred / scale, 0.0, 1.0)


def _normalized_gradient(values: np.ndarray) -> np.ndarray:
    """Central-difference gradient magnitude scaled to [0, 1] by its p99."""
    padded = np.pad(values, 1, mode="reflect")
    gx = 0.5 * (padded[1:-1, 2:] - padded[1:-1, :-2])
    gy = 0.5 * (padded[2:, 1:-1] - padded[:-2, 1:-1])
    mag = np.hypot(gx, gy)
    scale = np.percentile(mag, 99.0)
    if scale <= 0:
        return np.zeros_like(mag)
    return np.clip(mag / scale, 0.0, 1.0)


def denoise_raw(
    raw: RawFrame,
    edge: np.ndarray,
    params: ImageFilterParams,
) -> RawFrame:
    """Edge-steered joint-bilateral filter on a RAW frame.

    Guidance is the pointwise max of the frame's own normalized gradient
    and the event edge map; the range kernel compares guidance values and
    the spatial kernel shrinks where the edge map is strong.  With a huge
    range_sigma and zero edge_attenuation this degenerates to the plain
    sampled-Gaussian blur of gaussian_blur_illumination.
    """
    edge = np.asarray(edge, dtype=np.float64)
    if edge.shape != raw.values.shape:
        raise InputDomainError(
            f"edge map shape {edge.shape} does not match frame {raw.values.shape}"
        )
    values = raw.values
    guide = np.maximum(_normalized_gradient(values), edge)

    sigma_eff = params.spatial_sigma * (1.0 - params.edge_attenuation * edge)
    sigma_eff = np.maximum(sigma_eff, 1e-6)
    radius = int(3.0 * params.spatial_sigma + 0.5)

    pad_v = np.pad(values, radius, mode="reflect")
    pad_g = np.pad(guide, radius, mode="reflect")
    h, w = values.shape
    num = np.zeros_like(values)
    den = np.zeros_like(values)
    inv_2s2 = 1.0 / (2.0 * sigma_eff**2)
    inv_2r2 = 1.0 / (2.0 * params.range_sigma**2)
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            v = pad_v[radius + dy : radius + dy + h, radius + dx : radius + dx + w]
            g = pad_g[radius + dy : radius + dy + h, radius + dx : radius + dx + w]
            wgt = np.exp(-(dy * dy + dx * dx) * inv_2s2 - (g - guide) ** 2 * inv_2r2)
            num += wgt * v
            den += wgt
    out = num / den
    return RawFrame(values=np.maximum(out, 0.0), gain=raw.gain, timestamp_ns=raw.timestamp_ns)


def intensity_consistency_loss(
    accumulated: np.ndarray,
    raw_t: RawFrame,
    raw_prev: RawFrame,
    cfg: ConsistencyConfig,
) -> float:
    """Mean L1 gap between event amplitude and the frame log ratio.

    loss = mean | E * C - log((R_t + eps) / (R_prev + eps)) |, where E is
    the signed event count per pixel over the inter-frame window.
    """
    acc = np.asarray(accumulated, dtype=np.float64)
    if acc.shape != raw_t.values.shape or raw_t.values.shape != raw_prev.values.shape:
        raise InputDomainError("accumulated map and frames must share one shape")
    if np.any(raw_t.values < 0) or np.any(raw_prev.values < 0):
        raise InputDomainError("frames must be >= 0")
    log_ratio = np.log(raw_t.values + cfg.eps) - np.log(raw_prev.values + cfg.eps)
    return float(np.mean(np.abs(acc * cfg.contrast_scale - log_ratio)))


def fit_contrast_scale(samples, eps: float = 1e-6) -> float:
    """Least-squares contrast scale from (accumulated, raw_t, raw_prev) triples.

    Minimizes sum (E*C - logratio)^2 over pixels with E != 0; closed form
    C = sum(E * logratio) / sum(E^2), clamped to be positive.
    """
    num = 0.0
    den = 0.0
    for accumulated, raw_t, raw_prev in samples:
        acc = np.asarray(accumulated, dtype=np.float64)
        vt = raw_t.values if isinstance(raw_t, RawFrame) else np.asarray(raw_t, dtype=np.float64)
        vp = raw_prev.values if isinstance(raw_prev, RawFrame) else np.asarray(raw_prev, dtype=np.float64)
        vt = np.maximum(vt, 0.0)  # pedestal ADC frames may dip below zero
        vp = np.maximum(vp, 0.0)
        mask = acc != 0
        if not np.any(mask):
            continue
        log_ratio = np.log(vt[mask] + eps) - np.log(vp[mask] + eps)
        e = acc[mask]
        num += float(np.sum(e * log_ratio))
        den += float(np.sum(e * e))
    if den == 0.0:
        raise NoSignalError("no pixels with nonzero accumulated events")
    return max(num / den, 1e-12)
