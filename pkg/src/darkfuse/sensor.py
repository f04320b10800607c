"""Co-simulation of a frame sensor and an event sensor from one radiance field.

Both sensors observe the same time-indexed per-pixel photoelectron rates.
The frame path applies gain, Poisson shot noise, Gaussian read noise and ADC
quantization; the event path triggers on log-intensity threshold crossings
and can be polluted with illumination-correlated background activity (BA).

All randomness goes through counter-based Philox generators keyed on the
caller's seed, so identical (inputs, seed) reproduce bit-identical output.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputDomainError

# Event provenance tags.  The simulator labels every record it emits so that
# downstream denoising precision/recall can be measured exactly; real
# captures use PROV_UNKNOWN.
PROV_UNKNOWN = 0
PROV_SIGNAL = 1
PROV_NOISE = 2

# Trigger comparisons in log-intensity space use this dimensionless slack on
# the (delta_log / C) ratio, so that trajectories constructed to rise by an
# exact multiple of C fire the full event count despite float rounding.
TRIGGER_REL_EPS = 1e-9


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass
class RadianceSequence:
    """Ground-truth photoelectron rates, shared by both simulated sensors.

    frame_times are nanoseconds, strictly increasing; frames is a (T, H, W)
    float array of expected photoelectron counts per exposure (>= 0).
    """

    frame_times: np.ndarray
    frames: np.ndarray

    def __post_init__(self):
        self.frame_times = np.asarray(self.frame_times, dtype=np.int64)
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 3:
            raise InputDomainError(f"frames must be (T, H, W), got {self.frames.shape}")
        if self.frame_times.ndim != 1 or len(self.frame_times) != self.frames.shape[0]:
            raise InputDomainError("frame_times length must match frame count")
        if len(self.frame_times) and np.any(np.diff(self.frame_times) <= 0):
            raise InputDomainError("frame_times must be strictly increasing")
        if not np.all(np.isfinite(self.frames)) or np.any(self.frames < 0):
            raise InputDomainError("radiance frames must be finite and >= 0")

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


@dataclass
class RawNoiseParams:
    """Frame-sensor noise model: gain, shot/read/quantization terms.

    gain is DN per photoelectron.  black_level is the ADC pedestal in DN;
    the ADC clamps at 0 DN *before* the pedestal is subtracted, which keeps
    the read-noise distribution symmetric around 0 in the returned frame.
    """

    gain: float = 1.0
    read_sigma: float = 0.0
    quant_step: float = 0.0
    black_level: float = 0.0
    enable_shot: bool = True
    enable_read: bool = True
    enable_quant: bool = True

    def __post_init__(self):
        if not self.gain > 0:
            raise InputDomainError(f"gain must be > 0, got {self.gain}")
        if self.read_sigma < 0:
            raise InputDomainError(f"read_sigma must be >= 0, got {self.read_sigma}")
        if self.quant_step < 0:
            raise InputDomainError(f"quant_step must be >= 0, got {self.quant_step}")
        if self.black_level < 0:
            raise InputDomainError(f"black_level must be >= 0, got {self.black_level}")


@dataclass
class RawFrame:
    """Single-channel linear-intensity frame after black-level subtraction."""

    values: np.ndarray
    gain: float
    timestamp_ns: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or min(self.values.shape) < 1:
            raise InputDomainError(f"frame must be 2-D, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise InputDomainError("frame values must be finite")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass
class BaRateModel:
    """Background-activity rate, linear in local illumination.

    rate(x, y) = base_rate + illum_slope * illumination(x, y), in events per
    pixel per second.  The linear form reproduces the observed positive
    correlation between BA density and illumination under low light.
    """

    base_rate: float = 0.0
    illum_slope: float = 0.0

    def __post_init__(self):
        if self.base_rate < 0 or self.illum_slope < 0:
            raise InputDomainError("BA rate parameters must be >= 0")

    def rate(self, illumination: np.ndarray) -> np.ndarray:
        return self.base_rate + self.illum_slope * np.asarray(illumination, dtype=np.float64)


@dataclass
class EventStream:
    """Time-ordered events with polarity and provenance.

    Records are kept as parallel arrays sorted by (t, y, x, p); ordering is
    part of the type's contract so serialized streams are bit-stable.
    """

    width: int
    height: int
    contrast_threshold: float
    t: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    x: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int32))
    y: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int32))
    p: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int8))
    provenance: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.uint8))

    def __post_init__(self):
        if not self.contrast_threshold > 0:
            raise InputDomainError("contrast_threshold must be > 0")
        self.t = np.asarray(self.t, dtype=np.int64)
        self.x = np.asarray(self.x, dtype=np.int32)
        self.y = np.asarray(self.y, dtype=np.int32)
        self.p = np.asarray(self.p, dtype=np.int8)
        self.provenance = np.asarray(self.provenance, dtype=np.uint8)
        n = len(self.t)
        if not (len(self.x) == len(self.y) == len(self.p) == len(self.provenance) == n):
            raise InputDomainError("event arrays must share a common length")
        if n:
            if self.x.min() < 0 or self.x.max() >= self.width:
                raise InputDomainError("event x coordinate out of bounds")
            if self.y.min() < 0 or self.y.max() >= self.height:
                raise InputDomainError("event y coordinate out of bounds")
            if not np.all(np.isin(self.p, (-1, 1))):
                raise InputDomainError("polarity must be -1 or +1")

    def __len__(self) -> int:
        return len(self.t)

    def sort(self) -> "EventStream":
        """Return a copy sorted by (t, y, x, p); a stable total order."""
        order = np.lexsort((self.p, self.x, self.y, self.t))
        return self.take(order)

    def take(self, idx) -> "EventStream":
        return EventStream(
            self.width, self.height, self.contrast_threshold,
            self.t[idx], self.x[idx], self.y[idx], self.p[idx], self.provenance[idx],
        )

    def select_window(self, t0: int, t1: int) -> "EventStream":
        """Events with t in the half-open window [t0, t1)."""
        mask = (self.t >= t0) & (self.t < t1)
        return self.take(mask)

    def is_sorted(self) -> bool:
        if len(self) < 2:
            return True
        t, y, x, p = self.t, self.y, self.x, self.p
        ok = (t[:-1] < t[1:]) | (
            (t[:-1] == t[1:])
            & (
                (y[:-1] < y[1:])
                | (
                    (y[:-1] == y[1:])
                    & ((x[:-1] < x[1:]) | ((x[:-1] == x[1:]) & (p[:-1] <= p[1:])))
                )
            )
        )
        return bool(np.all(ok))

    def same_records(self, other: "EventStream") -> bool:
        return (
            len(self) == len(other)
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.p, other.p)
            and np.array_equal(self.provenance, other.provenance)
        )


def concat_streams(a: EventStream, b: EventStream) -> EventStream:
    """Merge two streams over the same sensor and re-sort."""
    if (a.width, a.height) != (b.width, b.height):
        raise InputDomainError("streams have mismatched sensor geometry")
    merged = EventStream(
        a.width, a.height, a.contrast_threshold,
        np.concatenate([a.t, b.t]),
        np.concatenate([a.x, b.x]),
        np.concatenate([a.y, b.y]),
        np.concatenate([a.p, b.p]),
        np.concatenate([a.provenance, b.provenance]),
    )
    return merged.sort()


# ---------------------------------------------------------------------------
# Frame sensor
# ---------------------------------------------------------------------------

def _check_radiance_frame(radiance_frame: np.ndarray) -> np.ndarray:
    arr = np.asarray(radiance_frame, dtype=np.float64)
    if arr.ndim != 2:
        raise InputDomainError(f"radiance frame must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputDomainError("radiance contains non-finite values")
    if np.any(arr < 0):
        raise InputDomainError("radiance contains negative values")
    return arr


def clean_raw(radiance_frame: np.ndarray, gain: float, timestamp_ns: int = 0) -> RawFrame:
    """Noise-free frame: DN = gain * photoelectrons, exactly."""
    arr = _check_radiance_frame(radiance_frame)
    if not gain > 0:
        raise InputDomainError(f"gain must be > 0, got {gain}")
    return RawFrame(values=gain * arr, gain=gain, timestamp_ns=timestamp_ns)


def synthesize_raw(
    radiance_frame: np.ndarray,
    params: RawNoiseParams,
    seed: int,
    timestamp_ns: int = 0,
) -> RawFrame:
    """Noisy frame: gain * Poisson(I) + read noise, through a pedestal ADC.

    Chain: electrons -> DN -> + read noise -> + black level -> quantize ->
    clamp at 0 DN -> - black level.  Clamping the *pedestal-biased* value is
    what real ADCs do; it leaves the zero-mean read-noise distribution intact
    whenever the pedestal covers the noise tail.
    """
    arr = _check_radiance_frame(radiance_frame)
    rng = np.random.Generator(np.random.Philox(seed))

    if params.enable_shot:
        electrons = rng.poisson(arr).astype(np.float64)
    else:
        electrons = arr
    dn = params.gain * electrons
    if params.enable_read and params.read_sigma > 0:
        dn = dn + rng.normal(0.0, params.read_sigma, size=arr.shape)
    dn = dn + params.black_level
    if params.enable_quant and params.quant_step > 0:
        dn = np.rint(dn / params.quant_step) * params.quant_step
    dn = np.maximum(dn, 0.0)
    dn = dn - params.black_level
    return RawFrame(values=dn, gain=params.gain, timestamp_ns=timestamp_ns)


def gaussian_blur_illumination(frame, sigma_px: float) -> np.ndarray:
    """Coarse illumination prior: separable Gaussian blur, mirrored borders.

    sigma_px = 0 returns the input unchanged.  The kernel is the sampled
    Gaussian truncated at 3 sigma (radius = int(3*sigma + 0.5)), normalized
    to unit sum.
    """
    from scipy.ndimage import gaussian_filter

    values = frame.values if isinstance(frame, RawFrame) else np.asarray(frame, dtype=np.float64)
    if sigma_px < 0:
        raise InputDomainError(f"sigma_px must be >= 0, got {sigma_px}")
    if sigma_px == 0:
        return values.astype(np.float64).copy()
    return gaussian_filter(values.astype(np.float64), sigma=sigma_px, mode="mirror", truncate=3.0)


# ---------------------------------------------------------------------------
# Event sensor
# ---------------------------------------------------------------------------

def generate_ideal_events(
    radiance: RadianceSequence,
    contrast_threshold: float,
    photoreceptor_bias: float = 1.0,
) -> EventStream:
    """Noise-free event stream from threshold crossings in log intensity.

    Each pixel tracks a reference level in log(I + b) space, interpolates
    log intensity linearly between frame times, and emits one event per
    threshold crossing, advancing the reference by p*C per event.  Events
    are tagged PROV_SIGNAL.
    """
    if not contrast_threshold > 0:
        raise InputDomainError("contrast_threshold must be > 0")
    if photoreceptor_bias < 0:
        raise InputDomainError("photoreceptor_bias must be >= 0")
    shifted = radiance.frames + photoreceptor_bias
    if np.any(shifted <= 0):
        raise InputDomainError("log intensity undefined: I + bias must be > 0 everywhere")

    c = float(contrast_threshold)
    h, w = radiance.height, radiance.width
    log_frames = np.log(shifted)
    ref = log_frames[0].copy()

    cols, rows = np.meshgrid(np.arange(w, dtype=np.int32), np.arange(h, dtype=np.int32))
    flat_x = cols.ravel()
    flat_y = rows.ravel()

    parts_t, parts_x, parts_y, parts_p = [], [], [], []
    for f in range(radiance.num_frames - 1):
        l0 = log_frames[f].ravel()
        l1 = log_frames[f + 1].ravel()
        t0 = float(radiance.frame_times[f])
        t1 = float(radiance.frame_times[f + 1])
        ref_flat = ref.ravel()

        delta = l1 - ref_flat
        n_signed = np.where(
            delta >= 0,
            np.floor(delta / c + TRIGGER_REL_EPS),
            -np.floor(-delta / c + TRIGGER_REL_EPS),
        ).astype(np.int64)
        counts = np.abs(n_signed)
        total = int(counts.sum())
        if total:
            pix = np.repeat(np.arange(h * w), counts)
            offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
            k = np.arange(total) - np.repeat(offsets, counts) + 1
            pol = np.sign(n_signed)[pix]
            thresholds = ref_flat[pix] + pol * k * c
            slope = l1[pix] - l0[pix]
            frac = (thresholds - l0[pix]) / slope
            times = np.rint(t0 + frac * (t1 - t0)).astype(np.int64)
            parts_t.append(times)
            parts_x.append(flat_x[pix])
            parts_y.append(flat_y[pix])
            parts_p.append(pol.astype(np.int8))
        ref_flat += n_signed * c
        ref = ref_flat.reshape(h, w)

    if parts_t:
        t = np.concatenate(parts_t)
        x = np.concatenate(parts_x)
        y = np.concatenate(parts_y)
        p = np.concatenate(parts_p)
    else:
        t = np.empty(0, dtype=np.int64)
        x = np.empty(0, dtype=np.int32)
        y = np.empty(0, dtype=np.int32)
        p = np.empty(0, dtype=np.int8)
    prov = np.full(len(t), PROV_SIGNAL, dtype=np.uint8)
    stream = EventStream(w, h, c, t, x, y, p, prov)
    return stream.sort()


def inject_ba_noise(
    events: EventStream,
    illumination: np.ndarray,
    model: BaRateModel,
    window: tuple[int, int],
    seed: int,
) -> EventStream:
    """Add Poisson background activity at the model's per-pixel rate.

    Noise timestamps are uniform over [t0, t1), polarities uniform in
    {-1, +1}; injected records carry PROV_NOISE.  The merged stream is
    re-sorted into the canonical (t, y, x, p) order.
    """
    t0, t1 = int(window[0]), int(window[1])
    if not t0 < t1:
        raise InputDomainError("window must satisfy t0 < t1")
    illum = np.asarray(illumination, dtype=np.float64)
    if illum.shape != (events.height, events.width):
        raise InputDomainError("illumination shape must match sensor geometry")

    rate = model.rate(illum)
    duration_s = (t1 - t0) * 1e-9
    rng = np.random.Generator(np.random.Philox(seed))
    counts = rng.poisson(rate * duration_s)
    total = int(counts.sum())
    if total == 0:
        return events.sort()

    flat = counts.ravel()
    pix = np.repeat(np.arange(illum.size), flat)
    ys, xs = np.unravel_index(pix, illum.shape)
    times = t0 + np.floor(rng.random(total) * (t1 - t0)).astype(np.int64)
    pol = np.where(rng.random(total) < 0.5, -1, 1).astype(np.int8)
    noise = EventStream(
        events.width, events.height, events.contrast_threshold,
        times, xs.astype(np.int32), ys.astype(np.int32), pol,
        np.full(total, PROV_NOISE, dtype=np.uint8),
    )
    return concat_streams(events, noise)


def accumulate_events(events: EventStream, t0: int, t1: int) -> np.ndarray:
    """Per-pixel signed polarity sum over records with t in [t0, t1)."""
    if t0 > t1:
        raise InputDomainError("window must satisfy t0 <= t1")
    out = np.zeros((events.height, events.width), dtype=np.float64)
    win = events.select_window(t0, t1)
    np.add.at(out, (win.y, win.x), win.p.astype(np.float64))
    return out


def voxelize(events: EventStream, num_bins: int, window: tuple[int, int]) -> np.ndarray:
    """(B, H, W) polarity grid with linear interpolation between bin centers.

    Each event in [t0, t1) splits its polarity between the two nearest bin
    centers; shares that would fall outside the grid snap to the nearest
    bin, so the voxel sum equals the signed event count in the window.
    """
    if num_bins < 1:
        raise InputDomainError("num_bins must be >= 1")
    t0, t1 = int(window[0]), int(window[1])
    if not t0 < t1:
        raise InputDomainError("window must satisfy t0 < t1")
    grid = np.zeros((num_bins, events.height, events.width), dtype=np.float64)
    win = events.select_window(t0, t1)
    if len(win) == 0:
        return grid

    # Bin centers sit at (k + 0.5)/B of the window; tau is the fractional
    # bin coordinate of each event.
    tau = (win.t - t0) / (t1 - t0) * num_bins - 0.5
    k0 = np.floor(tau).astype(np.int64)
    w1 = tau - k0
    w0 = 1.0 - w1
    pol = win.p.astype(np.float64)

    lo_valid = k0 >= 0
    hi_valid = k0 + 1 <= num_bins - 1
    b_lo = np.where(lo_valid, k0, k0 + 1)
    b_hi = np.where(hi_valid, k0 + 1, k0)
    np.add.at(grid, (b_lo, win.y, win.x), pol * w0)
    np.add.at(grid, (b_hi, win.y, win.x), pol * w1)
    return grid
