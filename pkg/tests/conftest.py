import numpy as np
import pytest

from darkfuse.sensor import EventStream, RadianceSequence, TRIGGER_REL_EPS


def brute_force_events(radiance: RadianceSequence, c: float, bias: float) -> EventStream:
    """Reference-level trigger simulation, one pixel and one event at a time.

    Independent oracle for the vectorized generator: walks each pixel's
    piecewise-linear log-intensity trajectory and fires threshold crossings
    sequentially, advancing the reference by one threshold per event.
    """
    log_frames = np.log(radiance.frames + bias)
    times = radiance.frame_times.astype(np.float64)
    recs = []
    for y in range(radiance.height):
        for x in range(radiance.width):
            ref = log_frames[0, y, x]
            for f in range(radiance.num_frames - 1):
                l0 = log_frames[f, y, x]
                l1 = log_frames[f + 1, y, x]
                t0, t1 = times[f], times[f + 1]
                while True:
                    if (l1 - ref) / c >= 1.0 - TRIGGER_REL_EPS:
                        pol = 1
                    elif (ref - l1) / c >= 1.0 - TRIGGER_REL_EPS:
                        pol = -1
                    else:
                        break
                    thr = ref + pol * c
                    frac = (thr - l0) / (l1 - l0)
                    t_ev = int(np.rint(t0 + frac * (t1 - t0)))
                    recs.append((t_ev, x, y, pol))
                    ref = thr
    if recs:
        arr = np.array(recs, dtype=np.int64)
        t, x, y, p = arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3]
    else:
        t = x = y = p = np.empty(0, dtype=np.int64)
    stream = EventStream(
        radiance.width, radiance.height, c,
        t, x, y, p.astype(np.int8), np.ones(len(t), dtype=np.uint8),
    )
    return stream.sort()


def smooth_random_radiance(rng: np.random.Generator, h: int, w: int, n_frames: int) -> RadianceSequence:
    """Random smooth per-pixel intensity trajectories for oracle comparisons."""
    base = rng.uniform(5.0, 200.0, size=(h, w))
    # Low-order temporal modulation, distinct per pixel, always positive.
    phase = rng.uniform(0, 2 * np.pi, size=(h, w))
    amp = rng.uniform(0.0, 0.9, size=(h, w))
    ts = np.linspace(0.0, 1.0, n_frames)
    frames = np.stack([base * (1.0 + amp * np.sin(2 * np.pi * t + phase)) for t in ts])
    frames = np.maximum(frames, 1e-3)
    frame_times = (ts * 40_000_000).astype(np.int64)  # 40 ms span
    return RadianceSequence(frame_times=frame_times, frames=frames)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
