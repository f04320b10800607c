import numpy as np
import pytest

from darkfuse.errors import InputDomainError
from darkfuse.sensor import (
    PROV_NOISE,
    PROV_SIGNAL,
    BaRateModel,
    EventStream,
    RadianceSequence,
    accumulate_events,
    generate_ideal_events,
    inject_ba_noise,
    voxelize,
)
from conftest import brute_force_events, smooth_random_radiance


def ramp_sequence(h, w, log_rise, n_frames=5, base=10.0):
    """Exponential intensity ramp: log intensity rises by log_rise in total."""
    ts = np.linspace(0.0, 1.0, n_frames)
    frames = np.stack([np.full((h, w), base * np.exp(log_rise * t)) for t in ts])
    return RadianceSequence(
        frame_times=(ts * 10_000_000).astype(np.int64),
        frames=frames,
    )


class TestGenerateIdealEvents:
    def test_constant_radiance_no_events(self):
        seq = RadianceSequence(
            frame_times=np.array([0, 1000, 2000]),
            frames=np.full((3, 6, 6), 42.0),
        )
        ev = generate_ideal_events(seq, contrast_threshold=0.2, photoreceptor_bias=0.0)
        assert len(ev) == 0

    def test_ramp_of_three_thresholds(self):
        c = 0.25
        seq = ramp_sequence(4, 4, log_rise=3 * c)
        ev = generate_ideal_events(seq, c, photoreceptor_bias=0.0)
        assert len(ev) == 3 * 16
        assert np.all(ev.p == 1)
        counts = np.zeros((4, 4))
        np.add.at(counts, (ev.y, ev.x), 1)
        np.testing.assert_array_equal(counts, np.full((4, 4), 3.0))
        oracle = brute_force_events(seq, c, 0.0)
        assert ev.same_records(oracle)

    def test_intensity_halving_gives_one_negative_event(self):
        c = np.log(2.0)
        seq = RadianceSequence(
            frame_times=np.array([0, 1_000_000]),
            frames=np.stack([np.full((5, 5), 80.0), np.full((5, 5), 40.0)]),
        )
        ev = generate_ideal_events(seq, c, photoreceptor_bias=0.0)
        assert len(ev) == 25
        assert np.all(ev.p == -1)

    def test_event_count_law_monotone_trajectories(self, rng):
        # floor(|delta|/C) events, all of sign(delta), for monotone ramps.
        for _ in range(20):
            c = rng.uniform(0.05, 0.6)
            rise = rng.uniform(-4.0, 4.0)
            seq = ramp_sequence(2, 3, log_rise=rise, n_frames=rng.integers(2, 8))
            ev = generate_ideal_events(seq, c, photoreceptor_bias=0.0)
            expected = int(np.floor(abs(rise) / c + 1e-9))
            per_pixel = len(ev) / 6
            assert per_pixel == expected
            if expected:
                assert np.all(ev.p == np.sign(rise))

    def test_matches_brute_force_on_random_sequences(self, rng):
        for i in range(5):
            seq = smooth_random_radiance(rng, 8, 8, n_frames=6)
            c = rng.uniform(0.1, 0.5)
            ev = generate_ideal_events(seq, c, photoreceptor_bias=1.0)
            oracle = brute_force_events(seq, c, 1.0)
            assert len(ev) == len(oracle)
            assert np.array_equal(ev.x, oracle.x)
            assert np.array_equal(ev.y, oracle.y)
            assert np.array_equal(ev.p, oracle.p)
            assert np.max(np.abs(ev.t - oracle.t), initial=0) <= 1

    def test_provenance_is_signal(self):
        seq = ramp_sequence(3, 3, log_rise=1.0)
        ev = generate_ideal_events(seq, 0.2, photoreceptor_bias=0.0)
        assert np.all(ev.provenance == PROV_SIGNAL)

    def test_rejects_nonpositive_log_argument(self):
        seq = RadianceSequence(
            frame_times=np.array([0, 1000]),
            frames=np.zeros((2, 3, 3)),
        )
        with pytest.raises(InputDomainError):
            generate_ideal_events(seq, 0.2, photoreceptor_bias=0.0)

    def test_sorted_output(self, rng):
        seq = smooth_random_radiance(rng, 6, 6, n_frames=5)
        ev = generate_ideal_events(seq, 0.15, photoreceptor_bias=1.0)
        assert ev.is_sorted()


class TestInjectBaNoise:
    def empty_stream(self, h=16, w=16):
        return EventStream(width=w, height=h, contrast_threshold=0.2)

    def test_zero_rate_identity(self):
        base = self.empty_stream()
        illum = np.full((16, 16), 100.0)
        out = inject_ba_noise(base, illum, BaRateModel(0.0, 0.0), (0, 10_000_000), seed=1)
        assert len(out) == 0

    def test_poisson_count_concentration(self):
        h = w = 64
        rate = 20.0  # events / pixel / second
        t0, t1 = 0, 500_000_000  # 0.5 s
        expected = rate * 0.5 * h * w
        base = self.empty_stream(h, w)
        out = inject_ba_noise(base, np.zeros((h, w)), BaRateModel(rate, 0.0), (t0, t1), seed=11)
        assert abs(len(out) - expected) <= 3 * np.sqrt(expected)

    def test_density_tracks_illumination_ratio(self):
        # Two-level card, illumination ratio 1:4, base rate zero.
        h, w = 32, 64
        illum = np.zeros((h, w))
        illum[:, :32] = 10.0
        illum[:, 32:] = 40.0
        base = self.empty_stream(h, w)
        out = inject_ba_noise(base, illum, BaRateModel(0.0, 2.0), (0, 1_000_000_000), seed=5)
        left = np.count_nonzero(out.x < 32)
        right = np.count_nonzero(out.x >= 32)
        ratio = right / left
        assert abs(ratio - 4.0) / 4.0 < 0.10

    def test_determinism_and_tags(self):
        illum = np.full((8, 8), 30.0)
        base = self.empty_stream(8, 8)
        model = BaRateModel(5.0, 0.1)
        a = inject_ba_noise(base, illum, model, (0, 100_000_000), seed=2)
        b = inject_ba_noise(base, illum, model, (0, 100_000_000), seed=2)
        assert a.same_records(b)
        assert np.all(a.provenance == PROV_NOISE)
        assert a.is_sorted()
        assert np.all(a.t >= 0) and np.all(a.t < 100_000_000)

    def test_merges_with_signal(self, rng):
        seq = smooth_random_radiance(rng, 8, 8, n_frames=4)
        sig = generate_ideal_events(seq, 0.2, photoreceptor_bias=1.0)
        out = inject_ba_noise(
            sig, np.full((8, 8), 50.0), BaRateModel(10.0, 0.0),
            (0, int(seq.frame_times[-1])), seed=3,
        )
        assert len(out) > len(sig)
        assert out.is_sorted()
        assert np.count_nonzero(out.provenance == PROV_SIGNAL) == len(sig)


class TestAccumulateEvents:
    def test_empty(self):
        ev = EventStream(width=4, height=4, contrast_threshold=0.2)
        np.testing.assert_array_equal(accumulate_events(ev, 0, 100), np.zeros((4, 4)))

    def test_cancellation(self):
        ev = EventStream(
            width=4, height=4, contrast_threshold=0.2,
            t=np.array([10, 20]), x=np.array([2, 2]), y=np.array([1, 1]),
            p=np.array([1, -1]), provenance=np.zeros(2, dtype=np.uint8),
        )
        acc = accumulate_events(ev, 0, 100)
        assert acc[1, 2] == 0.0

    def test_ramp_case_accumulates_three(self):
        c = 0.25
        seq = ramp_sequence(4, 4, log_rise=3 * c)
        ev = generate_ideal_events(seq, c, photoreceptor_bias=0.0)
        acc = accumulate_events(ev, 0, int(seq.frame_times[-1]) + 1)
        np.testing.assert_array_equal(acc, np.full((4, 4), 3.0))

    def test_additive_over_disjoint_windows(self, rng):
        seq = smooth_random_radiance(rng, 6, 6, n_frames=6)
        ev = generate_ideal_events(seq, 0.15, photoreceptor_bias=1.0)
        t_end = int(seq.frame_times[-1]) + 1
        mid = t_end // 2
        total = accumulate_events(ev, 0, t_end)
        part = accumulate_events(ev, 0, mid) + accumulate_events(ev, mid, t_end)
        np.testing.assert_array_equal(total, part)


class TestVoxelize:
    def stream_with(self, ts, xs, ys, ps, w=4, h=4):
        n = len(ts)
        return EventStream(
            width=w, height=h, contrast_threshold=0.2,
            t=np.asarray(ts), x=np.asarray(xs), y=np.asarray(ys),
            p=np.asarray(ps), provenance=np.zeros(n, dtype=np.uint8),
        ).sort()

    def test_event_at_bin_center(self):
        # Window [0, 1000), 5 bins -> centers at 100, 300, 500, 700, 900.
        ev = self.stream_with([300], [1], [2], [1])
        grid = voxelize(ev, 5, (0, 1000))
        assert grid[1, 2, 1] == 1.0
        assert grid.sum() == 1.0

    def test_event_between_bin_centers(self):
        ev = self.stream_with([200], [0], [0], [1])
        grid = voxelize(ev, 5, (0, 1000))
        np.testing.assert_allclose(grid[0, 0, 0], 0.5)
        np.testing.assert_allclose(grid[1, 0, 0], 0.5)

    def test_total_mass_equals_signed_count(self, rng):
        n = 1000
        ev = self.stream_with(
            rng.integers(0, 10_000, n),
            rng.integers(0, 4, n),
            rng.integers(0, 4, n),
            rng.choice([-1, 1], n),
        )
        grid = voxelize(ev, 7, (0, 10_000))
        signed = accumulate_events(ev, 0, 10_000)
        assert abs(grid.sum() - signed.sum()) < 1e-9
        np.testing.assert_allclose(grid.sum(axis=0), signed, atol=1e-9)

    def test_edge_events_snap_into_grid(self):
        ev = self.stream_with([0, 999], [0, 1], [0, 1], [1, 1])
        grid = voxelize(ev, 4, (0, 1000))
        np.testing.assert_allclose(grid.sum(), 2.0)
